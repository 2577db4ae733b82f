#!/usr/bin/env python3
# Copyright (c) qaibp contributors.
# SPDX-License-Identifier: Apache-2.0
"""Write the bundled 5000-sample MNIST subset as gzip-compressed IDX files.

The source is the ``mnist_5k.csv.gz`` table shipped inside the mlxtend wheel
(500 samples per digit, taken from the original MNIST distribution). Rows are
split deterministically: row i goes to the training file when i % 5 < 3 and to
the test file otherwise, giving 3000 training and 2000 test samples.

usage: make_mnist_subset.py <mlxtend wheel or mnist_5k.csv.gz> <output dir>
"""
import gzip
import pathlib
import struct
import sys
import zipfile


def read_rows(source: pathlib.Path):
    if source.suffix == ".whl":
        with zipfile.ZipFile(source) as wheel:
            blob = wheel.read("mlxtend/data/data/mnist_5k.csv.gz")
    else:
        blob = source.read_bytes()
    for line in gzip.decompress(blob).decode().splitlines():
        values = [int(float(v)) for v in line.split(",")]
        yield bytes(values[:-1]), values[-1]


def write_idx(path: pathlib.Path, rows):
    images = gzip.GzipFile(path / "images-idx3-ubyte.gz", "wb", mtime=0)
    labels = gzip.GzipFile(path / "labels-idx1-ubyte.gz", "wb", mtime=0)
    images.write(struct.pack(">IIII", 0x00000803, len(rows), 28, 28))
    labels.write(struct.pack(">II", 0x00000801, len(rows)))
    for pixels, label in rows:
        images.write(pixels)
        labels.write(bytes([label]))
    images.close()
    labels.close()


def main():
    source, out = pathlib.Path(sys.argv[1]), pathlib.Path(sys.argv[2])
    rows = list(read_rows(source))
    assert len(rows) == 5000 and all(len(p) == 784 for p, _ in rows)
    for name, keep in (("train", lambda i: i % 5 < 3), ("test", lambda i: i % 5 >= 3)):
        target = out / name
        target.mkdir(parents=True, exist_ok=True)
        write_idx(target, [r for i, r in enumerate(rows) if keep(i)])


if __name__ == "__main__":
    main()
