// Copyright (c) qaibp contributors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "helpers.hpp"
#include "qaibp/error.hpp"
#include "qaibp/network.hpp"

using namespace qaibp;

namespace {

const QFormat u8 = QFormat::unsigned_bits(8);
const QFormat s8 = QFormat::signed_bits(8);

Layer dense_int(std::vector<std::int64_t> w, std::size_t out, std::vector<std::int64_t> b, int shift, int n,
                QFormat in = u8) {
    const std::size_t inputs = w.size() / out;
    const QFormat of = QFormat::unsigned_bits(std::max(n, 1));
    return Layer::dense(QTensor({out, inputs}, s8, std::move(w)), QTensor({out}, s8, std::move(b)), in, shift, n,
                        Activation::relu_n(), of);
}

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::InvalidValue;
}

}  // namespace

TEST_CASE("dense layer examples") {
    const Layer pass = dense_int({1}, 1, {0}, 0, 8);
    CHECK(layer_forward(pass, QTensor({1}, u8, {5})) == QTensor({1}, u8, {5}));

    const Layer l2 = dense_int({2, -1}, 1, {1}, 1, 4);
    const QTensor y = layer_forward(l2, QTensor({2}, u8, {3, 4}));
    CHECK(y[0] == 1);
    CHECK(test::reference_layer(l2, {3, 4}) == std::vector<std::int64_t>{1});

    const Layer neg = dense_int({-1}, 1, {0}, 0, 8);
    CHECK(layer_forward(neg, QTensor({1}, u8, {7}))[0] == 0);
}

TEST_CASE("bias is aligned to the accumulator grid") {
    // weights frac 2, input frac 3, bias frac 1 -> bias shifted left by 4
    const QFormat wf = QFormat::signed_bits(8, 2);
    const QFormat bf = QFormat::signed_bits(8, 1);
    const QFormat in = QFormat::unsigned_bits(8, 3);
    const Layer l = Layer::dense(QTensor({1, 1}, wf, {3}), QTensor({1}, bf, {5}), in, 0, 16, Activation::relu_n(),
                                 QFormat::unsigned_bits(16));
    CHECK(l.bias_shift() == 4);
    CHECK(layer_forward(l, QTensor({1}, in, {7}))[0] == 3 * 7 + (5 << 4));
    CHECK(code_of([&] {
              Layer::dense(QTensor({1, 1}, wf, {3}), QTensor({1}, QFormat::signed_bits(8, 7), {5}), in, 0, 16,
                           Activation::relu_n(), QFormat::unsigned_bits(16));
          }) == ErrorCode::FormatError);
}

TEST_CASE("composed network equals composition of single layers") {
    const Layer a = dense_int({2, -1}, 1, {1}, 1, 4);
    const Layer b = Layer::dense(QTensor({2, 1}, s8, {3, -2}), QTensor({2}, s8, {0, 1}), QFormat::unsigned_bits(4), 0,
                                 0, Activation::identity(), QFormat::signed_bits(32));
    const QNetwork net({2}, u8, {a, b}, 2);
    const QTensor x({2}, u8, {3, 4});
    const QTensor h = layer_forward(a, x);
    CHECK(forward(net, x) == layer_forward(b, h));
    CHECK(forward(net, x).raw()[0] == 3);
    CHECK(forward(net, x).raw()[1] == -1);
}

TEST_CASE("flatten-only and zero networks") {
    const QFormat f = QFormat::unsigned_bits(4);
    const QNetwork flat({2, 2}, f, {Layer::flatten({2, 2}, f)}, 4);
    const QTensor x({2, 2}, f, {1, 2, 3, 4});
    CHECK(forward(flat, x) == x.reshaped({4}));

    const QNetwork zero({3}, u8,
                        {Layer::dense(QTensor({2, 3}, s8), QTensor({2}, s8), u8, 0, 0, Activation::identity(),
                                      QFormat::signed_bits(32))},
                        2);
    const QTensor z = forward(zero, QTensor({3}, u8, {9, 8, 7}));
    CHECK(z[0] == 0);
    CHECK(z[1] == 0);
}

TEST_CASE("classify picks the smallest maximal index") {
    CHECK(argmax_smallest(std::vector<std::int64_t>{3, 7, 7}) == 1);
    CHECK(argmax_smallest(std::vector<std::int64_t>{0, 0, 0}) == 0);
    CHECK(argmax_smallest(std::vector<std::int64_t>{-5, 2, 1}) == 1);
}

TEST_CASE("forward matches the big-integer reference on random networks") {
    std::mt19937_64 rng(17);
    for (int it = 0; it < 300; ++it) {
        test::RandomNetOptions opt;
        opt.conv = it % 2 == 1;
        opt.lookup = it % 5 == 0;
        opt.input_bits = static_cast<int>(test::uniform(rng, 2, 8));
        opt.weight_bits = static_cast<int>(test::uniform(rng, 2, 8));
        opt.act_bits = static_cast<int>(test::uniform(rng, 2, 8));
        const Shape in = opt.conv ? Shape{2, 5, 4} : Shape{static_cast<std::size_t>(test::uniform(rng, 1, 12))};
        const QNetwork net = test::random_network(rng, in, {4, 3}, 3, opt);
        for (int s = 0; s < 5; ++s) {
            const QTensor x = test::random_tensor(rng, in, net.input_format());
            const auto ref = test::reference_forward(net, {x.raw().begin(), x.raw().end()});
            const QTensor y = forward(net, x);
            REQUIRE(std::vector<std::int64_t>(y.raw().begin(), y.raw().end()) == ref);
            CHECK(classify(net, x) == argmax_smallest(ref));
        }
    }
}

TEST_CASE("hidden outputs stay inside the ReLU-N range") {
    std::mt19937_64 rng(29);
    for (int it = 0; it < 200; ++it) {
        test::RandomNetOptions opt;
        opt.conv = it % 2 == 0;
        const Shape in = opt.conv ? Shape{1, 4, 4} : Shape{6};
        const QNetwork net = test::random_network(rng, in, {5, 4}, 2, opt);
        QTensor x = test::random_tensor(rng, in, net.input_format());
        for (const auto& l : net.layers()) {
            x = layer_forward(l, x);
            if (!l.is_flatten() && l.activation().kind() == ActivationKind::ReluN) {
                for (auto v : x.raw()) {
                    REQUIRE(v >= 0);
                    REQUIRE(v <= relu_n_max(l.clamp_bits()));
                }
            }
        }
    }
}

TEST_CASE("dense layers with nonnegative weights are monotone") {
    std::mt19937_64 rng(31);
    for (int it = 0; it < 500; ++it) {
        const std::size_t n = 5, m = 3;
        std::vector<std::int64_t> w(n * m);
        for (auto& v : w) v = test::uniform(rng, 0, 127);
        std::vector<std::int64_t> b(m);
        for (auto& v : b) v = test::uniform(rng, -128, 127);
        const Layer l = dense_int(w, m, b, static_cast<int>(test::uniform(rng, 0, 8)), 6);
        std::vector<std::int64_t> x(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = test::uniform(rng, 0, 255);
            y[i] = test::uniform(rng, x[i], 255);
        }
        const QTensor fx = layer_forward(l, QTensor({n}, u8, x));
        const QTensor fy = layer_forward(l, QTensor({n}, u8, y));
        for (std::size_t o = 0; o < m; ++o) REQUIRE(fx[o] <= fy[o]);
    }
}

TEST_CASE("convolution geometry") {
    const auto same = ConvGeometry::make({1, 28, 28}, 8, 5, 2, Padding::Same);
    CHECK(same.out_height == 14);
    CHECK(same.out_width == 14);
    CHECK(same.pad_top == 1);  // total padding 3, extra at the end
    const auto same3 = ConvGeometry::make({8, 14, 14}, 16, 3, 2, Padding::Same);
    CHECK(same3.out_height == 7);
    const auto valid = ConvGeometry::make({1, 5, 5}, 1, 3, 1, Padding::Valid);
    CHECK(valid.out_height == 3);
    CHECK(valid.pad_top == 0);
    CHECK(code_of([] { ConvGeometry::make({1, 2, 2}, 1, 3, 1, Padding::Valid); }) == ErrorCode::ShapeError);
}

TEST_CASE("network validation") {
    const Layer hidden = dense_int({1, 1}, 1, {0}, 0, 4);
    const Layer head = Layer::dense(QTensor({2, 1}, s8, {1, -1}), QTensor({2}, s8), QFormat::unsigned_bits(4), 0, 0,
                                    Activation::identity(), QFormat::signed_bits(32));
    CHECK_NOTHROW(QNetwork({2}, u8, {hidden, head}, 2));
    CHECK(code_of([&] { QNetwork({3}, u8, {hidden, head}, 2); }) == ErrorCode::ShapeError);
    CHECK(code_of([&] { QNetwork({2}, u8, {hidden, head}, 3); }) == ErrorCode::ShapeError);
    CHECK(code_of([&] { QNetwork({2}, QFormat::unsigned_bits(6), {hidden, head}, 2); }) == ErrorCode::ShapeError);
    CHECK(code_of([&] { QNetwork({2}, u8, {hidden}, 1); }) == ErrorCode::UnsupportedArchitecture);
    CHECK(code_of([] { Activation::lookup({0, 2, 1, 3}); }) == ErrorCode::FormatError);
    const QNetwork net({2}, u8, {hidden, head}, 2);
    CHECK(code_of([&] { forward(net, QTensor({3}, u8)); }) == ErrorCode::ShapeError);
}
