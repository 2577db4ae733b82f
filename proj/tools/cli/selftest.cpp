// Copyright (c) qaibp contributors.
// SPDX-License-Identifier: Apache-2.0

#include "selftest.hpp"

#include <algorithm>

#include "qaibp/error.hpp"
#include "qaibp/ibp.hpp"
#include "qaibp/synth/synth.hpp"
#include "qaibp/verify/verify.hpp"

namespace qaibp::cli {

namespace {

std::int64_t uniform(std::mt19937_64& rng, std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng);
}

QTensor random_tensor(std::mt19937_64& rng, Shape shape, QFormat f) {
    std::vector<std::int64_t> raw(shape_size(shape));
    for (auto& v : raw) v = uniform(rng, f.raw_min(), f.raw_max());
    return QTensor(std::move(shape), f, std::move(raw));
}

QTensor random_point(std::mt19937_64& rng, const QNetwork& net) {
    return random_tensor(rng, net.input_shape(), net.input_format());
}

Layer random_dense(std::mt19937_64& rng, std::size_t in, std::size_t out, QFormat input, bool last) {
    const int wbits = static_cast<int>(uniform(rng, 2, 4));
    const QFormat wfmt = QFormat::signed_bits(wbits, static_cast<int>(uniform(rng, 0, wbits - 1)));
    const int bfrac = static_cast<int>(uniform(rng, 0, wfmt.frac_bits() + input.frac_bits()));
    const QFormat bfmt = QFormat::signed_bits(static_cast<int>(uniform(rng, 4, 6)), std::min(bfrac, 3));
    QTensor w = random_tensor(rng, {out, in}, wfmt);
    QTensor b = random_tensor(rng, {out}, bfmt);
    const int shift = static_cast<int>(uniform(rng, 0, 3));
    if (last) return Layer::dense(std::move(w), std::move(b), input, shift, 0, Activation::identity(),
                                  QFormat::signed_bits(32));
    const int abits = static_cast<int>(uniform(rng, 4, 6));
    const QFormat ofmt = QFormat::unsigned_bits(abits, static_cast<int>(uniform(rng, 0, abits)));
    return Layer::dense(std::move(w), std::move(b), input, shift, abits, Activation::relu_n(), ofmt);
}

std::uint64_t ball_points(const verify::RawBox& box) { return verify::box_points(box); }

bool same_raw(const QTensor& a, const QTensor& b) {
    return std::equal(a.raw().begin(), a.raw().end(), b.raw().begin(), b.raw().end());
}

SelftestCheck check_verify(const SelftestOptions& opt, std::mt19937_64& rng) {
    SelftestCheck check{"verify-vs-enumeration", opt.cases, 0};
    verify::VerifyConfig cfg;
    cfg.timeout_seconds.reset();
    for (std::size_t i = 0; i < opt.cases; ++i) {
        const QNetwork net = random_small_network(rng);
        const QTensor x = random_point(rng, net);
        std::int64_t eps = uniform(rng, 0, net.input_format().raw_max());
        while (eps > 0 && ball_points(verify::input_box(net, x, eps)) > 100000) eps /= 2;
        const auto fast = verify::verify(net, x, eps, cfg);
        const auto slow = synth::brute_force_verify(net, x, eps);
        bool ok = fast.verdict == slow.verdict;
        if (fast.witness) {
            try {
                verify::VerifyResult::vulnerable(net, x, eps, *fast.witness, {});
            } catch (const Error&) {
                ok = false;
            }
        }
        if (!ok) ++check.failures;
    }
    return check;
}

SelftestCheck check_containment(const SelftestOptions& opt, std::mt19937_64& rng) {
    SelftestCheck check{"ibp-containment", opt.cases * 10, 0};
    for (std::size_t i = 0; i < opt.cases; ++i) {
        const QNetwork net = random_small_network(rng);
        const QTensor a = random_point(rng, net);
        const QTensor b = random_point(rng, net);
        std::vector<std::int64_t> lo(a.size()), hi(a.size());
        for (std::size_t d = 0; d < a.size(); ++d) {
            lo[d] = std::min(a.raw()[d], b.raw()[d]);
            hi[d] = std::max(a.raw()[d], b.raw()[d]);
        }
        const ibp::IntervalTensor region(QTensor(net.input_shape(), net.input_format(), lo),
                                         QTensor(net.input_shape(), net.input_format(), hi));
        const auto bounds = ibp::propagate(net, region);
        for (int s = 0; s < 10; ++s) {
            std::vector<std::int64_t> z(lo.size());
            for (std::size_t d = 0; d < z.size(); ++d) z[d] = uniform(rng, lo[d], hi[d]);
            const auto y = forward_raw(net, z);
            if (!bounds.contains(y)) ++check.failures;
        }
    }
    return check;
}

SelftestCheck check_point_exactness(const SelftestOptions& opt, std::mt19937_64& rng) {
    SelftestCheck check{"point-exactness", opt.cases * 10, 0};
    for (std::size_t i = 0; i < opt.cases; ++i) {
        const QNetwork net = random_small_network(rng);
        for (int s = 0; s < 10; ++s) {
            const QTensor x = random_point(rng, net);
            const auto bounds = ibp::propagate(net, ibp::IntervalTensor::point(x));
            const QTensor y = forward(net, x);
            if (!same_raw(bounds.lower(), y) || !same_raw(bounds.upper(), y)) ++check.failures;
        }
    }
    return check;
}

SelftestCheck check_construction(const SelftestOptions& opt, std::mt19937_64& rng) {
    const std::size_t cases = std::max<std::size_t>(opt.cases / 5, 1);
    SelftestCheck check{"robust-construction", cases, 0};
    verify::VerifyConfig cfg;
    cfg.timeout_seconds.reset();
    for (std::size_t i = 0; i < cases; ++i) {
        const std::int64_t eps = uniform(rng, 0, 6);
        synth::PointDataset1D d;
        d.bits = 8;
        d.class_count = static_cast<std::size_t>(uniform(rng, 2, 4));
        const std::size_t want = static_cast<std::size_t>(uniform(rng, 1, 10));
        for (int tries = 0; d.points.size() < want && tries < 1000; ++tries) {
            const std::int64_t x = uniform(rng, 0, 255);
            const bool spaced = std::all_of(d.points.begin(), d.points.end(), [&](const auto& p) {
                return std::abs(p.x - x) >= std::max<std::int64_t>(2 * eps, 1);
            });
            if (spaced) d.points.push_back({x, static_cast<std::size_t>(uniform(rng, 0, d.class_count - 1))});
        }
        const QNetwork net = synth::construct_robust_qnn(d, eps);
        bool ok = synth::hidden_units(net) <= 5 * d.points.size() * static_cast<std::size_t>(2 * eps + 1);
        for (const auto& p : d.points) {
            const QTensor x({1}, d.input_format(), {p.x});
            const std::int64_t r = synth::strict_radius(eps);
            ok = ok && classify(net, x) == p.label &&
                 synth::brute_force_verify(net, x, r).verdict == verify::Verdict::Robust &&
                 verify::verify(net, x, r, cfg).verdict == verify::Verdict::Robust;
        }
        if (!ok) ++check.failures;
    }
    return check;
}

}  // namespace

QNetwork random_small_network(std::mt19937_64& rng) {
    const std::size_t inputs = static_cast<std::size_t>(uniform(rng, 1, 3));
    const int bits = static_cast<int>(uniform(rng, 4, 6));
    const QFormat in_format = QFormat::unsigned_bits(bits, static_cast<int>(uniform(rng, 0, bits)));
    const int depth = static_cast<int>(uniform(rng, 1, 2));
    const std::size_t classes = static_cast<std::size_t>(uniform(rng, 2, 4));
    std::vector<Layer> layers;
    std::size_t width = inputs;
    QFormat cur = in_format;
    for (int l = 0; l < depth; ++l) {
        const std::size_t units = static_cast<std::size_t>(uniform(rng, 1, 8));
        layers.push_back(random_dense(rng, width, units, cur, false));
        width = units;
        cur = layers.back().output_format();
    }
    layers.push_back(random_dense(rng, width, classes, cur, true));
    return QNetwork({inputs}, in_format, std::move(layers), classes);
}

std::vector<SelftestCheck> run_selftest(const SelftestOptions& options,
                                        const std::function<void(const SelftestCheck&)>& progress) {
    std::mt19937_64 rng(options.seed);
    std::vector<SelftestCheck> checks;
    for (auto* run : {&check_verify, &check_containment, &check_point_exactness, &check_construction}) {
        checks.push_back(run(options, rng));
        if (progress) progress(checks.back());
    }
    return checks;
}

}  // namespace qaibp::cli
