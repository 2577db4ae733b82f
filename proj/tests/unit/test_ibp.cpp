// Copyright (c) qaibp contributors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <set>

#include "helpers.hpp"
#include "qaibp/error.hpp"
#include "qaibp/ibp.hpp"

using namespace qaibp;
using namespace qaibp::ibp;

namespace {

const QFormat u8 = QFormat::unsigned_bits(8);
const QFormat s8 = QFormat::signed_bits(8);

std::vector<std::int64_t> vec(const QTensor& t) { return {t.raw().begin(), t.raw().end()}; }

IntervalTensor random_region(std::mt19937_64& rng, const QNetwork& net, std::int64_t max_eps) {
    const QTensor x = test::random_tensor(rng, net.input_shape(), net.input_format());
    return input_region(x, test::uniform(rng, 0, max_eps));
}

QTensor random_point_in(std::mt19937_64& rng, const IntervalTensor& r) {
    std::vector<std::int64_t> v(r.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = test::uniform(rng, r.lower()[i], r.upper()[i]);
    return QTensor(r.shape(), r.format(), std::move(v));
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

TEST_CASE("input region examples") {
    const auto a = input_region(QTensor({1}, u8, {100}), 4);
    CHECK(a.lower()[0] == 96);
    CHECK(a.upper()[0] == 104);
    const auto b = input_region(QTensor({1}, u8, {2}), 4);
    CHECK(b.lower()[0] == 0);
    CHECK(b.upper()[0] == 6);
    const auto c = input_region(QTensor({1}, u8, {100}), 0);
    CHECK(c.is_point());
    CHECK(code_of([] { input_region(QTensor({1}, u8, {1}), -1); }) == ErrorCode::InvalidValue);
    CHECK(code_of([] { IntervalTensor(QTensor({1}, u8, {3}), QTensor({1}, u8, {2})); }) == ErrorCode::InvalidValue);
}

TEST_CASE("layer propagation example matches brute force") {
    const Layer l = Layer::dense(QTensor({1, 2}, s8, {1, -1}), QTensor({1}, s8, {0}), u8, 0, 8, Activation::relu_n(),
                                 u8);
    const IntervalTensor r(QTensor({2}, u8, {2, 1}), QTensor({2}, u8, {4, 3}));
    const auto out = layer_propagate(l, r);
    CHECK(out.lower()[0] == 0);
    CHECK(out.upper()[0] == 3);
    std::int64_t lo = INT64_MAX, hi = INT64_MIN;
    test::for_each_point({2, 1}, {4, 3}, [&](const std::vector<std::int64_t>& x) {
        const std::int64_t pre = x[0] - x[1];
        lo = std::min(lo, pre);
        hi = std::max(hi, pre);
    });
    CHECK(lo == -1);
    CHECK(hi == 3);
    CHECK(clamp_relu_n(lo, 8) == out.lower()[0]);
    CHECK(clamp_relu_n(hi, 8) == out.upper()[0]);
}

TEST_CASE("zero weights give the clamped bias") {
    const Layer l = Layer::dense(QTensor({2, 3}, s8), QTensor({2}, s8, {-4, 9}), u8, 0, 3, Activation::relu_n(),
                                 QFormat::unsigned_bits(3));
    const auto out = layer_propagate(l, IntervalTensor(QTensor({3}, u8, {0, 0, 0}), QTensor({3}, u8, {255, 9, 1})));
    CHECK(vec(out.lower()) == std::vector<std::int64_t>{0, 7});
    CHECK(vec(out.upper()) == std::vector<std::int64_t>{0, 7});
}

TEST_CASE("point regions propagate to the forward pass") {
    std::mt19937_64 rng(41);
    for (int it = 0; it < 200; ++it) {
        test::RandomNetOptions opt;
        opt.conv = it % 2 == 0;
        opt.lookup = it % 3 == 0;
        const Shape in = opt.conv ? Shape{2, 4, 4} : Shape{5};
        const QNetwork net = test::random_network(rng, in, {4, 3}, 3, opt);
        const QTensor x = test::random_tensor(rng, in, net.input_format());
        const auto out = propagate(net, IntervalTensor::point(x));
        REQUIRE(out.is_point());
        REQUIRE(out.lower() == forward(net, x));
    }
    const QFormat f = QFormat::unsigned_bits(4);
    const QNetwork flat({2, 2}, f, {Layer::flatten({2, 2}, f)}, 4);
    const IntervalTensor r(QTensor({2, 2}, f, {1, 2, 3, 4}), QTensor({2, 2}, f, {5, 6, 7, 8}));
    const auto out = propagate(flat, r);
    CHECK(vec(out.lower()) == vec(r.lower()));
    CHECK(vec(out.upper()) == vec(r.upper()));
}

TEST_CASE("soundness on random networks, regions and samples") {
    std::mt19937_64 rng(43);
    int checked = 0;
    for (int it = 0; it < 400; ++it) {
        test::RandomNetOptions opt;
        opt.conv = it % 2 == 0;
        opt.lookup = it % 4 == 1;
        opt.input_bits = 8;
        const Shape in = opt.conv ? Shape{2, 5, 5} : Shape{8};
        const QNetwork net = test::random_network(rng, in, {6, 4}, 4, opt);
        const IntervalTensor region = random_region(rng, net, 40);
        const auto out = propagate(net, region);
        for (int s = 0; s < 5; ++s) {
            const QTensor x = random_point_in(rng, region);
            REQUIRE(out.contains(forward(net, x).raw()));
            ++checked;
        }
    }
    CHECK(checked >= 1000);
}

TEST_CASE("soundness and certification by exhaustive enumeration on 2-input 4-bit networks") {
    std::mt19937_64 rng(47);
    int certified = 0;
    for (int it = 0; it < 300; ++it) {
        test::RandomNetOptions opt;
        opt.input_bits = 4;
        opt.weight_bits = 4;
        opt.act_bits = 4;
        const QNetwork net = test::random_network(rng, {2}, {3, 3}, 2 + it % 2, opt);
        const IntervalTensor region = random_region(rng, net, 5);
        const auto out = propagate(net, region);
        const auto lo = vec(region.lower()), hi = vec(region.upper());
        std::vector<std::int64_t> ymin(net.class_count(), INT64_MAX), ymax(net.class_count(), INT64_MIN);
        std::set<std::size_t> classes;
        test::for_each_point(lo, hi, [&](const std::vector<std::int64_t>& x) {
            const auto y = test::reference_forward(net, x);
            for (std::size_t j = 0; j < y.size(); ++j) {
                ymin[j] = std::min(ymin[j], y[j]);
                ymax[j] = std::max(ymax[j], y[j]);
            }
            classes.insert(argmax_smallest(y));
        });
        for (std::size_t j = 0; j < net.class_count(); ++j) {
            REQUIRE(out.lower()[j] <= ymin[j]);
            REQUIRE(out.upper()[j] >= ymax[j]);
        }
        for (std::size_t label = 0; label < net.class_count(); ++label) {
            if (check_robust(out, label) == Certification::Certified) {
                ++certified;
                REQUIRE(classes == std::set<std::size_t>{label});
            }
            const auto margins = margin_lower_bounds(net, region, label);
            if (check_margins(margins) == Certification::Certified) {
                REQUIRE(classes == std::set<std::size_t>{label});
            }
        }
    }
    CHECK(certified > 0);
}

TEST_CASE("nested regions give nested bounds") {
    std::mt19937_64 rng(53);
    for (int it = 0; it < 300; ++it) {
        test::RandomNetOptions opt;
        opt.conv = it % 2 == 1;
        const Shape in = opt.conv ? Shape{1, 4, 4} : Shape{6};
        const QNetwork net = test::random_network(rng, in, {5}, 3, opt);
        const IntervalTensor outer = random_region(rng, net, 6);
        std::vector<std::int64_t> lo(outer.size()), hi(outer.size());
        for (std::size_t i = 0; i < lo.size(); ++i) {
            lo[i] = test::uniform(rng, outer.lower()[i], outer.upper()[i]);
            hi[i] = test::uniform(rng, lo[i], outer.upper()[i]);
        }
        const IntervalTensor inner(QTensor(in, outer.format(), lo), QTensor(in, outer.format(), hi));
        REQUIRE(outer.contains(inner));
        REQUIRE(propagate(net, outer).contains(propagate(net, inner)));
    }
}

TEST_CASE("sign-split bounds equal the center/radius form") {
    std::mt19937_64 rng(59);
    for (int it = 0; it < 300; ++it) {
        test::RandomNetOptions opt;
        opt.conv = it % 2 == 0;
        opt.input_bits = 8;
        opt.weight_bits = 8;
        const Shape in = opt.conv ? Shape{2, 5, 5} : Shape{7};
        const QNetwork net = test::random_network(rng, in, {4}, 2, opt);
        const Layer& layer = net.layers().front().is_flatten() ? net.layers()[1] : net.layers().front();
        const IntervalTensor region = random_region(rng, net, 30);
        const auto lo = vec(region.lower()), hi = vec(region.upper());
        std::vector<std::int64_t> acc_lo(layer.output_size()), acc_hi(layer.output_size());
        layer.accumulate_bounds(lo, hi, acc_lo, acc_hi);
        const auto cr = accumulate_center_radius(layer, CenterRadius::from_bounds(lo, hi));
        for (std::size_t o = 0; o < acc_lo.size(); ++o) {
            REQUIRE(cr.radius2[o] >= 0);
            REQUIRE(2 * acc_lo[o] == cr.center2[o] - cr.radius2[o]);
            REQUIRE(2 * acc_hi[o] == cr.center2[o] + cr.radius2[o]);
        }
    }
}

TEST_CASE("check_robust examples") {
    const QFormat f = QFormat::signed_bits(32);
    const auto box = [&](std::vector<std::int64_t> lo, std::vector<std::int64_t> hi) {
        return IntervalTensor(QTensor({lo.size()}, f, lo), QTensor({hi.size()}, f, hi));
    };
    CHECK(check_robust(box({5, 0}, {7, 3}), 0) == Certification::Certified);
    CHECK(check_robust(box({5, 0}, {7, 6}), 0) == Certification::Unknown);
    CHECK(check_robust(box({3, 1}, {4, 3}), 0) == Certification::Unknown);
    CHECK(code_of([&] { check_robust(box({3, 1}, {4, 3}), 2); }) == ErrorCode::InvalidLabel);
}

TEST_CASE("elided margins: exact on points, dominate independent bounds") {
    std::mt19937_64 rng(61);
    int strictly_better = 0;
    for (int it = 0; it < 400; ++it) {
        test::RandomNetOptions opt;
        opt.conv = it % 2 == 0;
        opt.input_bits = 8;
        const Shape in = opt.conv ? Shape{2, 4, 4} : Shape{6};
        const std::size_t classes = 2 + static_cast<std::size_t>(it % 3);
        const QNetwork net = test::random_network(rng, in, {5, 4}, classes, opt);
        const std::size_t label = static_cast<std::size_t>(test::uniform(rng, 0, static_cast<std::int64_t>(classes) - 1));

        const QTensor x = test::random_tensor(rng, in, net.input_format());
        const auto logits = forward(net, x);
        const auto exact = margin_lower_bounds(net, IntervalTensor::point(x), label);
        std::size_t k = 0;
        for (std::size_t j = 0; j < classes; ++j) {
            if (j == label) continue;
            REQUIRE(exact[k++] == logits[label] - logits[j]);
        }

        const IntervalTensor region = random_region(rng, net, 20);
        const auto out = propagate(net, region);
        const auto margins = margin_lower_bounds(net, region, label);
        REQUIRE(margins.size() == classes - 1);
        k = 0;
        for (std::size_t j = 0; j < classes; ++j) {
            if (j == label) continue;
            const std::int64_t independent = out.lower()[label] - out.upper()[j];
            REQUIRE(margins[k] >= independent);
            if (margins[k] > independent) ++strictly_better;
            for (int s = 0; s < 3; ++s) {
                const auto y = forward(net, random_point_in(rng, region));
                REQUIRE(y[label] - y[j] >= margins[k]);
            }
            ++k;
        }
    }
    CHECK(strictly_better > 0);
}

TEST_CASE("elided margins: single class and unsupported architectures") {
    const QFormat f = QFormat::unsigned_bits(4);
    const QNetwork one({2}, f,
                       {Layer::dense(QTensor({1, 2}, s8, {1, 1}), QTensor({1}, s8), f, 0, 0, Activation::identity(),
                                     QFormat::signed_bits(32))},
                       1);
    CHECK(margin_lower_bounds(one, input_region(QTensor({2}, f, {3, 3}), 1), 0).empty());
    const QNetwork flat({2, 2}, f, {Layer::flatten({2, 2}, f)}, 4);
    CHECK(code_of([&] { margin_lower_bounds(flat, input_region(QTensor({2, 2}, f), 1), 0); }) ==
          ErrorCode::UnsupportedArchitecture);
}
