#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "relcollab/core/rng.hpp"
#include "relcollab/losses.hpp"
#include "relcollab/relation.hpp"

using namespace relcollab;

namespace {

Tensor<double> constant(const std::vector<int64_t>& shape, double v) {
    Tensor<double> t(shape);
    t.fill(v);
    return t;
}

}  // namespace

TEST_CASE("dice loss") {
    SECTION("perfect overlap is ~0") {
        auto p = constant({4, 4}, 1.0);
        REQUIRE(dice_loss(p, p) <= 1e-5);
    }

    SECTION("total miss approaches 1") {
        auto p = constant({4, 4}, 1.0);
        auto t = constant({4, 4}, 0.0);
        const double expect = 1.0 - 1e-5 / (16.0 + 1e-5);
        REQUIRE(dice_loss(p, t) == Catch::Approx(expect).epsilon(1e-9));
    }

    SECTION("empty prediction and target is exactly 0") {
        auto z = constant({4, 4}, 0.0);
        REQUIRE(dice_loss(z, z) == 0.0);
    }

    SECTION("shape mismatch throws") {
        REQUIRE_THROWS(dice_loss(constant({2, 2}, 0.5), constant({4,}, 0.5)));
    }
}

TEST_CASE("cross entropy loss") {
    SECTION("uninformative prediction costs ln 2") {
        auto p = constant({4, 4}, 0.5);
        auto t0 = constant({4, 4}, 0.0);
        auto t1 = constant({4, 4}, 1.0);
        REQUIRE(cross_entropy_loss(p, t0) == Catch::Approx(std::log(2.0)).margin(1e-4));
        REQUIRE(cross_entropy_loss(p, t1) == Catch::Approx(std::log(2.0)).margin(1e-4));
    }

    SECTION("confident correct prediction is near zero") {
        Tensor<double> p({2, 2}, {1.0, 1.0, 0.0, 0.0});
        Tensor<double> t({2, 2}, {1.0, 1.0, 0.0, 0.0});
        REQUIRE(cross_entropy_loss(p, t) <= 1e-6);
    }

    SECTION("confident wrong prediction is heavily penalized") {
        Tensor<double> p({2, 2}, {1.0, 1.0, 0.0, 0.0});
        Tensor<double> t({2, 2}, {0.0, 0.0, 1.0, 1.0});
        REQUIRE(cross_entropy_loss(p, t) >= 10.0);
    }
}

TEST_CASE("seg loss with deep supervision") {
    SECTION("single-scale perfect prediction") {
        std::vector<Tensor<double>> outs{constant({1, 4, 4}, 1.0)};
        Tensor<double> target = constant({1, 4, 4}, 1.0);
        REQUIRE(seg_loss(outs, target) <= 1e-5);
    }

    SECTION("two uninformative scales vs empty target, closed form") {
        std::vector<Tensor<double>> outs{constant({1, 4, 4}, 0.5), constant({1, 2, 2}, 0.5)};
        Tensor<double> target = constant({1, 4, 4}, 0.0);
        const double eps = kDiceEpsDefault;
        const double dice_full = 1.0 - eps / (8.0 + eps);  // sum(pred) = 0.5*16
        const double dice_half = 1.0 - eps / (2.0 + eps);  // sum(pred) = 0.5*4
        const double ce = std::log(2.0);
        const double expect = (2.0 / 3.0) * (dice_full + ce) + (1.0 / 3.0) * (dice_half + ce);
        REQUIRE(seg_loss(outs, target) == Catch::Approx(expect).epsilon(1e-6));
    }

    SECTION("weights normalize to one") {
        for (size_t scales : {1u, 2u, 3u, 5u}) {
            auto w = deep_supervision_weights(scales);
            double sum = 0;
            for (double v : w) sum += v;
            REQUIRE(sum == Catch::Approx(1.0).margin(1e-9));
        }
    }

    SECTION("empty output list throws") {
        std::vector<Tensor<double>> outs;
        REQUIRE_THROWS(seg_loss(outs, constant({1, 4, 4}, 0.0)));
    }
}

TEST_CASE("relation consistency losses") {
    Tensor<double> id2({2, 2}, {1, 0, 0, 1});
    Tensor<double> swap2({2, 2}, {0, 1, 1, 0});

    SECTION("identical matrices cost nothing") {
        REQUIRE(rc_general_loss(id2, id2, 1.0) == 0.0);
        REQUIRE(rc_target_loss(id2, id2, 1.0) == 0.0);
    }

    SECTION("hand-computed squared distance") {
        REQUIRE(rc_general_loss(id2, swap2, 1.0) == Catch::Approx(4.0));
        REQUIRE(rc_target_loss(id2, swap2, 1.0) == Catch::Approx(-4.0));
    }

    SECTION("lambda gates the loss") {
        REQUIRE(rc_general_loss(id2, swap2, 0.0) == 0.0);
        REQUIRE(rc_target_loss(id2, swap2, 0.0) == 0.0);
    }

    SECTION("symmetry in the two arguments") {
        Rng rng(4);
        Tensor<double> a({3, 3}), b({3, 3});
        for (auto& v : a.data) v = rng.normal();
        for (auto& v : b.data) v = rng.normal();
        REQUIRE(rc_general_loss(a, b, 0.7) == Catch::Approx(rc_general_loss(b, a, 0.7)));
        REQUIRE(rc_target_loss(a, b, 0.7) == Catch::Approx(rc_target_loss(b, a, 0.7)));
    }

    SECTION("invariant to simultaneous channel permutation") {
        Rng rng(12);
        const int64_t C = 4;
        Tensor<double> a({C, C}), b({C, C});
        for (auto& v : a.data) v = rng.normal();
        for (auto& v : b.data) v = rng.normal();
        std::vector<int64_t> perm{2, 0, 3, 1};
        Tensor<double> ap({C, C}), bp({C, C});
        for (int64_t m = 0; m < C; ++m)
            for (int64_t n = 0; n < C; ++n) {
                ap[perm[static_cast<size_t>(m)] * C + perm[static_cast<size_t>(n)]] = a[m * C + n];
                bp[perm[static_cast<size_t>(m)] * C + perm[static_cast<size_t>(n)]] = b[m * C + n];
            }
        REQUIRE(rc_general_loss(ap, bp, 1.0) == Catch::Approx(rc_general_loss(a, b, 1.0)));
        REQUIRE(rc_target_loss(ap, bp, 1.0) == Catch::Approx(rc_target_loss(a, b, 1.0)));
    }

    SECTION("dimension mismatch throws") {
        Tensor<double> a({2, 2}), b({3, 3});
        REQUIRE_THROWS(rc_general_loss(a, b, 1.0));
    }

    SECTION("repulsion clamp caps the loss and zeroes its gradient") {
        REQUIRE(rc_target_loss(id2, swap2, 1.0, 2.0) == Catch::Approx(-2.0));
        Tensor<double> g = rc_target_backward(id2, swap2, 1.0, 1.0, 2.0);
        for (int64_t i = 0; i < g.numel(); ++i) REQUIRE(g[i] == 0.0);
    }
}

TEST_CASE("loss gradients match finite differences") {
    Rng rng(31);
    const double h = 1e-6;

    SECTION("dice") {
        Tensor<double> p({2, 4, 4}), t({2, 4, 4});
        for (auto& v : p.data) v = rng.uniform(0.05, 0.95);
        for (auto& v : t.data) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
        Tensor<double> g = dice_loss_backward(p, t);
        for (int64_t i = 0; i < p.numel(); i += 3) {
            Tensor<double> pp = p, pm = p;
            pp[i] += h;
            pm[i] -= h;
            const double fd = (dice_loss(pp, t) - dice_loss(pm, t)) / (2 * h);
            const double denom = std::max({std::abs(fd), std::abs(g[i]), 1e-8});
            REQUIRE(std::abs(fd - g[i]) / denom < 1e-3);
        }
    }

    SECTION("cross entropy") {
        Tensor<double> p({3, 5}), t({3, 5});
        for (auto& v : p.data) v = rng.uniform(0.05, 0.95);
        for (auto& v : t.data) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
        Tensor<double> g = cross_entropy_backward(p, t);
        for (int64_t i = 0; i < p.numel(); ++i) {
            Tensor<double> pp = p, pm = p;
            pp[i] += h;
            pm[i] -= h;
            const double fd = (cross_entropy_loss(pp, t) - cross_entropy_loss(pm, t)) / (2 * h);
            const double denom = std::max({std::abs(fd), std::abs(g[i]), 1e-8});
            REQUIRE(std::abs(fd - g[i]) / denom < 1e-3);
        }
    }
}

TEST_CASE("rc losses drive features the right way") {
    // One descent step on the target relation consistency loss alone must
    // increase the distance between the two relation matrices.
    Rng rng(77);
    Tensor<double> f_general({1, 3, 6}), f_target({1, 3, 6});
    for (auto& v : f_general.data) v = rng.normal();
    for (auto& v : f_target.data) v = rng.normal();

    RelationCache<double> cache_t;
    auto r_g = compute_relation(f_general);
    auto r_t = compute_relation(f_target, &cache_t);
    const double d0 = frobenius_sq_diff(r_g.values, r_t.values);
    REQUIRE(d0 > 1e-6);  // non-degenerate pair

    Tensor<double> d_rt = rc_target_backward(r_g.values, r_t.values, 1.0);
    Tensor<double> grad = relation_backward(d_rt, cache_t);
    Tensor<double> stepped = f_target;
    const double eta = 1e-2;
    for (int64_t i = 0; i < stepped.numel(); ++i) stepped[i] -= eta * grad[i];

    auto r_t2 = compute_relation(stepped);
    const double d1 = frobenius_sq_diff(r_g.values, r_t2.values);
    REQUIRE(d1 > d0);
}

TEST_CASE("ramp schedule") {
    RampSchedule sched{0.1, 1000, RampForm::gaussian};

    SECTION("reaches base exactly at t_max") {
        REQUIRE(ramp_lambda(1000, sched) == 0.1);
        REQUIRE(ramp_lambda(5000, sched) == 0.1);  // clamps beyond t_max
    }

    SECTION("start value is base*e^-5") {
        REQUIRE(ramp_lambda(0, sched) == Catch::Approx(0.1 * std::exp(-5.0)).margin(1e-9));
        RampSchedule lit{0.1, 1000, RampForm::literal};
        REQUIRE(ramp_lambda(0, lit) == Catch::Approx(0.1 * std::exp(-5.0)).margin(1e-9));
        REQUIRE(ramp_lambda(1000, lit) == 0.1);
    }

    SECTION("monotone non-decreasing, never exceeding base") {
        for (RampForm form : {RampForm::gaussian, RampForm::literal}) {
            RampSchedule s{0.1, 257, form};
            double prev = -1;
            for (int64_t t = 0; t <= 257; ++t) {
                const double v = ramp_lambda(t, s);
                REQUIRE(v >= prev);
                REQUIRE(v <= 0.1 + 1e-15);
                prev = v;
            }
        }
    }

    SECTION("invalid t_max throws") {
        RampSchedule bad{0.1, 0, RampForm::gaussian};
        REQUIRE_THROWS(ramp_lambda(0, bad));
    }
}

TEST_CASE("downsample_mask picks block corners") {
    Tensor<double> m({1, 4, 4});
    for (int64_t i = 0; i < 16; ++i) m[1 + i - 1] = static_cast<double>(i);
    Tensor<double> d = downsample_mask(m, {1, 2, 2});
    REQUIRE(d.data == std::vector<double>{0, 2, 8, 10});
    REQUIRE_THROWS(downsample_mask(m, {1, 3, 3}));
}
