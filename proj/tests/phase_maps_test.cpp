#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "ergolab/error.hpp"
#include "ergolab/phase_maps.hpp"
#include "ergolab/rng.hpp"

using namespace ergolab;

namespace {

// Central-difference Jacobian of the unreduced formula (periodic outputs unwrapped).
std::array<std::array<double, 2>, 2> fd_jacobian(const MapSystem& sys, const PhasePoint& p,
                                                 double h = 1e-6) {
    std::array<std::array<double, 2>, 2> jac{};
    const PhasePoint base = sys.apply(p);
    for (int j = 0; j < sys.dim(); ++j) {
        PhasePoint a = p, b = p;
        a[j] += h;
        b[j] -= h;
        const PhasePoint fa = sys.apply(a), fb = sys.apply(b);
        for (int i = 0; i < sys.dim(); ++i) {
            double diff = fa[i] - fb[i];
            if (sys.domain().periodic[i]) diff = wrap_signed(diff);
            jac[i][j] = diff / (2 * h);
        }
    }
    (void)base;
    return jac;
}

}  // namespace

TEST(PhaseMaps, EvalExamples) {
    EXPECT_DOUBLE_EQ(eval_map(MapSystem::expanding_circle(2), PhasePoint(0.3))[0], 0.6);
    EXPECT_DOUBLE_EQ(eval_map(MapSystem::quadratic(2.0), PhasePoint(0.0))[0], 2.0);
    const auto viana = MapSystem::viana(16, 1.9, 0.01);
    const PhasePoint v = eval_map(viana, PhasePoint(0.25, 0.0));
    EXPECT_DOUBLE_EQ(v[0], 0.0);
    EXPECT_NEAR(v[1], 1.91, 1e-15);
}

TEST(PhaseMaps, OutsideDomainThrows) {
    EXPECT_THROW(eval_map(MapSystem::quadratic(2.0), PhasePoint(2.5)), DomainError);
    EXPECT_THROW(eval_map(MapSystem::viana(16, 1.9, 0.01), PhasePoint(0.1, 1.99)), DomainError);
}

TEST(PhaseMaps, DifferentialExamples) {
    const auto dd = differential(MapSystem::expanding_circle(2), PhasePoint(0.123));
    EXPECT_NEAR(dd.log_inv_norm, -0.693147180559945, 1e-14);
    EXPECT_EQ(differential(MapSystem::quadratic(2.0), PhasePoint(0.5)).log_abs_det, 0.0);
    const auto vd = differential(MapSystem::viana(16, 1.9, 0.01), PhasePoint(0.25, 0.5));
    const auto& j = vd.jacobian;
    EXPECT_NEAR(j[0][0] * j[1][1] - j[0][1] * j[1][0], -16.0, 1e-12);
    EXPECT_NEAR(vd.log_abs_det, std::log(16.0), 1e-14);
}

TEST(PhaseMaps, SingularSentinelOnCriticalSet) {
    const auto dd = differential(MapSystem::quadratic(2.0), PhasePoint(0.0));
    EXPECT_TRUE(dd.singular);
    EXPECT_EQ(dd.log_abs_det, -std::numeric_limits<double>::infinity());
    const auto vd = differential(MapSystem::viana(16, 1.9, 0.01), PhasePoint(0.3, 0.0));
    EXPECT_TRUE(vd.singular);
}

TEST(PhaseMaps, CriticalDistance) {
    EXPECT_DOUBLE_EQ(critical_distance(MapSystem::quadratic(2.0), PhasePoint(0.3)), 0.3);
    EXPECT_DOUBLE_EQ(critical_distance(MapSystem::viana(16, 1.9, 0.01), PhasePoint(0.7, -0.2)), 0.2);
    EXPECT_TRUE(std::isinf(critical_distance(MapSystem::expanding_circle(2), PhasePoint(0.1))));
}

TEST(PhaseMaps, JacobianMatchesFiniteDifferences) {
    const std::vector<MapSystem> systems = {
        MapSystem::expanding_circle(3, 0.1, 0.02), MapSystem::quadratic(1.7),
        MapSystem::viana(16, 1.9, 0.02), MapSystem::torus_class_u(3, 0.3),
        MapSystem::two_sink(0.05)};
    CounterRng rng(99);
    for (const auto& sys : systems) {
        int checked = 0;
        while (checked < 200) {
            PhasePoint p = sys.dim() == 1 ? PhasePoint(0.0) : PhasePoint(0.0, 0.0);
            for (int i = 0; i < sys.dim(); ++i)
                p[i] = rng.uniform(sys.domain().lo[i], sys.domain().hi[i]);
            if (sys.critical_distance(p) < 1e-3) continue;
            ++checked;
            const auto exact = sys.differential(p).jacobian;
            const auto fd = fd_jacobian(sys, p);
            for (int i = 0; i < sys.dim(); ++i)
                for (int j = 0; j < sys.dim(); ++j)
                    EXPECT_NEAR(fd[i][j], exact[i][j], 1e-6 * std::max(1.0, std::abs(exact[i][j])))
                        << sys.describe();
            const auto dd = sys.differential(p);
            const double det = exact[0][0] * (sys.dim() == 1 ? 1.0 : exact[1][1]) -
                               (sys.dim() == 1 ? 0.0 : exact[0][1] * exact[1][0]);
            EXPECT_NEAR(std::exp(dd.log_abs_det), std::abs(det), 1e-12 * std::abs(det));
            if (sys.dim() == 1) EXPECT_EQ(dd.log_inv_norm + dd.log_abs_det, 0.0);
        }
    }
}

TEST(PhaseMaps, CircleComponentsInvariantUnderIntegerShift) {
    const auto sys = MapSystem::expanding_circle(3, 0.1);
    const auto viana = MapSystem::viana(16, 1.9, 0.01);
    for (double x : {0.05, 0.3, 0.77}) {
        EXPECT_NEAR(sys.apply(PhasePoint(x))[0], sys.apply(PhasePoint(x + 3.0))[0], 1e-12);
        const auto a = viana.apply(PhasePoint(x, 0.4));
        const auto b = viana.apply(PhasePoint(x - 2.0, 0.4));
        EXPECT_NEAR(wrap_signed(a[0] - b[0]), 0.0, 1e-12);
        EXPECT_NEAR(a[1], b[1], 1e-12);
    }
}

TEST(PhaseMaps, JsonRoundTrip) {
    for (const auto& sys : {MapSystem::expanding_circle(2, 0.15), MapSystem::quadratic(2.0, 0.1),
                            MapSystem::rotation(0.25), MapSystem::torus_class_u(4, 0.5)}) {
        const auto back = system_from_json(to_json(sys));
        EXPECT_EQ(to_json(back), to_json(sys));
    }
    EXPECT_THROW(system_from_json(nlohmann::json::parse(R"({"family":"quadratic","params":{"b":1}})")),
                 ConfigError);
    EXPECT_THROW(system_from_json(nlohmann::json::parse(R"({"family":"tent"})")), ConfigError);
    EXPECT_THROW(MapSystem::expanding_circle(1), ConfigError);
    EXPECT_THROW(MapSystem::viana(8, 1.9, 0.01), ConfigError);
}

TEST(Nonflat, QuadraticExactConstant) {
    const auto rep = verify_nonflat(MapSystem::quadratic(2.0), 1.0, 2.01, 20000, 1);
    ASSERT_TRUE(rep.applicable);
    EXPECT_EQ(rep.fraction_s1, 0.0);
    EXPECT_NEAR(rep.tight_s1_upper, 2.0, 1e-9);
    EXPECT_EQ(rep.fraction_s2, 0.0);
    EXPECT_EQ(rep.fraction_s3, 0.0);
    EXPECT_LE(rep.tight_s2, 2.0 * std::log(2.0) + 1e-9);
}

TEST(Nonflat, QuadraticBetaTwoViolates) {
    // ratio 2|x| exceeds B |x|^2 exactly when |x| < 2 / B = 1
    const auto rep = verify_nonflat(MapSystem::quadratic(2.0), 2.0, 2.0, 20000, 3);
    EXPECT_GT(rep.fraction_s1, 0.3);
    EXPECT_LT(rep.fraction_s1, 0.7);
}

TEST(Nonflat, VianaConstantsStableAcrossSeeds) {
    const auto sys = MapSystem::viana(16, 1.9, 0.02);
    const auto a = verify_nonflat(sys, 1.0, 2.0, 40000, 11);
    const auto b = verify_nonflat(sys, 1.0, 2.0, 40000, 12);
    for (auto [x, y] : {std::pair{a.tight_s1_lower, b.tight_s1_lower},
                        std::pair{a.tight_s2, b.tight_s2}, std::pair{a.tight_s3, b.tight_s3}}) {
        EXPECT_TRUE(std::isfinite(x));
        EXPECT_NEAR(x, y, 0.05 * std::max(x, y));
    }
}

TEST(Nonflat, EmptyCriticalSetNotApplicable) {
    EXPECT_FALSE(verify_nonflat(MapSystem::expanding_circle(2), 1.0, 2.0, 10, 1).applicable);
}

TEST(InvariantRegion, VianaFindsInterval) {
    const auto sys = MapSystem::viana(16, 1.9, 0.01);
    Box cand = sys.domain();
    cand.lo[1] = -2.0;
    cand.hi[1] = 2.0;
    const auto res = detect_invariant_region(sys, cand);
    ASSERT_TRUE(res.found);
    EXPECT_GT(res.margin, 0.0);
    EXPECT_GT(res.region.hi[1], 1.91);
    EXPECT_LT(res.region.lo[1], 1.89 - 1.91 * 1.91);
    // every image of a fine region grid stays inside with the reported margin
    const int n = 301;
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) {
            const PhasePoint p((i + 0.5) / n,
                               res.region.lo[1] + res.region.width(1) * k / (n - 1));
            const double y = sys.apply(p)[1];
            EXPECT_GE(y - res.region.lo[1], res.margin - 1e-3);
            EXPECT_GE(res.region.hi[1] - y, res.margin - 1e-3);
        }
}

TEST(InvariantRegion, QuadraticNonStrictMargin) {
    const auto sys = MapSystem::quadratic(1.8);
    Box cand = sys.domain();
    cand.lo[0] = -1.8;
    cand.hi[0] = 1.8;
    InvariantRegionOptions opt;
    opt.strict = false;
    const auto res = detect_invariant_region(sys, cand, opt);
    ASSERT_TRUE(res.found);
    EXPECT_NEAR(res.margin_lower[0], 0.36, 1e-9);
    EXPECT_GE(res.margin_lower[0], 0.3);
}

TEST(InvariantRegion, QuadraticTwoStrictFails) {
    const auto sys = MapSystem::quadratic(2.0);
    const auto res = detect_invariant_region(sys, sys.domain());
    EXPECT_FALSE(res.found);
    EXPECT_LE(res.worst_violation, 0.0);
}

TEST(InvariantRegion, GridTooSmall) {
    InvariantRegionOptions opt;
    opt.grid_n = 10;
    const auto sys = MapSystem::quadratic(1.5);
    EXPECT_THROW(detect_invariant_region(sys, sys.domain(), opt), ConfigError);
}

namespace {
std::vector<Ball> arcs(int count) {
    std::vector<Ball> out;
    for (int i = 0; i < count; ++i) out.push_back({PhasePoint((i + 0.5) / count), 0.5 / count});
    return out;
}
}  // namespace

TEST(ClassU, LinearDegreeFourPasses) {
    const auto rep = class_u_check(MapSystem::expanding_circle(4), arcs(4), {0.0, 0.1, 2.0, 3.5, 4, 0});
    EXPECT_TRUE(rep.covers);
    EXPECT_TRUE(rep.injective);
    EXPECT_TRUE(rep.all_conditions_pass());
    EXPECT_EQ(rep.v_points, 0u);
    // sigma1 = 3.5 does not exceed p = 4, reported separately
    EXPECT_FALSE(rep.sigma_exceeds_p);
}

TEST(ClassU, VolumeExpansionFailsForDoubling) {
    const auto rep = class_u_check(MapSystem::expanding_circle(2), arcs(2), {0.0, 0.1, 0.5, 3.0, 2, 0});
    EXPECT_TRUE(rep.conditions[0].pass);
    EXPECT_FALSE(rep.conditions[2].pass);
    EXPECT_NEAR(rep.conditions[2].margin, -1.0, 1e-12);
}

TEST(ClassU, DeformationPassesWithBranchCovering) {
    const auto sys = MapSystem::expanding_circle(4, 0.1);
    // branch boundaries: lift(b_i) = i
    std::vector<double> b = {0.0};
    for (int i = 1; i < 4; ++i) {
        double lo = 0.0, hi = 1.0;
        for (int it = 0; it < 100; ++it) {
            const double mid = 0.5 * (lo + hi);
            (sys.lift(mid) < i ? lo : hi) = mid;
        }
        b.push_back(lo);
    }
    b.push_back(1.0);
    std::vector<Ball> cover;
    for (int i = 0; i < 4; ++i) cover.push_back({PhasePoint(0.5 * (b[i] + b[i + 1])), 0.5 * (b[i + 1] - b[i])});
    const auto rep = class_u_check(sys, cover, {0.0, 0.1, 2.0, 3.3, 3, 1});
    EXPECT_TRUE(rep.injective);
    EXPECT_TRUE(rep.all_conditions_pass());
    EXPECT_TRUE(rep.sigma_exceeds_p);
    EXPECT_TRUE(rep.in_class_u());
    // derivative range [4 - 0.2 pi, 4 + 0.2 pi]
    EXPECT_NEAR(rep.conditions[2].margin, 4.0 - 0.2 * std::numbers::pi - 3.3, 1e-5);
}

TEST(ClassU, NotACover) {
    std::vector<Ball> cover = {{PhasePoint(0.25), 0.1}, {PhasePoint(0.75), 0.1}};
    EXPECT_THROW(class_u_check(MapSystem::expanding_circle(2), cover, {0, 0, 0.5, 1.5, 2, 0}), ConfigError);
}

TEST(ClassU, TorusDeformationWithNonExpandingRegion) {
    // first diagonal entry 4 + 2 pi amp cos(2 pi x) dips below 1 near x = 1/2
    const auto sys = MapSystem::torus_class_u(4, 0.55);
    std::vector<Ball> cover;
    for (int i = 0; i < 16; ++i)
        for (int j = 0; j < 16; ++j)
            cover.push_back({PhasePoint((i + 0.5) / 16, (j + 0.5) / 16), 0.75 / 16});
    const auto rep = class_u_check(sys, cover, {1.0, 5.0, 0.5, 2.0, 256, 0}, 128);
    EXPECT_TRUE(rep.injective);
    EXPECT_GT(rep.v_points, 0u);
    // V is not inside an empty W
    EXPECT_FALSE(rep.conditions[3].pass);
}
