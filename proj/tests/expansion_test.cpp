#include <gtest/gtest.h>

#include <cmath>

#include "ergolab/error.hpp"
#include "ergolab/expansion.hpp"
#include "ergolab/oracles.hpp"

using namespace ergolab;

namespace {

// Direct O(n^2) evaluation of both defining inequalities.
bool is_hyperbolic_time_slow(const RandomOrbit& orb, std::size_t n, double alpha, double delta, double b) {
    for (std::size_t k = 1; k <= n; ++k) {
        double prod_log = 0.0;
        for (std::size_t j = n - k; j < n; ++j) prod_log += orb.log_inv_norm[j];
        if (prod_log > k * std::log(alpha) + 1e-9) return false;
        const double d = orb.crit_dist[n - k];
        const double dd = d >= delta ? 1.0 : d;
        if (dd < std::pow(alpha, b * k) * (1 - 1e-9)) return false;
    }
    return true;
}

RandomOrbit single_point_orbit(const MapSystem& sys, double x) {
    RandomOrbit orb = random_orbit(sys, NoiseModel{0.0, 1}, PhasePoint(x), 0, 1);
    return orb;
}

}  // namespace

TEST(TruncatedDistance, Cases) {
    EXPECT_EQ(truncated_distance(0.5, 0.1), 1.0);
    EXPECT_EQ(truncated_distance(0.05, 0.1), 0.05);
    EXPECT_EQ(truncated_distance(0.0, 0.1), 0.0);
    EXPECT_EQ(truncated_distance(0.1, 0.1), 1.0);
    EXPECT_THROW(truncated_distance(0.5, 0.0), ConfigError);
    double prev = 0.0;
    for (int i = 0; i <= 200; ++i) {
        const double v = truncated_distance(i * 0.001, 0.1);
        EXPECT_GE(v, prev);
        prev = v;
    }
}

TEST(ExpansionAverage, DoublingIsExact) {
    const auto sys = MapSystem::expanding_circle(2);
    const auto orb = random_orbit(sys, NoiseModel{0.05, 1}, PhasePoint(0.3), 8, 1000000);
    const auto rep = expansion_average(orb);
    EXPECT_NEAR(rep.expansion_avg, -std::log(2.0), 1e-12);
    EXPECT_NEAR(rep.tail_max, -std::log(2.0), 1e-12);
    EXPECT_EQ(rep.skipped, 0u);
}

TEST(ExpansionAverage, QuadraticLyapunov) {
    const auto sys = MapSystem::quadratic(2.0);
    for (double x0 : {0.1, 0.37}) {
        const auto orb = random_orbit(sys, NoiseModel{0.0, 1}, PhasePoint(x0), 0, 1000000);
        ASSERT_FALSE(orb.escaped);
        EXPECT_NEAR(expansion_average(orb).expansion_avg, -std::log(2.0), 5e-3);
    }
}

TEST(ExpansionAverage, AdditiveUnderConcatenation) {
    const auto sys = MapSystem::quadratic(1.9, 0.05);
    const NoiseModel m{0.01, 1};
    const auto full = random_orbit(sys, NoiseSequence(m, 4), PhasePoint(0.2), 3000);
    const auto first = random_orbit(sys, NoiseSequence(m, 4), PhasePoint(0.2), 1000);
    NoiseSequence rest(m, 4);
    for (int i = 0; i < 1000; ++i) rest = rest.shifted();
    const auto second = random_orbit(sys, rest, first.points.back(), 2000);
    const double joint = expansion_average(full).expansion_avg;
    EXPECT_NEAR(1000 * expansion_average(first).expansion_avg + 2000 * expansion_average(second).expansion_avg,
                3000 * joint, 1e-10);
}

TEST(ExpansionAverage, SingularHitSkipped) {
    const auto sys = MapSystem::quadratic(2.0);
    // 0 -> 2 -> -2 -> -2: one singular point at step 0
    const auto orb = random_orbit(sys, NoiseModel{0.0, 1}, PhasePoint(0.0), 0, 4);
    const auto rep = expansion_average(orb);
    EXPECT_EQ(rep.skipped, 1u);
    EXPECT_NEAR(rep.expansion_avg, -std::log(4.0), 1e-15);
}

TEST(SlowApproach, Examples) {
    EXPECT_EQ(slow_approach_average(random_orbit(MapSystem::quadratic(0.5), NoiseModel{0.0, 1}, PhasePoint(0.6), 0, 50), 0.1), 0.0);
    const auto one = single_point_orbit(MapSystem::quadratic(1.0), 0.01);
    EXPECT_NEAR(slow_approach_average(one, 0.1), -std::log(0.01), 1e-14);
    const auto circle = random_orbit(MapSystem::expanding_circle(3), NoiseModel{0.1, 1}, PhasePoint(0.2), 1, 1000);
    EXPECT_EQ(slow_approach_average(circle, 0.5), 0.0);
}

TEST(SlowApproach, QuadraticSmallAndStable) {
    const auto sys = MapSystem::quadratic(2.0);
    std::vector<double> vals;
    for (double x0 : {0.1, 0.2, 0.3, 0.45, 0.77}) {
        const auto orb = random_orbit(sys, NoiseModel{0.0, 1}, PhasePoint(x0), 0, 1000000);
        const double v = slow_approach_average(orb, 1e-3);
        EXPECT_GE(v, 0.0);
        EXPECT_LT(v, 0.05);
        vals.push_back(v);
    }
    const auto [lo, hi] = std::minmax_element(vals.begin(), vals.end());
    EXPECT_LE(*hi, 2.0 * *lo);
}

TEST(HyperbolicTimes, DoublingThresholds) {
    const auto sys = MapSystem::expanding_circle(2);
    const auto orb = random_orbit(sys, NoiseModel{0.02, 1}, PhasePoint(0.1), 2, 500);
    const auto all = hyperbolic_times(orb, 0.6, 0.1, 1.0);
    EXPECT_EQ(all.times.size(), 500u);
    EXPECT_DOUBLE_EQ(all.density(), 1.0);
    EXPECT_TRUE(hyperbolic_times(orb, 0.4, 0.1, 1.0).times.empty());
    // empty critical set: b and delta are irrelevant
    EXPECT_EQ(hyperbolic_times(orb, 0.6, 0.01, 7.0).times, all.times);
}

TEST(HyperbolicTimes, MatchesSlowRecheck) {
    const auto sys = MapSystem::quadratic(1.95, 0.05);
    const auto orb = random_orbit(sys, NoiseModel{0.02, 1}, PhasePoint(0.3), 21, 600);
    ASSERT_FALSE(orb.escaped);
    for (double alpha : {0.5, 0.8, 0.95}) {
        const auto rec = hyperbolic_times(orb, alpha, 0.2, 1.0);
        std::size_t idx = 0;
        for (std::size_t n = 1; n <= orb.steps(); ++n) {
            const bool fast = idx < rec.times.size() && rec.times[idx] == n;
            if (fast) ++idx;
            ASSERT_EQ(fast, is_hyperbolic_time_slow(orb, n, alpha, 0.2, 1.0)) << "n=" << n << " alpha=" << alpha;
        }
    }
}

TEST(HyperbolicTimes, VianaPositiveDensity) {
    const auto sys = MapSystem::viana(16, 1.9, 0.01, 0.02);
    EnsembleSpec spec;
    spec.orbits = 20;
    spec.length = 20000;
    spec.seed = 5;
    spec.alpha = 0.9;
    spec.hyp_delta = 0.05;
    const auto rows = orbit_ensemble(sys, NoiseModel{0.005, 2}, spec);
    int positive = 0;
    for (const auto& r : rows) {
        EXPECT_FALSE(r.escaped);
        positive += r.hyperbolic.density() > 0.0;
        EXPECT_LT(r.expansion.expansion_avg, 0.0);
    }
    EXPECT_GE(positive, 19);
}

TEST(Contraction, ExpandingCircleContracts) {
    const auto sys = MapSystem::expanding_circle(4);
    const auto orb = random_orbit(sys, NoiseModel{0.03, 1}, PhasePoint(0.21), 3, 200);
    const auto rec = hyperbolic_times(orb, 0.5, 0.1);
    ASSERT_EQ(rec.times.size(), 200u);
    const auto rep = contraction_check(sys, orb, rec, {1e-4, 16, 7});
    EXPECT_EQ(rep.times_checked, 16u);
    EXPECT_GT(rep.comparisons, 0u);
    EXPECT_EQ(rep.violations, 0u);
    EXPECT_EQ(rep.skipped, 0u);
}

TEST(Contraction, EmptyRecord) {
    const auto sys = MapSystem::expanding_circle(2);
    const auto orb = random_orbit(sys, NoiseModel{0.0, 1}, PhasePoint(0.1), 0, 10);
    const auto rep = contraction_check(sys, orb, hyperbolic_times(orb, 0.4, 0.1));
    EXPECT_EQ(rep.times_checked, 0u);
    EXPECT_EQ(rep.violation_fraction(), 0.0);
}

TEST(Contraction, VianaSoftCheck) {
    const auto sys = MapSystem::viana(16, 1.9, 0.01, 0.02);
    const auto orb = random_orbit(sys, NoiseModel{0.005, 2}, PhasePoint(0.3, 0.5), 12, 3000);
    ASSERT_FALSE(orb.escaped);
    const auto rec = hyperbolic_times(orb, 0.9, 0.05);
    ASSERT_FALSE(rec.times.empty());
    const auto rep = contraction_check(sys, orb, rec, {1e-4, 16, 1});
    EXPECT_GT(rep.comparisons, 0u);
    EXPECT_LT(rep.violation_fraction(), 0.05);
}

TEST(ExponentBound, Examples) {
    EnsembleSpec spec;
    spec.orbits = 16;
    spec.length = 5000;
    spec.seed = 3;
    const auto dbl = orbit_ensemble(MapSystem::expanding_circle(2), NoiseModel{0.0, 1}, spec);
    std::vector<ExpansionReport> reps;
    for (const auto& r : dbl) reps.push_back(r.expansion);
    EXPECT_NEAR(estimate_exponent_bound(reps), std::log(2.0), 1e-12);

    reps.clear();
    for (const auto& r : orbit_ensemble(MapSystem::rotation(0.1234), NoiseModel{0.0, 1}, spec)) reps.push_back(r.expansion);
    EXPECT_LE(estimate_exponent_bound(reps), 0.0);
    EXPECT_THROW(estimate_exponent_bound({}), ConfigError);
}

TEST(ExponentBound, QuadraticEnsemble) {
    EnsembleSpec spec;
    spec.orbits = 100;
    spec.length = 100000;
    spec.seed = 11;
    std::vector<ExpansionReport> reps;
    for (const auto& r : orbit_ensemble(MapSystem::quadratic(2.0), NoiseModel{0.0, 1}, spec)) {
        ASSERT_FALSE(r.escaped);
        reps.push_back(r.expansion);
    }
    const double c = estimate_exponent_bound(reps);
    EXPECT_GE(c, 0.6);
    EXPECT_LE(c, 0.75);
}

TEST(ExpansionJson, Shape) {
    const auto sys = MapSystem::expanding_circle(2);
    const auto orb = random_orbit(sys, NoiseModel{0.0, 1}, PhasePoint(0.1), 0, 20);
    auto rep = expansion_average(orb);
    rep.slow_approach[0.1] = 0.0;
    const auto hyp = hyperbolic_times(orb, 0.6, 0.1);
    const auto j = to_json(rep, &hyp);
    EXPECT_EQ(j.at("n").get<int>(), 20);
    EXPECT_TRUE(j.at("slow_approach").contains("0.10000000000000001"));
    EXPECT_EQ(j.at("hyp_times").at("count").get<int>(), 20);
}

namespace {

double integrability_oracle(double delta) {
    return gauss_legendre([](double x) { return -std::log(2.0 * x) * 2.0 * ulam_a2_density(x); }, 0.0, delta, 64);
}

}  // namespace

TEST(UniformIntegrability, EmptyCriticalSet) {
    const auto grid = Grid::circle(64);
    const auto est = uniform_integrability_probe(MapSystem::expanding_circle(2), NoiseModel{0.0, 1},
                                                 EmpiricalMeasure::uniform(grid), 0.1, 1000, 1);
    EXPECT_EQ(est.estimate, 0.0);
}

TEST(UniformIntegrability, ZeroNeighbourhoodMass) {
    const auto grid = Grid::interval(-2.0, 2.0, 400);
    const auto mu = EmpiricalMeasure::dirac(grid, PhasePoint(1.5));
    const auto est = uniform_integrability_probe(MapSystem::quadratic(2.0), NoiseModel{0.0, 1}, mu, 0.1, 1000, 1);
    EXPECT_EQ(est.estimate, 0.0);
}

TEST(UniformIntegrability, QuadratureOracle) {
    const auto sys = MapSystem::quadratic(2.0);
    const auto grid = Grid::interval(-2.0, 2.0, 40000);
    const auto mu = oracle_measure("ulam_a2", grid);
    double prev = 1e300;
    for (double delta : {0.1, 0.01, 0.001}) {
        const auto est = uniform_integrability_probe(sys, NoiseModel{0.0, 1}, mu, delta, 400000, 7);
        const double want = integrability_oracle(delta);
        EXPECT_NEAR(est.estimate, want, 3.0 * est.std_error) << "delta=" << delta;
        EXPECT_LT(est.estimate, prev);
        prev = est.estimate;
    }
}
