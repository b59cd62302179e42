#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ergolab/error.hpp"
#include "ergolab/measures.hpp"
#include "ergolab/oracles.hpp"

using namespace ergolab;

namespace {

// Independent W1 on 1D grids: CDF differences, brute-force shift on the circle.
double w1_oracle(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
    const double h = a.grid.cell_width(0);
    std::vector<double> diff;
    double fa = 0.0, fb = 0.0;
    for (std::size_t i = 0; i < a.masses.size(); ++i) {
        fa += a.masses[i];
        fb += b.masses[i];
        diff.push_back(fa - fb);
    }
    auto cost = [&](double c) {
        double s = 0.0;
        for (double d : diff) s += std::abs(d - c);
        return s * h;
    };
    if (!a.grid.domain().periodic[0]) return cost(0.0);
    double best = cost(0.0);
    for (double c : diff) best = std::min(best, cost(c));
    return best;
}

EmpiricalMeasure random_measure(const Grid& g, CounterRng& rng) {
    std::vector<double> w(g.size());
    for (auto& x : w) x = rng.uniform() < 0.3 ? 0.0 : rng.uniform();
    w[0] += 1e-3;
    return EmpiricalMeasure::from_weights(g, w, Provenance::analytic);
}

}  // namespace

TEST(Measure, Construction) {
    const auto g = Grid::circle(8);
    const auto u = EmpiricalMeasure::uniform(g);
    EXPECT_NEAR(u.total(), 1.0, 1e-15);
    const auto d = EmpiricalMeasure::dirac(g, PhasePoint(0.3));
    EXPECT_EQ(d.masses[2], 1.0);
    EXPECT_THROW(EmpiricalMeasure::from_weights(g, std::vector<double>(8, 0.0), Provenance::analytic), ConfigError);
    std::vector<double> neg(8, 1.0);
    neg[3] = -0.5;
    EXPECT_THROW(EmpiricalMeasure::from_weights(g, neg, Provenance::analytic), ConfigError);
    EXPECT_NEAR(u.integrate([](const PhasePoint& p) { return p[0]; }), 0.5, 1e-15);
}

TEST(Measure, MarginalOfProduct) {
    const Grid g(Box{2, {0.0, -1.0}, {1.0, 1.0}, {true, false}}, {4, 5});
    std::vector<double> w(g.size());
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 5; ++j) w[g.ravel(i, j)] = (i + 1.0) * (j + 1.0);
    const auto mu = EmpiricalMeasure::from_weights(g, w, Provenance::analytic);
    const auto m0 = mu.marginal(0);
    ASSERT_EQ(m0.masses.size(), 4u);
    EXPECT_NEAR(m0.masses[3], 4.0 / 10.0, 1e-15);
    EXPECT_NEAR(mu.marginal(1).masses[0], 1.0 / 15.0, 1e-15);
}

TEST(Measure, SampleStaysInCell) {
    const auto g = Grid::interval(-1.0, 1.0, 10);
    const auto d = EmpiricalMeasure::dirac(g, PhasePoint(0.33));
    CounterRng rng = CounterRng::stream(1, 0);
    for (int i = 0; i < 1000; ++i) {
        const double x = d.sample(rng)[0];
        EXPECT_GE(x, 0.2);
        EXPECT_LT(x, 0.4);
    }
    EXPECT_NEAR(d.sample(rng, false)[0], 0.3, 1e-15);
}

TEST(W1, DiracExamples) {
    const auto g = Grid::interval(-0.05, 1.05, 11);
    EXPECT_NEAR(w1_distance(EmpiricalMeasure::dirac(g, PhasePoint(0.0)), EmpiricalMeasure::dirac(g, PhasePoint(0.5))),
                0.5, 1e-12);
    const auto c = Grid::circle(10);
    EXPECT_NEAR(w1_distance(EmpiricalMeasure::dirac(c, PhasePoint(0.05)), EmpiricalMeasure::dirac(c, PhasePoint(0.55))),
                0.5, 1e-12);
    EXPECT_NEAR(w1_distance(EmpiricalMeasure::dirac(c, PhasePoint(0.05)), EmpiricalMeasure::dirac(c, PhasePoint(0.95))),
                0.1, 1e-12);
    EXPECT_EQ(w1_distance(EmpiricalMeasure::uniform(c), EmpiricalMeasure::uniform(c)), 0.0);
}

TEST(W1, AgreesWithIndependentOracle) {
    CounterRng rng = CounterRng::stream(7, 0);
    for (bool periodic : {false, true}) {
        const auto g = Grid::interval(0.0, 1.0, 37, periodic);
        for (int t = 0; t < 200; ++t) {
            const auto a = random_measure(g, rng), b = random_measure(g, rng);
            EXPECT_NEAR(w1_distance(a, b), w1_oracle(a, b), 1e-12);
        }
    }
}

TEST(W1, TriangleInequalityAndSymmetry) {
    CounterRng rng = CounterRng::stream(8, 0);
    const std::vector<Grid> grids{Grid::interval(-2.0, 2.0, 23), Grid::circle(31),
                                  Grid(Box{2, {0.0, -1.0}, {1.0, 1.0}, {true, false}}, {9, 7})};
    for (const auto& g : grids) {
        for (int t = 0; t < 1000 / 3 + 1; ++t) {
            const auto a = random_measure(g, rng), b = random_measure(g, rng), c = random_measure(g, rng);
            const double ab = w1_distance(a, b), bc = w1_distance(b, c), ac = w1_distance(a, c);
            EXPECT_LE(ac, ab + bc + 1e-12);
            EXPECT_NEAR(ab, w1_distance(b, a), 1e-12);
            EXPECT_GE(ab, 0.0);
        }
    }
}

TEST(W1, MismatchedGridsRejected) {
    EXPECT_THROW(w1_distance(EmpiricalMeasure::uniform(Grid::circle(8)), EmpiricalMeasure::uniform(Grid::circle(9))),
                 ConfigError);
}

TEST(OrbitMeasure, DoublingGenericOrbitIsNearLebesgue) {
    const auto c = MapSystem::expanding_circle(2);
    const auto orb = generic_linear_orbit(c, PhasePoint(0.1234), 99, 1000000);
    const auto g = Grid::circle(64);
    const auto mu = measure_from_orbit(orb, g, 1000);
    EXPECT_EQ(mu.provenance, Provenance::orbit_histogram);
    EXPECT_LT(w1_distance(mu, EmpiricalMeasure::uniform(g)), 0.005);
}

TEST(OrbitMeasure, Errors) {
    const auto c = MapSystem::expanding_circle(2);
    const auto orb = random_orbit(c, NoiseModel::for_system(c, 0.0), PhasePoint(0.1), 1, 10);
    EXPECT_THROW(measure_from_orbit(orb, Grid::circle(8), 10), ConfigError);
    const auto q = MapSystem::quadratic(2.0);
    const auto esc = random_orbit(q, NoiseModel::for_system(q, 0.05), PhasePoint(1.99), 3, 100000);
    ASSERT_TRUE(esc.escaped);
    EXPECT_THROW(measure_from_orbit(esc, Grid::for_system(q, 16), 0), EscapeError);
}

TEST(Cesaro, NoisyDoublingApproachesLebesgue) {
    const auto c = MapSystem::expanding_circle(2);
    const auto g = Grid::circle(64);
    const auto mu = cesaro_pushforward(c, NoiseModel::for_system(c, 0.05), EmpiricalMeasure::dirac(g, PhasePoint(0.3)),
                                       200, 20000, 11);
    EXPECT_EQ(mu.provenance, Provenance::cesaro);
    EXPECT_LT(w1_distance(mu, EmpiricalMeasure::uniform(g)), 0.01);
}

TEST(Cesaro, WorkerIndependent) {
    const auto c = MapSystem::expanding_circle(3, 0.1);
    const auto g = Grid::circle(32);
    CesaroOptions a, b;
    a.workers = 1;
    b.workers = 5;
    const auto init = EmpiricalMeasure::uniform(g);
    const auto m = NoiseModel::for_system(c, 0.02);
    EXPECT_EQ(cesaro_pushforward(c, m, init, 20, 3000, 4, a).masses, cesaro_pushforward(c, m, init, 20, 3000, 4, b).masses);
}

TEST(Cesaro, EscapeRaises) {
    const auto q = MapSystem::quadratic(2.0);
    const auto g = Grid::for_system(q, 32);
    EXPECT_THROW(cesaro_pushforward(q, NoiseModel::for_system(q, 0.05), EmpiricalMeasure::uniform(g), 200, 100, 1),
                 EscapeError);
}

TEST(Basins, DoublingHasOneCluster) {
    const auto c = MapSystem::expanding_circle(2);
    std::vector<PhasePoint> init;
    for (int i = 0; i < 20; ++i) init.emplace_back((i + 0.37) / 20.0);
    BasinOptions o;
    o.seed = 5;
    const auto r = basin_sample(c, init, o);
    EXPECT_EQ(r.clusters, 1u);
    EXPECT_NEAR(r.fractions[0], 1.0, 0.0);
}

TEST(Basins, TwoSinks) {
    const auto s = MapSystem::two_sink(0.05);
    std::vector<PhasePoint> init;
    for (int i = 0; i < 40; ++i) init.emplace_back((i + 0.5) / 40.0);
    BasinOptions o;
    o.n = 2000;
    o.grid = Grid::circle(100);
    const auto r = basin_sample(s, init, o);
    ASSERT_EQ(r.clusters, 2u);
    EXPECT_NEAR(r.fractions[0], 0.5, 1e-12);
    ASSERT_EQ(r.measures.size(), 2u);
    // sinks at 0 and 1/2
    for (const auto& mu : r.measures) {
        const double at0 = mu.masses[0] + mu.masses[99], atHalf = mu.masses[49] + mu.masses[50];
        EXPECT_NEAR(std::max(at0, atHalf), 1.0, 1e-12);
    }
}

TEST(Basins, QuadraticProbeAveragesMatchArcsine) {
    const auto q = MapSystem::quadratic(2.0);
    std::vector<PhasePoint> init;
    for (int i = 0; i < 32; ++i) init.emplace_back(-1.9 + 3.8 * (i + 0.5) / 32.0);
    BasinOptions o;
    o.n = 100000;
    o.cluster_tol = 0.2;
    const auto r = basin_sample(q, init, o);
    ASSERT_EQ(r.escaped, 0u);
    EXPECT_EQ(r.clusters, 1u);
    // u = x / 2 under the arcsine law: E u = 0, E u^2 = 1/2, E u^3 = 0
    const double expect[3] = {0.0, 0.5, 0.0};
    for (int k = 0; k < 3; ++k) {
        double mean = 0.0, sq = 0.0;
        for (const auto& v : r.probe_averages) mean += v[k];
        mean /= r.probe_averages.size();
        for (const auto& v : r.probe_averages) sq += (v[k] - mean) * (v[k] - mean);
        const double se = std::sqrt(sq / (r.probe_averages.size() - 1) / r.probe_averages.size());
        EXPECT_LE(std::abs(mean - expect[k]), 3.0 * se + 1e-4) << k;
    }
}

TEST(MeasureIo, CsvAndSummary) {
    const auto g = Grid::interval(0.0, 1.0, 2);
    const auto mu = EmpiricalMeasure::from_weights(g, {1.0, 3.0}, Provenance::eigenvector);
    std::ostringstream os;
    write_measure_csv(os, mu);
    EXPECT_EQ(os.str(), "center_0,mass\r\n0.25,0.25\r\n0.75,0.75\r\n");
    const auto oracle = EmpiricalMeasure::uniform(g);
    const auto s = measure_summary(mu, &oracle, "lebesgue");
    EXPECT_EQ(s["provenance"], "eigenvector");
    EXPECT_NEAR(s["w1_to_oracle"].get<double>(), 0.125, 1e-15);
    EXPECT_TRUE(s.contains("mean"));
}
