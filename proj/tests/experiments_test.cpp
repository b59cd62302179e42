#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "ergolab/error.hpp"
#include "ergolab/experiments.hpp"

using namespace ergolab;
using nlohmann::json;

namespace {
const double kLog2 = std::numbers::ln2;

ZeroNoiseSpec doubling_sweep() {
    ZeroNoiseSpec s;
    s.system = MapSystem::expanding_circle(2);
    s.epsilons = {0.1, 0.05, 0.025};
    s.cells0 = 256;
    s.subsamples = 16;
    s.seed = 3;
    s.reference = ReferenceKind::oracle;
    s.oracle = "lebesgue_circle";
    return s;
}

FamilySpec circle_family(int d, std::vector<double> amps) {
    FamilySpec f;
    f.base = to_json(MapSystem::expanding_circle(d));
    f.parameter = "amp1";
    f.values = std::move(amps);
    return f;
}

// period-p orbit of the doubling map in exact integer arithmetic: x_j = (2^j m mod q) / q, q = 2^p - 1
RandomOrbit periodic_orbit(unsigned p, std::uint64_t m, std::size_t n) {
    const std::uint64_t q = (std::uint64_t{1} << p) - 1;
    RandomOrbit orb;
    orb.dim = 1;
    std::uint64_t r = m % q;
    for (std::size_t j = 0; j <= n; ++j) {
        orb.points.emplace_back(static_cast<double>(r) / static_cast<double>(q));
        r = (2 * r) % q;
    }
    return orb;
}

std::vector<Ball> arcs(int count) {
    std::vector<Ball> out;
    for (int i = 0; i < count; ++i) out.push_back({PhasePoint((i + 0.5) / count), 0.5 / count});
    return out;
}
}  // namespace

TEST(ZeroNoise, DoublingLevelsBelowTwoCells) {
    const auto r = zero_noise_sweep(doubling_sweep());
    ASSERT_EQ(r.levels.size(), 3u);
    for (const auto& l : r.levels) {
        EXPECT_FALSE(l.flagged);
        EXPECT_LT(l.value, 2.0 / 256);
    }
    EXPECT_TRUE(r.pass());
    EXPECT_EQ(r.summary.at("distance"), "w1_reference");
}

TEST(ZeroNoise, SettingsReplayReproducesReport) {
    const auto r = zero_noise_sweep(doubling_sweep());
    const auto replay = zero_noise_sweep(zero_noise_spec_from_json(r.settings));
    EXPECT_EQ(to_json(r).dump(), to_json(replay).dump());
}

TEST(ZeroNoise, NonConvergedLevelsAreFlagged) {
    auto s = doubling_sweep();
    s.system = MapSystem::expanding_circle(2, 0.1);
    s.stationary.max_iterations = 1;
    s.stationary.tolerance = 1e-300;
    const auto r = zero_noise_sweep(s);
    ASSERT_EQ(r.levels.size(), 3u);
    for (const auto& l : r.levels) EXPECT_TRUE(l.flagged);
    EXPECT_FALSE(r.verdicts.at("final_below_threshold"));
    EXPECT_FALSE(r.verdicts.at("tail_non_increasing"));
    EXPECT_TRUE(to_json(r).at("levels").at(0).at("value").is_null());
}

TEST(ZeroNoise, SpecRejectsBadInput) {
    json j = to_json(doubling_sweep());
    j["bogus"] = 1;
    EXPECT_THROW(zero_noise_spec_from_json(j), ConfigError);
    j.erase("bogus");
    j["epsilons"] = {0.1, 0.2};
    EXPECT_THROW(zero_noise_spec_from_json(j), ConfigError);
    j["epsilons"] = {0.1};
    j["reference"] = "nothing";
    EXPECT_THROW(zero_noise_spec_from_json(j), ConfigError);
}

TEST(Hull, ExactMixtureHasZeroDistance) {
    const Grid g = Grid::circle(64);
    const auto a = EmpiricalMeasure::dirac(g, PhasePoint(0.1));
    const auto b = EmpiricalMeasure::dirac(g, PhasePoint(0.6));
    std::vector<double> w(64, 0.0);
    w[*g.cell_of(PhasePoint(0.1))] = 0.3;
    w[*g.cell_of(PhasePoint(0.6))] = 0.7;
    const auto mix = EmpiricalMeasure::from_weights(g, w, Provenance::analytic);
    EXPECT_LT(hull_distance(mix, {a, b}), 1e-9);
    EXPECT_DOUBLE_EQ(hull_distance(mix, {a}), w1_distance(mix, a));
    EXPECT_THROW(hull_distance(mix, {}), ConfigError);
}

TEST(ZeroNoise, TwoSinkUsesHullOfBasinMeasures) {
    ZeroNoiseSpec s;
    s.system = MapSystem::two_sink(0.02);
    s.epsilons = {0.2, 0.1, 0.07};
    s.cells0 = 512;
    s.subsamples = 16;
    s.seed = 11;
    s.reference = ReferenceKind::orbit_histogram;
    s.reference_orbits = 8;
    s.reference_length = 2000;
    s.basin_initials = {PhasePoint(0.1), PhasePoint(0.2), PhasePoint(0.6), PhasePoint(0.9)};
    s.basin_length = 2000;
    const auto r = zero_noise_sweep(s);
    EXPECT_EQ(r.summary.at("physical_measures"), 2);
    EXPECT_EQ(r.summary.at("distance"), "hull_w1");
    EXPECT_TRUE(r.summary.at("monotone").get<bool>());

    BasinOptions bo;
    bo.n = s.basin_length;
    bo.cluster_tol = s.basin_tol;
    bo.seed = s.seed;
    bo.grid = Grid::circle(512);
    const auto vertices = basin_sample(s.system, s.basin_initials, bo).measures;
    ASSERT_EQ(vertices.size(), 2u);
    ASSERT_GT(w1_distance(vertices[0], vertices[1]), 0.2);
    // each level: no farther than either sink measure, well below them
    const auto st = stationary_density(noisy_ulam(s.system, NoiseModel{0.07, 1}, Grid::circle(512), 16, 11));
    for (const auto& v : vertices) EXPECT_LT(r.levels.back().value, 0.5 * w1_distance(st.measure, v));
    EXPECT_EQ(zero_noise_spec_from_json(r.settings).basin_initials.size(), 4u);
}

TEST(ZeroNoise, CsvHeaderListsNumericExtras) {
    const auto r = zero_noise_sweep(doubling_sweep());
    std::ostringstream os;
    write_sweep_csv(os, r);
    const std::string out = os.str();
    EXPECT_EQ(out.substr(0, out.find("\r\n")),
              "level,parameter,value,flagged,iterations,residual,sink_mass,w1_reference");
    EXPECT_EQ(std::count(out.begin(), out.end(), '\n'), 4);
}

TEST(Family, MembersAndValidation) {
    auto f = circle_family(2, {0.0, 0.1});
    EXPECT_DOUBLE_EQ(f.member(1).params().amp1, 0.1);
    EXPECT_THROW(f.member(2), ConfigError);
    json j = to_json(f);
    EXPECT_DOUBLE_EQ(family_spec_from_json(j).member(1).params().amp1, 0.1);
    j["values"] = {0.0, 0.2};  // 2 pi 0.2 > 1 still gives f' > 0
    EXPECT_NO_THROW(family_spec_from_json(j));
    j["values"] = {0.0, 0.5};
    EXPECT_THROW(family_spec_from_json(j), ConfigError);
    j["values"] = {0.0};
    j["extra"] = 1;
    EXPECT_THROW(family_spec_from_json(j), ConfigError);
}

TEST(EntropySweep, AcipFamilyIsUpperSemicontinuous) {
    const auto members = acip_members(circle_family(2, {0.0, 0.1, 0.05, 0.025}), Grid::circle(256));
    EntropySweepOptions o;
    o.schedule = {4, 8, 12};
    o.itinerary.points_per_cell = 64;
    const auto xi = FinitePartition::halves(members[0].system.domain());
    const auto r = entropy_semicontinuity_sweep(members, xi, o);
    EXPECT_NEAR(r.levels[0].value, kLog2, 1e-9);
    for (std::size_t k = 1; k < r.levels.size(); ++k) {
        EXPECT_LT(r.levels[k].value, kLog2);
        EXPECT_GT(r.levels[k].value, 0.6);
    }
    EXPECT_TRUE(r.verdicts.at("upper_semicontinuity"));
    EXPECT_EQ(r.levels[0].extra.at("source"), "measure");
}

TEST(EntropySweep, ConstantFamilyHasNoExcess) {
    std::vector<EntropyMember> members;
    for (int k = 0; k < 3; ++k) {
        EntropyMember m;
        m.parameter = k;
        m.measure = EmpiricalMeasure::uniform(Grid::circle(128));
        members.push_back(m);
    }
    EntropySweepOptions o;
    o.schedule = {4, 8};
    o.itinerary.points_per_cell = 64;
    const auto r = entropy_semicontinuity_sweep(members, FinitePartition::halves(members[0].system.domain()), o);
    EXPECT_DOUBLE_EQ(r.summary.at("max_excess").get<double>(), 0.0);
    EXPECT_TRUE(r.pass());
}

TEST(EntropySweep, DropControlFailsTheVerdict) {
    // limit member sits on a period-5 orbit, the others on generic orbits
    const auto sys = MapSystem::expanding_circle(2);
    std::vector<EntropyMember> members(3);
    members[0].orbits = {periodic_orbit(5, 3, 20000)};
    for (std::size_t k = 1; k < 3; ++k) {
        members[k].parameter = static_cast<double>(k);
        members[k].orbits = {generic_linear_orbit(sys, PhasePoint(0.123 * k), 5 + k, 100000)};
    }
    EntropySweepOptions o;
    o.schedule = {4, 8, 12};
    const auto r = entropy_semicontinuity_sweep(members, FinitePartition::halves(sys.domain()), o);
    EXPECT_LE(r.levels[0].value, std::log(5.0) / 12 + 1e-12);
    EXPECT_NEAR(r.levels[1].value, kLog2, 0.01);
    EXPECT_FALSE(r.verdicts.at("upper_semicontinuity"));
    EXPECT_LT(r.summary.at("drop_in_limit").get<double>(), -0.5);
    EXPECT_EQ(r.levels[0].extra.at("source"), "orbits");
}

TEST(PressureSweep, ZeroGeometricAndConstantPotentials) {
    FamilySweepSpec s;
    s.family = circle_family(2, {0.0, 0.1, 0.05});
    s.cells = 256;
    auto r = pressure_semicontinuity_sweep(s);
    for (const auto& l : r.levels) EXPECT_NEAR(l.value, kLog2, 1e-6);
    EXPECT_TRUE(r.pass());

    s.potential = PotentialKind::geometric;
    r = pressure_semicontinuity_sweep(s);
    for (const auto& l : r.levels) EXPECT_NEAR(l.value, 0.0, 1e-6);
    // the acip integral -h_k stays above -log 2 off the limit
    EXPECT_FALSE(r.summary.at("integral_hypothesis_holds").get<bool>());

    s.potential = PotentialKind::constant;
    s.constants = {0.5, -0.25, 0.125};
    r = pressure_semicontinuity_sweep(s);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(r.levels[k].value, kLog2 + s.constants[k], 1e-6);
    // P_k - P_0 = c_k - c_0 < 0
    EXPECT_TRUE(r.verdicts.at("upper_semicontinuity"));

    const auto back = family_sweep_spec_from_json(to_json(s));
    EXPECT_EQ(back.constants, s.constants);
    EXPECT_EQ(to_json(back).dump(), to_json(s).dump());
}

TEST(PressureSweep, ConstantsMustMatchMembers) {
    FamilySweepSpec s;
    s.family = circle_family(2, {0.0, 0.1});
    json j = to_json(s);
    j["potential"] = "constant";
    j["constants"] = {1.0};
    EXPECT_THROW(family_sweep_spec_from_json(j), ConfigError);
    j["potential"] = "quadratic";
    EXPECT_THROW(family_sweep_spec_from_json(j), ConfigError);
}

TEST(HtopProbe, DegreeFourFamilyIsConstant) {
    FamilySweepSpec s;
    s.family = circle_family(4, {0.0, 0.1, 0.05});
    s.cells = 256;
    const auto r = htop_semicontinuity_probe(s);
    for (const auto& l : r.levels) EXPECT_NEAR(l.value, std::log(4.0), 1e-6);
    EXPECT_TRUE(r.summary.at("constant_log_degree").get<bool>());
    EXPECT_TRUE(r.pass());
}

TEST(HtopProbe, TwoParameterGrid) {
    FamilySweepSpec s;
    s.family = circle_family(3, {0.0, 0.1, 0.0, 0.1});
    s.family.parameter2 = "amp2";
    s.family.values2 = {0.0, 0.0, 0.05, 0.05};
    s.cells = 256;
    const auto r = htop_semicontinuity_probe(s);
    ASSERT_EQ(r.levels.size(), 4u);
    for (const auto& l : r.levels) EXPECT_NEAR(l.value, std::log(3.0), 1e-6);
    EXPECT_DOUBLE_EQ(r.levels[3].extra.at("parameter2").get<double>(), 0.05);
}

TEST(HtopProbe, ClassUGateExcludesMembers) {
    FamilySweepSpec s;
    // 4 - 2 pi 0.15 < sigma1 = 3.3 violates the volume condition
    s.family = circle_family(4, {0.0, 0.15});
    s.cells = 256;
    s.class_u_cover = arcs(4);
    s.class_u_constants = ClassUConstants{0.0, 0.1, 2.0, 3.3, 3, 1};
    const auto r = htop_semicontinuity_probe(s);
    EXPECT_FALSE(r.levels[0].flagged);
    EXPECT_TRUE(r.levels[1].flagged);
    EXPECT_EQ(r.summary.at("excluded"), 1);
    EXPECT_TRUE(r.pass());
    const auto back = family_sweep_spec_from_json(to_json(s));
    ASSERT_TRUE(back.class_u_constants.has_value());
    EXPECT_EQ(back.class_u_cover.size(), 4u);

    s.family = circle_family(4, {0.15, 0.0});
    EXPECT_THROW(htop_semicontinuity_probe(s), ConfigError);
}

TEST(BranchPartition, CutsAtPreimagesOfZero) {
    const auto xi = branch_partition(MapSystem::expanding_circle(4));
    EXPECT_EQ(xi.atom_count(), 4u);
    EXPECT_EQ(xi.atom(PhasePoint(0.3)), 1);
    EXPECT_THROW(branch_partition(MapSystem::rotation(0.25)), UnsupportedSystem);
}

TEST(EquilibriumSweep, ConsecutiveDistancesShrinkAndIdentityHolds) {
    FamilySweepSpec s;
    s.family = circle_family(2, {0.0, 0.1, 0.05, 0.025});
    s.cells = 256;
    for (auto kind : {PotentialKind::zero, PotentialKind::geometric}) {
        s.potential = kind;
        const auto r = equilibrium_continuity_sweep(s);
        double prev = 1.0;
        for (std::size_t k = 1; k < r.levels.size(); ++k) {
            const double w = r.levels[k].extra.at("w1_previous").get<double>();
            if (k > 1) {
                EXPECT_LT(w, prev);
            }
            prev = w;
            EXPECT_TRUE(r.levels[k].extra.at("transitive_heuristic").get<bool>());
        }
        EXPECT_LT(r.levels.back().value, r.levels[1].value);
        EXPECT_TRUE(r.verdicts.at("identity")) << to_string(kind);
        EXPECT_TRUE(r.verdicts.at("consecutive_w1_final")) << to_string(kind);
    }
}

TEST(ZeroNoiseEquilibrium, NoisyDoublingMatchesIntegral) {
    ZeroNoiseEquilibriumSpec s;
    s.epsilons = {0.1, 0.05};
    s.cells = 256;
    s.subsamples = 16;
    s.n = 8;
    s.omega_samples = 2;
    s.schedule = {4, 8};
    s.itinerary.points_per_cell = 64;
    s.seed = 5;
    const auto xi = FinitePartition::halves(s.system.domain());
    const auto r = zero_noise_equilibrium_check(s, xi);
    for (const auto& l : r.levels) {
        EXPECT_NEAR(l.extra.at("phi_integral").get<double>(), kLog2, 1e-12);
        EXPECT_LT(l.value, 0.02);
    }
    EXPECT_LT(std::abs(r.summary.at("limit_residual").get<double>()), 1e-9);
    EXPECT_TRUE(r.pass());
    const auto replay = zero_noise_equilibrium_check(zero_noise_equilibrium_spec_from_json(r.settings), xi);
    EXPECT_EQ(to_json(r).dump(), to_json(replay).dump());
}

TEST(ZeroNoiseEquilibrium, ZeroLevelIsTheFormulaResidual) {
    ZeroNoiseEquilibriumSpec s;
    s.system = MapSystem::expanding_circle(2, 0.1);
    s.epsilons = {0.0};
    s.cells = 256;
    s.subsamples = 16;
    s.schedule = {4, 6};
    s.itinerary.points_per_cell = 64;
    const auto r = zero_noise_equilibrium_check(s, FinitePartition::halves(s.system.domain()));
    ASSERT_EQ(r.levels.size(), 1u);
    EXPECT_DOUBLE_EQ(r.levels[0].value, std::abs(r.summary.at("limit_residual").get<double>()));
    json j = r.settings;
    j["epsilons"] = {0.1, 0.1};
    EXPECT_THROW(zero_noise_equilibrium_spec_from_json(j), ConfigError);
}
