#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ergolab/entropy.hpp"
#include "ergolab/measures.hpp"
#include "ergolab/transfer.hpp"

namespace ergolab {

struct SweepLevel {
    /// Noise level or family parameter of this level.
    double parameter = 0.0;
    /// Primary measurement (W1 distance, entropy, pressure, ...).
    double value = 0.0;
    bool flagged = false;
    std::string note;
    nlohmann::json extra = nlohmann::json::object();
};

struct SweepReport {
    std::string kind;
    /// Resolved settings; feeding them back to the matching *_from_json reproduces the report.
    nlohmann::json settings;
    std::vector<SweepLevel> levels;
    std::map<std::string, bool> verdicts;
    nlohmann::json summary = nlohmann::json::object();
    bool pass() const;
};

nlohmann::json to_json(const SweepReport& report);
/// Flat series: level, parameter, value, flagged, then the numeric extras of level 0 as columns.
void write_sweep_csv(std::ostream& os, const SweepReport& report);

/// A one- or two-parameter family: `base` system JSON with params[parameter] = values[i].
struct FamilySpec {
    nlohmann::json base;
    std::string parameter;
    std::vector<double> values;
    std::string parameter2;
    std::vector<double> values2;

    std::size_t size() const { return values.size(); }
    MapSystem member(std::size_t i) const;
};
nlohmann::json to_json(const FamilySpec& spec);
FamilySpec family_spec_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Zero-noise limit of stationary measures

enum class ReferenceKind : std::uint8_t { oracle, ulam, orbit_histogram };

struct ZeroNoiseSpec {
    MapSystem system = MapSystem::expanding_circle(2);
    /// Strictly decreasing positive noise levels.
    std::vector<double> epsilons;
    std::size_t cells0 = 1024;
    std::size_t cells1 = 0;
    std::size_t subsamples = 64;
    std::uint64_t seed = 0;
    ReferenceKind reference = ReferenceKind::ulam;
    std::string oracle;
    std::size_t reference_orbits = 100;
    std::size_t reference_length = 100000;
    double threshold = 0.01;
    /// Allowed relative increase between consecutive tail levels.
    double tail_slack = 0.2;
    double floor = 1e-9;
    /// Several physical measures: distances are taken to their convex hull.
    std::vector<EmpiricalMeasure> physical;
    /// Alternative to `physical`: basin sampling from these initial points on the sweep grid.
    std::vector<PhasePoint> basin_initials;
    std::size_t basin_length = 100000;
    double basin_tol = 0.05;
    StationaryOptions stationary;
};
nlohmann::json to_json(const ZeroNoiseSpec& spec);
ZeroNoiseSpec zero_noise_spec_from_json(const nlohmann::json& j);

/// Deterministic reference measure of a zero-noise sweep.
EmpiricalMeasure zero_noise_reference(const ZeroNoiseSpec& spec, const Grid& grid);

/**
 * W1(mu^eps_k, mu_0) per level with mu^eps from the noisy Ulam matrix.
 * Verdicts: final level below threshold; no tail increase beyond
 * (1 + tail_slack) * previous + floor. The tail is the second half of the levels.
 */
SweepReport zero_noise_sweep(const ZeroNoiseSpec& spec);

/// min over the simplex of W1(mu, sum_i lambda_i nu_i), by line searches toward vertices.
double hull_distance(const EmpiricalMeasure& mu, const std::vector<EmpiricalMeasure>& vertices);

// ---------------------------------------------------------------------------
// Entropy and pressure along a family f_k -> f_0 (member 0 is the limit)

struct EntropyMember {
    double parameter = 0.0;
    MapSystem system = MapSystem::expanding_circle(2);
    /// Measure mode when set, orbit mode otherwise.
    std::optional<EmpiricalMeasure> measure;
    std::vector<RandomOrbit> orbits;
    /// Reference entropy value to report next to the estimate (NaN if none).
    double identity_entropy = std::numeric_limits<double>::quiet_NaN();
};

/// Members with mu_k the absolutely continuous invariant measure (equilibrium state of -log|f_k'|).
std::vector<EntropyMember> acip_members(const FamilySpec& family, const Grid& grid);

struct EntropySweepOptions {
    std::vector<std::size_t> schedule{4, 8, 12, 16, 20};
    ItineraryOptions itinerary;
    double slack = 0.03;
    /// Boundary mass above this attaches a warning.
    double boundary_tol = 1e-3;
};

/// Verdict: max over k >= 1 of (h_k - h_0) <= slack. Only the upper side is judged.
SweepReport entropy_semicontinuity_sweep(const std::vector<EntropyMember>& members, const FinitePartition& xi,
                                         const EntropySweepOptions& options = {});

enum class PotentialKind : std::uint8_t { zero, geometric, constant };
std::string to_string(PotentialKind k);
PotentialKind potential_kind_from_string(const std::string& s);

struct FamilySweepSpec {
    FamilySpec family;
    PotentialKind potential = PotentialKind::zero;
    /// Per-member constants for PotentialKind::constant.
    std::vector<double> constants;
    std::size_t cells = 1024;
    double slack = 1e-6;
    /// Equilibrium sweep: consecutive W1 below this at the last member.
    double w1_threshold = 0.01;
    double identity_tol = 1e-3;
    /// Itinerary length of the independent entropy estimate (cylinders must stay longer than cells).
    std::size_t identity_n = 6;
    std::size_t identity_points = 64;
    /// Optional class U gate: cover and constants for class_u_check.
    std::vector<Ball> class_u_cover;
    std::optional<ClassUConstants> class_u_constants;
    RuelleOptions ruelle;
};
nlohmann::json to_json(const FamilySweepSpec& spec);
FamilySweepSpec family_sweep_spec_from_json(const nlohmann::json& j);

Potential member_potential(const FamilySweepSpec& spec, std::size_t i, const MapSystem& member);

/// P_k per member; verdict max over the tail of (P_k - P_0) <= slack, plus the integral hypothesis.
SweepReport pressure_semicontinuity_sweep(const FamilySweepSpec& spec);
/// h_top per member that passes the gate; excluded members are flagged with a note.
SweepReport htop_semicontinuity_probe(const FamilySweepSpec& spec);
/// Equilibrium states per member: W1 to member 0 and to the previous member, identity residuals.
SweepReport equilibrium_continuity_sweep(const FamilySweepSpec& spec);

/// Partition into the branch intervals of a circle covering map (cut at the preimages of 0).
FinitePartition branch_partition(const MapSystem& system);

// ---------------------------------------------------------------------------
// Entropy formula along the zero-noise limit

struct ZeroNoiseEquilibriumSpec {
    MapSystem system = MapSystem::expanding_circle(2);
    /// Decreasing noise levels; a single 0 reduces to the deterministic formula check.
    std::vector<double> epsilons;
    std::size_t cells = 1024;
    std::size_t subsamples = 64;
    std::size_t n = 12;
    std::size_t omega_samples = 8;
    std::vector<std::size_t> schedule{4, 8, 12};
    ItineraryOptions itinerary;
    std::uint64_t seed = 0;
    double tolerance = 0.02;
    double limit_tolerance = 0.02;
    StationaryOptions stationary;
};
nlohmann::json to_json(const ZeroNoiseEquilibriumSpec& spec);
ZeroNoiseEquilibriumSpec zero_noise_equilibrium_spec_from_json(const nlohmann::json& j);

/// Per level |h_{mu^eps} - integral of phi_eps d mu^eps|; at eps = 0 the deterministic formula residual.
SweepReport zero_noise_equilibrium_check(const ZeroNoiseEquilibriumSpec& spec, const FinitePartition& xi);

}  // namespace ergolab
