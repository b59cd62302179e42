#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace ergolab {

/// Point of a one- or two-dimensional phase space.
class PhasePoint {
public:
    PhasePoint() = default;
    explicit PhasePoint(double x) : coords_{x, 0.0}, dim_(1) {}
    PhasePoint(double s, double x) : coords_{s, x}, dim_(2) {}

    int dim() const { return dim_; }
    double operator[](int i) const { return coords_[static_cast<std::size_t>(i)]; }
    double& operator[](int i) { return coords_[static_cast<std::size_t>(i)]; }

    bool operator==(const PhasePoint& o) const {
        return dim_ == o.dim_ && coords_[0] == o.coords_[0] &&
               (dim_ == 1 || coords_[1] == o.coords_[1]);
    }

private:
    std::array<double, 2> coords_{0.0, 0.0};
    int dim_ = 1;
};

/// Axis-aligned phase domain. Periodic axes have length one ([lo, lo + 1)).
struct Box {
    int dim = 1;
    std::array<double, 2> lo{0.0, 0.0};
    std::array<double, 2> hi{1.0, 1.0};
    std::array<bool, 2> periodic{false, false};

    double width(int i) const { return hi[i] - lo[i]; }
    /// True when p lies in the box enlarged by `slack` along non-periodic axes.
    bool contains(const PhasePoint& p, double slack = 0.0) const;
    /// Box enlarged by `slack` along every non-periodic axis.
    Box inflated(double slack) const;
};

/// Reduce x to [0, 1).
double wrap_unit(double x);
/// Signed representative of x mod 1 in [-1/2, 1/2).
double wrap_signed(double x);

enum class Family : std::uint8_t {
    expanding_circle,  ///< d*x + amp1*sin(2 pi x) + amp2*sin(4 pi x) mod 1
    quadratic,         ///< a - x^2
    viana,             ///< (d*s mod 1, a0 + alpha*sin(2 pi s) - x^2)
    torus_class_u,     ///< (d*x + amp*sin(2 pi x), d*y + amp*sin(2 pi x)) mod 1
    rotation,          ///< x + theta mod 1 (non-expanding control)
    two_sink,          ///< x - strength*sin(4 pi x) mod 1 (sinks at 0 and 1/2)
};

std::string to_string(Family f);
Family family_from_string(const std::string& name);

enum class CriticalSet : std::uint8_t { empty, point_zero, fiber_zero };

struct MapParams {
    int d = 2;
    double a = 2.0;
    double a0 = 1.9;
    double alpha = 0.01;
    double amp1 = 0.0;
    double amp2 = 0.0;
    double amp = 0.0;
    double theta = 0.0;
    double strength = 0.05;
    /// Extra room added to interval coordinates (absorbing region for noise).
    double domain_margin = 0.0;
};

struct DifferentialData {
    std::array<std::array<double, 2>, 2> jacobian{};
    double log_abs_det = 0.0;
    /// log of the operator norm of the inverse differential.
    double log_inv_norm = 0.0;
    /// log of the operator norm of the differential.
    double log_norm = 0.0;
    bool singular = false;
};

/**
 * Self-describing dynamical system: one of the built-in map families with
 * its parameters, phase domain and critical set.
 *
 * Immutable after construction. `apply` evaluates the family formula
 * without domain checks; `eval_map` is the checked entry point.
 */
class MapSystem {
public:
    static MapSystem expanding_circle(int d, double amp1 = 0.0, double amp2 = 0.0);
    static MapSystem quadratic(double a, double domain_margin = 0.0);
    /// Viana map restricted to S^1 x I, with I located by detect_invariant_region.
    static MapSystem viana(int d, double a0, double alpha, double domain_margin = 0.0);
    static MapSystem torus_class_u(int d, double amp);
    static MapSystem rotation(double theta);
    static MapSystem two_sink(double strength);
    static MapSystem from_params(Family family, const MapParams& params);

    Family family() const { return family_; }
    const MapParams& params() const { return params_; }
    const Box& domain() const { return domain_; }
    int dim() const { return domain_.dim; }
    CriticalSet critical_set() const { return critical_; }

    /// f(p) with periodic components reduced to [0, 1).
    PhasePoint apply(const PhasePoint& p) const;
    DifferentialData differential(const PhasePoint& p) const;
    double critical_distance(const PhasePoint& p) const;
    /// Periodic components reduced mod 1.
    PhasePoint reduce(const PhasePoint& p) const;
    /// Phase-space distance (periodic axes use the circle metric).
    double distance(const PhasePoint& p, const PhasePoint& q) const;

    /// Circle maps: the lift F on [0, 1] with F(0) = 0 (before reduction).
    bool has_lift() const;
    double lift(double x) const;
    double derivative_1d(double x) const;
    /// Covering degree for circle maps (1 for rotation/two_sink).
    int degree() const;

    std::string describe() const;

private:
    MapSystem(Family family, MapParams params, Box domain, CriticalSet critical)
        : family_(family), params_(params), domain_(domain), critical_(critical) {}

    Family family_;
    MapParams params_;
    Box domain_;
    CriticalSet critical_;
};

/// Checked evaluation: throws DomainError if p is outside the phase domain.
PhasePoint eval_map(const MapSystem& system, const PhasePoint& p);
DifferentialData differential(const MapSystem& system, const PhasePoint& p);
double critical_distance(const MapSystem& system, const PhasePoint& p);

nlohmann::json to_json(const MapSystem& system);
MapSystem system_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Structural checks

struct NonflatReport {
    bool applicable = true;
    std::size_t samples = 0;
    double fraction_s1 = 0.0;
    double fraction_s2 = 0.0;
    double fraction_s3 = 0.0;
    /// Smallest B making each sampled inequality hold.
    double tight_s1_lower = 0.0;
    double tight_s1_upper = 0.0;
    double tight_s2 = 0.0;
    double tight_s3 = 0.0;
    double tight_b = 0.0;
};

/// Monte Carlo falsifier for the non-flatness conditions (S1)-(S3).
NonflatReport verify_nonflat(const MapSystem& system, double beta, double b_const,
                             std::size_t sample_count, std::uint64_t seed);

struct InvariantRegionResult {
    bool found = false;
    Box region;
    /// Per axis: distance from the image hull to the lower/upper face.
    std::array<double, 2> margin_lower{0.0, 0.0};
    std::array<double, 2> margin_upper{0.0, 0.0};
    double margin = 0.0;
    /// Most negative margin seen when no region was found.
    double worst_violation = 0.0;
    int iterations = 0;
};

struct InvariantRegionOptions {
    int grid_n = 129;
    /// Require the image strictly inside (positive margins).
    bool strict = true;
    /// Padding added around the image hull while iterating.
    double pad = 0.01;
    int max_iterations = 200;
};

/// Find a box R within `candidate` with f(R) inside R (interior if strict).
InvariantRegionResult detect_invariant_region(const MapSystem& system, const Box& candidate,
                                              const InvariantRegionOptions& options = {});

struct Ball {
    PhasePoint center;
    double radius = 0.0;
};

struct ClassUConstants {
    double delta0 = 0.0;
    double beta = 0.0;
    double delta1 = 0.0;
    double sigma1 = 0.0;
    int p = 0;
    int q = 0;
};

struct ConditionResult {
    bool pass = false;
    double margin = 0.0;
};

struct ClassUReport {
    bool covers = false;
    bool injective = false;
    std::array<ConditionResult, 5> conditions{};
    /// The structural requirement sigma1 > p on the constants themselves.
    bool sigma_exceeds_p = false;
    std::size_t v_points = 0;
    bool all_conditions_pass() const;
    bool in_class_u() const { return covers && injective && sigma_exceeds_p && all_conditions_pass(); }
};

/// Grid evaluation of the five defining conditions of the class U.
ClassUReport class_u_check(const MapSystem& system, const std::vector<Ball>& covering,
                           const ClassUConstants& constants, int grid_n = 2048);

}  // namespace ergolab
