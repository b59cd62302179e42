#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include <nlohmann/json.hpp>

#include "ergolab/measures.hpp"
#include "ergolab/noise.hpp"

namespace ergolab {

/// dist_delta: 1 when dist >= delta, dist otherwise.
double truncated_distance(double dist, double delta);

struct ExpansionReport {
    std::size_t n = 0;
    /// (1/n) sum_{j<n} log ||Df(x_j)^{-1}||.
    double expansion_avg = 0.0;
    /// Largest running average over m in [window_start, n] (limsup proxy).
    double tail_max = 0.0;
    std::size_t window_start = 0;
    /// Steps skipped because the point was on the critical set.
    std::size_t skipped = 0;
    std::map<double, double> slow_approach;
};

/// Birkhoff average of log ||Df^{-1}|| with running-tail maxima over [tail_fraction*n, n].
ExpansionReport expansion_average(const RandomOrbit& orbit, double tail_fraction = 0.5);

/// (1/n) sum_{j<n} -log dist_delta(x_j, C); exact hits of C are skipped and counted.
double slow_approach_average(const RandomOrbit& orbit, double delta, std::size_t* skipped = nullptr);

struct HyperbolicTimeRecord {
    std::vector<std::size_t> times;
    double alpha = 0.0;
    double delta = 0.0;
    double b = 1.0;
    std::size_t horizon = 0;
    double density() const {
        return horizon == 0 ? 0.0 : static_cast<double>(times.size()) / static_cast<double>(horizon);
    }
};

/**
 * Every n in 1..steps such that for all 1 <= k <= n
 *   sum_{j=n-k}^{n-1} log ||Df(x_j)^{-1}|| <= k log alpha  and
 *   log dist_delta(x_{n-k}, C) >= b k log alpha.
 * Linear-time scan over running minima of the log-space prefix sums.
 */
HyperbolicTimeRecord hyperbolic_times(const RandomOrbit& orbit, double alpha, double delta,
                                      double b = 1.0);

struct ContractionReport {
    std::size_t times_checked = 0;
    std::size_t comparisons = 0;
    std::size_t violations = 0;
    std::size_t skipped = 0;
    double worst_ratio = 0.0;
    double violation_fraction() const {
        return comparisons == 0 ? 0.0 : static_cast<double>(violations) / static_cast<double>(comparisons);
    }
};

struct ContractionOptions {
    double probe_radius = 1e-4;
    /// At most this many hyperbolic times are probed (evenly spaced in the record).
    std::size_t max_times = 32;
    std::uint64_t seed = 0;
};

/**
 * Pulls two probe points near x_n back through the orbit with the same noise
 * and checks dist(y_{n-k}, z_{n-k}) <= alpha^{k/2} dist(y_n, z_n) for all k <= n.
 */
ContractionReport contraction_check(const MapSystem& system, const RandomOrbit& orbit,
                                    const HyperbolicTimeRecord& record,
                                    const ContractionOptions& options = {});

/// c_hat = -(95th percentile of the tail maxima).
double estimate_exponent_bound(const std::vector<ExpansionReport>& ensemble, double percentile = 0.95);

struct IntegrabilityEstimate {
    double estimate = 0.0;
    double std_error = 0.0;
    /// mu(cells meeting the delta-neighbourhood of C).
    double near_mass = 0.0;
    std::size_t samples = 0;
};

/// Monte Carlo estimate of the integral over B(C, delta) of -log|det Df_t(x)| dtheta_eps dmu.
IntegrabilityEstimate uniform_integrability_probe(const MapSystem& system, const NoiseModel& model,
                                                  const EmpiricalMeasure& mu, double delta,
                                                  std::size_t samples, std::uint64_t seed);

/// Result row of an orbit ensemble.
struct OrbitDiagnostics {
    ExpansionReport expansion;
    HyperbolicTimeRecord hyperbolic;
    bool escaped = false;
};

struct EnsembleSpec {
    std::size_t orbits = 100;
    std::size_t length = 100000;
    std::uint64_t seed = 0;
    std::vector<double> deltas;
    double alpha = 0.5;
    double hyp_delta = 0.1;
    double b = 1.0;
    double tail_fraction = 0.5;
    unsigned workers = 0;
};

/// Orbit i starts at a point drawn uniformly from the domain with stream (seed, i).
std::vector<OrbitDiagnostics> orbit_ensemble(const MapSystem& system, const NoiseModel& model,
                                             const EnsembleSpec& spec);

nlohmann::json to_json(const ExpansionReport& report, const HyperbolicTimeRecord* hyp = nullptr);

}  // namespace ergolab
