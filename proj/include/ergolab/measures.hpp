#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ergolab/grid.hpp"
#include "ergolab/noise.hpp"

namespace ergolab {

enum class Provenance : std::uint8_t { orbit_histogram, eigenvector, cesaro, analytic };
std::string to_string(Provenance p);

/// Probability vector over the cells of a grid.
struct EmpiricalMeasure {
    Grid grid;
    std::vector<double> masses;
    Provenance provenance = Provenance::analytic;

    static EmpiricalMeasure uniform(const Grid& grid);
    /// Unit mass on the cell containing p.
    static EmpiricalMeasure dirac(const Grid& grid, const PhasePoint& p);
    /// Normalizes nonnegative weights; throws ConfigError on negative or zero total.
    static EmpiricalMeasure from_weights(const Grid& grid, std::vector<double> weights,
                                         Provenance provenance);

    double total() const;
    /// Sum over cells of mass * g(cell center).
    double integrate(const std::function<double(const PhasePoint&)>& g) const;
    /// Marginal on one axis as a measure on a 1D grid.
    EmpiricalMeasure marginal(int axis) const;
    /// Draw a point: cell proportional to mass, uniform inside the cell (or its center).
    PhasePoint sample(CounterRng& rng, bool within_cell = true) const;
    /// Throws ConfigError unless masses are nonnegative and sum to 1 within 1e-9.
    void validate() const;
};

/// Normalized histogram of points burn_in + 1 .. n of the orbit.
EmpiricalMeasure measure_from_orbit(const RandomOrbit& orbit, const Grid& grid, std::size_t burn_in);

struct CesaroOptions {
    /// Sample initial points uniformly inside their cell; otherwise at the cell center.
    bool within_cell = true;
    unsigned workers = 0;
};

/**
 * Monte Carlo Cesaro average (1/n) sum_{j=1..n} of the pushforwards of `initial`
 * under f_omega^j, each of `samples` draws taking its own point and noise sequence.
 */
EmpiricalMeasure cesaro_pushforward(const MapSystem& system, const NoiseModel& model,
                                    const EmpiricalMeasure& initial, std::size_t n,
                                    std::size_t samples, std::uint64_t seed,
                                    const CesaroOptions& options = {});

/**
 * Wasserstein-type distance on a shared grid. Dimension one: exact W1 of the
 * cell-center atoms (rotation-minimized on a circle). Dimension two: mean of
 * the marginal W1 average and a 16-direction sliced W1.
 */
double w1_distance(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu);

using Probe = std::function<double(const PhasePoint&)>;
/// Coordinate monomials up to degree 3 on interval axes, 4 Fourier modes on circle axes.
std::vector<Probe> default_probes(const MapSystem& system);

struct BasinOptions {
    std::size_t n = 100000;
    double burn_in_fraction = 0.1;
    double cluster_tol = 0.05;
    std::uint64_t seed = 0;
    /// Noise level of the orbits (0 for the deterministic basins).
    double epsilon = 0.0;
    /// When set, each cluster also gets an orbit-histogram measure on this grid.
    std::optional<Grid> grid;
    unsigned workers = 0;
};

struct BasinReport {
    std::size_t clusters = 0;
    std::vector<std::vector<double>> representatives;
    std::vector<double> fractions;
    /// Cluster of each initial point; -1 for escaped points.
    std::vector<int> assignment;
    std::vector<std::vector<double>> probe_averages;
    std::size_t escaped = 0;
    std::vector<EmpiricalMeasure> measures;
};

BasinReport basin_sample(const MapSystem& system, const std::vector<PhasePoint>& initials,
                         const BasinOptions& options, const std::vector<Probe>& probes = {});

/// CSV rows: center coordinates and mass.
void write_measure_csv(std::ostream& os, const EmpiricalMeasure& mu);
/// Moments plus the W1 distance to an optional named reference measure.
nlohmann::json measure_summary(const EmpiricalMeasure& mu, const EmpiricalMeasure* oracle = nullptr,
                               const std::string& oracle_name = "");

}  // namespace ergolab
