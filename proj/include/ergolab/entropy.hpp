#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ergolab/measures.hpp"
#include "ergolab/noise.hpp"
#include "ergolab/transfer.hpp"

namespace ergolab {

/**
 * Finite partition of a phase domain, either by cut points along one axis
 * or as the join {B_1, M \ B_1} v ... v {B_k, M \ B_k} of a ball cover.
 * Atoms are numbered 0 .. atom_count() - 1; a point whose ball-membership
 * pattern was not seen on the working grid gets label atom_count().
 */
class FinitePartition {
public:
    /// Atoms separated by the cut points `breaks` (sorted) along `axis`.
    static FinitePartition intervals(const Box& domain, int axis, std::vector<double> breaks);
    /// Two atoms split at the midpoint of axis 0.
    static FinitePartition halves(const Box& domain);
    /// d equal arcs along axis 0.
    static FinitePartition equal_arcs(const Box& domain, int d);

    int atom(const PhasePoint& p) const;
    std::size_t atom_count() const { return atom_count_; }
    /// Connected pieces of the atoms along the working grid (axis 0 in 1D, else equal to atom_count).
    std::size_t component_count() const { return component_count_; }
    const Box& domain() const { return domain_; }
    nlohmann::json spec() const;
    /// Mass of grid cells whose sample points fall in more than one atom.
    double boundary_mass(const EmpiricalMeasure& mu) const;

private:
    friend FinitePartition partition_from_cover(const Box&, const std::vector<PhasePoint>&, double, const Grid&);
    /// Ball-membership bitset (up to 256 balls), or the interval index in word 0.
    using AtomKey = std::array<std::uint64_t, 4>;
    AtomKey key(const PhasePoint& p) const;

    Box domain_;
    bool ball_join_ = false;
    int axis_ = 0;
    std::vector<double> breaks_;
    std::vector<PhasePoint> centers_;
    double radius_ = 0.0;
    std::vector<AtomKey> keys_;
    std::size_t atom_count_ = 0;
    std::size_t component_count_ = 0;
};

/// Distance in a box, periodic axes measured on the circle.
double box_distance(const Box& domain, const PhasePoint& p, const PhasePoint& q);

/// Join partition of a ball cover realized on `grid`. Throws ConfigError listing uncovered cells.
FinitePartition partition_from_cover(const Box& domain, const std::vector<PhasePoint>& centers, double radius,
                                     const Grid& grid);

struct ItineraryOptions {
    /// Lattice points per grid cell (a perfect square in 2D).
    std::size_t points_per_cell = 1024;
    /// Fails when more distinct itineraries are observed.
    std::size_t max_itineraries = 10000000;
    unsigned workers = 0;
};

struct ItineraryEntropy {
    std::size_t n = 0;
    /// H of the n-fold refinement.
    double h_total = 0.0;
    std::size_t distinct = 0;
    double per_step() const { return n == 0 ? 0.0 : h_total / static_cast<double>(n); }
};

/// Orbit mode: frequencies of length-N windows of the label sequences.
ItineraryEntropy itinerary_entropy(const std::vector<RandomOrbit>& orbits, const FinitePartition& xi,
                                   std::size_t n, const ItineraryOptions& options = {});
/// Measure mode: lattice points weighted by cell mass, iterated under the noise realization omega.
ItineraryEntropy itinerary_entropy(const MapSystem& system, const EmpiricalMeasure& mu, const FinitePartition& xi,
                                   std::size_t n, const NoiseSequence& omega, const ItineraryOptions& options = {});

/// (1/N) H(xi v f^{-1} xi v ... v f^{-(N-1)} xi).
double refined_entropy(const std::vector<RandomOrbit>& orbits, const FinitePartition& xi, std::size_t n,
                       const ItineraryOptions& options = {});
double refined_entropy(const MapSystem& system, const EmpiricalMeasure& mu, const FinitePartition& xi,
                       std::size_t n, const ItineraryOptions& options = {});

struct EntropyReport {
    std::vector<std::size_t> schedule;
    /// (1/N) H_N per schedule entry.
    std::vector<double> estimates;
    /// H_N - H_{N-1} per schedule entry.
    std::vector<double> conditional;
    double min = 0.0;
    nlohmann::json partition_spec;
    double boundary_mass = 0.0;
};

EntropyReport metric_entropy_estimate(const MapSystem& system, const EmpiricalMeasure& mu, const FinitePartition& xi,
                                      const std::vector<std::size_t>& schedule = {4, 8, 12, 16, 20},
                                      const ItineraryOptions& options = {});
EntropyReport metric_entropy_estimate(const std::vector<RandomOrbit>& orbits, const FinitePartition& xi,
                                      const std::vector<std::size_t>& schedule = {4, 8, 12, 16, 20},
                                      const ItineraryOptions& options = {});

/// (1/N) average over sampled omega of H_{mu}(v_k (f_omega^k)^{-1} xi). A single zero omega when eps = 0.
double random_entropy_estimate(const MapSystem& system, const NoiseModel& model, const EmpiricalMeasure& mu,
                               const FinitePartition& xi, std::size_t n, std::size_t omega_samples,
                               std::uint64_t seed, const ItineraryOptions& options = {});

/// phi_eps(p): Monte Carlo mean of log|det Df_t(p)| over the noise, checked against log|det Df(p)|.
double randomized_potential(const MapSystem& system, const NoiseModel& model, const PhasePoint& p,
                            std::size_t samples, std::uint64_t seed);

struct FormulaResidual {
    double residual = 0.0;
    double integral = 0.0;
    std::size_t refined_cells = 0;
    int refinement = 16;
};

/// h_est - sum_cells mass * (cell average of log|det Df|); cells near C get 16x finer quadrature.
FormulaResidual entropy_formula_residual(double h_est, const MapSystem& system, const EmpiricalMeasure& mu);

struct LowVariationReport {
    bool holds = false;
    double margin = 0.0;
    double sup_phi = 0.0;
    double pressure = 0.0;
    double htop = 0.0;
};

/// sup phi <= P(phi) - rho * h_top, with sup taken on a fine sample of the circle.
LowVariationReport low_variation_check(const Potential& phi, const MapSystem& system, double rho, const Grid& grid);

struct DiameterCurve {
    std::vector<double> diameters;
    /// Resolution floor reached before K.
    bool truncated = false;
};

/**
 * Diameter of the set of initial points sharing the orbit's first k labels
 * under the orbit's noise, k = 1..K. 1D: the connected piece containing x_0,
 * found by bisection to adjacent doubles; 2D: bounding boxes refined on a 65 x 65 grid.
 */
DiameterCurve diameter_decay_check(const MapSystem& system, const FinitePartition& xi, const RandomOrbit& orbit,
                                   std::size_t k_max);

nlohmann::json to_json(const EntropyReport& report);

}  // namespace ergolab
