#pragma once

#include <cstdint>
#include <iosfwd>
#include <utility>
#include <vector>

#include "ergolab/phase_maps.hpp"
#include "ergolab/rng.hpp"

namespace ergolab {

/// Additive noise law: uniform on the closed ball of radius epsilon.
struct NoiseModel {
    double epsilon = 0.0;
    int dim = 1;

    static NoiseModel for_system(const MapSystem& system, double epsilon);
    bool deterministic() const { return epsilon == 0.0; }
};

/// One draw from the noise law (a vector stored in a PhasePoint).
PhasePoint sample_noise(const NoiseModel& model, CounterRng& rng);

/**
 * Noise sequence omega = (t_1, t_2, ...) of a random iteration.
 *
 * Entry j is generated from the counter stream (seed, offset + j), so any
 * entry is available on demand and shifted copies share one underlying
 * sequence. An optional explicit prefix overrides the first entries.
 */
class NoiseSequence {
public:
    NoiseSequence(NoiseModel model, std::uint64_t seed) : model_(model), seed_(seed) {}
    NoiseSequence(NoiseModel model, std::uint64_t seed, std::vector<PhasePoint> prefix)
        : model_(model), seed_(seed), prefix_(std::move(prefix)) {}

    /// t_j for j >= 1.
    PhasePoint at(std::size_t j) const;
    /// The shift sigma(omega) = (t_2, t_3, ...).
    NoiseSequence shifted() const;
    /// (t_1, ..., t_n).
    std::vector<PhasePoint> realized(std::size_t n) const;

    const NoiseModel& model() const { return model_; }
    std::uint64_t seed() const { return seed_; }
    std::size_t offset() const { return offset_; }

private:
    NoiseModel model_;
    std::uint64_t seed_;
    std::size_t offset_ = 0;
    std::vector<PhasePoint> prefix_;
};

/// Trajectory x, f_omega(x), ..., f_omega^n(x) with per-point differential cache.
struct RandomOrbit {
    std::vector<PhasePoint> points;
    /// noise[j] is the jump added to produce points[j + 1].
    std::vector<PhasePoint> noise;
    std::vector<double> log_inv_norm;
    std::vector<double> log_abs_det;
    std::vector<double> crit_dist;
    std::vector<std::uint8_t> singular;
    bool escaped = false;
    std::uint64_t seed = 0;
    double epsilon = 0.0;
    int dim = 1;

    /// Number of steps n (points.size() - 1).
    std::size_t steps() const { return points.empty() ? 0 : points.size() - 1; }
};

/// f_t(x) = f(x) + t with periodic components reduced.
PhasePoint perturbed_step(const MapSystem& system, const PhasePoint& x, const PhasePoint& t);

RandomOrbit random_orbit(const MapSystem& system, const NoiseSequence& omega,
                         const PhasePoint& x0, std::size_t n);
RandomOrbit random_orbit(const MapSystem& system, const NoiseModel& model, const PhasePoint& x0,
                         std::uint64_t seed, std::size_t n);

/**
 * Deterministic orbit of a linear circle map x -> d*x mod 1 started at a
 * generic real within 1e-14 of x0: its leading base-d digits are those of
 * x0 and the tail digits are drawn from `tail_seed`. Iterates are computed
 * exactly by shifting digits, so they do not collapse onto the dyadic
 * rationals the way repeated floating-point doubling does.
 */
RandomOrbit generic_linear_orbit(const MapSystem& system, const PhasePoint& x0,
                                 std::uint64_t tail_seed, std::size_t n);

/// Skew-product step (omega, x) -> (sigma omega, f_{omega_1}(x)).
std::pair<NoiseSequence, PhasePoint> skew_step(const MapSystem& system,
                                               const std::pair<NoiseSequence, PhasePoint>& state);

/// CSV with columns step, coord_*, log_inv_norm, log_abs_det, crit_dist, noise_*.
void write_orbit_csv(std::ostream& os, const RandomOrbit& orbit);

}  // namespace ergolab
