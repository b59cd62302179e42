#include "ergolab/noise.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include "ergolab/error.hpp"

namespace ergolab {

namespace {
constexpr std::uint64_t kNoiseStream = 0x4e4f495345ULL;

std::string fmt17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}
}  // namespace

NoiseModel NoiseModel::for_system(const MapSystem& system, double epsilon) {
    if (!(epsilon >= 0.0)) throw ConfigError("noise epsilon must be >= 0");
    return NoiseModel{epsilon, system.dim()};
}

PhasePoint sample_noise(const NoiseModel& model, CounterRng& rng) {
    PhasePoint t = model.dim == 1 ? PhasePoint(0.0) : PhasePoint(0.0, 0.0);
    if (model.epsilon == 0.0) return t;
    if (model.dim == 1) {
        t[0] = model.epsilon * (2.0 * rng.uniform() - 1.0);
        return t;
    }
    double u, v;
    do {
        u = 2.0 * rng.uniform() - 1.0;
        v = 2.0 * rng.uniform() - 1.0;
    } while (u * u + v * v > 1.0 - 1e-15);
    t[0] = model.epsilon * u;
    t[1] = model.epsilon * v;
    return t;
}

PhasePoint NoiseSequence::at(std::size_t j) const {
    if (j == 0) throw ConfigError("NoiseSequence index starts at 1");
    const std::size_t idx = offset_ + j - 1;
    if (idx < prefix_.size()) return prefix_[idx];
    CounterRng rng = CounterRng::stream(derive_key(seed_, kNoiseStream), idx);
    return sample_noise(model_, rng);
}

NoiseSequence NoiseSequence::shifted() const {
    NoiseSequence s = *this;
    ++s.offset_;
    return s;
}

std::vector<PhasePoint> NoiseSequence::realized(std::size_t n) const {
    std::vector<PhasePoint> out;
    out.reserve(n);
    for (std::size_t j = 1; j <= n; ++j) out.push_back(at(j));
    return out;
}

PhasePoint perturbed_step(const MapSystem& system, const PhasePoint& x, const PhasePoint& t) {
    PhasePoint y = system.apply(x);
    for (int i = 0; i < y.dim(); ++i) y[i] += t[i];
    return system.reduce(y);
}

namespace {
void push_cache(RandomOrbit& orb, const MapSystem& system, const PhasePoint& p) {
    const auto dd = system.differential(p);
    orb.log_inv_norm.push_back(dd.log_inv_norm);
    orb.log_abs_det.push_back(dd.log_abs_det);
    orb.crit_dist.push_back(system.critical_distance(p));
    orb.singular.push_back(dd.singular ? 1 : 0);
}
}  // namespace

RandomOrbit random_orbit(const MapSystem& system, const NoiseSequence& omega,
                         const PhasePoint& x0, std::size_t n) {
    const double eps = omega.model().epsilon;
    const Box allowed = system.domain();
    if (!allowed.contains(x0, 1e-12)) throw DomainError("random_orbit: x0 outside the phase domain");
    RandomOrbit orb;
    orb.seed = omega.seed();
    orb.epsilon = eps;
    orb.dim = system.dim();
    orb.points.reserve(n + 1);
    orb.noise.reserve(n);
    const PhasePoint start = system.reduce(x0);
    orb.points.push_back(start);
    push_cache(orb, system, start);
    PhasePoint x = start;
    for (std::size_t j = 1; j <= n; ++j) {
        const PhasePoint t = omega.at(j);
        x = perturbed_step(system, x, t);
        if (!allowed.contains(x, eps + 1e-12)) {
            orb.escaped = true;
            break;
        }
        orb.noise.push_back(t);
        orb.points.push_back(x);
        push_cache(orb, system, x);
    }
    return orb;
}

RandomOrbit random_orbit(const MapSystem& system, const NoiseModel& model, const PhasePoint& x0,
                         std::uint64_t seed, std::size_t n) {
    return random_orbit(system, NoiseSequence(model, seed), x0, n);
}

RandomOrbit generic_linear_orbit(const MapSystem& system, const PhasePoint& x0,
                                 std::uint64_t tail_seed, std::size_t n) {
    const auto& p = system.params();
    if (system.family() != Family::expanding_circle || p.amp1 != 0.0 || p.amp2 != 0.0) {
        throw UnsupportedSystem("generic_linear_orbit: requires x -> d*x mod 1");
    }
    const auto d = static_cast<unsigned>(p.d);
    const double log2d = std::log2(static_cast<double>(d));
    const auto lead = static_cast<std::size_t>(std::floor(46.0 / log2d));
    const auto width = static_cast<std::size_t>(std::ceil(56.0 / log2d)) + 1;
    std::vector<std::uint8_t> digits(n + width + 1);
    double r = wrap_unit(x0[0]);
    for (std::size_t k = 0; k < digits.size(); ++k) {
        if (k < lead) {
            r *= d;
            const double dig = std::floor(r);
            digits[k] = static_cast<std::uint8_t>(std::min<double>(dig, d - 1));
            r -= digits[k];
        } else {
            CounterRng rng = CounterRng::stream(tail_seed, k);
            digits[k] = static_cast<std::uint8_t>(rng.below(d));
        }
    }
    RandomOrbit orb;
    orb.seed = tail_seed;
    orb.dim = 1;
    orb.points.reserve(n + 1);
    for (std::size_t j = 0; j <= n; ++j) {
        // x_j = sum_k digits[j + k] d^{-(k+1)}, Horner from the least significant digit
        double x = 0.0;
        for (std::size_t k = width; k-- > 0;) x = (x + digits[j + k]) / d;
        const PhasePoint pt(wrap_unit(x));
        orb.points.push_back(pt);
        if (j > 0) orb.noise.emplace_back(0.0);
        push_cache(orb, system, pt);
    }
    return orb;
}

std::pair<NoiseSequence, PhasePoint> skew_step(const MapSystem& system,
                                               const std::pair<NoiseSequence, PhasePoint>& state) {
    const auto& [omega, x] = state;
    const PhasePoint y = perturbed_step(system, x, omega.at(1));
    if (!system.domain().contains(y, omega.model().epsilon + 1e-12)) {
        throw EscapeError("skew_step: orbit left the absorbing region", 1.0);
    }
    return {omega.shifted(), y};
}

void write_orbit_csv(std::ostream& os, const RandomOrbit& orbit) {
    os << "step";
    for (int i = 0; i < orbit.dim; ++i) os << ",coord_" << i;
    os << ",log_inv_norm,log_abs_det,crit_dist";
    for (int i = 0; i < orbit.dim; ++i) os << ",noise_" << i;
    os << "\r\n";
    for (std::size_t j = 0; j < orbit.points.size(); ++j) {
        os << j;
        for (int i = 0; i < orbit.dim; ++i) os << ',' << fmt17(orbit.points[j][i]);
        os << ',' << fmt17(orbit.log_inv_norm[j]) << ',' << fmt17(orbit.log_abs_det[j]) << ','
           << fmt17(orbit.crit_dist[j]);
        for (int i = 0; i < orbit.dim; ++i) {
            os << ',' << (j == 0 ? std::string("0") : fmt17(orbit.noise[j - 1][i]));
        }
        os << "\r\n";
    }
}

}  // namespace ergolab
