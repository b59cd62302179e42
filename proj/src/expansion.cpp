#include "ergolab/expansion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <optional>

#include "ergolab/error.hpp"
#include "ergolab/parallel.hpp"

namespace ergolab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Neumaier compensated sum.
struct CompensatedSum {
    double sum = 0.0;
    double comp = 0.0;
    void add(double v) {
        const double t = sum + v;
        if (std::abs(sum) >= std::abs(v)) {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    double value() const { return sum + comp; }
};

}  // namespace

double truncated_distance(double dist, double delta) {
    if (!(delta > 0.0)) throw ConfigError("truncated_distance: delta must be > 0");
    if (dist < 0.0) throw ConfigError("truncated_distance: negative distance");
    return dist >= delta ? 1.0 : dist;
}

ExpansionReport expansion_average(const RandomOrbit& orbit, double tail_fraction) {
    if (!(tail_fraction >= 0.0 && tail_fraction < 1.0)) {
        throw ConfigError("expansion_average: tail_fraction must be in [0, 1)");
    }
    ExpansionReport rep;
    rep.n = orbit.steps();
    if (rep.n == 0) return rep;
    rep.window_start = std::max<std::size_t>(1, static_cast<std::size_t>(tail_fraction * static_cast<double>(rep.n)));
    CompensatedSum s;
    std::size_t used = 0;
    rep.tail_max = -kInf;
    for (std::size_t j = 0; j < rep.n; ++j) {
        const double v = orbit.log_inv_norm[j];
        if (orbit.singular[j] || !std::isfinite(v)) {
            ++rep.skipped;
        } else {
            s.add(v);
            ++used;
        }
        if (j + 1 >= rep.window_start && used > 0) {
            rep.tail_max = std::max(rep.tail_max, s.value() / static_cast<double>(used));
        }
    }
    rep.expansion_avg = used == 0 ? 0.0 : s.value() / static_cast<double>(used);
    if (!std::isfinite(rep.tail_max)) rep.tail_max = rep.expansion_avg;
    return rep;
}

double slow_approach_average(const RandomOrbit& orbit, double delta, std::size_t* skipped) {
    if (!(delta > 0.0)) throw ConfigError("slow_approach_average: delta must be > 0");
    const std::size_t n = orbit.steps();
    CompensatedSum s;
    std::size_t skip = 0, used = 0;
    for (std::size_t j = 0; j < n; ++j) {
        const double dd = truncated_distance(orbit.crit_dist[j], delta);
        if (dd == 0.0) {
            ++skip;
            continue;
        }
        s.add(-std::log(dd));
        ++used;
    }
    if (skipped) *skipped = skip;
    return used == 0 ? 0.0 : s.value() / static_cast<double>(used);
}

HyperbolicTimeRecord hyperbolic_times(const RandomOrbit& orbit, double alpha, double delta, double b) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("hyperbolic_times: alpha must be in (0, 1)");
    if (!(delta > 0.0)) throw ConfigError("hyperbolic_times: delta must be > 0");
    if (!(b > 0.0)) throw ConfigError("hyperbolic_times: b must be > 0");
    HyperbolicTimeRecord rec;
    rec.alpha = alpha;
    rec.delta = delta;
    rec.b = b;
    rec.horizon = orbit.steps();
    const double la = std::log(alpha);
    // T(m) = S(m) - m log alpha with S(m) = sum_{j<m} log ||Df(x_j)^{-1}||;
    // U(m) = log dist_delta(x_m) + b m log alpha.
    // n is a hyperbolic time iff T(n) <= min_{m<n} T(m) and min_{m<n} U(m) >= b n log alpha.
    double s = 0.0;
    double t_min = kInf, u_min = kInf;
    for (std::size_t n = 1; n <= rec.horizon; ++n) {
        const std::size_t m = n - 1;
        const double t_m = s - static_cast<double>(m) * la;
        t_min = std::min(t_min, t_m);
        const double dd = truncated_distance(orbit.crit_dist[m], delta);
        const double u_m = (dd == 0.0 ? -kInf : std::log(dd)) + b * static_cast<double>(m) * la;
        u_min = std::min(u_min, u_m);
        s += orbit.log_inv_norm[m];
        const double t_n = s - static_cast<double>(n) * la;
        if (t_n <= t_min && u_min >= b * static_cast<double>(n) * la) rec.times.push_back(n);
    }
    return rec;
}

namespace {

// Solve f(y) + t = target for y near `guess`; empty on failure.
std::optional<PhasePoint> pull_back(const MapSystem& system, const PhasePoint& target,
                                    const PhasePoint& t, const PhasePoint& guess) {
    const Box& dom = system.domain();
    PhasePoint goal = target;
    for (int i = 0; i < goal.dim(); ++i) goal[i] -= t[i];
    PhasePoint y = guess;
    for (int iter = 0; iter < 60; ++iter) {
        const PhasePoint fy = system.apply(y);
        std::array<double, 2> r{};
        double rn = 0.0;
        for (int i = 0; i < y.dim(); ++i) {
            r[i] = fy[i] - goal[i];
            if (dom.periodic[i]) r[i] = wrap_signed(r[i]);
            rn = std::max(rn, std::abs(r[i]));
        }
        if (rn <= 1e-15) return y;
        const auto dd = system.differential(y);
        if (dd.singular) return std::nullopt;
        const auto& j = dd.jacobian;
        if (y.dim() == 1) {
            y[0] -= r[0] / j[0][0];
        } else {
            const double det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            y[0] -= (j[1][1] * r[0] - j[0][1] * r[1]) / det;
            y[1] -= (-j[1][0] * r[0] + j[0][0] * r[1]) / det;
        }
        y = system.reduce(y);
        if (!dom.contains(y, 1e-9) || system.distance(y, guess) > 0.25) return std::nullopt;
        if (iter > 8 && rn <= 1e-13) return y;
    }
    return std::nullopt;
}

}  // namespace

ContractionReport contraction_check(const MapSystem& system, const RandomOrbit& orbit,
                                    const HyperbolicTimeRecord& record,
                                    const ContractionOptions& options) {
    ContractionReport rep;
    if (record.times.empty()) return rep;
    if (record.horizon != orbit.steps()) throw ConfigError("contraction_check: record from another orbit");
    const std::size_t total = record.times.size();
    const std::size_t count = std::min(total, options.max_times);
    const double half_log_alpha = 0.5 * std::log(record.alpha);
    for (std::size_t c = 0; c < count; ++c) {
        const std::size_t n = record.times[count == total ? c : (c * (total - 1)) / std::max<std::size_t>(1, count - 1)];
        CounterRng rng = CounterRng::stream(options.seed, n);
        const PhasePoint xn = orbit.points[n];
        PhasePoint y = xn, z = xn;
        if (system.dim() == 1) {
            y[0] += options.probe_radius * rng.uniform(0.1, 1.0);
            z[0] -= options.probe_radius * rng.uniform(0.1, 1.0);
        } else {
            const double th = 2.0 * std::numbers::pi * rng.uniform();
            const double ry = options.probe_radius * rng.uniform(0.1, 1.0);
            const double rz = options.probe_radius * rng.uniform(0.1, 1.0);
            y[0] += ry * std::cos(th);
            y[1] += ry * std::sin(th);
            z[0] -= rz * std::cos(th);
            z[1] -= rz * std::sin(th);
        }
        y = system.reduce(y);
        z = system.reduce(z);
        if (!system.domain().contains(y) || !system.domain().contains(z)) {
            ++rep.skipped;
            continue;
        }
        const double d0 = system.distance(y, z);
        ++rep.times_checked;
        bool ok = true;
        for (std::size_t k = 1; k <= n && ok; ++k) {
            const std::size_t j = n - k;
            const auto py = pull_back(system, y, orbit.noise[j], orbit.points[j]);
            const auto pz = pull_back(system, z, orbit.noise[j], orbit.points[j]);
            if (!py || !pz) {
                ++rep.skipped;
                ok = false;
                break;
            }
            y = *py;
            z = *pz;
            const double dk = system.distance(y, z);
            const double bound = std::exp(static_cast<double>(k) * half_log_alpha) * d0;
            ++rep.comparisons;
            if (dk > bound * (1.0 + 1e-9) + 1e-13) ++rep.violations;
            if (bound > 0.0) rep.worst_ratio = std::max(rep.worst_ratio, dk / bound);
        }
    }
    return rep;
}

double estimate_exponent_bound(const std::vector<ExpansionReport>& ensemble, double percentile) {
    if (ensemble.empty()) throw ConfigError("estimate_exponent_bound: empty ensemble");
    std::vector<double> tails;
    tails.reserve(ensemble.size());
    for (const auto& r : ensemble) tails.push_back(r.tail_max);
    std::sort(tails.begin(), tails.end());
    // linear interpolation between order statistics
    const double pos = percentile * static_cast<double>(tails.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, tails.size() - 1);
    const double w = pos - static_cast<double>(lo);
    const double q = tails[lo] == tails[hi] ? tails[lo] : tails[lo] + w * (tails[hi] - tails[lo]);
    return -q;
}

namespace {

// Lower bound of the distance from a grid cell to the critical set.
double cell_critical_gap(const MapSystem& system, const Grid& grid, std::size_t cell) {
    const PhasePoint c = grid.corner(cell);
    int axis = 0;
    switch (system.critical_set()) {
        case CriticalSet::empty: return kInf;
        case CriticalSet::point_zero: axis = 0; break;
        case CriticalSet::fiber_zero: axis = 1; break;
    }
    const double a = c[axis], b = a + grid.cell_width(axis);
    if (a <= 0.0 && b >= 0.0) return 0.0;
    return std::min(std::abs(a), std::abs(b));
}

}  // namespace

IntegrabilityEstimate uniform_integrability_probe(const MapSystem& system, const NoiseModel& model,
                                                  const EmpiricalMeasure& mu, double delta,
                                                  std::size_t samples, std::uint64_t seed) {
    if (!(delta > 0.0)) throw ConfigError("uniform_integrability_probe: delta must be > 0");
    if (samples == 0) throw ConfigError("uniform_integrability_probe: samples must be >= 1");
    (void)model;  // additive noise: Df_t = Df, so the t-integral is trivial
    IntegrabilityEstimate est;
    if (system.critical_set() == CriticalSet::empty) return est;
    const Grid& grid = mu.grid;
    std::vector<std::size_t> cells;
    std::vector<double> cumulative;
    double acc = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (mu.masses[i] > 0.0 && cell_critical_gap(system, grid, i) < delta) {
            acc += mu.masses[i];
            cells.push_back(i);
            cumulative.push_back(acc);
        }
    }
    if (cells.empty() || acc == 0.0) return est;
    est.near_mass = acc;
    CompensatedSum s, s2;
    for (std::size_t k = 0; k < samples; ++k) {
        CounterRng rng = CounterRng::stream(seed, k);
        const double u = rng.uniform() * acc;
        const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
        const std::size_t cell = cells[std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), cells.size() - 1)];
        PhasePoint x = grid.corner(cell);
        for (int i = 0; i < grid.dim(); ++i) x[i] += grid.cell_width(i) * rng.uniform();
        double v = 0.0;
        if (system.critical_distance(x) < delta) {
            const double lad = system.differential(x).log_abs_det;
            v = std::isfinite(lad) ? -lad : 0.0;
        }
        s.add(v);
        s2.add(v * v);
    }
    const double m = s.value() / static_cast<double>(samples);
    const double var = std::max(0.0, s2.value() / static_cast<double>(samples) - m * m);
    est.samples = samples;
    est.estimate = acc * m;
    est.std_error = acc * std::sqrt(var / static_cast<double>(samples));
    return est;
}

namespace {

bool is_linear_circle(const MapSystem& s) {
    const auto& p = s.params();
    return s.family() == Family::expanding_circle && p.amp1 == 0.0 && p.amp2 == 0.0;
}

}  // namespace

std::vector<OrbitDiagnostics> orbit_ensemble(const MapSystem& system, const NoiseModel& model,
                                             const EnsembleSpec& spec) {
    std::vector<OrbitDiagnostics> out(spec.orbits);
    const Box& dom = system.domain();
    parallel_for(spec.orbits, spec.workers, [&](std::size_t i) {
        CounterRng rng = CounterRng::stream(derive_key(spec.seed, 0x5354), i);
        PhasePoint x0 = system.dim() == 1 ? PhasePoint(0.0) : PhasePoint(0.0, 0.0);
        for (int a = 0; a < system.dim(); ++a) x0[a] = rng.uniform(dom.lo[a], dom.hi[a]);
        const std::uint64_t orbit_seed = derive_key(spec.seed, i);
        const RandomOrbit orb = model.deterministic() && is_linear_circle(system)
                                    ? generic_linear_orbit(system, x0, orbit_seed, spec.length)
                                    : random_orbit(system, model, x0, orbit_seed, spec.length);
        auto& row = out[i];
        row.escaped = orb.escaped;
        row.expansion = expansion_average(orb, spec.tail_fraction);
        for (double d : spec.deltas) row.expansion.slow_approach[d] = slow_approach_average(orb, d);
        row.hyperbolic = hyperbolic_times(orb, spec.alpha, spec.hyp_delta, spec.b);
    });
    return out;
}

nlohmann::json to_json(const ExpansionReport& report, const HyperbolicTimeRecord* hyp) {
    nlohmann::json slow = nlohmann::json::object();
    for (const auto& [d, v] : report.slow_approach) {
        char key[32];
        std::snprintf(key, sizeof key, "%.17g", d);
        slow[key] = v;
    }
    nlohmann::json j = {{"n", report.n},
                        {"expansion_avg", report.expansion_avg},
                        {"tail_max", report.tail_max},
                        {"window_start", report.window_start},
                        {"skipped", report.skipped},
                        {"slow_approach", slow}};
    if (hyp) {
        j["hyp_times"] = {{"alpha", hyp->alpha},
                          {"delta", hyp->delta},
                          {"b", hyp->b},
                          {"count", hyp->times.size()},
                          {"density", hyp->density()}};
    }
    return j;
}

}  // namespace ergolab
