#include "ergolab/measures.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <ostream>

#include "ergolab/error.hpp"
#include "ergolab/parallel.hpp"

namespace ergolab {

std::string to_string(Provenance p) {
    switch (p) {
        case Provenance::orbit_histogram: return "orbit-histogram";
        case Provenance::eigenvector: return "eigenvector";
        case Provenance::cesaro: return "cesaro";
        case Provenance::analytic: return "analytic";
    }
    return "unknown";
}

EmpiricalMeasure EmpiricalMeasure::uniform(const Grid& grid) {
    return {grid, std::vector<double>(grid.size(), 1.0 / static_cast<double>(grid.size())),
            Provenance::analytic};
}

EmpiricalMeasure EmpiricalMeasure::dirac(const Grid& grid, const PhasePoint& p) {
    const auto cell = grid.cell_of(p);
    if (!cell) throw DomainError("dirac: point outside the grid");
    std::vector<double> m(grid.size(), 0.0);
    m[*cell] = 1.0;
    return {grid, std::move(m), Provenance::analytic};
}

EmpiricalMeasure EmpiricalMeasure::from_weights(const Grid& grid, std::vector<double> weights,
                                                Provenance provenance) {
    if (weights.size() != grid.size()) throw ConfigError("measure: weight count does not match grid");
    double total = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) throw ConfigError("measure: negative or NaN weight");
        total += w;
    }
    if (!(total > 0.0)) throw ConfigError("measure: zero total weight");
    for (double& w : weights) w /= total;
    return {grid, std::move(weights), provenance};
}

double EmpiricalMeasure::total() const { return std::accumulate(masses.begin(), masses.end(), 0.0); }

double EmpiricalMeasure::integrate(const std::function<double(const PhasePoint&)>& g) const {
    double s = 0.0;
    for (std::size_t i = 0; i < masses.size(); ++i) {
        if (masses[i] != 0.0) s += masses[i] * g(grid.center(i));
    }
    return s;
}

EmpiricalMeasure EmpiricalMeasure::marginal(int axis) const {
    const Box& d = grid.domain();
    const Grid g1 = Grid::interval(d.lo[axis], d.hi[axis], grid.cells(axis), d.periodic[axis]);
    std::vector<double> m(g1.size(), 0.0);
    for (std::size_t i = 0; i < masses.size(); ++i) m[grid.unravel(i)[static_cast<std::size_t>(axis)]] += masses[i];
    return {g1, std::move(m), provenance};
}

namespace {

class Sampler {
public:
    explicit Sampler(const EmpiricalMeasure& mu) : mu_(mu) {
        cumulative_.reserve(mu.masses.size());
        double acc = 0.0;
        for (double m : mu.masses) cumulative_.push_back(acc += m);
    }
    PhasePoint draw(CounterRng& rng, bool within_cell) const {
        const double u = rng.uniform() * cumulative_.back();
        auto idx = static_cast<std::size_t>(
            std::upper_bound(cumulative_.begin(), cumulative_.end(), u) - cumulative_.begin());
        idx = std::min(idx, cumulative_.size() - 1);
        while (mu_.masses[idx] == 0.0 && idx > 0) --idx;
        if (!within_cell) return mu_.grid.center(idx);
        PhasePoint p = mu_.grid.corner(idx);
        for (int i = 0; i < mu_.grid.dim(); ++i) p[i] += mu_.grid.cell_width(i) * rng.uniform();
        return p;
    }

private:
    const EmpiricalMeasure& mu_;
    std::vector<double> cumulative_;
};

std::optional<std::size_t> clamped_cell(const Grid& grid, const PhasePoint& p, double slack) {
    if (auto c = grid.cell_of(p)) return c;
    if (!grid.domain().contains(p, slack)) return std::nullopt;
    PhasePoint q = p;
    for (int i = 0; i < grid.dim(); ++i) {
        if (!grid.domain().periodic[i]) q[i] = std::clamp(q[i], grid.domain().lo[i], grid.domain().hi[i]);
    }
    return grid.cell_of(q);
}

}  // namespace

PhasePoint EmpiricalMeasure::sample(CounterRng& rng, bool within_cell) const {
    return Sampler(*this).draw(rng, within_cell);
}

void EmpiricalMeasure::validate() const {
    if (masses.size() != grid.size()) throw ConfigError("measure: mass count does not match grid");
    for (double m : masses) {
        if (!(m >= 0.0)) throw ConfigError("measure: negative mass");
    }
    if (std::abs(total() - 1.0) > 1e-9) throw ConfigError("measure: total mass differs from 1");
}

EmpiricalMeasure measure_from_orbit(const RandomOrbit& orbit, const Grid& grid, std::size_t burn_in) {
    if (orbit.escaped) throw EscapeError("measure_from_orbit: orbit escaped", 1.0);
    const std::size_t n = orbit.steps();
    if (burn_in >= n) throw ConfigError("measure_from_orbit: burn_in must be below the orbit length");
    std::vector<double> counts(grid.size(), 0.0);
    for (std::size_t j = burn_in + 1; j <= n; ++j) {
        const auto c = clamped_cell(grid, orbit.points[j], orbit.epsilon + 1e-12);
        if (!c) throw DomainError("measure_from_orbit: orbit point outside the grid");
        counts[*c] += 1.0;
    }
    const double total = static_cast<double>(n - burn_in);
    for (double& c : counts) c /= total;
    return {grid, std::move(counts), Provenance::orbit_histogram};
}

EmpiricalMeasure cesaro_pushforward(const MapSystem& system, const NoiseModel& model,
                                    const EmpiricalMeasure& initial, std::size_t n,
                                    std::size_t samples, std::uint64_t seed,
                                    const CesaroOptions& options) {
    if (n == 0) throw ConfigError("cesaro_pushforward: n must be >= 1");
    if (samples == 0) throw ConfigError("cesaro_pushforward: samples must be >= 1");
    const Grid& grid = initial.grid;
    const Sampler sampler(initial);
    const std::size_t chunks = std::min<std::size_t>(samples, 64);
    std::vector<std::vector<std::uint64_t>> counts(chunks);
    std::vector<std::size_t> escapes(chunks, 0);
    const double slack = model.epsilon + 1e-12;
    parallel_for(chunks, options.workers, [&](std::size_t c) {
        auto& hist = counts[c];
        hist.assign(grid.size(), 0);
        for (std::size_t s = c; s < samples; s += chunks) {
            CounterRng rng = CounterRng::stream(derive_key(seed, 0x43455341ULL), s);
            PhasePoint x = sampler.draw(rng, options.within_cell);
            const NoiseSequence omega(model, derive_key(seed, s));
            bool escaped = false;
            std::vector<std::size_t> visited;
            visited.reserve(n);
            for (std::size_t j = 1; j <= n; ++j) {
                x = perturbed_step(system, x, omega.at(j));
                const auto cell = system.domain().contains(x, slack) ? clamped_cell(grid, x, slack)
                                                                     : std::nullopt;
                if (!cell) {
                    escaped = true;
                    break;
                }
                visited.push_back(*cell);
            }
            if (escaped) {
                ++escapes[c];
                continue;
            }
            for (std::size_t cell : visited) ++hist[cell];
        }
    });
    const std::size_t esc = std::accumulate(escapes.begin(), escapes.end(), std::size_t{0});
    if (esc > 0) {
        const double frac = static_cast<double>(esc) / static_cast<double>(samples);
        throw EscapeError("cesaro_pushforward: " + std::to_string(esc) + " sample orbits escaped", frac);
    }
    std::vector<double> w(grid.size(), 0.0);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        std::uint64_t t = 0;
        for (const auto& h : counts) t += h[i];
        w[i] = static_cast<double>(t);
    }
    return EmpiricalMeasure::from_weights(grid, std::move(w), Provenance::cesaro);
}

namespace {

double w1_line(const std::vector<double>& a, const std::vector<double>& b, double h, bool periodic) {
    const std::size_t n = a.size();
    std::vector<double> diff(n);
    double fa = 0.0, fb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        fa += a[i];
        fb += b[i];
        diff[i] = fa - fb;
    }
    double shift = 0.0;
    if (periodic) {
        std::vector<double> sorted = diff;
        std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(n / 2), sorted.end());
        shift = sorted[n / 2];
    }
    double s = 0.0;
    const std::size_t last = periodic ? n : n - 1;
    for (std::size_t i = 0; i < last; ++i) s += std::abs(diff[i] - shift);
    return h * s;
}

double sliced_w1(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, int directions) {
    const Grid& g = mu.grid;
    const std::size_t n = g.size();
    std::vector<double> proj(n);
    std::vector<std::size_t> order(n);
    double total = 0.0;
    for (int k = 0; k < directions; ++k) {
        const double th = std::numbers::pi * k / directions;
        const double c = std::cos(th), s = std::sin(th);
        for (std::size_t i = 0; i < n; ++i) {
            const PhasePoint p = g.center(i);
            proj[i] = c * p[0] + s * p[1];
        }
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return proj[x] < proj[y]; });
        double f = 0.0, w = 0.0;
        for (std::size_t r = 0; r + 1 < n; ++r) {
            f += mu.masses[order[r]] - nu.masses[order[r]];
            w += std::abs(f) * (proj[order[r + 1]] - proj[order[r]]);
        }
        total += w;
    }
    return total / directions;
}

}  // namespace

double w1_distance(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
    if (!(mu.grid == nu.grid)) throw ConfigError("w1_distance: measures live on different grids");
    const Grid& g = mu.grid;
    if (g.dim() == 1) return w1_line(mu.masses, nu.masses, g.cell_width(0), g.domain().periodic[0]);
    double marg = 0.0;
    for (int a = 0; a < 2; ++a) {
        const auto ma = mu.marginal(a), na = nu.marginal(a);
        marg += w1_line(ma.masses, na.masses, g.cell_width(a), g.domain().periodic[a]);
    }
    return 0.5 * (0.5 * marg + sliced_w1(mu, nu, 16));
}

std::vector<Probe> default_probes(const MapSystem& system) {
    std::vector<Probe> out;
    const Box dom = system.domain();
    for (int a = 0; a < system.dim(); ++a) {
        if (dom.periodic[a]) {
            for (int k = 1; k <= 4; ++k) {
                out.push_back([a, k](const PhasePoint& p) { return std::cos(2.0 * std::numbers::pi * k * p[a]); });
                out.push_back([a, k](const PhasePoint& p) { return std::sin(2.0 * std::numbers::pi * k * p[a]); });
            }
        } else {
            const double lo = dom.lo[a], w = dom.width(a);
            for (int deg = 1; deg <= 3; ++deg) {
                out.push_back([a, deg, lo, w](const PhasePoint& p) {
                    return std::pow(2.0 * (p[a] - lo) / w - 1.0, deg);
                });
            }
        }
    }
    return out;
}

namespace {

bool is_linear_circle(const MapSystem& s) {
    const auto& p = s.params();
    return s.family() == Family::expanding_circle && p.amp1 == 0.0 && p.amp2 == 0.0;
}

RandomOrbit basin_orbit(const MapSystem& system, const PhasePoint& x0, const BasinOptions& o, std::size_t i) {
    const std::uint64_t s = derive_key(o.seed, i);
    if (o.epsilon == 0.0 && is_linear_circle(system)) return generic_linear_orbit(system, x0, s, o.n);
    return random_orbit(system, NoiseModel::for_system(system, o.epsilon), x0, s, o.n);
}

}  // namespace

BasinReport basin_sample(const MapSystem& system, const std::vector<PhasePoint>& initials,
                         const BasinOptions& options, const std::vector<Probe>& probes_in) {
    if (options.n == 0) throw ConfigError("basin_sample: n must be >= 1");
    if (!(options.cluster_tol > 0.0)) throw ConfigError("basin_sample: cluster_tol must be > 0");
    const std::vector<Probe> probes = probes_in.empty() ? default_probes(system) : probes_in;
    const std::size_t m = initials.size();
    const auto burn = static_cast<std::size_t>(options.burn_in_fraction * static_cast<double>(options.n));
    BasinReport rep;
    rep.probe_averages.assign(m, {});
    std::vector<std::uint8_t> escaped(m, 0);
    parallel_for(m, options.workers, [&](std::size_t i) {
        const RandomOrbit orb = basin_orbit(system, initials[i], options, i);
        if (orb.escaped) {
            escaped[i] = 1;
            return;
        }
        std::vector<double> avg(probes.size(), 0.0);
        for (std::size_t j = burn + 1; j <= orb.steps(); ++j) {
            for (std::size_t k = 0; k < probes.size(); ++k) avg[k] += probes[k](orb.points[j]);
        }
        const double cnt = static_cast<double>(orb.steps() - burn);
        for (double& v : avg) v /= cnt;
        rep.probe_averages[i] = std::move(avg);
    });
    rep.assignment.assign(m, -1);
    std::vector<std::vector<double>> leaders;
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < m; ++i) {
        if (escaped[i]) {
            ++rep.escaped;
            continue;
        }
        const auto& v = rep.probe_averages[i];
        int found = -1;
        for (std::size_t c = 0; c < leaders.size() && found < 0; ++c) {
            double dmax = 0.0;
            for (std::size_t k = 0; k < v.size(); ++k) dmax = std::max(dmax, std::abs(v[k] - leaders[c][k]));
            if (dmax <= options.cluster_tol) found = static_cast<int>(c);
        }
        if (found < 0) {
            found = static_cast<int>(leaders.size());
            leaders.push_back(v);
            members.push_back(0);
            rep.representatives.emplace_back(v.size(), 0.0);
        }
        rep.assignment[i] = found;
        ++members[static_cast<std::size_t>(found)];
        auto& r = rep.representatives[static_cast<std::size_t>(found)];
        for (std::size_t k = 0; k < v.size(); ++k) r[k] += v[k];
    }
    rep.clusters = leaders.size();
    const double good = static_cast<double>(m - rep.escaped);
    for (std::size_t c = 0; c < rep.clusters; ++c) {
        for (double& x : rep.representatives[c]) x /= static_cast<double>(members[c]);
        rep.fractions.push_back(static_cast<double>(members[c]) / good);
    }
    if (options.grid) {
        const Grid& g = *options.grid;
        std::vector<std::vector<double>> hist(rep.clusters, std::vector<double>(g.size(), 0.0));
        for (std::size_t i = 0; i < m; ++i) {
            if (rep.assignment[i] < 0) continue;
            const RandomOrbit orb = basin_orbit(system, initials[i], options, i);
            const auto mu = measure_from_orbit(orb, g, burn);
            auto& h = hist[static_cast<std::size_t>(rep.assignment[i])];
            for (std::size_t k = 0; k < g.size(); ++k) h[k] += mu.masses[k];
        }
        for (auto& h : hist) rep.measures.push_back(EmpiricalMeasure::from_weights(g, std::move(h), Provenance::orbit_histogram));
    }
    return rep;
}

void write_measure_csv(std::ostream& os, const EmpiricalMeasure& mu) {
    char buf[64];
    os << "center_0";
    if (mu.grid.dim() == 2) os << ",center_1";
    os << ",mass\r\n";
    for (std::size_t i = 0; i < mu.masses.size(); ++i) {
        const PhasePoint c = mu.grid.center(i);
        for (int a = 0; a < mu.grid.dim(); ++a) {
            std::snprintf(buf, sizeof buf, "%.17g,", c[a]);
            os << buf;
        }
        std::snprintf(buf, sizeof buf, "%.17g", mu.masses[i]);
        os << buf << "\r\n";
    }
}

nlohmann::json measure_summary(const EmpiricalMeasure& mu, const EmpiricalMeasure* oracle,
                               const std::string& oracle_name) {
    nlohmann::json mean = nlohmann::json::array(), var = nlohmann::json::array();
    for (int a = 0; a < mu.grid.dim(); ++a) {
        const double m1 = mu.integrate([a](const PhasePoint& p) { return p[a]; });
        const double m2 = mu.integrate([a](const PhasePoint& p) { return p[a] * p[a]; });
        mean.push_back(m1);
        var.push_back(m2 - m1 * m1);
    }
    nlohmann::json j = {{"grid", to_json(mu.grid)},
                        {"provenance", to_string(mu.provenance)},
                        {"mean", mean},
                        {"variance", var}};
    if (oracle) {
        j["oracle"] = oracle_name;
        j["w1_to_oracle"] = w1_distance(mu, *oracle);
    }
    return j;
}

}  // namespace ergolab
