#include "ergolab/entropy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "ergolab/error.hpp"
#include "ergolab/parallel.hpp"

namespace ergolab {

namespace {

using Key = std::pair<std::uint64_t, std::uint64_t>;

constexpr std::uint64_t kHashB1 = 0x9e3779b97f4a7c15ULL;
constexpr std::uint64_t kHashB2 = 0xc2b2ae3d27d4eb4fULL;

// Exact base-(A+1) code while it fits, else a pair of polynomial hashes.
struct KeyCoder {
    std::uint64_t base = 2;
    bool exact = true;

    KeyCoder(std::size_t symbols, std::size_t n) : base(symbols) {
        long double cap = 1.0L;
        for (std::size_t i = 0; i < n; ++i) cap *= static_cast<long double>(symbols);
        exact = cap < 9.0e18L;
    }
    void push(Key& k, std::uint64_t s) const {
        if (exact) {
            k.first = k.first * base + s;
        } else {
            k.first = k.first * kHashB1 + s + 1;
            k.second = k.second * kHashB2 + s + 1;
        }
    }
};

struct Weighted {
    Key key;
    double w;
};

ItineraryEntropy entropy_of(std::vector<Weighted>& items, std::size_t n, std::size_t cap) {
    std::sort(items.begin(), items.end(), [](const Weighted& a, const Weighted& b) { return a.key < b.key; });
    double total = 0.0;
    for (const auto& it : items) total += it.w;
    ItineraryEntropy out;
    out.n = n;
    if (!(total > 0.0)) return out;
    double h = 0.0;
    std::size_t i = 0;
    while (i < items.size()) {
        double w = 0.0;
        std::size_t j = i;
        while (j < items.size() && items[j].key == items[i].key) w += items[j++].w;
        if (w > 0.0) {
            const double p = w / total;
            h -= p * std::log(p);
            ++out.distinct;
            if (out.distinct > cap) {
                throw ConfigError("itinerary count exceeds " + std::to_string(cap) + "; use a smaller N");
            }
        }
        i = j;
    }
    out.h_total = h;
    return out;
}

std::vector<PhasePoint> lattice_points(const Grid& grid, std::size_t cell, std::size_t per_cell) {
    std::vector<PhasePoint> pts;
    const PhasePoint c = grid.corner(cell);
    if (grid.dim() == 1) {
        const double w = grid.cell_width(0);
        pts.reserve(per_cell);
        for (std::size_t j = 0; j < per_cell; ++j) {
            pts.emplace_back(c[0] + w * ((static_cast<double>(j) + 0.5) / static_cast<double>(per_cell)));
        }
        return pts;
    }
    auto q = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(per_cell))));
    q = std::max<std::size_t>(q, 1);
    const double w0 = grid.cell_width(0), w1 = grid.cell_width(1);
    for (std::size_t a = 0; a < q; ++a) {
        for (std::size_t b = 0; b < q; ++b) {
            pts.emplace_back(c[0] + w0 * ((a + 0.5) / q), c[1] + w1 * ((b + 0.5) / q));
        }
    }
    return pts;
}

}  // namespace

double box_distance(const Box& domain, const PhasePoint& p, const PhasePoint& q) {
    double s = 0.0;
    for (int i = 0; i < domain.dim; ++i) {
        double d = p[i] - q[i];
        if (domain.periodic[i]) d = wrap_signed(d);
        s += d * d;
    }
    return std::sqrt(s);
}

FinitePartition FinitePartition::intervals(const Box& domain, int axis, std::vector<double> breaks) {
    if (axis < 0 || axis >= domain.dim) throw ConfigError("partition axis out of range");
    std::sort(breaks.begin(), breaks.end());
    for (double b : breaks) {
        if (!(b > domain.lo[axis] && b < domain.hi[axis])) {
            throw ConfigError("partition cut points must lie inside the domain");
        }
    }
    FinitePartition xi;
    xi.domain_ = domain;
    xi.axis_ = axis;
    xi.breaks_ = std::move(breaks);
    xi.atom_count_ = xi.breaks_.size() + 1;
    xi.component_count_ = xi.atom_count_;
    return xi;
}

FinitePartition FinitePartition::halves(const Box& domain) {
    return intervals(domain, 0, {0.5 * (domain.lo[0] + domain.hi[0])});
}

FinitePartition FinitePartition::equal_arcs(const Box& domain, int d) {
    if (d < 2) throw ConfigError("equal_arcs needs d >= 2");
    std::vector<double> b;
    for (int k = 1; k < d; ++k) b.push_back(domain.lo[0] + domain.width(0) * k / d);
    return intervals(domain, 0, b);
}

FinitePartition::AtomKey FinitePartition::key(const PhasePoint& p) const {
    if (!ball_join_) {
        double x = p[axis_];
        if (domain_.periodic[axis_]) x = domain_.lo[axis_] + wrap_unit(x - domain_.lo[axis_]);
        return {static_cast<std::uint64_t>(std::upper_bound(breaks_.begin(), breaks_.end(), x) - breaks_.begin()),
                0, 0, 0};
    }
    AtomKey k{0, 0, 0, 0};
    for (std::size_t b = 0; b < centers_.size(); ++b) {
        if (box_distance(domain_, p, centers_[b]) <= radius_) k[b / 64] |= std::uint64_t{1} << (b % 64);
    }
    return k;
}

int FinitePartition::atom(const PhasePoint& p) const {
    const AtomKey k = key(p);
    if (!ball_join_) return static_cast<int>(k[0]);
    const auto it = std::lower_bound(keys_.begin(), keys_.end(), k);
    if (it == keys_.end() || *it != k) return static_cast<int>(atom_count_);
    return static_cast<int>(it - keys_.begin());
}

nlohmann::json FinitePartition::spec() const {
    nlohmann::json j;
    if (ball_join_) {
        j["kind"] = "ball_join";
        nlohmann::json cs = nlohmann::json::array();
        for (const auto& c : centers_) {
            nlohmann::json pt = nlohmann::json::array();
            for (int i = 0; i < c.dim(); ++i) pt.push_back(c[i]);
            cs.push_back(pt);
        }
        j["centers"] = cs;
        j["radius"] = radius_;
    } else {
        j["kind"] = "intervals";
        j["axis"] = axis_;
        j["breaks"] = breaks_;
    }
    j["atoms"] = atom_count_;
    j["components"] = component_count_;
    return j;
}

double FinitePartition::boundary_mass(const EmpiricalMeasure& mu) const {
    const Grid& g = mu.grid;
    constexpr int s = 9;
    double total = 0.0;
    for (std::size_t c = 0; c < g.size(); ++c) {
        if (mu.masses[c] == 0.0) continue;
        const PhasePoint lo = g.corner(c);
        int first = -2;
        bool straddles = false;
        const int s1 = g.dim() == 1 ? 1 : s;
        for (int a = 0; a < s && !straddles; ++a) {
            for (int b = 0; b < s1 && !straddles; ++b) {
                const double fa = std::min(a / double(s - 1), 1.0 - 1e-12);
                PhasePoint p = g.dim() == 1 ? PhasePoint(lo[0] + fa * g.cell_width(0))
                                            : PhasePoint(lo[0] + fa * g.cell_width(0),
                                                         lo[1] + std::min(b / double(s - 1), 1.0 - 1e-12) *
                                                                     g.cell_width(1));
                const int l = atom(p);
                if (first == -2) first = l;
                else if (l != first) straddles = true;
            }
        }
        if (straddles) total += mu.masses[c];
    }
    return total;
}

FinitePartition partition_from_cover(const Box& domain, const std::vector<PhasePoint>& centers, double radius,
                                     const Grid& grid) {
    if (centers.empty() || centers.size() > 256) throw ConfigError("ball cover needs 1..256 balls");
    if (!(radius > 0.0)) throw ConfigError("ball radius must be positive");
    FinitePartition xi;
    xi.domain_ = domain;
    xi.ball_join_ = true;
    xi.centers_ = centers;
    xi.radius_ = radius;

    std::vector<FinitePartition::AtomKey> cell_key(grid.size());
    std::vector<std::size_t> uncovered;
    for (std::size_t c = 0; c < grid.size(); ++c) {
        const PhasePoint ctr = grid.center(c);
        cell_key[c] = xi.key(ctr);
        if (cell_key[c] == FinitePartition::AtomKey{}) uncovered.push_back(c);
    }
    if (!uncovered.empty()) {
        std::ostringstream msg;
        msg << "ball cover misses " << uncovered.size() << " grid cells:";
        for (std::size_t i = 0; i < std::min<std::size_t>(uncovered.size(), 10); ++i) msg << ' ' << uncovered[i];
        if (uncovered.size() > 10) msg << " ...";
        throw ConfigError(msg.str());
    }
    xi.keys_ = cell_key;
    std::sort(xi.keys_.begin(), xi.keys_.end());
    xi.keys_.erase(std::unique(xi.keys_.begin(), xi.keys_.end()), xi.keys_.end());
    xi.atom_count_ = xi.keys_.size();

    // connected pieces: flood fill with periodic wrap
    std::vector<int> comp(grid.size(), -1);
    std::size_t pieces = 0;
    const std::size_t n0 = grid.cells(0), n1 = grid.dim() == 1 ? 1 : grid.cells(1);
    std::vector<std::size_t> stack;
    for (std::size_t start = 0; start < grid.size(); ++start) {
        if (comp[start] >= 0) continue;
        comp[start] = static_cast<int>(pieces);
        stack.assign(1, start);
        while (!stack.empty()) {
            const std::size_t c = stack.back();
            stack.pop_back();
            const auto ij = grid.unravel(c);
            const long i = static_cast<long>(ij[0]), j = static_cast<long>(ij[1]);
            const long nb[4][2] = {{i - 1, j}, {i + 1, j}, {i, j - 1}, {i, j + 1}};
            for (const auto& q : nb) {
                long a = q[0], b = q[1];
                if (a < 0 || a >= static_cast<long>(n0)) {
                    if (!domain.periodic[0]) continue;
                    a = (a + static_cast<long>(n0)) % static_cast<long>(n0);
                }
                if (b < 0 || b >= static_cast<long>(n1)) {
                    if (grid.dim() == 1 || !domain.periodic[1]) continue;
                    b = (b + static_cast<long>(n1)) % static_cast<long>(n1);
                }
                const std::size_t nc = grid.ravel(static_cast<std::size_t>(a), static_cast<std::size_t>(b));
                if (comp[nc] < 0 && cell_key[nc] == cell_key[c]) {
                    comp[nc] = static_cast<int>(pieces);
                    stack.push_back(nc);
                }
            }
        }
        ++pieces;
    }
    xi.component_count_ = pieces;
    return xi;
}

ItineraryEntropy itinerary_entropy(const std::vector<RandomOrbit>& orbits, const FinitePartition& xi,
                                   std::size_t n, const ItineraryOptions& options) {
    if (n == 0) throw ConfigError("itinerary length must be >= 1");
    const KeyCoder coder(xi.atom_count() + 1, n);
    std::vector<std::size_t> offset(orbits.size() + 1, 0);
    for (std::size_t o = 0; o < orbits.size(); ++o) {
        const std::size_t len = orbits[o].points.size();
        offset[o + 1] = offset[o] + (len >= n ? len - n + 1 : 0);
    }
    std::vector<Weighted> items(offset.back());
    parallel_for(orbits.size(), options.workers, [&](std::size_t o) {
        const auto& pts = orbits[o].points;
        if (pts.size() < n) return;
        std::vector<std::uint64_t> lab(pts.size());
        for (std::size_t j = 0; j < pts.size(); ++j) lab[j] = static_cast<std::uint64_t>(xi.atom(pts[j]));
        for (std::size_t s = 0; s + n <= pts.size(); ++s) {
            Key k{0, 0};
            for (std::size_t j = 0; j < n; ++j) coder.push(k, lab[s + j]);
            items[offset[o] + s] = {k, 1.0};
        }
    });
    return entropy_of(items, n, options.max_itineraries);
}

namespace {

// Labels of the first n_max iterates of every lattice point, with its weight.
struct LabelTable {
    std::size_t n_max = 0;
    std::vector<std::uint16_t> labels;
    std::vector<double> weights;
};

LabelTable label_table(const MapSystem& system, const EmpiricalMeasure& mu, const FinitePartition& xi,
                       std::size_t n_max, const NoiseSequence& omega, const ItineraryOptions& options) {
    if (n_max == 0) throw ConfigError("itinerary length must be >= 1");
    if (mu.grid.dim() != system.dim()) throw ConfigError("measure grid and system dimension differ");
    if (xi.atom_count() >= 0xffff) throw ConfigError("partition has too many atoms");
    const std::vector<PhasePoint> t = omega.realized(n_max - 1);
    const std::size_t per = lattice_points(mu.grid, 0, options.points_per_cell).size();
    LabelTable tab;
    tab.n_max = n_max;
    tab.labels.assign(mu.grid.size() * per * n_max, 0);
    tab.weights.assign(mu.grid.size() * per, 0.0);
    parallel_for(mu.grid.size(), options.workers, [&](std::size_t c) {
        const double m = mu.masses[c];
        if (m == 0.0) return;
        const auto pts = lattice_points(mu.grid, c, options.points_per_cell);
        const double w = m / static_cast<double>(per);
        for (std::size_t q = 0; q < per; ++q) {
            const std::size_t idx = c * per + q;
            std::uint16_t* lab = &tab.labels[idx * n_max];
            PhasePoint y = pts[q];
            for (std::size_t j = 0; j < n_max; ++j) {
                lab[j] = static_cast<std::uint16_t>(xi.atom(y));
                if (j + 1 < n_max) y = perturbed_step(system, y, t[j]);
            }
            tab.weights[idx] = w;
        }
    });
    return tab;
}

ItineraryEntropy table_entropy(const LabelTable& tab, const FinitePartition& xi, std::size_t n,
                               const ItineraryOptions& options) {
    if (n == 0 || n > tab.n_max) throw ConfigError("itinerary length out of range");
    const KeyCoder coder(xi.atom_count() + 1, n);
    std::vector<Weighted> items(tab.weights.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
        Key k{0, 0};
        const std::uint16_t* lab = &tab.labels[i * tab.n_max];
        for (std::size_t j = 0; j < n; ++j) coder.push(k, lab[j]);
        items[i] = {k, tab.weights[i]};
    }
    return entropy_of(items, n, options.max_itineraries);
}

}  // namespace

ItineraryEntropy itinerary_entropy(const MapSystem& system, const EmpiricalMeasure& mu, const FinitePartition& xi,
                                   std::size_t n, const NoiseSequence& omega, const ItineraryOptions& options) {
    return table_entropy(label_table(system, mu, xi, n, omega, options), xi, n, options);
}

double refined_entropy(const std::vector<RandomOrbit>& orbits, const FinitePartition& xi, std::size_t n,
                       const ItineraryOptions& options) {
    return itinerary_entropy(orbits, xi, n, options).per_step();
}

double refined_entropy(const MapSystem& system, const EmpiricalMeasure& mu, const FinitePartition& xi,
                       std::size_t n, const ItineraryOptions& options) {
    const NoiseSequence zero(NoiseModel{0.0, system.dim()}, 0);
    return itinerary_entropy(system, mu, xi, n, zero, options).per_step();
}

namespace {
template <class Eval>
EntropyReport schedule_report(const std::vector<std::size_t>& schedule, const FinitePartition& xi, Eval&& eval) {
    if (schedule.empty()) throw ConfigError("entropy schedule is empty");
    EntropyReport r;
    r.schedule = schedule;
    r.partition_spec = xi.spec();
    r.min = std::numeric_limits<double>::infinity();
    for (std::size_t n : schedule) {
        const double hn = eval(n);
        const double prev = n > 1 ? eval(n - 1) : 0.0;
        r.estimates.push_back(hn / static_cast<double>(n));
        r.conditional.push_back(hn - prev);
        r.min = std::min(r.min, r.estimates.back());
    }
    return r;
}
}  // namespace

EntropyReport metric_entropy_estimate(const MapSystem& system, const EmpiricalMeasure& mu, const FinitePartition& xi,
                                      const std::vector<std::size_t>& schedule, const ItineraryOptions& options) {
    const NoiseSequence zero(NoiseModel{0.0, system.dim()}, 0);
    const std::size_t n_max = schedule.empty() ? 1 : *std::max_element(schedule.begin(), schedule.end());
    const LabelTable tab = label_table(system, mu, xi, n_max, zero, options);
    auto r = schedule_report(schedule, xi, [&](std::size_t n) { return table_entropy(tab, xi, n, options).h_total; });
    r.boundary_mass = xi.boundary_mass(mu);
    return r;
}

EntropyReport metric_entropy_estimate(const std::vector<RandomOrbit>& orbits, const FinitePartition& xi,
                                      const std::vector<std::size_t>& schedule, const ItineraryOptions& options) {
    return schedule_report(schedule, xi,
                           [&](std::size_t n) { return itinerary_entropy(orbits, xi, n, options).h_total; });
}

double random_entropy_estimate(const MapSystem& system, const NoiseModel& model, const EmpiricalMeasure& mu,
                               const FinitePartition& xi, std::size_t n, std::size_t omega_samples,
                               std::uint64_t seed, const ItineraryOptions& options) {
    if (model.deterministic()) return refined_entropy(system, mu, xi, n, options);
    if (omega_samples == 0) throw ConfigError("omega_samples must be >= 1");
    double sum = 0.0;
    for (std::size_t s = 0; s < omega_samples; ++s) {
        const NoiseSequence omega(model, derive_key(seed, s));
        sum += itinerary_entropy(system, mu, xi, n, omega, options).h_total;
    }
    return sum / static_cast<double>(omega_samples) / static_cast<double>(n);
}

double randomized_potential(const MapSystem& system, const NoiseModel& model, const PhasePoint& p,
                            std::size_t samples, std::uint64_t seed) {
    if (samples == 0) throw ConfigError("samples must be >= 1");
    const double exact = system.differential(p).log_abs_det;
    // f_t = f + t, so Df_t(p) = Df(p) for every draw
    double sum = 0.0;
    for (std::size_t s = 0; s < samples; ++s) {
        CounterRng rng = CounterRng::stream(seed, s);
        (void)sample_noise(model, rng);
        sum += system.differential(p).log_abs_det;
    }
    const double mc = sum / static_cast<double>(samples);
    if (std::isfinite(exact) && std::abs(mc - exact) > 1e-12 * std::max(1.0, std::abs(exact))) {
        throw Error("randomized_potential: Monte Carlo mean disagrees with log|det Df|");
    }
    return exact;
}

FormulaResidual entropy_formula_residual(double h_est, const MapSystem& system, const EmpiricalMeasure& mu) {
    const Grid& g = mu.grid;
    if (g.dim() != system.dim()) throw ConfigError("measure grid and system dimension differ");
    constexpr std::size_t base_q = 4;
    FormulaResidual r;
    double width = 0.0;
    for (int i = 0; i < g.dim(); ++i) width = std::max(width, g.cell_width(i));
    double integral = 0.0;
    for (std::size_t c = 0; c < g.size(); ++c) {
        if (mu.masses[c] == 0.0) continue;
        const bool near = system.critical_set() != CriticalSet::empty &&
                          system.critical_distance(g.center(c)) < width;
        const std::size_t q = near ? base_q * static_cast<std::size_t>(r.refinement) : base_q;
        if (near) ++r.refined_cells;
        const PhasePoint lo = g.corner(c);
        double s = 0.0;
        std::size_t used = 0;
        const std::size_t q1 = g.dim() == 1 ? 1 : q;
        for (std::size_t a = 0; a < q; ++a) {
            for (std::size_t b = 0; b < q1; ++b) {
                const double x0 = lo[0] + g.cell_width(0) * ((a + 0.5) / q);
                const PhasePoint p = g.dim() == 1 ? PhasePoint(x0)
                                                  : PhasePoint(x0, lo[1] + g.cell_width(1) * ((b + 0.5) / q));
                const double v = system.differential(p).log_abs_det;
                if (!std::isfinite(v)) continue;
                s += v;
                ++used;
            }
        }
        if (used > 0) integral += mu.masses[c] * (s / static_cast<double>(used));
    }
    r.integral = integral;
    r.residual = h_est - integral;
    return r;
}

LowVariationReport low_variation_check(const Potential& phi, const MapSystem& system, double rho, const Grid& grid) {
    if (!(rho >= 0.0 && rho <= 1.0)) throw ConfigError("rho must lie in [0, 1]");
    LowVariationReport r;
    r.sup_phi = -std::numeric_limits<double>::infinity();
    constexpr std::size_t samples = 8192;
    for (std::size_t j = 0; j < samples; ++j) r.sup_phi = std::max(r.sup_phi, phi(j / double(samples)));
    for (std::size_t j = 0; j < grid.size(); ++j) r.sup_phi = std::max(r.sup_phi, phi(grid.center(j)[0]));
    r.pressure = ruelle_pressure(system, phi, grid).pressure;
    r.htop = topological_entropy(system, grid);
    r.margin = r.pressure - rho * r.htop - r.sup_phi;
    r.holds = r.margin >= -1e-12;
    return r;
}

namespace {

struct CylinderProbe {
    const MapSystem& system;
    const FinitePartition& xi;
    std::vector<PhasePoint> noise;
    std::vector<int> labels;

    bool inside(const PhasePoint& start, std::size_t k) const {
        PhasePoint y = system.reduce(start);
        for (std::size_t j = 0; j < k; ++j) {
            if (xi.atom(y) != labels[j]) return false;
            if (j + 1 < k) y = perturbed_step(system, y, noise[j]);
        }
        return true;
    }
};

// out is outside, in is inside; returns the adjacent pair {last outside, first inside}
std::pair<double, double> bisect_1d(const CylinderProbe& probe, std::size_t k, double out, double in) {
    for (;;) {
        const double m = out + 0.5 * (in - out);
        if (m == out || m == in) return {out, in};
        if (probe.inside(PhasePoint(m), k)) in = m;
        else out = m;
    }
}

// Edge of the piece containing `in` on the side of `far`: scans 257 samples toward
// `in` so that gaps of the cylinder are not jumped over, then bisects.
// Returns {far, far} unchanged in the first slot when no sample is outside.
std::pair<double, double> nearest_edge(const CylinderProbe& probe, std::size_t k, double far, double in) {
    constexpr int samples = 256;
    int last_out = -1;
    for (int i = 0; i < samples; ++i) {
        const double u = far + (in - far) * (static_cast<double>(i) / samples);
        if (!probe.inside(PhasePoint(u), k)) last_out = i;
    }
    if (last_out < 0) return {far, far};
    const double out = far + (in - far) * (static_cast<double>(last_out) / samples);
    const double next = far + (in - far) * (static_cast<double>(last_out + 1) / samples);
    return bisect_1d(probe, k, out, last_out + 1 == samples ? in : next);
}

}  // namespace

DiameterCurve diameter_decay_check(const MapSystem& system, const FinitePartition& xi, const RandomOrbit& orbit,
                                   std::size_t k_max) {
    if (orbit.points.empty()) throw ConfigError("diameter_decay_check: empty orbit");
    if (k_max == 0) throw ConfigError("diameter_decay_check: K must be >= 1");
    if (orbit.noise.size() + 1 < k_max) throw ConfigError("diameter_decay_check: orbit shorter than K");
    CylinderProbe probe{system, xi, {}, {}};
    probe.noise.assign(orbit.noise.begin(), orbit.noise.begin() + static_cast<long>(k_max > 0 ? k_max - 1 : 0));
    const PhasePoint x0 = system.reduce(orbit.points[0]);
    {
        PhasePoint y = x0;
        for (std::size_t j = 0; j < k_max; ++j) {
            probe.labels.push_back(xi.atom(y));
            if (j + 1 < k_max) y = perturbed_step(system, y, probe.noise[j]);
        }
    }
    const Box& dom = system.domain();
    DiameterCurve curve;

    if (system.dim() == 1) {
        const double u0 = x0[0];
        // left: first inside point; right: first outside point, or the face / window edge
        double left = dom.periodic[0] ? u0 - 0.5 : dom.lo[0];
        double right = dom.periodic[0] ? u0 + 0.5 : dom.hi[0];
        for (std::size_t k = 1; k <= k_max; ++k) {
            left = nearest_edge(probe, k, left, u0).second;
            right = nearest_edge(probe, k, right, u0).first;
            const double diam = right - left;
            if (diam <= 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(u0))) {
                curve.truncated = true;
                break;
            }
            curve.diameters.push_back(diam);
        }
        return curve;
    }

    // 2D: bounding boxes of lattice points sharing the itinerary
    constexpr int m = 65;
    std::array<double, 2> lo{dom.lo[0], dom.lo[1]}, hi{dom.hi[0], dom.hi[1]};
    for (std::size_t k = 1; k <= k_max; ++k) {
        const double h0 = (hi[0] - lo[0]) / (m - 1), h1 = (hi[1] - lo[1]) / (m - 1);
        if (std::min(h0, h1) < 1e-13) {
            curve.truncated = true;
            break;
        }
        std::array<double, 2> nlo{x0[0], x0[1]}, nhi{x0[0], x0[1]};
        for (int a = 0; a < m; ++a) {
            for (int b = 0; b < m; ++b) {
                const PhasePoint p(lo[0] + a * h0, lo[1] + b * h1);
                if (!probe.inside(p, k)) continue;
                nlo = {std::min(nlo[0], p[0]), std::min(nlo[1], p[1])};
                nhi = {std::max(nhi[0], p[0]), std::max(nhi[1], p[1])};
            }
        }
        lo = {std::max(lo[0], nlo[0] - h0), std::max(lo[1], nlo[1] - h1)};
        hi = {std::min(hi[0], nhi[0] + h0), std::min(hi[1], nhi[1] + h1)};
        curve.diameters.push_back(std::hypot(hi[0] - lo[0], hi[1] - lo[1]));
    }
    return curve;
}

nlohmann::json to_json(const EntropyReport& report) {
    nlohmann::json j;
    j["N_schedule"] = report.schedule;
    j["estimates"] = report.estimates;
    j["conditional"] = report.conditional;
    j["min"] = report.min;
    j["partition_spec"] = report.partition_spec;
    j["boundary_mass"] = report.boundary_mass;
    return j;
}

}  // namespace ergolab
