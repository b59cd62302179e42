#include "ergolab/phase_maps.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "ergolab/error.hpp"
#include "ergolab/rng.hpp"

namespace ergolab {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kInf = std::numeric_limits<double>::infinity();

Box circle_box() {
    Box b;
    b.dim = 1;
    b.lo = {0.0, 0.0};
    b.hi = {1.0, 1.0};
    b.periodic = {true, false};
    return b;
}

Box torus_box() {
    Box b;
    b.dim = 2;
    b.periodic = {true, true};
    return b;
}

// Singular values of a 2x2 matrix, returned as (max, min).
std::pair<double, double> singular_values(const std::array<std::array<double, 2>, 2>& m) {
    const double frob = m[0][0] * m[0][0] + m[0][1] * m[0][1] + m[1][0] * m[1][0] +
                        m[1][1] * m[1][1];
    const double det = std::abs(m[0][0] * m[1][1] - m[0][1] * m[1][0]);
    const double disc = std::sqrt(std::max(0.0, frob * frob - 4.0 * det * det));
    const double smax = std::sqrt(0.5 * (frob + disc));
    const double smin = smax > 0.0 ? det / smax : 0.0;
    return {smax, smin};
}

}  // namespace

double wrap_unit(double x) {
    double r = x - std::floor(x);
    if (r >= 1.0) r = 0.0;
    return r;
}

double wrap_signed(double x) {
    double r = x - std::floor(x + 0.5);
    if (r >= 0.5) r -= 1.0;
    return r;
}

bool Box::contains(const PhasePoint& p, double slack) const {
    if (p.dim() != dim) return false;
    for (int i = 0; i < dim; ++i) {
        if (!std::isfinite(p[i])) return false;
        if (periodic[i]) continue;
        if (p[i] < lo[i] - slack || p[i] > hi[i] + slack) return false;
    }
    return true;
}

Box Box::inflated(double slack) const {
    Box b = *this;
    for (int i = 0; i < dim; ++i) {
        if (periodic[i]) continue;
        b.lo[i] -= slack;
        b.hi[i] += slack;
    }
    return b;
}

std::string to_string(Family f) {
    switch (f) {
        case Family::expanding_circle: return "expanding_circle";
        case Family::quadratic: return "quadratic";
        case Family::viana: return "viana";
        case Family::torus_class_u: return "torus_class_u";
        case Family::rotation: return "rotation";
        case Family::two_sink: return "two_sink";
    }
    return "unknown";
}

Family family_from_string(const std::string& name) {
    for (Family f : {Family::expanding_circle, Family::quadratic, Family::viana,
                     Family::torus_class_u, Family::rotation, Family::two_sink}) {
        if (to_string(f) == name) return f;
    }
    throw ConfigError("unknown map family '" + name + "'");
}

MapSystem MapSystem::expanding_circle(int d, double amp1, double amp2) {
    if (d < 2) throw ConfigError("expanding_circle requires d >= 2");
    MapParams p;
    p.d = d;
    p.amp1 = amp1;
    p.amp2 = amp2;
    // f' > 0 everywhere: a degree-d covering local diffeomorphism (f' may dip below one)
    if (kTwoPi * std::abs(amp1) + 2.0 * kTwoPi * std::abs(amp2) >= d) {
        throw ConfigError("expanding_circle deformation too large: f' must stay positive");
    }
    return MapSystem(Family::expanding_circle, p, circle_box(), CriticalSet::empty);
}

MapSystem MapSystem::quadratic(double a, double domain_margin) {
    if (!(a >= 0.0 && a <= 2.0)) throw ConfigError("quadratic requires a in [0, 2]");
    if (domain_margin < 0.0) throw ConfigError("domain_margin must be >= 0");
    MapParams p;
    p.a = a;
    p.domain_margin = domain_margin;
    Box b;
    b.dim = 1;
    const double half = std::max(a, 1.0) + domain_margin;
    b.lo = {-half, 0.0};
    b.hi = {half, 0.0};
    b.periodic = {false, false};
    return MapSystem(Family::quadratic, p, b, CriticalSet::point_zero);
}

MapSystem MapSystem::viana(int d, double a0, double alpha, double domain_margin) {
    if (d < 16) throw ConfigError("viana requires d >= 16");
    if (!(a0 > 1.0 && a0 < 2.0)) throw ConfigError("viana requires a0 in (1, 2)");
    if (alpha < 0.0) throw ConfigError("viana requires alpha >= 0");
    if (domain_margin < 0.0) throw ConfigError("domain_margin must be >= 0");
    MapParams p;
    p.d = d;
    p.a0 = a0;
    p.alpha = alpha;
    p.domain_margin = domain_margin;
    Box candidate;
    candidate.dim = 2;
    candidate.lo = {0.0, -2.0};
    candidate.hi = {1.0, 2.0};
    candidate.periodic = {true, false};
    const MapSystem provisional(Family::viana, p, candidate, CriticalSet::fiber_zero);
    InvariantRegionOptions opts;
    opts.grid_n = 129;
    // the padding doubles as the absorbing margin for noise of size domain_margin
    opts.pad = std::max(0.01, domain_margin + 1e-9);
    auto found = detect_invariant_region(provisional, candidate, opts);
    if (found.found && found.margin < domain_margin) found.found = false;
    if (!found.found) {
        throw DomainError("viana: no invariant region S^1 x I with margin " + std::to_string(domain_margin) +
                          " inside S^1 x [-2, 2]");
    }
    return MapSystem(Family::viana, p, found.region, CriticalSet::fiber_zero);
}

MapSystem MapSystem::torus_class_u(int d, double amp) {
    if (d < 2) throw ConfigError("torus_class_u requires d >= 2");
    if (kTwoPi * std::abs(amp) >= d) {
        throw ConfigError("torus_class_u amplitude makes the map singular");
    }
    MapParams p;
    p.d = d;
    p.amp = amp;
    return MapSystem(Family::torus_class_u, p, torus_box(), CriticalSet::empty);
}

MapSystem MapSystem::rotation(double theta) {
    MapParams p;
    p.theta = theta;
    return MapSystem(Family::rotation, p, circle_box(), CriticalSet::empty);
}

MapSystem MapSystem::two_sink(double strength) {
    if (!(strength > 0.0 && 2.0 * kTwoPi * strength < 1.0)) {
        throw ConfigError("two_sink requires 0 < strength < 1/(4 pi)");
    }
    MapParams p;
    p.strength = strength;
    return MapSystem(Family::two_sink, p, circle_box(), CriticalSet::empty);
}

MapSystem MapSystem::from_params(Family family, const MapParams& p) {
    switch (family) {
        case Family::expanding_circle: return expanding_circle(p.d, p.amp1, p.amp2);
        case Family::quadratic: return quadratic(p.a, p.domain_margin);
        case Family::viana: return viana(p.d, p.a0, p.alpha, p.domain_margin);
        case Family::torus_class_u: return torus_class_u(p.d, p.amp);
        case Family::rotation: return rotation(p.theta);
        case Family::two_sink: return two_sink(p.strength);
    }
    throw ConfigError("unknown family");
}

PhasePoint MapSystem::apply(const PhasePoint& p) const {
    const auto& m = params_;
    switch (family_) {
        case Family::expanding_circle:
        case Family::rotation:
        case Family::two_sink:
            return PhasePoint(wrap_unit(lift(p[0])));
        case Family::quadratic:
            return PhasePoint(m.a - p[0] * p[0]);
        case Family::viana: {
            const double s = p[0];
            return PhasePoint(wrap_unit(m.d * s),
                              m.a0 + m.alpha * std::sin(kTwoPi * s) - p[1] * p[1]);
        }
        case Family::torus_class_u: {
            const double bump = m.amp * std::sin(kTwoPi * p[0]);
            return PhasePoint(wrap_unit(m.d * p[0] + bump), wrap_unit(m.d * p[1] + bump));
        }
    }
    return p;
}

DifferentialData MapSystem::differential(const PhasePoint& p) const {
    DifferentialData out;
    const auto& m = params_;
    if (dim() == 1) {
        const double fp = family_ == Family::quadratic ? -2.0 * p[0] : derivative_1d(p[0]);
        out.jacobian = {{{fp, 0.0}, {0.0, 0.0}}};
        if (fp == 0.0) {
            out.singular = true;
            out.log_abs_det = -kInf;
            out.log_inv_norm = kInf;
            out.log_norm = -kInf;
        } else {
            out.log_abs_det = std::log(std::abs(fp));
            out.log_inv_norm = -out.log_abs_det;
            out.log_norm = out.log_abs_det;
        }
        return out;
    }
    if (family_ == Family::viana) {
        out.jacobian = {{{static_cast<double>(m.d), 0.0},
                         {m.alpha * kTwoPi * std::cos(kTwoPi * p[0]), -2.0 * p[1]}}};
    } else {
        const double c = kTwoPi * m.amp * std::cos(kTwoPi * p[0]);
        out.jacobian = {{{m.d + c, 0.0}, {c, static_cast<double>(m.d)}}};
    }
    const auto& j = out.jacobian;
    const double det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    const auto [smax, smin] = singular_values(j);
    out.log_norm = std::log(smax);
    if (det == 0.0) {
        out.singular = true;
        out.log_abs_det = -kInf;
        out.log_inv_norm = kInf;
    } else {
        out.log_abs_det = std::log(std::abs(det));
        out.log_inv_norm = -std::log(smin);
    }
    return out;
}

double MapSystem::critical_distance(const PhasePoint& p) const {
    switch (critical_) {
        case CriticalSet::empty: return kInf;
        case CriticalSet::point_zero: return std::abs(p[0]);
        case CriticalSet::fiber_zero: return std::abs(p[1]);
    }
    return kInf;
}

PhasePoint MapSystem::reduce(const PhasePoint& p) const {
    PhasePoint q = p;
    for (int i = 0; i < dim(); ++i) {
        if (domain_.periodic[i]) q[i] = wrap_unit(q[i]);
    }
    return q;
}

double MapSystem::distance(const PhasePoint& p, const PhasePoint& q) const {
    double sum = 0.0;
    for (int i = 0; i < dim(); ++i) {
        double diff = p[i] - q[i];
        if (domain_.periodic[i]) diff = wrap_signed(diff);
        sum += diff * diff;
    }
    return std::sqrt(sum);
}

bool MapSystem::has_lift() const {
    return family_ == Family::expanding_circle || family_ == Family::rotation ||
           family_ == Family::two_sink;
}

double MapSystem::lift(double x) const {
    const auto& m = params_;
    switch (family_) {
        case Family::expanding_circle:
            return m.d * x + m.amp1 * std::sin(kTwoPi * x) + m.amp2 * std::sin(2.0 * kTwoPi * x);
        case Family::rotation: return x + m.theta;
        case Family::two_sink: return x - m.strength * std::sin(2.0 * kTwoPi * x);
        default: throw UnsupportedSystem(to_string(family_) + " has no circle lift");
    }
}

double MapSystem::derivative_1d(double x) const {
    const auto& m = params_;
    switch (family_) {
        case Family::expanding_circle:
            return m.d + kTwoPi * m.amp1 * std::cos(kTwoPi * x) +
                   2.0 * kTwoPi * m.amp2 * std::cos(2.0 * kTwoPi * x);
        case Family::rotation: return 1.0;
        case Family::two_sink: return 1.0 - 2.0 * kTwoPi * m.strength * std::cos(2.0 * kTwoPi * x);
        case Family::quadratic: return -2.0 * x;
        default: throw UnsupportedSystem(to_string(family_) + " is not one-dimensional");
    }
}

int MapSystem::degree() const {
    switch (family_) {
        case Family::expanding_circle: return params_.d;
        case Family::rotation:
        case Family::two_sink: return 1;
        case Family::torus_class_u: return params_.d * params_.d;
        default: throw UnsupportedSystem(to_string(family_) + " is not a covering map");
    }
}

std::string MapSystem::describe() const { return to_json(*this).dump(); }

PhasePoint eval_map(const MapSystem& system, const PhasePoint& p) {
    if (!system.domain().contains(p, 1e-12)) {
        throw DomainError("eval_map: point outside the phase domain of " +
                          to_string(system.family()));
    }
    return system.apply(p);
}

DifferentialData differential(const MapSystem& system, const PhasePoint& p) {
    if (!system.domain().contains(p, 1e-12)) {
        throw DomainError("differential: point outside the phase domain");
    }
    return system.differential(p);
}

double critical_distance(const MapSystem& system, const PhasePoint& p) {
    return system.critical_distance(p);
}

nlohmann::json to_json(const MapSystem& system) {
    const auto& p = system.params();
    nlohmann::json params;
    switch (system.family()) {
        case Family::expanding_circle:
            params = {{"d", p.d}, {"amp1", p.amp1}, {"amp2", p.amp2}};
            break;
        case Family::quadratic:
            params = {{"a", p.a}, {"domain_margin", p.domain_margin}};
            break;
        case Family::viana:
            params = {{"d", p.d}, {"a0", p.a0}, {"alpha", p.alpha},
                      {"domain_margin", p.domain_margin}};
            break;
        case Family::torus_class_u: params = {{"d", p.d}, {"amp", p.amp}}; break;
        case Family::rotation: params = {{"theta", p.theta}}; break;
        case Family::two_sink: params = {{"strength", p.strength}}; break;
    }
    return {{"family", to_string(system.family())}, {"params", params}};
}

MapSystem system_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("family")) {
        throw ConfigError("system: expected object with key 'family'");
    }
    for (const auto& [key, _] : j.items()) {
        if (key != "family" && key != "params") {
            throw ConfigError("system: unknown key '" + key + "'");
        }
    }
    const Family family = family_from_string(j.at("family").get<std::string>());
    MapParams p;
    std::vector<std::string> allowed;
    switch (family) {
        case Family::expanding_circle: allowed = {"d", "amp1", "amp2"}; break;
        case Family::quadratic: allowed = {"a", "domain_margin"}; break;
        case Family::viana: allowed = {"d", "a0", "alpha", "domain_margin"}; break;
        case Family::torus_class_u: allowed = {"d", "amp"}; break;
        case Family::rotation: allowed = {"theta"}; break;
        case Family::two_sink: allowed = {"strength"}; break;
    }
    const nlohmann::json params = j.value("params", nlohmann::json::object());
    if (!params.is_object()) throw ConfigError("system.params: expected object");
    for (const auto& [key, value] : params.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw ConfigError("system.params: unknown key '" + key + "' for family " +
                              to_string(family));
        }
        if (!value.is_number()) {
            throw ConfigError("system.params." + key + ": expected a number");
        }
    }
    if (family == Family::viana) p.d = 16;
    p.d = params.value("d", p.d);
    p.a = params.value("a", p.a);
    p.a0 = params.value("a0", p.a0);
    p.alpha = params.value("alpha", p.alpha);
    p.amp1 = params.value("amp1", p.amp1);
    p.amp2 = params.value("amp2", p.amp2);
    p.amp = params.value("amp", p.amp);
    p.theta = params.value("theta", p.theta);
    p.strength = params.value("strength", p.strength);
    p.domain_margin = params.value("domain_margin", p.domain_margin);
    return MapSystem::from_params(family, p);
}

// ---------------------------------------------------------------------------

NonflatReport verify_nonflat(const MapSystem& system, double beta, double b_const,
                             std::size_t sample_count, std::uint64_t seed) {
    NonflatReport rep;
    if (system.critical_set() == CriticalSet::empty) {
        rep.applicable = false;
        return rep;
    }
    if (!(b_const > 1.0) || !(beta > 0.0)) throw ConfigError("verify_nonflat: need B > 1, beta > 0");
    const Box& dom = system.domain();
    const int dim = system.dim();
    CounterRng rng = CounterRng::stream(seed, 0x4e4f4e464c4154ULL);
    std::size_t v1 = 0, v2 = 0, v3 = 0;
    std::size_t drawn = 0;
    while (drawn < sample_count) {
        PhasePoint x = dim == 1 ? PhasePoint(0.0) : PhasePoint(0.0, 0.0);
        for (int i = 0; i < dim; ++i) x[i] = rng.uniform(dom.lo[i], dom.hi[i]);
        const double dc = system.critical_distance(x);
        if (!(dc > 0.0)) continue;
        const double r = 0.5 * dc;
        PhasePoint y = x;
        PhasePoint v = x;
        if (dim == 1) {
            y[0] = x[0] + rng.uniform(-r, r);
            v[0] = rng.uniform() < 0.5 ? -1.0 : 1.0;
        } else {
            double u1, u2;
            do {
                u1 = rng.uniform(-1.0, 1.0);
                u2 = rng.uniform(-1.0, 1.0);
            } while (u1 * u1 + u2 * u2 > 1.0);
            y[0] = x[0] + r * u1;
            y[1] = x[1] + r * u2;
            const double ang = kTwoPi * rng.uniform();
            v[0] = std::cos(ang);
            v[1] = std::sin(ang);
        }
        y = system.reduce(y);
        if (!dom.contains(y)) continue;
        const double dxy = system.distance(x, y);
        if (!(dxy > 0.0)) continue;
        ++drawn;

        const auto dx = system.differential(x);
        const auto dy = system.differential(y);
        const auto& jac = dx.jacobian;
        double ratio;
        if (dim == 1) {
            ratio = std::abs(jac[0][0]);
        } else {
            const double w0 = jac[0][0] * v[0] + jac[0][1] * v[1];
            const double w1 = jac[1][0] * v[0] + jac[1][1] * v[1];
            ratio = std::hypot(w0, w1);
        }
        const double db = std::pow(dc, beta);
        const double low = db / ratio;
        const double up = ratio / db;
        rep.tight_s1_lower = std::max(rep.tight_s1_lower, low);
        rep.tight_s1_upper = std::max(rep.tight_s1_upper, up);
        if (low > b_const || up > b_const) ++v1;

        const double lhs2 = std::abs(dx.log_inv_norm - dy.log_inv_norm);
        const double lhs3 = std::abs(dx.log_abs_det - dy.log_abs_det);
        const double t2 = lhs2 * db / dxy;
        const double t3 = lhs3 * db / dxy;
        rep.tight_s2 = std::max(rep.tight_s2, t2);
        rep.tight_s3 = std::max(rep.tight_s3, t3);
        if (t2 > b_const) ++v2;
        if (t3 > b_const) ++v3;
    }
    rep.samples = drawn;
    const double n = static_cast<double>(std::max<std::size_t>(drawn, 1));
    rep.fraction_s1 = static_cast<double>(v1) / n;
    rep.fraction_s2 = static_cast<double>(v2) / n;
    rep.fraction_s3 = static_cast<double>(v3) / n;
    rep.tight_b = std::max({1.0, rep.tight_s1_lower, rep.tight_s1_upper, rep.tight_s2,
                            rep.tight_s3});
    return rep;
}

// ---------------------------------------------------------------------------

namespace {

struct Hull {
    std::array<double, 2> lo{kInf, kInf};
    std::array<double, 2> hi{-kInf, -kInf};
    bool finite = true;
};

std::vector<PhasePoint> region_grid(const Box& box, int n) {
    std::vector<double> axis[2];
    for (int i = 0; i < box.dim; ++i) {
        axis[i].resize(static_cast<std::size_t>(n));
        for (int k = 0; k < n; ++k) {
            axis[i][static_cast<std::size_t>(k)] =
                box.periodic[i] ? box.lo[i] + (k + 0.5) / n * box.width(i)
                                : box.lo[i] + box.width(i) * k / (n - 1);
        }
    }
    std::vector<PhasePoint> pts;
    if (box.dim == 1) {
        for (double x : axis[0]) pts.emplace_back(x);
    } else {
        pts.reserve(axis[0].size() * axis[1].size());
        for (double s : axis[0])
            for (double x : axis[1]) pts.emplace_back(s, x);
    }
    return pts;
}

Hull image_hull(const MapSystem& system, const std::vector<PhasePoint>& pts, int dim,
                const std::array<bool, 2>& periodic) {
    Hull h;
    for (const auto& p : pts) {
        const PhasePoint q = system.apply(p);
        for (int i = 0; i < dim; ++i) {
            if (periodic[i]) continue;
            if (!std::isfinite(q[i])) h.finite = false;
            h.lo[i] = std::min(h.lo[i], q[i]);
            h.hi[i] = std::max(h.hi[i], q[i]);
        }
    }
    return h;
}

void fill_margins(InvariantRegionResult& r, const Box& box, const Hull& h) {
    double worst = kInf;
    for (int i = 0; i < box.dim; ++i) {
        if (box.periodic[i]) {
            r.margin_lower[i] = r.margin_upper[i] = kInf;
            continue;
        }
        r.margin_lower[i] = h.lo[i] - box.lo[i];
        r.margin_upper[i] = box.hi[i] - h.hi[i];
        worst = std::min({worst, r.margin_lower[i], r.margin_upper[i]});
    }
    r.margin = worst;
}

bool margins_ok(const InvariantRegionResult& r, bool strict) {
    return strict ? r.margin > 0.0 : r.margin >= 0.0;
}

}  // namespace

InvariantRegionResult detect_invariant_region(const MapSystem& system, const Box& candidate,
                                              const InvariantRegionOptions& opt) {
    if (opt.grid_n < 64) throw ConfigError("detect_invariant_region: grid_n must be >= 64");
    if (candidate.dim != system.dim()) throw ConfigError("detect_invariant_region: dimension mismatch");
    const int dim = candidate.dim;
    InvariantRegionResult res;
    res.region = candidate;

    bool any_interval = false;
    for (int i = 0; i < dim; ++i) any_interval = any_interval || !candidate.periodic[i];
    if (!any_interval) {
        res.found = true;
        res.margin = kInf;
        res.margin_lower = res.margin_upper = {kInf, kInf};
        return res;
    }

    Hull h = image_hull(system, region_grid(candidate, opt.grid_n), dim, candidate.periodic);
    fill_margins(res, candidate, h);
    if (h.finite && margins_ok(res, opt.strict)) {
        res.found = true;
        return res;
    }
    double worst = res.margin;

    // Hull of the attractor seen by forward orbits of grid points that stay
    // in the candidate, then iterate R -> hull(f(R)) + pad to a fixed point.
    std::vector<PhasePoint> pts = region_grid(candidate, std::min(opt.grid_n, 65));
    Hull attractor;
    constexpr int kForward = 96;
    constexpr int kRecord = 16;
    for (auto p : pts) {
        bool alive = true;
        for (int it = 0; it < kForward && alive; ++it) {
            p = system.apply(p);
            if (!candidate.contains(p)) alive = false;
            if (alive && it >= kForward - kRecord) {
                for (int i = 0; i < dim; ++i) {
                    attractor.lo[i] = std::min(attractor.lo[i], p[i]);
                    attractor.hi[i] = std::max(attractor.hi[i], p[i]);
                }
            }
        }
    }
    Box region = candidate;
    bool have_seed = false;
    for (int i = 0; i < dim; ++i) {
        if (candidate.periodic[i]) continue;
        if (attractor.lo[i] <= attractor.hi[i]) {
            region.lo[i] = attractor.lo[i] - opt.pad;
            region.hi[i] = attractor.hi[i] + opt.pad;
            have_seed = true;
        }
    }
    if (!have_seed) {
        res.found = false;
        res.worst_violation = worst;
        return res;
    }

    for (int it = 0; it < opt.max_iterations; ++it) {
        res.iterations = it + 1;
        bool inside = true;
        for (int i = 0; i < dim; ++i) {
            if (candidate.periodic[i]) continue;
            if (region.lo[i] < candidate.lo[i] || region.hi[i] > candidate.hi[i]) inside = false;
        }
        if (!inside) break;
        const Hull img = image_hull(system, region_grid(region, opt.grid_n), dim, candidate.periodic);
        if (!img.finite) break;
        Box next = region;
        double change = 0.0;
        for (int i = 0; i < dim; ++i) {
            if (candidate.periodic[i]) continue;
            next.lo[i] = img.lo[i] - opt.pad;
            next.hi[i] = img.hi[i] + opt.pad;
            change = std::max({change, std::abs(next.lo[i] - region.lo[i]),
                               std::abs(next.hi[i] - region.hi[i])});
        }
        InvariantRegionResult trial;
        trial.region = region;
        fill_margins(trial, region, img);
        worst = std::max(worst, std::min(trial.margin, 0.0));
        if (change < 1e-12 || (margins_ok(trial, opt.strict) && change < 1e-9)) {
            trial.found = margins_ok(trial, opt.strict);
            trial.iterations = res.iterations;
            if (trial.found) return trial;
            break;
        }
        region = next;
    }
    // Distance by which the best attempt leaves the candidate or misses invariance.
    double outside = 0.0;
    for (int i = 0; i < dim; ++i) {
        if (candidate.periodic[i]) continue;
        outside = std::min({outside, region.lo[i] - candidate.lo[i], candidate.hi[i] - region.hi[i]});
    }
    res.found = false;
    res.worst_violation = std::min(worst, outside);
    return res;
}

// ---------------------------------------------------------------------------

bool ClassUReport::all_conditions_pass() const {
    return std::all_of(conditions.begin(), conditions.end(),
                       [](const ConditionResult& c) { return c.pass; });
}

namespace {

bool in_ball(const MapSystem& system, const PhasePoint& x, const Ball& b) {
    return system.distance(x, b.center) <= b.radius;
}

// Monotone with total image length below one along a path of sample points.
bool path_injective(const std::vector<double>& values, bool periodic_image) {
    if (values.size() < 2) return true;
    int sign = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        const double step = values[i] - values[i - 1];
        const int s = step > 0.0 ? 1 : (step < 0.0 ? -1 : 0);
        if (s == 0) return false;
        if (sign == 0) sign = s;
        if (s != sign) return false;
    }
    return !periodic_image || std::abs(values.back() - values.front()) < 1.0;
}

// Lift of the first coordinate extended to the real line.
double extended_lift(const MapSystem& system, double x) {
    const double fl = std::floor(x);
    return system.lift(x - fl) + system.degree() * fl;
}

bool ball_injective(const MapSystem& system, const Ball& ball) {
    constexpr int m = 256;
    const auto& dom = system.domain();
    if (system.dim() == 1) {
        std::vector<double> vals;
        for (int k = 0; k < m; ++k) {
            const double x = ball.center[0] - ball.radius + (k + 0.5) / m * 2.0 * ball.radius;
            if (dom.periodic[0]) {
                vals.push_back(extended_lift(system, x));
            } else {
                vals.push_back(system.apply(PhasePoint(x))[0]);
            }
        }
        return path_injective(vals, dom.periodic[0]);
    }
    // Both two-dimensional families are fibred, (s, x) -> (g(s), h(s, x)):
    // check g on the projection of the ball and h(s, .) on each section.
    const double c0 = ball.center[0];
    const double c1 = ball.center[1];
    const double r = ball.radius;
    std::vector<double> g;
    for (int k = 0; k < m; ++k) {
        const double s = c0 - r + (k + 0.5) / m * 2.0 * r;
        if (system.family() == Family::viana) {
            g.push_back(system.params().d * s);
        } else {
            g.push_back(system.params().d * s + system.params().amp * std::sin(kTwoPi * s));
        }
    }
    if (!path_injective(g, true)) return false;
    for (int k = 0; k < 32; ++k) {
        const double s = c0 - r + (k + 0.5) / 32 * 2.0 * r;
        const double half = std::sqrt(std::max(0.0, r * r - (s - c0) * (s - c0)));
        std::vector<double> h;
        for (int l = 0; l < 64; ++l) {
            const double x = c1 - half + (l + 0.5) / 64 * 2.0 * half;
            if (system.family() == Family::viana) {
                h.push_back(-x * x);
            } else {
                h.push_back(system.params().d * x);
            }
        }
        if (!path_injective(h, dom.periodic[1])) return false;
    }
    return true;
}

}  // namespace

ClassUReport class_u_check(const MapSystem& system, const std::vector<Ball>& covering,
                           const ClassUConstants& k, int grid_n) {
    if (static_cast<int>(covering.size()) != k.p + k.q) {
        throw ConfigError("class_u_check: covering must contain p + q balls");
    }
    if (grid_n < 16) throw ConfigError("class_u_check: grid_n too small");
    const Box& dom = system.domain();
    const int n = system.dim() == 1 ? grid_n : std::min(grid_n, 256);
    Box grid_box = dom;
    std::vector<PhasePoint> pts;
    {
        // cell centres of an n or n x n grid
        if (system.dim() == 1) {
            for (int i = 0; i < n; ++i) pts.emplace_back(dom.lo[0] + (i + 0.5) / n * dom.width(0));
        } else {
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    pts.emplace_back(dom.lo[0] + (i + 0.5) / n * dom.width(0),
                                     dom.lo[1] + (j + 0.5) / n * dom.width(1));
        }
    }
    (void)grid_box;

    ClassUReport rep;
    std::size_t uncovered = 0;
    for (const auto& x : pts) {
        bool hit = false;
        for (const auto& b : covering) hit = hit || in_ball(system, x, b);
        if (!hit) ++uncovered;
    }
    rep.covers = uncovered == 0;
    if (!rep.covers) {
        throw ConfigError("class_u_check: covering misses " + std::to_string(uncovered) +
                          " grid points");
    }
    rep.injective = true;
    for (const auto& b : covering) rep.injective = rep.injective && ball_injective(system, b);

    const double expand_bound = 1.0 / (1.0 + k.delta1);
    double m1 = kInf, m2 = kInf, m3 = kInf;
    bool v_in_w = true;
    double inf_norm_outside_w = kInf;
    double sup_norm_v = -kInf, inf_norm_v = kInf;
    for (const auto& x : pts) {
        const auto dd = system.differential(x);
        const double inv_norm = std::exp(dd.log_inv_norm);
        bool in_p = false, in_w = false;
        for (int i = 0; i < k.p; ++i) in_p = in_p || in_ball(system, x, covering[static_cast<std::size_t>(i)]);
        for (int i = k.p; i < k.p + k.q; ++i)
            in_w = in_w || in_ball(system, x, covering[static_cast<std::size_t>(i)]);
        if (in_p) m1 = std::min(m1, expand_bound - inv_norm);
        m2 = std::min(m2, 1.0 + k.delta0 - inv_norm);
        m3 = std::min(m3, std::exp(dd.log_abs_det) - k.sigma1);
        const bool in_v = inv_norm >= expand_bound;
        if (in_v) {
            ++rep.v_points;
            if (!in_w) v_in_w = false;
            sup_norm_v = std::max(sup_norm_v, dd.log_norm);
            inf_norm_v = std::min(inf_norm_v, dd.log_norm);
        }
        if (!in_w) inf_norm_outside_w = std::min(inf_norm_outside_w, dd.log_norm);
    }
    rep.conditions[0] = {m1 >= 0.0, m1};
    rep.conditions[1] = {m2 >= 0.0, m2};
    rep.conditions[2] = {m3 >= 0.0, m3};
    // W is taken as B_{p+1} u ... u B_{p+q}, the largest admissible choice.
    const double gap = rep.v_points == 0 ? kInf : inf_norm_outside_w - sup_norm_v;
    rep.conditions[3] = {v_in_w && gap > 0.0, v_in_w ? gap : -kInf};
    const double osc = rep.v_points == 0 ? 0.0 : sup_norm_v - inf_norm_v;
    rep.conditions[4] = {osc < k.beta, k.beta - osc};
    rep.sigma_exceeds_p = k.sigma1 > k.p;
    return rep;
}

}  // namespace ergolab
