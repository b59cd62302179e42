#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "ergolab/entropy.hpp"
#include "ergolab/error.hpp"
#include "ergolab/expansion.hpp"
#include "ergolab/experiments.hpp"
#include "ergolab/measures.hpp"
#include "ergolab/oracles.hpp"
#include "ergolab/parallel.hpp"
#include "ergolab/transfer.hpp"

namespace ergolab::cli {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

constexpr const char* kVersion = "1.0.0";

std::string fmt17(double v) {
    if (!std::isfinite(v)) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

// key -> first line where it is defined, for line-anchored messages
struct SourceMap {
    std::string path;
    std::map<std::string, int> lines;
    std::vector<std::string> text;

    int locate(const std::string& message) const {
        // the offending key or value is the last quoted token of the message
        const auto e = message.rfind('\'');
        if (e == std::string::npos || e == 0) return 0;
        const auto b = message.rfind('\'', e - 1);
        if (b == std::string::npos) return 0;
        const std::string token = message.substr(b + 1, e - b - 1);
        if (const auto it = lines.find(token); it != lines.end()) return it->second;
        if (token.empty()) return 0;
        for (std::size_t n = 0; n < text.size(); ++n) {
            for (auto p = text[n].find(token); p != std::string::npos; p = text[n].find(token, p + 1)) {
                const auto word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };
                const bool left = p == 0 || !word(text[n][p - 1]);
                const bool right = p + token.size() >= text[n].size() || !word(text[n][p + token.size()]);
                if (left && right) return static_cast<int>(n + 1);
            }
        }
        return 0;
    }
};

SourceMap g_source;

class LineError : public ConfigError {
public:
    LineError(int line, const std::string& what) : ConfigError(what), line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

bool looks_like_json(const std::string& path, const std::string& text) {
    if (fs::path(path).extension() == ".json") return true;
    const auto b = text.find_first_not_of(" \t\r\n");
    return b != std::string::npos && text[b] == '{';
}

json parse_json_text(const std::string& text, SourceMap& src) {
    json tree;
    try {
        tree = json::parse(text);
    } catch (const json::parse_error& e) {
        const auto upto = std::min<std::size_t>(e.byte, text.size());
        const int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(upto), '\n'));
        throw LineError(line, std::string("malformed JSON: ") + e.what());
    }
    std::istringstream is(text);
    std::string l;
    for (int n = 1; std::getline(is, l); ++n) {
        for (std::size_t p = l.find('"'); p != std::string::npos;) {
            const auto q = l.find('"', p + 1);
            if (q == std::string::npos) break;
            const auto after = l.find_first_not_of(" \t", q + 1);
            if (after != std::string::npos && l[after] == ':') src.lines.emplace(l.substr(p + 1, q - p - 1), n);
            p = l.find('"', q + 1);
        }
    }
    return tree;
}

// [a.b] sections, key = value lines; values are JSON literals or bare strings
json parse_ini_text(const std::string& text, SourceMap& src) {
    json tree = json::object();
    json* section = &tree;
    std::istringstream is(text);
    std::string raw;
    for (int n = 1; std::getline(is, raw); ++n) {
        const std::string l = trim(raw);
        if (l.empty() || l[0] == '#' || l[0] == ';') continue;
        if (l.front() == '[') {
            if (l.back() != ']') throw LineError(n, "malformed section header");
            const std::string name = trim(l.substr(1, l.size() - 2));
            if (name.empty()) throw LineError(n, "empty section name");
            section = &tree;
            std::istringstream parts(name);
            std::string part;
            while (std::getline(parts, part, '.')) {
                part = trim(part);
                if (part.empty()) throw LineError(n, "malformed section name '" + name + "'");
                json& child = (*section)[part];
                if (child.is_null()) child = json::object();
                if (!child.is_object()) throw LineError(n, "section '" + part + "' clashes with a key");
                src.lines.emplace(part, n);
                section = &child;
            }
            continue;
        }
        const auto eq = l.find('=');
        if (eq == std::string::npos) throw LineError(n, "expected 'key = value'");
        const std::string key = trim(l.substr(0, eq));
        const std::string value = trim(l.substr(eq + 1));
        if (key.empty()) throw LineError(n, "missing key before '='");
        if (section->contains(key)) throw LineError(n, "duplicate key '" + key + "'");
        json v;
        try {
            v = json::parse(value);
        } catch (const json::parse_error&) {
            if (!value.empty() && (value[0] == '[' || value[0] == '{' || value[0] == '"')) {
                throw LineError(n, "malformed value for '" + key + "'");
            }
            v = value;
        }
        (*section)[key] = v;
        src.lines.emplace(key, n);
    }
    return tree;
}

json load_with_source(const std::string& path, SourceMap& src) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    src.path = path;
    std::istringstream lines(text);
    for (std::string l; std::getline(lines, l);) src.text.push_back(l);
    return looks_like_json(path, text) ? parse_json_text(text, src) : parse_ini_text(text, src);
}

// ---------------------------------------------------------------------------
// Tracked config sections: every read records the resolved value, leftovers are unknown keys

class Section {
public:
    Section(const json& raw, std::string path) : raw_(raw.is_null() ? json::object() : raw), path_(std::move(path)) {
        if (!raw_.is_object()) throw ConfigError(path_ + ": expected a section, got '" + path_ + "'");
    }

    template <class T>
    T get(const std::string& key, T fallback) {
        T v = fallback;
        if (raw_.contains(key)) v = convert<T>(key);
        used_.insert(key);
        resolved_[key] = v;
        return v;
    }

    template <class T>
    T require(const std::string& key) {
        if (!raw_.contains(key)) throw ConfigError(path_ + ": missing required key '" + key + "'");
        return get<T>(key, T{});
    }

    bool has(const std::string& key) const { return raw_.contains(key); }

    /// Raw sub-tree; the resolved value is set by the caller.
    json take(const std::string& key) {
        used_.insert(key);
        return raw_.contains(key) ? raw_.at(key) : json();
    }

    void resolve(const std::string& key, json v) {
        used_.insert(key);
        resolved_[key] = std::move(v);
    }

    json finish() const {
        for (const auto& [k, _] : raw_.items()) {
            if (!used_.count(k)) throw ConfigError(path_ + ": unknown key '" + k + "'");
        }
        return resolved_;
    }

private:
    template <class T>
    T convert(const std::string& key) const {
        const json& v = raw_.at(key);
        if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
            if (!v.is_number_unsigned() && !(v.is_number_float() && v.get<double>() >= 0 &&
                                             std::floor(v.get<double>()) == v.get<double>())) {
                throw ConfigError(path_ + "." + key + ": expected a non-negative integer for '" + key + "'");
            }
        }
        try {
            return v.get<T>();
        } catch (const json::exception&) {
            throw ConfigError(path_ + "." + key + ": wrong type for '" + key + "'");
        }
    }

    json raw_;
    std::string path_;
    std::set<std::string> used_;
    json resolved_ = json::object();
};

PhasePoint point_from(const std::vector<double>& v, int dim, const std::string& what) {
    if (static_cast<int>(v.size()) != dim) throw ConfigError(what + ": point dimension does not match the system");
    return dim == 1 ? PhasePoint(v[0]) : PhasePoint(v[0], v[1]);
}

json point_json(const PhasePoint& p) {
    json c = json::array();
    for (int i = 0; i < p.dim(); ++i) c.push_back(p[i]);
    return c;
}

bool is_linear_circle(const MapSystem& s) {
    return s.family() == Family::expanding_circle && s.params().amp1 == 0.0 && s.params().amp2 == 0.0;
}

PhasePoint seeded_start(const MapSystem& sys, std::uint64_t seed, std::uint64_t index) {
    CounterRng rng = CounterRng::stream(derive_key(seed, 0x434c49), index);
    PhasePoint x0 = sys.dim() == 1 ? PhasePoint(0.0) : PhasePoint(0.0, 0.0);
    for (int a = 0; a < sys.dim(); ++a) x0[a] = rng.uniform(sys.domain().lo[a], sys.domain().hi[a]);
    return x0;
}

RandomOrbit deterministic_or_noisy_orbit(const MapSystem& sys, const NoiseModel& model, const PhasePoint& x0,
                                         std::uint64_t seed, std::size_t n) {
    return model.deterministic() && is_linear_circle(sys) ? generic_linear_orbit(sys, x0, seed, n)
                                                          : random_orbit(sys, model, x0, seed, n);
}

// partition: "halves" | "branches" | {"kind": "arcs", "count": d} | {"kind": "intervals", "axis": a, "breaks": [...]}
FinitePartition partition_from(const json& spec, const MapSystem& sys, json& resolved) {
    if (spec.is_null() || spec == "halves") {
        resolved = {{"kind", "halves"}};
        return FinitePartition::halves(sys.domain());
    }
    if (spec == "branches") {
        resolved = {{"kind", "branches"}};
        return branch_partition(sys);
    }
    Section s(spec, "partition");
    const auto kind = s.require<std::string>("kind");
    FinitePartition xi = FinitePartition::halves(sys.domain());
    if (kind == "halves") {
    } else if (kind == "branches") {
        xi = branch_partition(sys);
    } else if (kind == "arcs") {
        xi = FinitePartition::equal_arcs(sys.domain(), s.get<int>("count", 2));
    } else if (kind == "intervals") {
        xi = FinitePartition::intervals(sys.domain(), s.get<int>("axis", 0),
                                        s.require<std::vector<double>>("breaks"));
    } else {
        throw ConfigError("partition: unknown kind '" + kind + "'");
    }
    resolved = s.finish();
    return xi;
}

struct Context {
    std::string command;
    std::uint64_t seed = 0;
    unsigned workers = 1;
    json raw;
    json resolved = json::object();
};

struct Outcome {
    json results = json::object();
    std::map<std::string, bool> verdicts;
    std::string csv;
};

class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header) {
        for (std::size_t i = 0; i < header.size(); ++i) os_ << (i ? "," : "") << header[i];
        os_ << "\r\n";
    }
    template <class... Ts>
    void row(const Ts&... cells) {
        bool first = true;
        ((os_ << (first ? "" : ",") << cell(cells), first = false), ...);
        os_ << "\r\n";
    }
    std::string str() const { return os_.str(); }

private:
    static std::string cell(double v) { return fmt17(v); }
    static std::string cell(std::size_t v) { return std::to_string(v); }
    static std::string cell(int v) { return std::to_string(v); }
    static std::string cell(bool v) { return v ? "true" : "false"; }
    static std::string cell(const std::string& v) {
        if (v.find_first_of(",\"\r\n") == std::string::npos) return v;
        std::string out = "\"";
        for (char c : v) out += c == '"' ? std::string("\"\"") : std::string(1, c);
        return out + "\"";
    }
    std::ostringstream os_;
};

MapSystem system_of(Context& ctx) {
    if (!ctx.raw.contains("system")) throw ConfigError("config: missing required key 'system'");
    MapSystem sys = system_from_json(ctx.raw.at("system"));
    ctx.resolved["system"] = to_json(sys);
    return sys;
}

NoiseModel noise_of(Context& ctx, const MapSystem& sys) {
    Section s(ctx.raw.value("noise", json::object()), "noise");
    const auto eps = s.get<double>("epsilon", 0.0);
    ctx.resolved["noise"] = s.finish();
    return NoiseModel::for_system(sys, eps);
}

Section estimator_of(const Context& ctx) { return Section(ctx.raw.value("estimator", json::object()), "estimator"); }

// optional scalar oracle check: |value - oracle| < tolerance
void oracle_verdict(Section& est, Outcome& out, double value, double default_tol) {
    const auto name = est.get<std::string>("oracle", "");
    const auto tol = est.get<double>("tolerance", default_tol);
    if (name.empty()) return;
    const double target = oracle_value(name);
    out.results["oracle_value"] = target;
    out.results["oracle_error"] = value - target;
    out.verdicts["oracle"] = std::abs(value - target) < tol;
}

// ---------------------------------------------------------------------------
// Commands

Outcome cmd_orbit(Context& ctx) {
    const MapSystem sys = system_of(ctx);
    const NoiseModel model = noise_of(ctx, sys);
    Section est = estimator_of(ctx);
    const auto n = est.get<std::size_t>("n", 1000);
    const PhasePoint x0 = est.has("x0") ? point_from(est.get<std::vector<double>>("x0", {}), sys.dim(), "estimator.x0")
                                        : seeded_start(sys, ctx.seed, 0);
    est.resolve("x0", point_json(x0));
    ctx.resolved["estimator"] = est.finish();
    const RandomOrbit orb = deterministic_or_noisy_orbit(sys, model, x0, ctx.seed, n);
    Outcome out;
    out.results["steps"] = orb.steps();
    out.results["escaped"] = orb.escaped;
    out.results["final"] = point_json(orb.points.back());
    out.results["expansion"] = to_json(expansion_average(orb));
    out.verdicts["no_escape"] = !orb.escaped;
    std::ostringstream os;
    write_orbit_csv(os, orb);
    out.csv = os.str();
    return out;
}

Outcome cmd_lyapunov(Context& ctx) {
    const MapSystem sys = system_of(ctx);
    const NoiseModel model = noise_of(ctx, sys);
    Section est = estimator_of(ctx);
    EnsembleSpec spec;
    spec.orbits = est.get<std::size_t>("orbits", 5);
    spec.length = est.get<std::size_t>("length", 1000000);
    spec.tail_fraction = est.get<double>("tail_fraction", 0.5);
    spec.deltas = est.get<std::vector<double>>("deltas", {});
    spec.seed = ctx.seed;
    spec.workers = ctx.workers;
    if (spec.orbits == 0 || spec.length == 0) throw ConfigError("estimator: 'orbits' and 'length' must be positive");
    Outcome out;
    const auto rows = orbit_ensemble(sys, model, spec);
    json per = json::array();
    std::vector<ExpansionReport> reports;
    double sum = 0.0, worst = -std::numeric_limits<double>::infinity();
    std::size_t escaped = 0;
    CsvWriter csv({"orbit", "expansion_avg", "tail_max", "skipped", "escaped"});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        per.push_back(to_json(r.expansion));
        reports.push_back(r.expansion);
        sum += r.expansion.expansion_avg;
        worst = std::max(worst, r.expansion.expansion_avg);
        escaped += r.escaped ? 1 : 0;
        csv.row(i, r.expansion.expansion_avg, r.expansion.tail_max, r.expansion.skipped, r.escaped);
    }
    const double avg = sum / static_cast<double>(rows.size());
    out.results["orbits"] = per;
    out.results["expansion_avg"] = avg;
    out.results["lyapunov_exponent"] = -avg;
    out.results["exponent_bound"] = estimate_exponent_bound(reports);
    out.results["escaped"] = escaped;
    out.verdicts["non_uniform_expansion"] = worst < 0.0 && escaped == 0;
    const auto name = est.get<std::string>("oracle", "");
    const auto tol = est.get<double>("tolerance", 5e-3);
    if (!name.empty()) {
        const double target = oracle_value(name);
        bool ok = true;
        for (const auto& r : rows) ok = ok && std::abs(-r.expansion.expansion_avg - target) < tol;
        out.results["oracle_value"] = target;
        out.verdicts["oracle"] = ok;
    }
    ctx.resolved["estimator"] = est.finish();
    out.csv = csv.str();
    return out;
}

Outcome cmd_hyptimes(Context& ctx) {
    const MapSystem sys = system_of(ctx);
    const NoiseModel model = noise_of(ctx, sys);
    Section est = estimator_of(ctx);
    const auto orbits = est.get<std::size_t>("orbits", 1);
    const auto length = est.get<std::size_t>("length", 10000);
    const auto alpha = est.get<double>("alpha", 0.5);
    const auto delta = est.get<double>("delta", 0.1);
    const auto b = est.get<double>("b", 1.0);
    ContractionOptions co;
    co.probe_radius = est.get<double>("probe_radius", co.probe_radius);
    co.max_times = est.get<std::size_t>("max_probed_times", co.max_times);
    co.seed = ctx.seed;
    ctx.resolved["estimator"] = est.finish();
    std::vector<HyperbolicTimeRecord> recs(orbits);
    std::vector<ContractionReport> checks(orbits);
    parallel_for(orbits, ctx.workers, [&](std::size_t i) {
        const RandomOrbit orb =
            deterministic_or_noisy_orbit(sys, model, seeded_start(sys, ctx.seed, i), derive_key(ctx.seed, i), length);
        recs[i] = hyperbolic_times(orb, alpha, delta, b);
        checks[i] = contraction_check(sys, orb, recs[i], co);
    });
    Outcome out;
    CsvWriter csv({"orbit", "times", "density", "first_time", "checked", "violations"});
    json per = json::array();
    std::size_t violations = 0;
    bool all_positive = true;
    for (std::size_t i = 0; i < orbits; ++i) {
        const auto& r = recs[i];
        const auto& c = checks[i];
        violations += c.violations;
        all_positive = all_positive && r.density() > 0.0;
        per.push_back({{"times", r.times.size()},
                       {"density", r.density()},
                       {"first_time", r.times.empty() ? json(nullptr) : json(r.times.front())},
                       {"contraction", {{"times_checked", c.times_checked},
                                        {"comparisons", c.comparisons},
                                        {"violations", c.violations},
                                        {"worst_ratio", c.worst_ratio}}}});
        csv.row(i, r.times.size(), r.density(), r.times.empty() ? std::string() : std::to_string(r.times.front()),
                c.times_checked, c.violations);
    }
    out.results["orbits"] = per;
    out.results["violations"] = violations;
    out.verdicts["positive_density"] = all_positive;
    out.verdicts["backward_contraction"] = violations == 0;
    out.csv = csv.str();
    return out;
}

Grid grid_of(Section& est, const MapSystem& sys, std::size_t default_cells) {
    const auto c0 = est.get<std::size_t>("cells", default_cells);
    if (sys.dim() == 1) return Grid::for_system(sys, c0);
    return Grid::for_system(sys, c0, est.get<std::size_t>("cells1", c0));
}

StationaryOptions stationary_of(Section& est, unsigned workers) {
    StationaryOptions o;
    o.tolerance = est.get<double>("stationary_tolerance", o.tolerance);
    o.max_iterations = est.get<std::size_t>("max_iterations", o.max_iterations);
    o.workers = workers;
    return o;
}

Outcome cmd_stationary(Context& ctx) {
    const MapSystem sys = system_of(ctx);
    const NoiseModel model = noise_of(ctx, sys);
    Section est = estimator_of(ctx);
    const Grid grid = grid_of(est, sys, 1024);
    const auto subsamples = est.get<std::size_t>("subsamples", 64);
    const auto oracle = est.get<std::string>("oracle", "");
    const auto threshold = est.get<double>("threshold", 0.01);
    const StationaryOptions so = stationary_of(est, ctx.workers);
    ctx.resolved["estimator"] = est.finish();
    if (!oracle.empty() && !is_measure_oracle(oracle)) throw ConfigError("estimator.oracle: not a measure oracle '" + oracle + "'");
    const TransferMatrix mat = model.deterministic() ? ulam_matrix(sys, grid, subsamples, ctx.seed, ctx.workers)
                                                     : noisy_ulam(sys, model, grid, subsamples, ctx.seed, ctx.workers);
    const auto st = stationary_density(mat, so);
    Outcome out;
    std::optional<EmpiricalMeasure> ref;
    if (!oracle.empty()) ref = oracle_measure(oracle, grid);
    out.results = measure_summary(st.measure, ref ? &*ref : nullptr, oracle);
    out.results["iterations"] = st.iterations;
    out.results["residual"] = st.residual;
    out.results["sink_mass"] = mat.sink_mass();
    if (ref) out.verdicts["w1_to_oracle"] = out.results.at("w1_to_oracle").get<double>() < threshold;
    std::ostringstream os;
    write_measure_csv(os, st.measure);
    out.csv = os.str();
    return out;
}

Potential potential_of(Section& est, const MapSystem& sys) {
    const auto kind = potential_kind_from_string(est.get<std::string>("potential", "zero"));
    switch (kind) {
        case PotentialKind::zero: return potential_zero();
        case PotentialKind::geometric: return potential_geometric(sys);
        case PotentialKind::constant: return potential_constant(est.get<double>("constant", 0.0));
    }
    return potential_zero();
}

Outcome cmd_pressure(Context& ctx) {
    const MapSystem sys = system_of(ctx);
    Section est = estimator_of(ctx);
    const Potential phi = potential_of(est, sys);
    const auto cells = est.get<std::size_t>("cells", 1024);
    RuelleOptions ro;
    ro.tolerance = est.get<double>("ruelle_tolerance", ro.tolerance);
    ro.max_iterations = est.get<std::size_t>("max_iterations", ro.max_iterations);
    const auto eq = equilibrium_state(sys, phi, Grid::circle(cells), ro);
    Outcome out;
    out.results["pressure"] = eq.pressure;
    out.results["entropy"] = eq.entropy;
    out.results["phi_integral"] = eq.phi_integral;
    out.results["equilibrium"] = measure_summary(eq.measure);
    oracle_verdict(est, out, eq.pressure, 1e-6);
    ctx.resolved["estimator"] = est.finish();
    std::ostringstream os;
    write_measure_csv(os, eq.measure);
    out.csv = os.str();
    return out;
}

Outcome cmd_entropy(Context& ctx) {
    const MapSystem sys = system_of(ctx);
    const NoiseModel model = noise_of(ctx, sys);
    Section est = estimator_of(ctx);
    json part_resolved;
    const FinitePartition xi = partition_from(est.take("partition"), sys, part_resolved);
    est.resolve("partition", part_resolved);
    ItineraryOptions it;
    it.points_per_cell = est.get<std::size_t>("points_per_cell", it.points_per_cell);
    it.max_itineraries = est.get<std::size_t>("max_itineraries", it.max_itineraries);
    it.workers = ctx.workers;
    const auto schedule = est.get<std::vector<std::size_t>>("schedule", {4, 8, 12, 16, 20});
    const auto source = est.get<std::string>("source", model.deterministic() ? "ulam" : "stationary");
    Outcome out;
    CsvWriter csv({"N", "estimate", "conditional"});
    double h = 0.0;
    std::optional<EmpiricalMeasure> mu;
    if (source == "orbit") {
        const auto orbits = est.get<std::size_t>("orbits", 1);
        const auto length = est.get<std::size_t>("length", 100000);
        std::vector<RandomOrbit> orbs(orbits);
        parallel_for(orbits, ctx.workers, [&](std::size_t i) {
            orbs[i] = deterministic_or_noisy_orbit(sys, model, seeded_start(sys, ctx.seed, i), derive_key(ctx.seed, i),
                                                   length);
        });
        const auto rep = metric_entropy_estimate(orbs, xi, schedule, it);
        out.results["metric"] = to_json(rep);
        for (std::size_t k = 0; k < schedule.size(); ++k) csv.row(schedule[k], rep.estimates[k], rep.conditional[k]);
        h = rep.min;
    } else {
        const Grid grid = grid_of(est, sys, 1024);
        const auto subsamples = est.get<std::size_t>("subsamples", 64);
        const StationaryOptions so = stationary_of(est, ctx.workers);
        if (source == "ulam") {
            mu = stationary_density(ulam_matrix(sys, grid, subsamples, ctx.seed, ctx.workers), so).measure;
        } else if (source == "stationary") {
            mu = stationary_density(noisy_ulam(sys, model, grid, subsamples, ctx.seed, ctx.workers), so).measure;
        } else if (source == "acip") {
            mu = equilibrium_state(sys, potential_geometric(sys), grid).measure;
        } else if (source == "uniform") {
            mu = EmpiricalMeasure::uniform(grid);
        } else if (source == "oracle") {
            mu = oracle_measure(est.require<std::string>("measure_oracle"), grid);
        } else {
            throw ConfigError("estimator.source: expected orbit, ulam, stationary, acip, uniform or oracle, got '" +
                              source + "'");
        }
        if (model.deterministic()) {
            const auto rep = metric_entropy_estimate(sys, *mu, xi, schedule, it);
            out.results["metric"] = to_json(rep);
            for (std::size_t k = 0; k < schedule.size(); ++k) csv.row(schedule[k], rep.estimates[k], rep.conditional[k]);
            h = rep.min;
        } else {
            const auto n = est.get<std::size_t>("n", 12);
            const auto omegas = est.get<std::size_t>("omega_samples", 8);
            h = random_entropy_estimate(sys, model, *mu, xi, n, omegas, ctx.seed, it);
            out.results["random_entropy"] = h;
            csv.row(n, h, std::string());
        }
        const auto fr = entropy_formula_residual(h, sys, *mu);
        out.results["formula"] = {{"integral", fr.integral}, {"residual", fr.residual}, {"refined_cells", fr.refined_cells}};
        const auto ftol = est.get<double>("formula_tolerance", std::numeric_limits<double>::quiet_NaN());
        if (std::isfinite(ftol)) out.verdicts["entropy_formula"] = std::abs(fr.residual) < ftol;
        else est.resolve("formula_tolerance", nullptr);
    }
    out.results["entropy"] = h;
    oracle_verdict(est, out, h, 0.02);
    ctx.resolved["estimator"] = est.finish();
    out.csv = csv.str();
    return out;
}

// seed and worker count of a sweep come from the top level
json sweep_section(Context& ctx, const std::set<std::string>& strip) {
    if (!ctx.raw.contains("sweep")) throw ConfigError("config: missing required key 'sweep'");
    json s = ctx.raw.at("sweep");
    if (!s.is_object()) throw ConfigError("sweep: expected a section, got 'sweep'");
    if (s.contains("seed")) throw ConfigError("sweep: the master seed belongs at the top level, not 'seed'");
    for (const auto& k : strip) s.erase(k);
    return s;
}

Outcome sweep_outcome(const SweepReport& r) {
    Outcome out;
    out.results = to_json(r);
    out.verdicts = r.verdicts;
    std::ostringstream os;
    write_sweep_csv(os, r);
    out.csv = os.str();
    return out;
}

Outcome cmd_sweep_stability(Context& ctx) {
    json s = sweep_section(ctx, {});
    s["seed"] = ctx.seed;
    ZeroNoiseSpec spec = zero_noise_spec_from_json(s);
    spec.stationary.workers = ctx.workers;
    const auto r = zero_noise_sweep(spec);
    ctx.resolved["sweep"] = r.settings;
    ctx.resolved["sweep"].erase("seed");
    return sweep_outcome(r);
}

Outcome cmd_sweep_semicontinuity(Context& ctx) {
    const json raw = ctx.raw.contains("sweep") ? ctx.raw.at("sweep") : json();
    if (!raw.is_object()) throw ConfigError("config: missing required key 'sweep'");
    const std::string quantity = raw.value("quantity", "entropy");
    json s = sweep_section(ctx, {"quantity"});
    SweepReport r;
    if (quantity == "entropy") {
        Section sec(s, "sweep");
        const FamilySpec family = family_spec_from_json(sec.take("family"));
        sec.resolve("family", to_json(family));
        const auto cells = sec.get<std::size_t>("cells", 1024);
        EntropySweepOptions o;
        o.schedule = sec.get<std::vector<std::size_t>>("schedule", o.schedule);
        o.itinerary.points_per_cell = sec.get<std::size_t>("points_per_cell", o.itinerary.points_per_cell);
        o.itinerary.workers = ctx.workers;
        o.slack = sec.get<double>("slack", o.slack);
        o.boundary_tol = sec.get<double>("boundary_tol", o.boundary_tol);
        json part_resolved;
        const FinitePartition xi = partition_from(sec.take("partition"), family.member(0), part_resolved);
        sec.resolve("partition", part_resolved);
        json resolved = sec.finish();
        const auto members = acip_members(family, Grid::circle(cells));
        r = entropy_semicontinuity_sweep(members, xi, o);
        resolved["quantity"] = quantity;
        ctx.resolved["sweep"] = resolved;
    } else if (quantity == "pressure" || quantity == "htop") {
        const FamilySweepSpec spec = family_sweep_spec_from_json(s);
        r = quantity == "pressure" ? pressure_semicontinuity_sweep(spec) : htop_semicontinuity_probe(spec);
        ctx.resolved["sweep"] = r.settings;
        ctx.resolved["sweep"]["quantity"] = quantity;
    } else {
        throw ConfigError("sweep.quantity: expected entropy, pressure or htop, got '" + quantity + "'");
    }
    return sweep_outcome(r);
}

Outcome cmd_sweep_equilibrium(Context& ctx) {
    const json raw = ctx.raw.contains("sweep") ? ctx.raw.at("sweep") : json();
    if (!raw.is_object()) throw ConfigError("config: missing required key 'sweep'");
    const std::string mode = raw.value("mode", "family");
    json s = sweep_section(ctx, {"mode"});
    SweepReport r;
    if (mode == "family") {
        const FamilySweepSpec spec = family_sweep_spec_from_json(s);
        r = equilibrium_continuity_sweep(spec);
        ctx.resolved["sweep"] = r.settings;
    } else if (mode == "zero_noise") {
        const json part = s.contains("partition") ? s.at("partition") : json();
        s.erase("partition");
        s["seed"] = ctx.seed;
        ZeroNoiseEquilibriumSpec spec = zero_noise_equilibrium_spec_from_json(s);
        spec.stationary.workers = ctx.workers;
        json part_resolved;
        const FinitePartition xi = partition_from(part, spec.system, part_resolved);
        r = zero_noise_equilibrium_check(spec, xi);
        ctx.resolved["sweep"] = r.settings;
        ctx.resolved["sweep"]["partition"] = part_resolved;
    } else {
        throw ConfigError("sweep.mode: expected family or zero_noise, got '" + mode + "'");
    }
    ctx.resolved["sweep"]["mode"] = mode;
    ctx.resolved["sweep"].erase("seed");
    return sweep_outcome(r);
}

Outcome cmd_basins(Context& ctx) {
    const MapSystem sys = system_of(ctx);
    const NoiseModel model = noise_of(ctx, sys);
    Section est = estimator_of(ctx);
    std::vector<PhasePoint> initials;
    for (const auto& c : est.require<std::vector<std::vector<double>>>("initials")) {
        initials.push_back(point_from(c, sys.dim(), "estimator.initials"));
    }
    BasinOptions bo;
    bo.n = est.get<std::size_t>("n", bo.n);
    bo.burn_in_fraction = est.get<double>("burn_in_fraction", bo.burn_in_fraction);
    bo.cluster_tol = est.get<double>("cluster_tol", bo.cluster_tol);
    bo.seed = ctx.seed;
    bo.epsilon = model.epsilon;
    bo.workers = ctx.workers;
    const auto cells = est.get<std::size_t>("cells", 0);
    if (cells > 0) bo.grid = sys.dim() == 1 ? Grid::for_system(sys, cells) : Grid::for_system(sys, cells, cells);
    ctx.resolved["estimator"] = est.finish();
    const auto rep = basin_sample(sys, initials, bo, default_probes(sys));
    Outcome out;
    out.results["clusters"] = rep.clusters;
    out.results["fractions"] = rep.fractions;
    out.results["representatives"] = rep.representatives;
    out.results["probe_averages"] = rep.probe_averages;
    out.results["assignment"] = rep.assignment;
    out.results["escaped"] = rep.escaped;
    out.verdicts["no_escape"] = rep.escaped == 0;
    std::vector<std::string> header{"initial"};
    for (int a = 0; a < sys.dim(); ++a) header.push_back("coord_" + std::to_string(a));
    header.push_back("cluster");
    CsvWriter csv(header);
    for (std::size_t i = 0; i < initials.size(); ++i) {
        if (sys.dim() == 1) csv.row(i, initials[i][0], rep.assignment[i]);
        else csv.row(i, initials[i][0], initials[i][1], rep.assignment[i]);
    }
    out.csv = csv.str();
    return out;
}

Outcome cmd_check_classu(Context& ctx) {
    const MapSystem sys = system_of(ctx);
    Section est = estimator_of(ctx);
    std::vector<Ball> cover;
    json cover_resolved = json::array();
    const json cj = est.take("cover");
    if (!cj.is_array()) throw ConfigError("estimator: missing required key 'cover'");
    for (const auto& b : cj) {
        Section bs(b, "estimator.cover");
        Ball ball;
        ball.center = point_from(bs.require<std::vector<double>>("center"), sys.dim(), "estimator.cover");
        ball.radius = bs.require<double>("radius");
        cover.push_back(ball);
        cover_resolved.push_back(bs.finish());
    }
    est.resolve("cover", cover_resolved);
    Section ks(est.take("constants"), "estimator.constants");
    ClassUConstants k;
    k.delta0 = ks.require<double>("delta0");
    k.beta = ks.require<double>("beta");
    k.delta1 = ks.require<double>("delta1");
    k.sigma1 = ks.require<double>("sigma1");
    k.p = ks.require<int>("p");
    k.q = ks.require<int>("q");
    est.resolve("constants", ks.finish());
    const auto grid_n = est.get<int>("grid_n", 2048);
    ctx.resolved["estimator"] = est.finish();
    const auto rep = class_u_check(sys, cover, k, grid_n);
    Outcome out;
    json conds = json::array();
    CsvWriter csv({"condition", "pass", "margin"});
    for (std::size_t i = 0; i < rep.conditions.size(); ++i) {
        conds.push_back({{"pass", rep.conditions[i].pass}, {"margin", rep.conditions[i].margin}});
        csv.row(static_cast<int>(i + 1), rep.conditions[i].pass, rep.conditions[i].margin);
    }
    out.results["conditions"] = conds;
    out.results["covers"] = rep.covers;
    out.results["injective"] = rep.injective;
    out.results["sigma_exceeds_p"] = rep.sigma_exceeds_p;
    out.results["v_points"] = rep.v_points;
    out.results["in_class_u"] = rep.in_class_u();
    out.verdicts["in_class_u"] = rep.in_class_u();
    out.csv = csv.str();
    return out;
}

Outcome cmd_check_nonflat(Context& ctx) {
    const MapSystem sys = system_of(ctx);
    Section est = estimator_of(ctx);
    const auto beta = est.require<double>("beta");
    const auto b = est.require<double>("b");
    const auto samples = est.get<std::size_t>("samples", 100000);
    ctx.resolved["estimator"] = est.finish();
    const auto rep = verify_nonflat(sys, beta, b, samples, ctx.seed);
    Outcome out;
    out.results = {{"applicable", rep.applicable},
                   {"samples", rep.samples},
                   {"fraction_s1", rep.fraction_s1},
                   {"fraction_s2", rep.fraction_s2},
                   {"fraction_s3", rep.fraction_s3},
                   {"tight_s1_lower", rep.tight_s1_lower},
                   {"tight_s1_upper", rep.tight_s1_upper},
                   {"tight_s2", rep.tight_s2},
                   {"tight_s3", rep.tight_s3},
                   {"tight_b", rep.tight_b}};
    if (rep.applicable) {
        out.verdicts["s1"] = rep.fraction_s1 == 0.0;
        out.verdicts["s2"] = rep.fraction_s2 == 0.0;
        out.verdicts["s3"] = rep.fraction_s3 == 0.0;
    }
    CsvWriter csv({"condition", "violation_fraction", "tight_constant"});
    csv.row(std::string("s1"), rep.fraction_s1, rep.tight_s1_lower);
    csv.row(std::string("s2"), rep.fraction_s2, rep.tight_s2);
    csv.row(std::string("s3"), rep.fraction_s3, rep.tight_s3);
    out.csv = csv.str();
    return out;
}

using Command = Outcome (*)(Context&);

const std::map<std::string, Command>& commands() {
    static const std::map<std::string, Command> table = {
        {"orbit", cmd_orbit},
        {"lyapunov", cmd_lyapunov},
        {"hyptimes", cmd_hyptimes},
        {"stationary", cmd_stationary},
        {"pressure", cmd_pressure},
        {"entropy", cmd_entropy},
        {"sweep-stability", cmd_sweep_stability},
        {"sweep-semicontinuity", cmd_sweep_semicontinuity},
        {"sweep-equilibrium", cmd_sweep_equilibrium},
        {"basins", cmd_basins},
        {"check-classu", cmd_check_classu},
        {"check-nonflat", cmd_check_nonflat},
    };
    return table;
}

// top-level sections each command may use
const std::set<std::string>& allowed_sections(const std::string& command) {
    static const std::set<std::string> sweep{"command", "seed", "sweep", "output"};
    static const std::set<std::string> plain{"command", "seed", "system", "noise", "estimator", "output"};
    static const std::set<std::string> noiseless{"command", "seed", "system", "estimator", "output"};
    if (command.rfind("sweep-", 0) == 0) return sweep;
    if (command == "pressure" || command == "check-classu" || command == "check-nonflat") return noiseless;
    return plain;
}

std::string utc_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw ConfigError("cannot write output file '" + p.string() + "'");
    f << content;
}

}  // namespace

std::vector<std::string> command_names() {
    std::vector<std::string> out;
    for (const auto& [k, _] : commands()) out.push_back(k);
    return out;
}

json load_config(const std::string& path) {
    SourceMap src;
    return load_with_source(path, src);
}

int run(int argc, char** argv) {
    CLI::App app{"ergolab: numerical probes for random perturbations of non-uniformly expanding maps"};
    std::string command, config_path, out_dir = ".", format = "both";
    std::optional<std::uint64_t> seed;
    unsigned workers = 0;
    app.add_option("command", command, "command to run")->required();
    app.add_option("--config", config_path, "config file (JSON or sectioned key = value)")->required();
    app.add_option("--seed", seed, "master seed (overrides the config)");
    app.add_option("--workers", workers, "worker threads (default: available cores)");
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--format", format, "json, csv or both")->check(CLI::IsMember({"json", "csv", "both"}));
    app.set_version_flag("--version", kVersion);
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kPass : kError;
    }

    g_source = SourceMap{};
    try {
        const auto it = commands().find(command);
        if (it == commands().end()) throw ConfigError("unknown command '" + command + "'");
        const auto started = std::chrono::steady_clock::now();
        const std::string started_utc = utc_now();

        Context ctx;
        ctx.command = command;
        ctx.raw = load_with_source(config_path, g_source);
        if (!ctx.raw.is_object()) throw ConfigError("config: expected a top-level object");
        const auto& allowed = allowed_sections(command);
        for (const auto& [k, _] : ctx.raw.items()) {
            if (!allowed.count(k)) throw ConfigError("config: unknown key '" + k + "' for command " + command);
        }
        if (ctx.raw.contains("command") && ctx.raw.at("command") != command) {
            throw ConfigError("config: 'command' does not match the command line: '" + std::string("command") + "'");
        }
        if (seed) {
            ctx.seed = *seed;
        } else {
            if (!ctx.raw.contains("seed")) throw ConfigError("config: missing mandatory key 'seed'");
            const json& s = ctx.raw.at("seed");
            if (!s.is_number_unsigned()) throw ConfigError("config: 'seed' must be a non-negative integer: 'seed'");
            ctx.seed = s.get<std::uint64_t>();
        }
        if (ctx.raw.contains("output")) {
            Section o(ctx.raw.at("output"), "output");
            if (out_dir == ".") out_dir = o.get<std::string>("dir", out_dir);
            if (format == "both") format = o.get<std::string>("format", format);
            (void)o.finish();
            if (format != "json" && format != "csv" && format != "both") {
                throw ConfigError("output.format: expected json, csv or both: 'format'");
            }
        }
        ctx.workers = workers == 0 ? default_workers() : workers;
        ctx.resolved["command"] = command;
        ctx.resolved["seed"] = ctx.seed;

        const Outcome out = it->second(ctx);
        bool pass = true;
        json verdicts = json::object();
        for (const auto& [k, v] : out.verdicts) {
            verdicts[k] = v;
            pass = pass && v;
        }
        const json report = {{"command", command},
                             {"config", ctx.resolved},
                             {"results", out.results},
                             {"verdicts", verdicts},
                             {"pass", pass}};
        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        const json meta = {{"started_utc", started_utc},
                           {"finished_utc", utc_now()},
                           {"wall_seconds", wall},
                           {"workers", ctx.workers},
                           {"config_path", config_path},
                           {"version", kVersion}};
        fs::create_directories(out_dir);
        const fs::path base = fs::path(out_dir) / command;
        if (format != "csv") write_file(base.string() + ".json", report.dump(2) + "\n");
        if (format != "json") write_file(base.string() + ".csv", out.csv);
        write_file(base.string() + ".meta.json", meta.dump(2) + "\n");
        std::cout << command << ": " << (pass ? "pass" : "fail") << "\n";
        return pass ? kPass : kFail;
    } catch (const LineError& e) {
        std::cerr << "ergolab: error: " << config_path << ':' << e.line() << ": " << e.what() << "\n";
    } catch (const std::exception& e) {
        const int line = g_source.locate(e.what());
        std::cerr << "ergolab: error: ";
        if (line > 0) std::cerr << config_path << ':' << line << ": ";
        std::cerr << e.what() << "\n";
    }
    return kError;
}

}  // namespace ergolab::cli
