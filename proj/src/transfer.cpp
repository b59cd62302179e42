#include "ergolab/transfer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <numeric>
#include <ostream>

#include "ergolab/error.hpp"
#include "ergolab/parallel.hpp"

namespace ergolab {

namespace {

constexpr std::size_t kBlock = 4096;

template <class Fn>
void blocked(std::size_t n, unsigned workers, Fn&& fn) {
    const std::size_t blocks = (n + kBlock - 1) / kBlock;
    parallel_for(blocks, workers, [&](std::size_t b) {
        const std::size_t end = std::min(n, (b + 1) * kBlock);
        for (std::size_t i = b * kBlock; i < end; ++i) fn(i);
    });
}

}  // namespace

CsrMatrix CsrMatrix::transposed() const {
    CsrMatrix t;
    t.rows = cols;
    t.cols = rows;
    t.row_ptr.assign(cols + 1, 0);
    for (auto c : col) ++t.row_ptr[c + 1];
    for (std::size_t i = 0; i < cols; ++i) t.row_ptr[i + 1] += t.row_ptr[i];
    t.col.resize(nnz());
    t.val.resize(nnz());
    std::vector<std::uint64_t> fill(t.row_ptr.begin(), t.row_ptr.end() - 1);
    for (std::size_t r = 0; r < rows; ++r) {
        for (auto k = row_ptr[r]; k < row_ptr[r + 1]; ++k) {
            const auto dst = fill[col[k]]++;
            t.col[dst] = static_cast<std::uint32_t>(r);
            t.val[dst] = val[k];
        }
    }
    return t;
}

TransferMatrix::TransferMatrix(Grid grid, MatrixKind kind, CsrMatrix base, Stencil stencil,
                               nlohmann::json build)
    : grid_(std::move(grid)), kind_(kind), base_(std::move(base)), stencil_(std::move(stencil)),
      build_(std::move(build)) {
    if (base_.rows != grid_.size() || base_.cols != grid_.size()) {
        throw ConfigError("transfer matrix size does not match the grid");
    }
    base_t_ = base_.transposed();
    keep_.assign(grid_.size(), 1.0);
    if (!stencil_.empty()) {
        const auto n0 = static_cast<long>(grid_.cells(0));
        const auto n1 = static_cast<long>(grid_.cells(1));
        const auto& per = grid_.domain().periodic;
        for (std::size_t k = 0; k < grid_.size(); ++k) {
            const auto [i0, i1] = grid_.unravel(k);
            double keep = 0.0;
            for (const auto& tap : stencil_.taps) {
                const long j0 = static_cast<long>(i0) + tap.d0;
                const long j1 = static_cast<long>(i1) + tap.d1;
                const bool in0 = per[0] || (j0 >= 0 && j0 < n0);
                const bool in1 = grid_.dim() == 1 || per[1] || (j1 >= 0 && j1 < n1);
                if (in0 && in1) keep += tap.weight;
            }
            keep_[k] = keep;
        }
    }
}

namespace {

long wrap_index(long j, long n) {
    j %= n;
    return j < 0 ? j + n : j;
}

}  // namespace

std::vector<double> TransferMatrix::convolve_left(const std::vector<double>& v) const {
    if (stencil_.empty()) return v;
    const std::size_t n = grid_.size();
    std::vector<double> scaled(n);
    for (std::size_t k = 0; k < n; ++k) scaled[k] = keep_[k] > 0.0 ? v[k] / keep_[k] : 0.0;
    std::vector<double> out(n, 0.0);
    const auto n0 = static_cast<long>(grid_.cells(0));
    const auto n1 = static_cast<long>(grid_.cells(1));
    const auto& per = grid_.domain().periodic;
    const bool two = grid_.dim() == 2;
    blocked(n, 1, [&](std::size_t j) {
        const auto [j0, j1] = grid_.unravel(j);
        double s = 0.0;
        for (const auto& tap : stencil_.taps) {
            long k0 = static_cast<long>(j0) - tap.d0;
            long k1 = static_cast<long>(j1) - tap.d1;
            if (per[0]) {
                k0 = wrap_index(k0, n0);
            } else if (k0 < 0 || k0 >= n0) {
                continue;
            }
            if (two) {
                if (per[1]) {
                    k1 = wrap_index(k1, n1);
                } else if (k1 < 0 || k1 >= n1) {
                    continue;
                }
            }
            s += tap.weight * scaled[grid_.ravel(static_cast<std::size_t>(k0), static_cast<std::size_t>(two ? k1 : 0))];
        }
        out[j] = s;
    });
    return out;
}

std::vector<double> TransferMatrix::convolve_right(const std::vector<double>& g) const {
    if (stencil_.empty()) return g;
    const std::size_t n = grid_.size();
    std::vector<double> out(n, 0.0);
    const auto n0 = static_cast<long>(grid_.cells(0));
    const auto n1 = static_cast<long>(grid_.cells(1));
    const auto& per = grid_.domain().periodic;
    const bool two = grid_.dim() == 2;
    for (std::size_t k = 0; k < n; ++k) {
        const auto [i0, i1] = grid_.unravel(k);
        double s = 0.0;
        for (const auto& tap : stencil_.taps) {
            long j0 = static_cast<long>(i0) + tap.d0;
            long j1 = static_cast<long>(i1) + tap.d1;
            if (per[0]) {
                j0 = wrap_index(j0, n0);
            } else if (j0 < 0 || j0 >= n0) {
                continue;
            }
            if (two) {
                if (per[1]) {
                    j1 = wrap_index(j1, n1);
                } else if (j1 < 0 || j1 >= n1) {
                    continue;
                }
            }
            s += tap.weight * g[grid_.ravel(static_cast<std::size_t>(j0), static_cast<std::size_t>(two ? j1 : 0))];
        }
        out[k] = keep_[k] > 0.0 ? s / keep_[k] : 0.0;
    }
    return out;
}

std::vector<double> TransferMatrix::left_apply(const std::vector<double>& v, unsigned workers) const {
    const std::size_t n = grid_.size();
    std::vector<double> vp(n, 0.0);
    blocked(n, workers, [&](std::size_t k) {
        double s = 0.0;
        for (auto e = base_t_.row_ptr[k]; e < base_t_.row_ptr[k + 1]; ++e) s += v[base_t_.col[e]] * base_t_.val[e];
        vp[k] = s;
    });
    return convolve_left(vp);
}

std::vector<double> TransferMatrix::right_apply(const std::vector<double>& g, unsigned workers) const {
    const std::vector<double> kg = convolve_right(g);
    const std::size_t n = grid_.size();
    std::vector<double> out(n, 0.0);
    blocked(n, workers, [&](std::size_t i) {
        double s = 0.0;
        for (auto e = base_.row_ptr[i]; e < base_.row_ptr[i + 1]; ++e) s += base_.val[e] * kg[base_.col[e]];
        out[i] = s;
    });
    return out;
}

std::vector<double> TransferMatrix::row(std::size_t i) const {
    std::vector<double> e(grid_.size(), 0.0);
    e[i] = 1.0;
    return left_apply(e);
}

CsrMatrix TransferMatrix::materialize() const {
    CsrMatrix m;
    m.rows = m.cols = grid_.size();
    for (std::size_t i = 0; i < grid_.size(); ++i) {
        const auto r = row(i);
        for (std::size_t j = 0; j < r.size(); ++j) {
            if (r[j] != 0.0) {
                m.col.push_back(static_cast<std::uint32_t>(j));
                m.val.push_back(r[j]);
            }
        }
        m.row_ptr.push_back(m.val.size());
    }
    return m;
}

namespace {

std::vector<PhasePoint> cell_lattice(const Grid& grid, std::size_t cell, std::size_t subsamples) {
    std::vector<PhasePoint> pts;
    const PhasePoint c = grid.corner(cell);
    if (grid.dim() == 1) {
        pts.reserve(subsamples);
        const double h = grid.cell_width(0);
        for (std::size_t j = 0; j < subsamples; ++j) {
            pts.emplace_back(c[0] + h * (static_cast<double>(j) + 0.5) / static_cast<double>(subsamples));
        }
        return pts;
    }
    const auto q = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(subsamples)) + 1e-9));
    const double h0 = grid.cell_width(0), h1 = grid.cell_width(1);
    pts.reserve(q * q);
    for (std::size_t a = 0; a < q; ++a) {
        for (std::size_t b = 0; b < q; ++b) {
            pts.emplace_back(c[0] + h0 * (static_cast<double>(a) + 0.5) / static_cast<double>(q),
                             c[1] + h1 * (static_cast<double>(b) + 0.5) / static_cast<double>(q));
        }
    }
    return pts;
}

std::optional<std::size_t> landing_cell(const Grid& grid, const PhasePoint& p) {
    if (auto c = grid.cell_of(p)) return c;
    if (!grid.domain().contains(p, 1e-12)) return std::nullopt;
    PhasePoint q = p;
    for (int i = 0; i < grid.dim(); ++i) {
        if (!grid.domain().periodic[i]) q[i] = std::clamp(q[i], grid.domain().lo[i], grid.domain().hi[i]);
    }
    return grid.cell_of(q);
}

struct UlamBuild {
    CsrMatrix base;
    double sink = 0.0;
    std::size_t lattice = 0;
};

UlamBuild assemble_ulam(const MapSystem& system, const Grid& grid, std::size_t subsamples, unsigned workers) {
    if (subsamples < 16) throw ConfigError("ulam_matrix: subsamples_per_cell must be >= 16");
    if (grid.dim() != system.dim()) throw ConfigError("ulam_matrix: grid dimension mismatch");
    const std::size_t n = grid.size();
    std::vector<std::vector<std::pair<std::uint32_t, double>>> rows(n);
    std::vector<double> sinks(n, 0.0);
    std::size_t lattice = 0;
    blocked(n, workers, [&](std::size_t i) {
        const auto pts = cell_lattice(grid, i, subsamples);
        std::vector<std::uint32_t> hits;
        hits.reserve(pts.size());
        std::size_t sink = 0;
        for (const auto& p : pts) {
            const auto c = landing_cell(grid, system.apply(p));
            if (c) {
                hits.push_back(static_cast<std::uint32_t>(*c));
            } else {
                ++sink;
            }
        }
        std::sort(hits.begin(), hits.end());
        auto& r = rows[i];
        const double denom = static_cast<double>(hits.size());
        for (std::size_t a = 0; a < hits.size();) {
            std::size_t b = a;
            while (b < hits.size() && hits[b] == hits[a]) ++b;
            r.emplace_back(hits[a], static_cast<double>(b - a) / denom);
            a = b;
        }
        sinks[i] = static_cast<double>(sink) / static_cast<double>(pts.size());
        if (i == 0) lattice = pts.size();
    });
    UlamBuild out;
    out.lattice = lattice;
    out.base.rows = out.base.cols = n;
    out.base.row_ptr.reserve(n + 1);
    for (std::size_t i = 0; i < n; ++i) {
        if (rows[i].empty()) {
            throw EscapeError("ulam_matrix: every subsample of cell " + std::to_string(i) + " left the domain", 1.0);
        }
        for (const auto& [c, v] : rows[i]) {
            out.base.col.push_back(c);
            out.base.val.push_back(v);
        }
        out.base.row_ptr.push_back(out.base.val.size());
        out.sink = std::max(out.sink, sinks[i]);
    }
    if (out.sink > 1e-3) {
        throw EscapeError("ulam_matrix: sink mass " + std::to_string(out.sink) + " exceeds 0.1%", out.sink);
    }
    return out;
}

// Integral of the uniform[-eps, eps] distribution function from -inf to w.
double cdf_integral(double w, double eps) {
    if (w <= -eps) return 0.0;
    if (w >= eps) return w;
    return (w + eps) * (w + eps) / (4.0 * eps);
}

}  // namespace

TransferMatrix ulam_matrix(const MapSystem& system, const Grid& grid, std::size_t subsamples_per_cell,
                           std::uint64_t seed, unsigned workers) {
    auto b = assemble_ulam(system, grid, subsamples_per_cell, workers);
    nlohmann::json build = {{"kind", "ulam"},
                            {"system", to_json(system)},
                            {"subsamples_per_cell", subsamples_per_cell},
                            {"lattice_points", b.lattice},
                            {"seed", seed},
                            {"epsilon", 0.0},
                            {"sink_mass", b.sink}};
    return TransferMatrix(grid, MatrixKind::ulam, std::move(b.base), {}, std::move(build));
}

Stencil noise_stencil(const Grid& grid, double eps) {
    Stencil st;
    if (!(eps > 0.0)) return st;
    if (grid.dim() == 1) {
        const double h = grid.cell_width(0);
        const int reach = static_cast<int>(std::ceil(eps / h)) + 1;
        double total = 0.0;
        for (int m = -reach; m <= reach; ++m) {
            const double w = (cdf_integral((m + 1) * h, eps) - 2.0 * cdf_integral(m * h, eps) +
                              cdf_integral((m - 1) * h, eps)) / h;
            if (w > 1e-17) {
                st.taps.push_back({m, 0, w});
                total += w;
            }
        }
        for (auto& t : st.taps) t.weight /= total;
        return st;
    }
    // 8 x 8 source lattice in the cell, displacement lattice of spacing min(h)/8 inside the disk
    const double h0 = grid.cell_width(0), h1 = grid.cell_width(1);
    const double step = std::min({h0, h1, eps}) / 8.0;
    const int r = static_cast<int>(std::ceil(eps / step));
    std::vector<std::pair<double, double>> disp;
    for (int a = -r; a <= r; ++a) {
        for (int b = -r; b <= r; ++b) {
            const double tx = a * step, ty = b * step;
            if (tx * tx + ty * ty <= eps * eps) disp.emplace_back(tx, ty);
        }
    }
    const int reach0 = static_cast<int>(std::ceil(eps / h0)) + 1;
    const int reach1 = static_cast<int>(std::ceil(eps / h1)) + 1;
    const int w0 = 2 * reach0 + 1, w1 = 2 * reach1 + 1;
    std::vector<double> counts(static_cast<std::size_t>(w0 * w1), 0.0);
    constexpr int q = 8;
    for (int a = 0; a < q; ++a) {
        for (int b = 0; b < q; ++b) {
            const double y0 = (a + 0.5) / q * h0, y1 = (b + 0.5) / q * h1;
            for (const auto& [tx, ty] : disp) {
                const int m0 = static_cast<int>(std::floor((y0 + tx) / h0));
                const int m1 = static_cast<int>(std::floor((y1 + ty) / h1));
                counts[static_cast<std::size_t>((m0 + reach0) * w1 + (m1 + reach1))] += 1.0;
            }
        }
    }
    const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
    for (int m0 = -reach0; m0 <= reach0; ++m0) {
        for (int m1 = -reach1; m1 <= reach1; ++m1) {
            const double c = counts[static_cast<std::size_t>((m0 + reach0) * w1 + (m1 + reach1))];
            if (c > 0.0) st.taps.push_back({m0, m1, c / total});
        }
    }
    return st;
}

TransferMatrix noisy_ulam(const MapSystem& system, const NoiseModel& model, const Grid& grid,
                          std::size_t subsamples_per_cell, std::uint64_t seed, unsigned workers) {
    if (!(model.epsilon > 0.0)) throw ConfigError("noisy_ulam: epsilon must be > 0");
    auto b = assemble_ulam(system, grid, subsamples_per_cell, workers);
    Stencil st = noise_stencil(grid, model.epsilon);
    nlohmann::json build = {{"kind", "ulam"},
                            {"system", to_json(system)},
                            {"subsamples_per_cell", subsamples_per_cell},
                            {"lattice_points", b.lattice},
                            {"seed", seed},
                            {"epsilon", model.epsilon},
                            {"sink_mass", b.sink}};
    double min_cell = grid.cell_width(0);
    if (grid.dim() == 2) min_cell = std::max(min_cell, grid.cell_width(1));
    if (min_cell >= model.epsilon) build["warning"] = "grid cell size is not below epsilon";
    TransferMatrix mat(grid, MatrixKind::ulam, std::move(b.base), std::move(st), build);
    // mass the kernel pushes across interval faces, per row of P
    double worst = 0.0;
    const auto& base = mat.base();
    for (std::size_t i = 0; i < grid.size(); ++i) {
        double l = 0.0;
        for (auto e = base.row_ptr[i]; e < base.row_ptr[i + 1]; ++e) l += base.val[e] * (1.0 - mat.keep()[base.col[e]]);
        worst = std::max(worst, l);
    }
    const double sink = std::max(b.sink, worst);
    if (sink > 1e-3) {
        throw EscapeError("noisy_ulam: sink mass " + std::to_string(sink) + " exceeds 0.1%", sink);
    }
    mat.set_build_value("sink_mass", sink);
    return mat;
}

namespace {

struct PowerRun {
    std::vector<double> v;
    std::size_t iterations = 0;
    double residual = 0.0;
    bool converged = false;
};

PowerRun stationary_run(const TransferMatrix& mat, std::vector<double> v, const StationaryOptions& o) {
    PowerRun run;
    for (std::size_t it = 1; it <= o.max_iterations; ++it) {
        std::vector<double> w = mat.left_apply(v, o.workers);
        double total = 0.0;
        for (double x : w) total += x;
        double res = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            w[i] /= total;
            res += std::abs(w[i] - v[i]);
        }
        v.swap(w);
        run.iterations = it;
        run.residual = res;
        if (res < o.tolerance) {
            run.converged = true;
            break;
        }
    }
    run.v = std::move(v);
    return run;
}

}  // namespace

StationaryResult stationary_density(const TransferMatrix& mat, const StationaryOptions& options) {
    if (mat.kind() != MatrixKind::ulam) throw ConfigError("stationary_density: needs an ulam-kind matrix");
    const std::size_t n = mat.size();
    std::vector<double> flat(n, 1.0 / static_cast<double>(n));
    std::vector<double> tilted(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        CounterRng rng = CounterRng::stream(0x5354415254ULL, i);
        tilted[i] = 0.5 + rng.uniform();
        total += tilted[i];
    }
    for (double& x : tilted) x /= total;
    const PowerRun a = stationary_run(mat, std::move(flat), options);
    if (!a.converged) {
        throw ConvergenceError("stationary_density: power iteration did not converge", a.residual);
    }
    const PowerRun b = stationary_run(mat, std::move(tilted), options);
    if (!b.converged) {
        throw ConvergenceError("stationary_density: power iteration did not converge", b.residual);
    }
    double gap = 0.0;
    for (std::size_t i = 0; i < n; ++i) gap += std::abs(a.v[i] - b.v[i]);
    if (gap > 1e-6) {
        throw ConvergenceError("stationary_density: limit depends on the start (several invariant densities)", gap);
    }
    StationaryResult r;
    r.measure = EmpiricalMeasure{mat.grid(), a.v, Provenance::eigenvector};
    r.iterations = a.iterations;
    r.residual = a.residual;
    return r;
}

Potential potential_zero() {
    return [](double) { return 0.0; };
}

Potential potential_constant(double c) {
    return [c](double) { return c; };
}

Potential potential_geometric(const MapSystem& system) {
    if (!system.has_lift()) throw UnsupportedSystem("potential_geometric: circle map with a lift required");
    return [system](double x) { return -std::log(std::abs(system.derivative_1d(x))); };
}

namespace {

void require_ruelle_support(const MapSystem& system) {
    if (system.dim() != 1 || !system.has_lift() || system.degree() < 2) {
        throw UnsupportedSystem("ruelle operator: needs a covering expanding circle map, got " + to_string(system.family()));
    }
    double min_d = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 8192; ++i) min_d = std::min(min_d, system.derivative_1d((i + 0.5) / 8192.0));
    if (!(min_d > 0.0)) throw UnsupportedSystem("ruelle operator: map is not a local diffeomorphism (min f' <= 0)");
}

void require_circle_grid(const Grid& grid) {
    if (grid.dim() != 1 || !grid.domain().periodic[0] || grid.domain().lo[0] != 0.0 || grid.domain().hi[0] != 1.0) {
        throw ConfigError("ruelle operator: grid must be the circle [0, 1)");
    }
}

}  // namespace

std::vector<double> inverse_branches(const MapSystem& system, double x) {
    require_ruelle_support(system);
    const int d = system.degree();
    std::vector<double> ys;
    ys.reserve(static_cast<std::size_t>(d));
    const double xr = wrap_unit(x);
    for (int b = 0; b < d; ++b) {
        const double target = xr + b;
        double lo = 0.0, hi = 1.0;
        if (system.lift(lo) > target || system.lift(hi) < target) {
            throw UnsupportedSystem("inverse_branches: lift is not a degree-d monotone branch");
        }
        while (hi - lo > 1e-15) {
            const double mid = 0.5 * (lo + hi);
            if (mid <= lo || mid >= hi) break;
            if (system.lift(mid) < target) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        ys.push_back(0.5 * (lo + hi));
    }
    return ys;
}

TransferMatrix ruelle_matrix(const MapSystem& system, const Potential& phi, const Grid& grid) {
    require_ruelle_support(system);
    require_circle_grid(grid);
    const std::size_t n = grid.size();
    const double h = grid.cell_width(0);
    CsrMatrix m;
    m.rows = m.cols = n;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::pair<std::uint32_t, double>> entries;
        for (double y : inverse_branches(system, grid.center(i)[0])) {
            const double w = std::exp(phi(y));
            if (!std::isfinite(w)) throw ConfigError("ruelle operator: potential is not bounded");
            // periodic linear interpolation between cell centers
            const double u = y / h - 0.5;
            const double k0 = std::floor(u);
            const double frac = u - k0;
            const auto n_l = static_cast<long>(n);
            const auto a = static_cast<std::uint32_t>(wrap_index(static_cast<long>(k0), n_l));
            const auto b = static_cast<std::uint32_t>(wrap_index(static_cast<long>(k0) + 1, n_l));
            entries.emplace_back(a, w * (1.0 - frac));
            entries.emplace_back(b, w * frac);
        }
        std::sort(entries.begin(), entries.end());
        for (std::size_t a = 0; a < entries.size();) {
            double v = 0.0;
            std::size_t b = a;
            while (b < entries.size() && entries[b].first == entries[a].first) v += entries[b++].second;
            m.col.push_back(entries[a].first);
            m.val.push_back(v);
            a = b;
        }
        m.row_ptr.push_back(m.val.size());
    }
    nlohmann::json build = {{"kind", "ruelle"}, {"system", to_json(system)}, {"interpolation", "periodic-linear"}};
    return TransferMatrix(grid, MatrixKind::ruelle, std::move(m), {}, std::move(build));
}

namespace {

bool strongly_connected(const CsrMatrix& m) {
    auto reach_all = [](const CsrMatrix& g) {
        std::vector<std::uint8_t> seen(g.rows, 0);
        std::vector<std::size_t> stack{0};
        seen[0] = 1;
        std::size_t count = 1;
        while (!stack.empty()) {
            const std::size_t v = stack.back();
            stack.pop_back();
            for (auto e = g.row_ptr[v]; e < g.row_ptr[v + 1]; ++e) {
                if (g.val[e] > 0.0 && !seen[g.col[e]]) {
                    seen[g.col[e]] = 1;
                    ++count;
                    stack.push_back(g.col[e]);
                }
            }
        }
        return count == g.rows;
    };
    return m.rows > 0 && reach_all(m) && reach_all(m.transposed());
}

double max_rel_change(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0, s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]));
        s = std::max(s, std::abs(b[i]));
    }
    return m / s;
}

}  // namespace

RuelleResult ruelle_pressure(const MapSystem& system, const Potential& phi, const Grid& grid,
                             const RuelleOptions& options) {
    const TransferMatrix mat = ruelle_matrix(system, phi, grid);
    const std::size_t n = grid.size();
    RuelleResult r;
    r.irreducible = strongly_connected(mat.base());
    std::vector<double> g(n, 1.0), nu(n, 1.0 / static_cast<double>(n));
    bool right_done = false, left_done = false;
    std::size_t it = 0;
    while (it < options.max_iterations && !(right_done && left_done)) {
        ++it;
        if (!right_done) {
            auto lg = mat.right_apply(g);
            double mx = 0.0;
            for (double v : lg) mx = std::max(mx, v);
            for (double& v : lg) v /= mx;
            right_done = max_rel_change(lg, g) < options.tolerance;
            g.swap(lg);
        }
        if (!left_done) {
            auto ln = mat.left_apply(nu);
            double s = 0.0;
            for (double v : ln) s += v;
            for (double& v : ln) v /= s;
            left_done = max_rel_change(ln, nu) < options.tolerance;
            nu.swap(ln);
        }
    }
    if (!(right_done && left_done)) {
        throw ConvergenceError("ruelle_pressure: power iteration did not converge", options.tolerance);
    }
    const auto lg = mat.right_apply(g);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        num += lg[i] * nu[i];
        den += g[i] * nu[i];
    }
    r.eigenvalue = num / den;
    r.pressure = std::log(r.eigenvalue);
    const auto l1 = mat.right_apply(std::vector<double>(n, 1.0));
    double pair = 0.0;
    for (std::size_t i = 0; i < n; ++i) pair += l1[i] * nu[i];
    r.duality_residual = std::abs(pair - r.eigenvalue);
    r.right = std::move(g);
    r.left = std::move(nu);
    r.iterations = it;
    return r;
}

EquilibriumResult equilibrium_state(const MapSystem& system, const Potential& phi, const Grid& grid,
                                    const RuelleOptions& options) {
    const RuelleResult rr = ruelle_pressure(system, phi, grid, options);
    std::vector<double> w(grid.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = rr.right[i] * rr.left[i];
    EquilibriumResult eq;
    eq.measure = EmpiricalMeasure::from_weights(grid, std::move(w), Provenance::eigenvector);
    eq.pressure = rr.pressure;
    eq.phi_integral = eq.measure.integrate([&](const PhasePoint& p) { return phi(p[0]); });
    eq.entropy = eq.pressure - eq.phi_integral;
    return eq;
}

double topological_entropy(const MapSystem& system, const Grid& grid) {
    return ruelle_pressure(system, potential_zero(), grid).pressure;
}

namespace {

void put_u64(std::ostream& os, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 8);
}

void put_u32(std::ostream& os, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 4);
}

std::uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) throw ConfigError("transfer matrix file truncated");
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw ConfigError("transfer matrix file truncated");
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

constexpr char kMagic[8] = {'E', 'R', 'G', 'T', 'M', '0', '0', '1'};

}  // namespace

void write_transfer_matrix(std::ostream& os, const TransferMatrix& mat) {
    nlohmann::json taps = nlohmann::json::array();
    for (const auto& t : mat.stencil().taps) taps.push_back({t.d0, t.d1, t.weight});
    const nlohmann::json header = {{"grid", to_json(mat.grid())},
                                   {"kind", mat.kind() == MatrixKind::ulam ? "ulam" : "ruelle"},
                                   {"build", mat.build()},
                                   {"stencil", taps}};
    const std::string text = header.dump();
    os.write(kMagic, 8);
    put_u64(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    const auto& b = mat.base();
    put_u64(os, b.nnz());
    for (std::size_t r = 0; r < b.rows; ++r) {
        for (auto e = b.row_ptr[r]; e < b.row_ptr[r + 1]; ++e) {
            put_u32(os, static_cast<std::uint32_t>(r));
            put_u32(os, b.col[e]);
            put_u64(os, std::bit_cast<std::uint64_t>(b.val[e]));
        }
    }
}

TransferMatrix read_transfer_matrix(std::istream& is) {
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw ConfigError("not a transfer matrix file");
    const std::uint64_t len = get_u64(is);
    std::string text(len, '\0');
    if (!is.read(text.data(), static_cast<std::streamsize>(len))) throw ConfigError("transfer matrix file truncated");
    const auto header = nlohmann::json::parse(text);
    const Grid grid = grid_from_json(header.at("grid"));
    const MatrixKind kind = header.at("kind") == "ulam" ? MatrixKind::ulam : MatrixKind::ruelle;
    Stencil st;
    for (const auto& t : header.at("stencil")) st.taps.push_back({t[0].get<int>(), t[1].get<int>(), t[2].get<double>()});
    CsrMatrix m;
    m.rows = m.cols = grid.size();
    m.row_ptr.assign(grid.size() + 1, 0);
    const std::uint64_t nnz = get_u64(is);
    std::size_t current = 0;
    for (std::uint64_t k = 0; k < nnz; ++k) {
        const std::uint32_t r = get_u32(is);
        const std::uint32_t c = get_u32(is);
        const double v = std::bit_cast<double>(get_u64(is));
        if (r < current || r >= grid.size() || c >= grid.size()) throw ConfigError("transfer matrix entries out of order");
        while (current < r) m.row_ptr[++current] = m.val.size();
        m.col.push_back(c);
        m.val.push_back(v);
    }
    while (current < grid.size()) m.row_ptr[++current] = m.val.size();
    return TransferMatrix(grid, kind, std::move(m), std::move(st), header.at("build"));
}

}  // namespace ergolab
