#include "ergolab/grid.hpp"

#include <cmath>

#include "ergolab/error.hpp"

namespace ergolab {

Grid::Grid(const Box& domain, std::array<std::size_t, 2> cells) : domain_(domain), cells_(cells) {
    if (domain.dim == 1) cells_[1] = 1;
    for (int i = 0; i < domain.dim; ++i) {
        if (cells_[static_cast<std::size_t>(i)] < 2) throw ConfigError("grid needs >= 2 cells per axis");
        if (!(domain.hi[i] > domain.lo[i])) throw ConfigError("grid axis has empty extent");
    }
}

Grid Grid::interval(double lo, double hi, std::size_t n, bool periodic) {
    Box b;
    b.dim = 1;
    b.lo = {lo, 0.0};
    b.hi = {hi, 1.0};
    b.periodic = {periodic, false};
    return Grid(b, {n, 1});
}

Grid Grid::for_system(const MapSystem& system, std::size_t n0, std::size_t n1) {
    if (system.dim() == 1) return Grid(system.domain(), {n0, 1});
    return Grid(system.domain(), {n0, n1 == 0 ? n0 : n1});
}

double Grid::cell_volume() const {
    double v = cell_width(0);
    if (dim() == 2) v *= cell_width(1);
    return v;
}

long Grid::axis_cell(int axis, double x) const {
    const auto a = static_cast<std::size_t>(axis);
    const double lo = domain_.lo[a], hi = domain_.hi[a];
    const auto n = static_cast<long>(cells_[a]);
    if (domain_.periodic[a]) {
        const double u = (x - lo) / (hi - lo);
        double frac = u - std::floor(u);
        long k = static_cast<long>(frac * static_cast<double>(n));
        if (k >= n) k = 0;  // frac rounded up to 1
        return k;
    }
    if (!(x >= lo && x <= hi)) return -1;
    long k = static_cast<long>((x - lo) / (hi - lo) * static_cast<double>(n));
    return std::min(k, n - 1);
}

std::optional<std::size_t> Grid::cell_of(const PhasePoint& p) const {
    const long i0 = axis_cell(0, p[0]);
    if (i0 < 0) return std::nullopt;
    if (dim() == 1) return static_cast<std::size_t>(i0);
    const long i1 = axis_cell(1, p[1]);
    if (i1 < 0) return std::nullopt;
    return ravel(static_cast<std::size_t>(i0), static_cast<std::size_t>(i1));
}

std::array<std::size_t, 2> Grid::unravel(std::size_t index) const {
    if (dim() == 1) return {index, 0};
    return {index / cells_[1], index % cells_[1]};
}

std::size_t Grid::ravel(std::size_t i0, std::size_t i1) const {
    return dim() == 1 ? i0 : i0 * cells_[1] + i1;
}

PhasePoint Grid::corner(std::size_t index) const {
    const auto [i0, i1] = unravel(index);
    const double x0 = domain_.lo[0] + cell_width(0) * static_cast<double>(i0);
    if (dim() == 1) return PhasePoint(x0);
    return PhasePoint(x0, domain_.lo[1] + cell_width(1) * static_cast<double>(i1));
}

PhasePoint Grid::center(std::size_t index) const {
    const auto [i0, i1] = unravel(index);
    const double x0 = domain_.lo[0] + cell_width(0) * (static_cast<double>(i0) + 0.5);
    if (dim() == 1) return PhasePoint(x0);
    return PhasePoint(x0, domain_.lo[1] + cell_width(1) * (static_cast<double>(i1) + 0.5));
}

bool Grid::operator==(const Grid& o) const {
    if (dim() != o.dim() || cells_ != o.cells_) return false;
    for (int i = 0; i < dim(); ++i) {
        if (domain_.lo[i] != o.domain_.lo[i] || domain_.hi[i] != o.domain_.hi[i] ||
            domain_.periodic[i] != o.domain_.periodic[i])
            return false;
    }
    return true;
}

nlohmann::json to_json(const Grid& grid) {
    nlohmann::json axes = nlohmann::json::array();
    for (int i = 0; i < grid.dim(); ++i) {
        axes.push_back({{"lo", grid.domain().lo[i]},
                        {"hi", grid.domain().hi[i]},
                        {"cells", grid.cells(i)},
                        {"periodic", static_cast<bool>(grid.domain().periodic[i])}});
    }
    return {{"axes", axes}};
}

Grid grid_from_json(const nlohmann::json& j) {
    try {
        const auto& axes = j.at("axes");
        if (!axes.is_array() || axes.empty() || axes.size() > 2) throw ConfigError("grid: 1 or 2 axes");
        Box b;
        b.dim = static_cast<int>(axes.size());
        std::array<std::size_t, 2> cells{1, 1};
        for (std::size_t i = 0; i < axes.size(); ++i) {
            b.lo[i] = axes[i].at("lo").get<double>();
            b.hi[i] = axes[i].at("hi").get<double>();
            b.periodic[i] = axes[i].at("periodic").get<bool>();
            cells[i] = axes[i].at("cells").get<std::size_t>();
        }
        return Grid(b, cells);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("grid: ") + e.what());
    }
}

}  // namespace ergolab
