#pragma once

#include <array>
#include <cstddef>
#include <optional>

#include <nlohmann/json.hpp>

#include "ergolab/phase_maps.hpp"

namespace ergolab {

/// Uniform rectangular grid on a phase domain; cell index is row-major (last axis fastest).
class Grid {
public:
    Grid() = default;
    Grid(const Box& domain, std::array<std::size_t, 2> cells);

    static Grid interval(double lo, double hi, std::size_t n, bool periodic = false);
    static Grid circle(std::size_t n) { return interval(0.0, 1.0, n, true); }
    /// Grid on the phase domain of `system`; n1 is ignored in dimension one.
    static Grid for_system(const MapSystem& system, std::size_t n0, std::size_t n1 = 0);

    int dim() const { return domain_.dim; }
    const Box& domain() const { return domain_; }
    std::size_t cells(int axis) const { return cells_[static_cast<std::size_t>(axis)]; }
    std::size_t size() const { return dim() == 1 ? cells_[0] : cells_[0] * cells_[1]; }
    double cell_width(int axis) const { return domain_.width(axis) / static_cast<double>(cells(axis)); }
    double cell_volume() const;

    /// Cell containing p. Periodic axes wrap; the closed upper face of an
    /// interval axis belongs to the last cell. Empty outside the domain.
    std::optional<std::size_t> cell_of(const PhasePoint& p) const;
    /// Per-axis cell of coordinate x, or -1 outside.
    long axis_cell(int axis, double x) const;
    std::array<std::size_t, 2> unravel(std::size_t index) const;
    std::size_t ravel(std::size_t i0, std::size_t i1 = 0) const;
    PhasePoint center(std::size_t index) const;
    /// Lower corner of a cell.
    PhasePoint corner(std::size_t index) const;

    bool operator==(const Grid& o) const;

private:
    Box domain_;
    std::array<std::size_t, 2> cells_{0, 1};
};

nlohmann::json to_json(const Grid& grid);
Grid grid_from_json(const nlohmann::json& j);

}  // namespace ergolab
