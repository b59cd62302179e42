#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ergolab/grid.hpp"
#include "ergolab/measures.hpp"
#include "ergolab/noise.hpp"

namespace ergolab {

enum class MatrixKind : std::uint8_t { ulam, ruelle };

/// Compressed sparse rows with 32-bit column indices.
struct CsrMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint64_t> row_ptr{0};
    std::vector<std::uint32_t> col;
    std::vector<double> val;

    std::size_t nnz() const { return val.size(); }
    CsrMatrix transposed() const;
};

/// Shift-invariant convolution on a grid: mass in cell k moves to k + offset.
struct Stencil {
    struct Tap {
        int d0 = 0;
        int d1 = 0;
        double weight = 0.0;
    };
    std::vector<Tap> taps;
    bool empty() const { return taps.empty(); }
};

/**
 * Transition operator on a grid, stored as a base sparse matrix P followed
 * by an optional noise convolution K: the operator is P K (row vectors act
 * from the left). K is renormalized near the faces of interval axes so each
 * row of P K sums to one.
 */
class TransferMatrix {
public:
    TransferMatrix(Grid grid, MatrixKind kind, CsrMatrix base, Stencil stencil = {},
                   nlohmann::json build = nlohmann::json::object());

    const Grid& grid() const { return grid_; }
    MatrixKind kind() const { return kind_; }
    const CsrMatrix& base() const { return base_; }
    const Stencil& stencil() const { return stencil_; }
    const nlohmann::json& build() const { return build_; }
    /// Largest fraction of a row's mass that left the domain before renormalization.
    double sink_mass() const { return build_.value("sink_mass", 0.0); }
    std::size_t size() const { return grid_.size(); }
    /// Per cell: kernel mass that stays on the grid (1 without noise or on periodic axes).
    const std::vector<double>& keep() const { return keep_; }
    void set_build_value(const std::string& key, nlohmann::json value) { build_[key] = std::move(value); }

    /// v -> v P K.
    std::vector<double> left_apply(const std::vector<double>& v, unsigned workers = 1) const;
    /// g -> P K g.
    std::vector<double> right_apply(const std::vector<double>& g, unsigned workers = 1) const;
    /// Dense row i of P K.
    std::vector<double> row(std::size_t i) const;
    /// P K as an explicit sparse matrix (small grids).
    CsrMatrix materialize() const;

private:
    std::vector<double> convolve_left(const std::vector<double>& v) const;
    std::vector<double> convolve_right(const std::vector<double>& g) const;

    Grid grid_;
    MatrixKind kind_;
    CsrMatrix base_;
    CsrMatrix base_t_;
    Stencil stencil_;
    std::vector<double> keep_;
    nlohmann::json build_;
};

/// Fraction of lattice subsamples of cell i landing in cell j. Lattice: midpoints (1D) or q x q midpoints (2D).
TransferMatrix ulam_matrix(const MapSystem& system, const Grid& grid, std::size_t subsamples_per_cell,
                           std::uint64_t seed = 0, unsigned workers = 0);

/// Ulam matrix composed with the exact uniform-ball noise kernel.
TransferMatrix noisy_ulam(const MapSystem& system, const NoiseModel& model, const Grid& grid,
                          std::size_t subsamples_per_cell = 64, std::uint64_t seed = 0, unsigned workers = 0);

/// Probability that y uniform in a cell plus t uniform on the ball lands in the cell at each offset.
Stencil noise_stencil(const Grid& grid, double epsilon);

struct StationaryOptions {
    double tolerance = 1e-12;
    std::size_t max_iterations = 100000;
    unsigned workers = 0;
};

struct StationaryResult {
    EmpiricalMeasure measure;
    std::size_t iterations = 0;
    double residual = 0.0;
};

/**
 * Power iteration v -> v P K from two different positive starts. Throws
 * ConvergenceError when either run misses the tolerance or when the two
 * limits differ (several invariant densities).
 */
StationaryResult stationary_density(const TransferMatrix& mat, const StationaryOptions& options = {});

using Potential = std::function<double(double)>;
Potential potential_zero();
Potential potential_constant(double c);
/// -log|f'| for a circle map with a lift.
Potential potential_geometric(const MapSystem& system);

struct RuelleResult {
    double pressure = 0.0;
    double eigenvalue = 0.0;
    std::vector<double> right;
    std::vector<double> left;
    std::size_t iterations = 0;
    bool irreducible = false;
    /// | <L g, nu> - lambda <g, nu> | for g = 1.
    double duality_residual = 0.0;
};

struct RuelleOptions {
    double tolerance = 1e-14;
    std::size_t max_iterations = 20000;
};

/// Discretized L_phi g(x) = sum_{f(y)=x} e^{phi(y)} g(y) at cell centers; supports 1D covering
/// circle local diffeomorphisms of degree >= 2 only.
TransferMatrix ruelle_matrix(const MapSystem& system, const Potential& phi, const Grid& grid);
RuelleResult ruelle_pressure(const MapSystem& system, const Potential& phi, const Grid& grid,
                             const RuelleOptions& options = {});

struct EquilibriumResult {
    EmpiricalMeasure measure;
    double pressure = 0.0;
    /// pressure - integral of phi against the measure.
    double entropy = 0.0;
    double phi_integral = 0.0;
};

EquilibriumResult equilibrium_state(const MapSystem& system, const Potential& phi, const Grid& grid,
                                    const RuelleOptions& options = {});
double topological_entropy(const MapSystem& system, const Grid& grid);

/// Inverse branches: the d solutions y in [0, 1) of f(y) = x, by bisection on the lift.
std::vector<double> inverse_branches(const MapSystem& system, double x);

/// Binary format: "ERGTM001", u64 header length, JSON header, u64 nnz, then
/// nnz records (u32 row, u32 col, f64 value), all little-endian.
void write_transfer_matrix(std::ostream& os, const TransferMatrix& mat);
TransferMatrix read_transfer_matrix(std::istream& is);

}  // namespace ergolab
