#include "ergolab/oracles.hpp"

#include <array>
#include <cmath>
#include <numbers>

#include "ergolab/error.hpp"
#include "ergolab/transfer.hpp"

namespace ergolab {

double ulam_a2_density(double x) {
    if (x <= -2.0 || x >= 2.0) return 0.0;
    return 1.0 / (std::numbers::pi * std::sqrt(4.0 - x * x));
}

double ulam_a2_cdf(double x) {
    if (x <= -2.0) return 0.0;
    if (x >= 2.0) return 1.0;
    return 0.5 + std::asin(x / 2.0) / std::numbers::pi;
}

namespace {

struct GaussRule {
    std::array<double, 16> nodes{};
    std::array<double, 16> weights{};
    GaussRule() {
        constexpr int n = 16;
        for (int i = 0; i < n; ++i) {
            double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
            double dp = 0.0;
            for (int it = 0; it < 100; ++it) {
                double p0 = 1.0, p1 = x;
                for (int k = 2; k <= n; ++k) {
                    const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n * (x * p1 - p0) / (x * x - 1.0);
                const double dx = p1 / dp;
                x -= dx;
                if (std::abs(dx) < 1e-16) break;
            }
            nodes[static_cast<std::size_t>(i)] = x;
            weights[static_cast<std::size_t>(i)] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
    }
};

const GaussRule& rule() {
    static const GaussRule r;
    return r;
}

// Integral of the density over [y, 2] via x = 2 - u^2 (integrand 2 / (pi sqrt(4 - u^2))).
double upper_tail(double y) {
    const double top = std::sqrt(2.0 - y);
    return gauss_legendre([](double u) { return 2.0 / (std::numbers::pi * std::sqrt(4.0 - u * u)); }, 0.0, top);
}

}  // namespace

double gauss_legendre(const std::function<double(double)>& f, double a, double b, int panels) {
    const auto& r = rule();
    const double h = (b - a) / panels;
    double s = 0.0;
    for (int p = 0; p < panels; ++p) {
        const double mid = a + h * (p + 0.5);
        for (std::size_t i = 0; i < 16; ++i) s += r.weights[i] * f(mid + 0.5 * h * r.nodes[i]);
    }
    return 0.5 * h * s;
}

std::vector<std::string> oracle_names() { return {"lebesgue_circle", "logtwo", "ulam_a2"}; }

bool is_measure_oracle(const std::string& name) {
    if (name == "lebesgue_circle" || name == "ulam_a2") return true;
    if (name == "logtwo") return false;
    throw ConfigError("unknown oracle '" + name + "'");
}

EmpiricalMeasure oracle_measure(const std::string& name, const Grid& grid) {
    if (!is_measure_oracle(name)) throw ConfigError("oracle '" + name + "' is a scalar");
    if (grid.dim() != 1) throw ConfigError("oracle '" + name + "' is one-dimensional");
    std::vector<double> w(grid.size());
    const double lo = grid.domain().lo[0], h = grid.cell_width(0);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double a = lo + h * static_cast<double>(i), b = a + h;
        if (name == "ulam_a2") {
            w[i] = ulam_a2_cdf(b) - ulam_a2_cdf(a);
        } else {
            w[i] = std::max(0.0, std::min(b, 1.0) - std::max(a, 0.0));
        }
    }
    return EmpiricalMeasure::from_weights(grid, std::move(w), Provenance::analytic);
}

double oracle_value(const std::string& name) {
    if (name == "logtwo") return std::log(2.0);
    if (is_measure_oracle(name)) throw ConfigError("oracle '" + name + "' is a measure");
    throw ConfigError("unknown oracle '" + name + "'");
}

OracleSelfTest oracle_self_test(const std::string& name) {
    OracleSelfTest t;
    if (name == "ulam_a2") {
        // rho([y, 2]) = rho(f^{-1}[y, 2]) = rho([-s, s]) with s = sqrt(2 - y), by quadrature
        double worst = 0.0;
        const double total = 2.0 * upper_tail(0.0);
        for (int k = 0; k <= 38; ++k) {
            const double y = -1.9 + 0.1 * k;
            const double s = std::sqrt(2.0 - y);
            const double lhs = upper_tail(y);
            const double rhs = 2.0 * (upper_tail(0.0) - upper_tail(s));
            worst = std::max(worst, std::abs(lhs - rhs));
        }
        worst = std::max(worst, std::abs(total - 1.0));
        t.error = worst;
        t.pass = worst < 1e-6;
        t.detail = "pushforward identity by quadrature on y in [-1.9, 1.9]";
    } else if (name == "lebesgue_circle") {
        // Leb(f^{-1} arc) = Leb(arc) for x -> 2x, preimages from the inverse branches
        const MapSystem doubling = MapSystem::expanding_circle(2);
        double worst = 0.0;
        for (int k = 0; k < 64; ++k) {
            const double a = (k + 0.3) / 64.0, b = (k + 0.9) / 64.0;
            const auto pa = inverse_branches(doubling, a), pb = inverse_branches(doubling, b);
            double pre = 0.0;
            for (std::size_t i = 0; i < pa.size(); ++i) pre += pb[i] - pa[i];
            worst = std::max(worst, std::abs(pre - (b - a)));
        }
        t.error = worst;
        t.pass = worst < 1e-12;
        t.detail = "doubling preimage lengths of 64 arcs";
    } else if (name == "logtwo") {
        t.error = std::abs(gauss_legendre([](double x) { return 1.0 / x; }, 1.0, 2.0) - oracle_value(name));
        t.pass = t.error < 1e-14;
        t.detail = "integral of 1/x over [1, 2]";
    } else {
        throw ConfigError("unknown oracle '" + name + "'");
    }
    return t;
}

}  // namespace ergolab
