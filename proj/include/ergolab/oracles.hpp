#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ergolab/measures.hpp"

namespace ergolab {

/// Invariant density 1/(pi sqrt(4 - x^2)) of x -> 2 - x^2 on [-2, 2].
double ulam_a2_density(double x);
/// Its distribution function 1/2 + arcsin(x/2)/pi (clamped outside [-2, 2]).
double ulam_a2_cdf(double x);

/// Composite Gauss-Legendre rule on [a, b] with `panels` panels of 16 nodes.
double gauss_legendre(const std::function<double(double)>& f, double a, double b, int panels = 8);

struct OracleSelfTest {
    bool pass = false;
    double error = 0.0;
    std::string detail;
};

/// Names: "lebesgue_circle", "ulam_a2" (measures) and "logtwo" (scalar).
std::vector<std::string> oracle_names();
bool is_measure_oracle(const std::string& name);
/// Cell masses of a named measure oracle on `grid`; ConfigError on unknown names.
EmpiricalMeasure oracle_measure(const std::string& name, const Grid& grid);
double oracle_value(const std::string& name);
OracleSelfTest oracle_self_test(const std::string& name);

}  // namespace ergolab
