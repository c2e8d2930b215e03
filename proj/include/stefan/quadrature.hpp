#pragma once

#include <functional>
#include <vector>

namespace stefan {

// Gauss-Legendre rule on [-1, 1].  Nodes ascend and are symmetric about 0;
// weights are positive.
struct GLRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

// Returns the cached rule for `order` points (order >= 1).  Thread-safe.
const GLRule& gauss_legendre(int order);

// Composite Gauss-Legendre integral of f over [a, b] with `panels` equal
// panels of `order` points each.  Deterministic summation order.
double integrate(const std::function<double(double)>& f, double a, double b,
                 int order, int panels = 1);

// Panel-doubling composite integral: doubles the panel count until two
// successive values agree to rel_tol (relative to the last value, with an
// absolute floor), starting from one panel.  Throws Error("quadrature") if
// max_panels is exceeded before convergence.
double integrate_adaptive(const std::function<double(double)>& f, double a,
                          double b, int order, double rel_tol,
                          int max_panels = 4096);

} // namespace stefan
