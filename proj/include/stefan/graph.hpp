#pragma once

#include <vector>

namespace stefan {

// Closed interval; lo == hi off jump points.
struct Interval {
    double lo;
    double hi;
    bool singleton() const { return lo == hi; }
};

// Piecewise-linear function given by ascending knots; evaluation outside the
// knot range extends the terminal segments.
struct PiecewiseLinear {
    std::vector<double> knots;
    std::vector<double> values;

    double operator()(double y) const;
    double slope_at(double y) const; // slope of the segment containing y
};

// Maximal monotone graph: m ascending breakpoints with positive jumps, m+1
// increasing piecewise-linear branches, every segment slope >= slope_floor.
// Branch j covers (breakpoint[j-1], breakpoint[j]) and matches its right
// neighbor at the shared breakpoint, so the selection is single-valued off
// breakpoints and an interval of width jump[j] at breakpoint[j].
class MonotoneGraph {
public:
    MonotoneGraph(std::vector<double> breakpoints, std::vector<double> jumps,
                  std::vector<PiecewiseLinear> branches, double slope_floor);

    int phases() const { return static_cast<int>(branches_.size()); }
    double slope_floor() const { return slope_floor_; }
    const std::vector<double>& breakpoints() const { return breakpoints_; }
    const std::vector<double>& jumps() const { return jumps_; }

    // Set-valued evaluation: singleton off breakpoints, the full jump
    // interval at a breakpoint.
    Interval eval(double y) const;

    // Single-valued a.e. selection (lower branch at breakpoints): branch
    // value plus the sum of jumps below.
    double point_value(double y) const;

    // Branch segment slope at y (left branch at breakpoints).
    double slope_at(double y) const;

    // Ascending union of breakpoints and in-domain interior branch knots:
    // the points where the selection is not affine.
    const std::vector<double>& kinks() const { return kinks_; }

private:
    int branch_index(double y) const;

    std::vector<double> breakpoints_;
    std::vector<double> jumps_;
    std::vector<PiecewiseLinear> branches_;
    std::vector<double> offsets_; // offsets_[j] = sum of jumps below branch j
    std::vector<double> kinks_;
    double slope_floor_;
};

// Normalization constant of the unit-window kernel: 1 / integral of
// exp(-1/(1-u^2)) over [-1, 1], computed with the given Gauss-Legendre order
// by panel doubling.  The result times n is the factor in front of the
// kernel with window 1/n.  Throws Error("kernel.normalization") if an
// independent finer quadrature disagrees beyond 1e-12 relative.
double kernel_constant(int n, int quadrature_order);

// Smoothed selection b_n: the convolution of the graph selection with the
// compact bump kernel of window 1/n.  Strictly increasing with derivative
// >= slope_floor everywhere.
class MollifiedGraph {
public:
    MollifiedGraph(MonotoneGraph base, int n, int quadrature_order = 16);

    const MonotoneGraph& base() const { return base_; }
    int n() const { return n_; }
    double kernel_norm() const { return kernel_norm_; }
    int quadrature_order() const { return quadrature_order_; }
    double window() const { return 1.0 / n_; }

    // b_n(v).  Exact (no quadrature) when no kink lies within the window.
    double value(double v) const;

    // b_n'(v): branch-slope convolution plus jump * kernel terms.
    double derivative(double v) const;

    // Kernel omega_n evaluated at u.
    double omega(double u) const;

private:
    MonotoneGraph base_;
    int n_;
    int quadrature_order_;
    double kernel_norm_; // constant normalizing the unit-window kernel
};

} // namespace stefan
