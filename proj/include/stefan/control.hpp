#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "stefan/solver.hpp"

namespace stefan {

// Per-cell source values with the box bound they are required to satisfy.
struct ControlVector {
    std::vector<double> values; // indexed like cells: (k-1)*prisms + prism
    double R = 0.0;

    double linf() const;
};

// Size and bound membership; throws Error("control") on violation.
void validate_control(const ControlVector& cv, const Discretization& grid);

// Lift to a cellwise-constant space-time field: the cell value on each
// cell's interior and top face (faces resolve to the smaller-cornered cell),
// zero on the initial face.  Captures its inputs by value.
SpaceTimeFn lift_P(ControlVector cv, std::shared_ptr<const Discretization> grid);

// Cell Steklov averages of a bounded field, entry per cell.  Averaging can
// only shrink the sup norm, so fields within R produce vectors within R.
ControlVector discretize_Q(const SpaceTimeFn& f, const Discretization& grid,
                           double R, int order = 4);

// Final-time tracking cost: sum over prisms of h^d |v_corner(n) - Gamma|^2,
// with per-prism contributions retained.
struct CostReport {
    double total = 0.0;
    std::vector<double> contributions;
};

CostReport cost_discrete(const DiscreteState& state,
                         const std::vector<double>& gamma_nodes);

// Everything fixed about one forward problem except the source cells: grid,
// smoothed graph, averaged coefficients and data.  Solves against different
// control vectors reuse all of it.
struct SolveContext {
    std::shared_ptr<const Discretization> grid;
    std::shared_ptr<const MollifiedGraph> graph;
    CoefficientGrid coeff;
    std::vector<double> shift;
};

SolveContext make_context(const Domain& dom, const ProblemFields& fields,
                          const MonotoneGraph& base, int n_moll,
                          double a_floor, double h, int n_t, double sum_b_inf);

// Forward solve with the control as the source term.  The lifted field's
// cell averages are the control entries themselves, so the source slots are
// filled directly.
DiscreteState solve_with_control(const SolveContext& ctx,
                                 const ControlVector& cv,
                                 const SolverOptions& options = {});

double cost_of_control(const SolveContext& ctx, const ControlVector& cv,
                       const SolverOptions& options = {});

// Reference value for the continuous cost of a control field: discretize on
// the (finer) context's grid, solve there, and evaluate the tracking cost.
// The caller picks the fine grid; a ratio of at least 4 in both steps keeps
// the surrogate error subdominant.
double cost_continuous_reference(const SolveContext& fine,
                                 const SpaceTimeFn& field,
                                 const SolverOptions& options = {},
                                 int order = 4);

// CSV form of a control vector: optional '#'-prefixed header lines, a "# R"
// line, a column header, then one row (p1..pd, k, value) per cell with the
// value printed to full precision.  read_control_csv inverts it bitwise.
void write_control_csv(const std::string& path, const ControlVector& cv,
                       const Discretization& grid,
                       const std::vector<std::string>& header_lines = {});

ControlVector read_control_csv(const std::string& path,
                               const Discretization& grid);

} // namespace stefan
