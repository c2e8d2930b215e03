#pragma once

#include <span>

#include "stefan/solver.hpp"

namespace stefan {

// Evaluation modes for a discrete state over the space-time box.
//
//   CellConstant      constant on each cell, value of the natural corner,
//                     attributed to cell interior plus top face
//   ForwardDiff       like CellConstant but carrying the forward x_i
//                     difference of the corner (needs an axis)
//   SpaceLinearHold   multilinear in x on each slice, held constant over
//                     each time slab
//   SpaceTimeLinear   multilinear in x and linear in t; matches the nodal
//                     values exactly at lattice points
enum class InterpMode { CellConstant, ForwardDiff, SpaceLinearHold, SpaceTimeLinear };

// Evaluate one mode at (x, t).  Points on a face between cells resolve to
// the cell whose natural corner is lexicographically smaller; t on a slab
// boundary belongs to the earlier slab.  Throws Error("domain") for points
// outside the closed box.  axis is used by ForwardDiff only.
double interp_eval(const DiscreteState& state, InterpMode mode,
                   std::span<const double> x, double t, int axis = 0);

// Multilinear interpolation of one time level over the spatial box.
double interp_slice(const DiscreteState& state, int k,
                    std::span<const double> x);

// Prism owning x under the face convention above (smaller corner wins).
long attributed_prism(const Discretization& grid, std::span<const double> x);

// Slab owning t under the (t_{k-1}, t_k] convention, clamped to [0, n]; 0
// means the initial face, which belongs to no cell.
int time_slab(const Discretization& grid, double t);

// Discrete norms of a state: the sup norm and the three energy sums
//   time_diff_sq   sum_k tau sum_prisms h^d (backward time difference)^2
//   grad_sq(k)     sum_prisms h^d sum_i (forward x_i difference)^2
//   cross_diff_sq  sum_k tau^2 sum_prisms h^d sum_i (x_i diff of time diff)^2
// with grad maxima reported over k = 1..n and over k = 0..n.
struct DiscreteNorms {
    double linf = 0.0;
    double time_diff_sq = 0.0;
    double grad_max_sq = 0.0;     // max over k = 1..n
    double grad_max_all_sq = 0.0; // max over k = 0..n
    double cross_diff_sq = 0.0;
};

DiscreteNorms discrete_norms(const DiscreteState& state);

// Exact squared L2 norms over the space-time box of the SpaceTimeLinear
// interpolant's derivatives, by per-cell two-point tensor quadrature (the
// integrands are polynomials of degree two per variable, so this is exact).
double l2_sq_grad_space(const DiscreteState& state);
double l2_sq_dt(const DiscreteState& state);

// Exact squared L2 distance between the SpaceLinearHold and SpaceTimeLinear
// modes.
double l2_sq_hold_minus_linear(const DiscreteState& state);

// ||final multilinear slice - cell-constant field at the final time|| in
// L2 over the spatial box, exact per-prism quadrature.
double l2_mismatch_gap(const DiscreteState& state);

// L2 norm over the space-time box of (SpaceTimeLinear - ref) by per-cell
// tensor Gauss-Legendre of the given order.
double l2_error_vs(const DiscreteState& state, const SpaceTimeFn& ref,
                   int order = 4);

// L2 norm of a function over the space-time box on this grid's cells.
double l2_space_time(const SpaceTimeFn& f, const Discretization& grid,
                     int order = 4);

} // namespace stefan
