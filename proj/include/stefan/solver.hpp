#pragma once

#include <memory>
#include <vector>

#include "stefan/graph.hpp"
#include "stefan/grid.hpp"

namespace stefan {

// One nonlinear forward problem: grid, smoothed graph, averaged data, and an
// optional per-node shift of the graph argument (the time-difference term
// reads b_n(v + shift); used to re-center problems whose physical state is
// the solved state plus a known background).
struct StateProblem {
    std::shared_ptr<const Discretization> grid;
    std::shared_ptr<const MollifiedGraph> graph;
    CoefficientGrid coeff;
    std::vector<double> shift; // empty means zero

    double shift_at(long node) const {
        return shift.empty() ? 0.0 : shift[static_cast<size_t>(node)];
    }
};

struct SolverOptions {
    double tol_fp = 1e-10; // sweep stop: max nodal update
    double tol_sc = 1e-13; // scalar residual
    long max_sweeps = 500000;
    bool parallel = true;        // OpenMP sweep kernel vs serial reference
    bool record_updates = false; // keep every A_N per step
};

struct StepDiagnostics {
    int k = 0;
    long sweeps = 0;
    double first_update = 0.0;
    double last_update = 0.0;
    double max_ratio = 0.0; // max of A_N / A_{N-1} over the step
    double residual = 0.0;  // max interior residual, time-difference form
    double zeta_min = 0.0;  // min chord slope of b_n between time levels
    std::vector<double> updates;
};

struct DiscreteState {
    std::shared_ptr<const Discretization> grid;
    std::vector<std::vector<double>> v; // [k][node], k = 0..n_t
    double delta = 0.0;
    std::vector<StepDiagnostics> steps;
};

// Solves A * b_n(v + shift) + S * v = rhs for the unique root of the
// strictly increasing left side (requires A >= 0 and A * slope_floor + S > 0,
// else Error("monotone.scalar")).  Bracketed bisection to width 1e-2, then
// Newton safeguarded by the bracket, until the residual is within tol (with
// a roundoff floor proportional to the term magnitudes).
double scalar_monotone_solve(const MollifiedGraph& graph, double A, double S,
                             double rhs, double shift, double tol,
                             double initial_guess);

// Worst case over interior nodes and time levels of the one-sweep
// contraction bound.  Throws Error("contraction") if a positivity condition
// fails at some cell; the result is in (0, 1).
double contraction_factor(const StateProblem& problem);

// Runs all time levels: level 0 takes the averaged initial data at interior
// nodes and zero on the boundary, each later level iterates per-node scalar
// solves until the update and residual tolerances hold.  Rejects
// ("monotone.offdiag" / "monotone.scalar") if the positivity conditions on
// the stencil weights fail.  Results are bitwise independent of the worker
// count.
DiscreteState solve_state(const StateProblem& problem,
                          const SolverOptions& options = {});

} // namespace stefan
