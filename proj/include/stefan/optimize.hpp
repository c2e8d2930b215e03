#pragma once
// Projected-descent search for box-constrained discrete controls minimizing
// the tracking cost. Gradients come from central finite differences, one
// forward solve per probe; a coordinate poll handles stalls.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stefan/control.hpp"

namespace stefan {

struct OptimizerConfig {
    double R = 1.0;
    double epsilon = 1e-6; // stop once the accepted decrease or move falls below
    int max_outer = 200;
    double fd_step = 0.0; // 0 picks 1e-4 * max(1, R)
    double step_init = 1.0;
    double backtrack = 0.5;
    double step_min = 1e-12;
    double growth = 1.25; // step expansion after an accepted iteration
    unsigned long long seed = 0;
};

struct StepRecord {
    int outer = 0; // 1-based outer iteration
    double step = 0.0;
    double cost = 0.0; // cost at the trial point
    bool accepted = false;
};

struct OptimizerTrace {
    std::vector<double> cost_history; // accepted values, [0] is the start
    std::vector<StepRecord> steps;
    long gradient_solves = 0;
    std::vector<long> flagged_probes; // cells whose probes needed a halved retry
    double final_cost = 0.0;
    double lower_reference = 0.0; // the cost is a sum of squares
    bool certified = false;       // stopped by the stationarity test, not budget
    std::string stop_reason;
};

struct GradientResult {
    std::vector<double> g; // one entry per cell
    std::vector<long> flagged;
    long solves = 0;
};

// Central finite differences of the tracking cost at cv. Probes may leave the
// feasible box; a probe whose solve fails is retried once with half the step.
GradientResult fd_gradient(const SolveContext& ctx, const ControlVector& cv,
                           double fd_step = 0.0,
                           const SolverOptions& options = {});

struct DescentResult {
    ControlVector control;
    OptimizerTrace trace;
};

// Projected gradient with Armijo backtracking. Every iterate is clamped
// entrywise to [-R, R]. Starts from zero when no start point is given.
DescentResult projected_descent(const SolveContext& ctx,
                                const OptimizerConfig& cfg,
                                std::optional<ControlVector> start = {},
                                const SolverOptions& options = {});

struct ChainProblem {
    Domain dom;
    ProblemFields fields;
    MonotoneGraph graph;
    int n_moll = 8;
    double a_floor = 0.1;
    double sum_b_inf = 0.0;
    // When set, the tracking target on each grid is manufactured as the final
    // slice produced by this source, so the optimum is known to be reachable.
    SpaceTimeFn target_source;
};

struct CertificateRow {
    double h = 0.0;
    int n_t = 0;
    double epsilon = 0.0;
    double cost = 0.0;      // discrete cost of the returned iterate
    double surrogate = 0.0; // same functional on a finer grid, lifted iterate
    bool certified = false;
};

// Runs the optimizer on each grid of a refinement chain with target
// tolerance eps_coeff * h, reporting discrete and fine-grid costs.
std::vector<CertificateRow> epsilon_certificate(
    const ChainProblem& prob, std::span<const GridLevel> chain,
    const OptimizerConfig& base, double eps_coeff, int surrogate_refine = 4,
    const SolverOptions& options = {});

} // namespace stefan
