// Times the sweep kernels against the serial reference on a medium two-phase
// 2-D instance and cross-checks that both produce identical trajectories.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <span>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "stefan/control.hpp"
#include "stefan/solver.hpp"

using namespace stefan;

namespace {

SolveContext bench_context() {
    Domain dom{{{0.0, 1.0}, {0.0, 1.0}}, 0.5};
    ProblemFields f;
    f.a = {[](std::span<const double> x, double t) {
               return 1.0 + 0.2 * std::sin(x[0] + t);
           },
           [](std::span<const double> x, double) {
               return 1.0 + 0.1 * std::cos(x[1]);
           }};
    f.b = {[](std::span<const double> x, double) {
               return 0.1 * std::cos(3.0 * x[0]);
           },
           [](std::span<const double> x, double) {
               return 0.05 * std::sin(x[1]);
           }};
    f.r = [](std::span<const double>, double) { return 0.2; };
    f.f = [](std::span<const double> x, double t) {
        return 0.8 * std::cos(2.0 * x[0]) * std::sin(3.0 * x[1]) * (1.0 + t);
    };
    f.phi = [](std::span<const double> x) {
        return std::sin(3.141592653589793 * x[0]) *
               std::sin(3.141592653589793 * x[1]) -
               0.4;
    };
    PiecewiseLinear lower{{-40.0, 0.0}, {-40.0, 0.0}};
    PiecewiseLinear upper{{0.0, 40.0}, {0.0, 40.0}};
    MonotoneGraph graph({0.0}, {0.9}, {lower, upper}, 1.0);
    return make_context(dom, f, graph, 8, 0.8, 0.1, 20, 0.15);
}

double time_solve(const SolveContext& ctx, const SolverOptions& opts,
                  DiscreteState& out, int reps) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        out = solve_state(StateProblem{ctx.grid, ctx.graph, ctx.coeff, {}},
                          opts);
        const auto t1 = std::chrono::steady_clock::now();
        best = std::min(best,
                        std::chrono::duration<double>(t1 - t0).count());
    }
    return best;
}

bool identical(const DiscreteState& a, const DiscreteState& b) {
    for (size_t k = 0; k < a.v.size(); ++k)
        for (size_t i = 0; i < a.v[k].size(); ++i)
            if (a.v[k][i] != b.v[k][i]) return false;
    return true;
}

} // namespace

int main(int argc, char** argv) {
    const int reps = argc > 1 ? std::atoi(argv[1]) : 3;
    const SolveContext ctx = bench_context();
    std::printf("grid: %ld nodes, %d time steps\n", ctx.grid->node_count(),
                ctx.grid->n_t());

    SolverOptions serial;
    serial.parallel = false;
    DiscreteState ref;
    const double t_serial = time_solve(ctx, serial, ref, reps);
    std::printf("serial reference: %8.3f ms\n", 1e3 * t_serial);

    SolverOptions par;
    par.parallel = true;
    DiscreteState got;
#ifdef _OPENMP
    std::vector<int> counts{1};
    if (omp_get_max_threads() > 1) counts.push_back(omp_get_max_threads());
    for (int threads : counts) {
        omp_set_num_threads(threads);
        const double t = time_solve(ctx, par, got, reps);
        const bool same = identical(ref, got);
        std::printf("omp %2d threads:   %8.3f ms  speedup %5.2fx  %s\n",
                    threads, 1e3 * t, t_serial / t,
                    same ? "bitwise equal" : "MISMATCH");
        if (!same) return 1;
    }
#else
    const double t = time_solve(ctx, par, got, reps);
    std::printf("parallel path (no OpenMP): %8.3f ms  %s\n", 1e3 * t,
                identical(ref, got) ? "bitwise equal" : "MISMATCH");
    if (!identical(ref, got)) return 1;
#endif
    return 0;
}
