#include "stefan/solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>

#include "stefan/error.hpp"

namespace stefan {
namespace {

// Flat ids an interior node needs during a sweep: itself, its 2d neighbors,
// its own prism and the d prisms shifted back one step per axis.  Cell ids
// follow by adding (k - 1) * prism_count.
struct Stencil {
    std::vector<long> node;                    // [i]
    std::vector<std::vector<long>> nb_plus;    // [axis][i]
    std::vector<std::vector<long>> nb_minus;   // [axis][i]
    std::vector<long> prism;                   // [i]
    std::vector<std::vector<long>> prism_back; // [axis][i]
};

Stencil build_stencil(const Discretization& grid) {
    const int d = grid.dim();
    Stencil st;
    st.node.reserve(static_cast<size_t>(grid.interior_count()));
    st.nb_plus.resize(static_cast<size_t>(d));
    st.nb_minus.resize(static_cast<size_t>(d));
    st.prism.reserve(static_cast<size_t>(grid.interior_count()));
    st.prism_back.resize(static_cast<size_t>(d));
    for (long node = 0; node < grid.node_count(); ++node) {
        if (grid.node_on_boundary(node)) continue;
        st.node.push_back(node);
        st.prism.push_back(grid.node_prism(node));
        for (int a = 0; a < d; ++a) {
            st.nb_plus[static_cast<size_t>(a)].push_back(
                grid.node_neighbor(node, a, +1));
            const long back = grid.node_neighbor(node, a, -1);
            st.nb_minus[static_cast<size_t>(a)].push_back(back);
            st.prism_back[static_cast<size_t>(a)].push_back(
                grid.node_prism(back));
        }
    }
    return st;
}

// Per-node stencil weights at one time level, all scaled by h^2 like the
// nodal equation itself: cp/cm multiply the forward/backward neighbors and
// diag adds to the unknown.  rhs0 carries the data terms that do not change
// within the level.
struct LevelWeights {
    std::vector<double> diag;            // [i]
    std::vector<std::vector<double>> cp; // [axis][i]
    std::vector<std::vector<double>> cm; // [axis][i]
    std::vector<double> rhs0;            // [i]
};

LevelWeights build_level_weights(const StateProblem& problem,
                                 const Stencil& st, int k, double A,
                                 const std::vector<double>& prev) {
    const Discretization& grid = *problem.grid;
    const CoefficientGrid& cg = problem.coeff;
    const int d = grid.dim();
    const double h = grid.h();
    const double h2 = h * h;
    const long base = static_cast<long>(k - 1) * grid.prism_count();
    const size_t n = st.node.size();

    LevelWeights w;
    w.diag.assign(n, 0.0);
    w.cp.assign(static_cast<size_t>(d), std::vector<double>(n, 0.0));
    w.cm.assign(static_cast<size_t>(d), std::vector<double>(n, 0.0));
    w.rhs0.assign(n, 0.0);

    const double floor = problem.graph->base().slope_floor();
    for (size_t i = 0; i < n; ++i) {
        const long self = st.prism[i] + base;
        double diag = h2 * cg.r[static_cast<size_t>(self)];
        for (int a = 0; a < d; ++a) {
            const size_t ax = static_cast<size_t>(a);
            const long backc = st.prism_back[ax][i] + base;
            const double a_here = cg.a[ax][static_cast<size_t>(self)];
            const double a_back = cg.a[ax][static_cast<size_t>(backc)];
            const double b_back = cg.b[ax][static_cast<size_t>(backc)];
            const double b_here = cg.b[ax][static_cast<size_t>(self)];
            const double c_here = cg.c[ax][static_cast<size_t>(self)];
            const double cp = a_here - h * c_here;
            const double cm = a_back - h * b_back;
            if (cp < 0.0)
                throw Error("monotone.offdiag",
                            "forward weight negative on axis " +
                                std::to_string(a) + " at cell " +
                                std::to_string(self));
            if (cm < 0.0)
                throw Error("monotone.offdiag",
                            "backward weight negative on axis " +
                                std::to_string(a) + " at cell " +
                                std::to_string(self));
            w.cp[ax][i] = cp;
            w.cm[ax][i] = cm;
            diag += a_here + a_back - h * b_here - h * c_here;
        }
        w.diag[i] = diag;
        if (A * floor + diag <= 0.0)
            throw Error("monotone.scalar",
                        "graph slope floor plus diagonal not positive at cell " +
                            std::to_string(self));
        const double s = problem.shift_at(st.node[i]);
        w.rhs0[i] =
            A * problem.graph->value(prev[static_cast<size_t>(st.node[i])] + s) +
            h2 * cg.f[static_cast<size_t>(self)];
    }
    return w;
}

double neighbor_sum(const LevelWeights& w, const Stencil& st,
                    const std::vector<double>& v, int d, size_t i) {
    double s = 0.0;
    for (int a = 0; a < d; ++a) {
        const size_t ax = static_cast<size_t>(a);
        s += w.cp[ax][i] * v[static_cast<size_t>(st.nb_plus[ax][i])] +
             w.cm[ax][i] * v[static_cast<size_t>(st.nb_minus[ax][i])];
    }
    return s;
}

} // namespace

double scalar_monotone_solve(const MollifiedGraph& graph, double A, double S,
                             double rhs, double shift, double tol,
                             double initial_guess) {
    const double m = A * graph.base().slope_floor() + S;
    if (!(A >= 0.0) || !(m > 0.0))
        throw Error("monotone.scalar", "left side is not strictly increasing");

    const auto g = [&](double v) {
        return A * graph.value(v + shift) + S * v - rhs;
    };

    double v0 = initial_guess;
    double g0 = g(v0);
    const double tol_eff =
        std::max(tol, 1e-15 * (std::abs(rhs) + std::abs(S * v0) +
                               std::abs(g0 - S * v0 + rhs)));
    if (std::abs(g0) <= tol_eff) return v0;

    // Slope >= m gives a guaranteed bracket around the root.
    double lo, hi, glo, ghi;
    if (g0 > 0.0) {
        hi = v0;
        ghi = g0;
        lo = v0 - g0 / m;
        glo = g(lo);
        while (glo > 0.0) { // roundoff at the edge; push out geometrically
            const double width = hi - lo;
            lo -= std::max(width, 1e-12);
            glo = g(lo);
        }
    } else {
        lo = v0;
        glo = g0;
        hi = v0 - g0 / m;
        ghi = g(hi);
        while (ghi < 0.0) {
            const double width = hi - lo;
            hi += std::max(width, 1e-12);
            ghi = g(hi);
        }
    }
    if (std::abs(glo) <= tol_eff) return lo;
    if (std::abs(ghi) <= tol_eff) return hi;

    while (hi - lo > 1e-2) {
        const double mid = 0.5 * (lo + hi);
        const double gm = g(mid);
        if (std::abs(gm) <= tol_eff) return mid;
        if (gm > 0.0) {
            hi = mid;
            ghi = gm;
        } else {
            lo = mid;
            glo = gm;
        }
    }

    // Newton from the bracket midpoint; any step leaving the bracket is
    // replaced by bisection, so progress is monotone.
    double v = 0.5 * (lo + hi);
    double gv = g(v);
    for (int it = 0; it < 200; ++it) {
        if (std::abs(gv) <= tol_eff) return v;
        if (gv > 0.0)
            hi = v;
        else
            lo = v;
        const double dg = A * graph.derivative(v + shift) + S;
        double next = v - gv / dg;
        if (!(next > lo) || !(next < hi)) next = 0.5 * (lo + hi);
        v = next;
        gv = g(v);
    }
    throw Error("monotone.scalar", "scalar iteration failed to converge");
}

double contraction_factor(const StateProblem& problem) {
    const Discretization& grid = *problem.grid;
    const CoefficientGrid& cg = problem.coeff;
    const int d = grid.dim();
    const double h = grid.h();
    const double A = h * h / grid.tau();
    const double floor = problem.graph->base().slope_floor();
    const Stencil st = build_stencil(grid);

    double delta = 0.0;
    for (int k = 1; k <= grid.n_t(); ++k) {
        const long base = static_cast<long>(k - 1) * grid.prism_count();
        for (size_t i = 0; i < st.node.size(); ++i) {
            const long self = st.prism[i] + base;
            double num = A * floor + h * h * cg.r[static_cast<size_t>(self)];
            double den = 0.0;
            for (int a = 0; a < d; ++a) {
                const size_t ax = static_cast<size_t>(a);
                const long backc = st.prism_back[ax][i] + base;
                num += h * (cg.b[ax][static_cast<size_t>(backc)] -
                            cg.b[ax][static_cast<size_t>(self)]);
                den += cg.a[ax][static_cast<size_t>(self)] +
                       cg.a[ax][static_cast<size_t>(backc)] -
                       h * cg.b[ax][static_cast<size_t>(backc)] -
                       h * cg.c[ax][static_cast<size_t>(self)];
            }
            if (!(num > 0.0) || !(den > 0.0))
                throw Error("contraction",
                            "sweep map is not a guaranteed contraction at cell " +
                                std::to_string(self));
            delta = std::max(delta, den / (den + num));
        }
    }
    return delta;
}

DiscreteState solve_state(const StateProblem& problem,
                          const SolverOptions& options) {
    const Discretization& grid = *problem.grid;
    const int d = grid.dim();
    const double h2 = grid.h() * grid.h();
    const double A = h2 / grid.tau();
    const MollifiedGraph& graph = *problem.graph;
    const Stencil st = build_stencil(grid);
    const long n_int = static_cast<long>(st.node.size());

    DiscreteState out;
    out.grid = problem.grid;
    out.delta = contraction_factor(problem);
    out.v.assign(static_cast<size_t>(grid.n_t()) + 1,
                 std::vector<double>(static_cast<size_t>(grid.node_count()),
                                     0.0));
    for (long i = 0; i < n_int; ++i) {
        const size_t node = static_cast<size_t>(st.node[static_cast<size_t>(i)]);
        out.v[0][node] = problem.coeff.phi[node];
    }

    // Once the update criterion holds, stop only when the equation residual
    // (in the per-node form, divided back by h^2) is small against the data.
    const double stop_update =
        std::max(options.tol_fp, options.tol_fp * (1.0 - out.delta) / out.delta);

    std::vector<double> vold(static_cast<size_t>(grid.node_count()), 0.0);
    std::vector<double> vnew(static_cast<size_t>(grid.node_count()), 0.0);
    std::vector<double> scratch(static_cast<size_t>(n_int), 0.0);
    // Scalar-solve failures must not escape the parallel region; the lowest
    // failing node wins so the thrown error is deterministic.
    std::vector<std::exception_ptr> errs(static_cast<size_t>(n_int));

    for (int k = 1; k <= grid.n_t(); ++k) {
        const std::vector<double>& prev = out.v[static_cast<size_t>(k - 1)];
        const LevelWeights w = build_level_weights(problem, st, k, A, prev);
        vold = prev;
        std::fill(vnew.begin(), vnew.end(), 0.0);

        StepDiagnostics diag;
        diag.k = k;
        bool update_ok = false;
        double prev_update = 0.0;

        for (long sweep = 1;; ++sweep) {
            if (sweep > options.max_sweeps)
                throw Error("solver.sweeps",
                            "sweep budget exhausted at level " +
                                std::to_string(k));

#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (options.parallel)
#endif
            for (long i = 0; i < n_int; ++i) {
                const size_t ii = static_cast<size_t>(i);
                const size_t node = static_cast<size_t>(st.node[ii]);
                try {
                    const double rhs =
                        w.rhs0[ii] + neighbor_sum(w, st, vold, d, ii);
                    vnew[node] = scalar_monotone_solve(
                        graph, A, w.diag[ii], rhs,
                        problem.shift_at(st.node[ii]), options.tol_sc,
                        vold[node]);
                    errs[ii] = nullptr;
                } catch (...) {
                    errs[ii] = std::current_exception();
                }
            }
            for (const std::exception_ptr& e : errs)
                if (e) std::rethrow_exception(e);

            double update = 0.0;
            for (long i = 0; i < n_int; ++i) {
                const size_t node = static_cast<size_t>(st.node[static_cast<size_t>(i)]);
                update = std::max(update, std::abs(vnew[node] - vold[node]));
            }
            std::swap(vold, vnew);

            diag.sweeps = sweep;
            diag.last_update = update;
            if (sweep == 1)
                diag.first_update = update;
            else if (prev_update > 0.0)
                diag.max_ratio =
                    std::max(diag.max_ratio, update / prev_update);
            prev_update = update;
            if (options.record_updates) diag.updates.push_back(update);

            update_ok = update <= stop_update;
            if (!update_ok) continue;

            // Residual pass over the settled iterate in vold.
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (options.parallel)
#endif
            for (long i = 0; i < n_int; ++i) {
                const size_t ii = static_cast<size_t>(i);
                const size_t node = static_cast<size_t>(st.node[ii]);
                const double s = problem.shift_at(st.node[ii]);
                const double lhs = A * graph.value(vold[node] + s) +
                                   w.diag[ii] * vold[node];
                const double rhs =
                    w.rhs0[ii] + neighbor_sum(w, st, vold, d, ii);
                scratch[ii] = std::abs(lhs - rhs) / h2;
            }
            double resid = 0.0, rhs_sup = 0.0;
            for (long i = 0; i < n_int; ++i) {
                const size_t ii = static_cast<size_t>(i);
                resid = std::max(resid, scratch[ii]);
                const double rhs =
                    w.rhs0[ii] + neighbor_sum(w, st, vold, d, ii);
                rhs_sup = std::max(rhs_sup, std::abs(rhs) / h2);
            }
            diag.residual = resid;
            if (resid <= options.tol_fp * (1.0 + rhs_sup)) break;
            // An exact fixed point of the sweep map cannot change on any
            // further sweep, so the residual above is final.  Every scalar
            // equation is then satisfied to tol_sc, which near zero data can
            // sit above the data-relative threshold once divided by h^2.
            if (update == 0.0) break;
        }

        // Chord slope of the smoothed graph between consecutive levels.
        double zeta_min = std::numeric_limits<double>::infinity();
        for (long i = 0; i < n_int; ++i) {
            const size_t node = static_cast<size_t>(st.node[static_cast<size_t>(i)]);
            const double s = problem.shift_at(st.node[static_cast<size_t>(i)]);
            const double dv = vold[node] - prev[node];
            double zeta;
            if (std::abs(dv) >
                1e-14 * (1.0 + std::abs(vold[node]) + std::abs(prev[node])))
                zeta = (graph.value(vold[node] + s) -
                        graph.value(prev[node] + s)) /
                       dv;
            else
                zeta = graph.derivative(vold[node] + s);
            zeta_min = std::min(zeta_min, zeta);
        }
        diag.zeta_min = zeta_min;

        out.v[static_cast<size_t>(k)] = vold;
        out.steps.push_back(std::move(diag));
    }
    return out;
}

} // namespace stefan
