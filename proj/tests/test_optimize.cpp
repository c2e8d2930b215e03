#include <cmath>
#include <cstddef>
#include <vector>

#include "doctest.h"
#include "stefan/error.hpp"
#include "stefan/optimize.hpp"
#include "support/oracles.hpp"

using namespace stefan;

namespace {

constexpr double kPi = 3.141592653589793;

MonotoneGraph two_phase(double nu) {
    PiecewiseLinear left{{-40.0, 0.0}, {-40.0, 0.0}};
    PiecewiseLinear right{{0.0, 40.0}, {0.0, 40.0}};
    return MonotoneGraph({0.0}, {nu}, {left, right}, 1.0);
}

MonotoneGraph identity_graph() {
    PiecewiseLinear ramp{{-50.0, 50.0}, {-50.0, 50.0}};
    return MonotoneGraph({}, {}, {ramp}, 1.0);
}

ProblemFields base_fields() {
    ProblemFields f;
    f.a = {[](std::span<const double>, double) { return 1.0; }};
    f.phi = [](std::span<const double> x) {
        return 1.2 * x[0] * (1.0 - x[0]) - 0.2;
    };
    return f;
}

SpaceTimeFn smooth_source() {
    return [](std::span<const double> x, double t) {
        return 0.5 * std::sin(3.0 * x[0]) * (1.0 - 0.5 * t);
    };
}

// Two-phase context on [0,1] x (0, 0.4] whose target is the final slice a
// known feasible source produces, so zero cost is attainable.
struct Recovery {
    SolveContext ctx;
    ControlVector f_star;
};

Recovery recovery_fixture(double h, int n_t) {
    Recovery r{make_context(Domain{{{0.0, 1.0}}, 0.4}, base_fields(),
                            two_phase(0.5), 8, 0.1, h, n_t, 0.0),
               {}};
    r.f_star = discretize_Q(smooth_source(), *r.ctx.grid, 1.0);
    r.ctx.coeff.gamma = solve_with_control(r.ctx, r.f_star).v.back();
    return r;
}

} // namespace

TEST_CASE("gradient vanishes where the target is met exactly") {
    const Recovery r = recovery_fixture(0.25, 2);
    const GradientResult gr = fd_gradient(r.ctx, r.f_star);
    CHECK(gr.flagged.empty());
    const double fd_step = 1e-4;
    for (double g : gr.g) CHECK(std::abs(g) <= 10.0 * 1e-10 / fd_step);
}

TEST_CASE("gradient agrees with a dense forward-difference sweep") {
    const Recovery r = recovery_fixture(0.25, 2);
    std::mt19937_64 rng(301);
    ControlVector cv;
    cv.R = 1.0;
    cv.values.resize(r.f_star.values.size());
    for (double& v : cv.values) v = oracle::uniform(rng, -0.5, 0.5);

    const GradientResult gr = fd_gradient(r.ctx, cv);
    const double base = cost_of_control(r.ctx, cv);
    const double delta = 1e-5;
    for (size_t i = 0; i < cv.values.size(); ++i) {
        ControlVector bumped = cv;
        bumped.values[i] += delta;
        const double sweep = (cost_of_control(r.ctx, bumped) - base) / delta;
        CHECK(std::abs(gr.g[i] - sweep) <= 1e-3);
        if (std::abs(gr.g[i]) > 1e-4) CHECK(gr.g[i] * sweep > 0.0);
    }
}

TEST_CASE("linear problems reproduce the assembled quadratic's gradient") {
    SolveContext ctx =
        make_context(Domain{{{0.0, 1.0}}, 0.4}, base_fields(), identity_graph(),
                     8, 0.1, 0.25, 2, 0.0);
    ctx.coeff.gamma.assign(static_cast<size_t>(ctx.grid->node_count()), 0.0);
    for (long nd = 0; nd < ctx.grid->node_count(); ++nd) {
        double x[2];
        ctx.grid->node_coords(nd, x);
        ctx.coeff.gamma[static_cast<size_t>(nd)] = 0.3 * std::sin(kPi * x[0]);
    }

    SolverOptions tight;
    tight.tol_fp = 1e-12;
    tight.tol_sc = 1e-14;
    const long cells = ctx.grid->cell_count();
    const long prisms = ctx.grid->prism_count();

    // With an identity graph the scheme is linear in the control, so final
    // slices superpose; assemble per-cell sensitivities by direct solves.
    ControlVector zero;
    zero.R = 1.0;
    zero.values.assign(static_cast<size_t>(cells), 0.0);
    const std::vector<double> v0 = solve_with_control(ctx, zero, tight).v.back();
    std::vector<std::vector<double>> sens(static_cast<size_t>(cells));
    for (long j = 0; j < cells; ++j) {
        ControlVector unit = zero;
        unit.values[static_cast<size_t>(j)] = 1.0;
        sens[static_cast<size_t>(j)] =
            solve_with_control(ctx, unit, tight).v.back();
        for (size_t nd = 0; nd < v0.size(); ++nd)
            sens[static_cast<size_t>(j)][nd] -= v0[nd];
    }

    std::mt19937_64 rng(302);
    ControlVector cv;
    cv.R = 1.0;
    cv.values.resize(static_cast<size_t>(cells));
    for (double& v : cv.values) v = oracle::uniform(rng, -0.6, 0.6);

    std::vector<double> resid(static_cast<size_t>(prisms));
    for (long p = 0; p < prisms; ++p) {
        const size_t c = static_cast<size_t>(ctx.grid->prism_corner_node(p));
        double acc = v0[c] - ctx.coeff.gamma[c];
        for (long j = 0; j < cells; ++j)
            acc += cv.values[static_cast<size_t>(j)] *
                   sens[static_cast<size_t>(j)][c];
        resid[static_cast<size_t>(p)] = acc;
    }
    std::vector<double> expect(static_cast<size_t>(cells), 0.0);
    for (long j = 0; j < cells; ++j)
        for (long p = 0; p < prisms; ++p) {
            const size_t c = static_cast<size_t>(ctx.grid->prism_corner_node(p));
            expect[static_cast<size_t>(j)] += 2.0 * ctx.grid->h() *
                                              resid[static_cast<size_t>(p)] *
                                              sens[static_cast<size_t>(j)][c];
        }

    const GradientResult gr = fd_gradient(ctx, cv, 0.0, tight);
    double scale = 1.0;
    for (double e : expect) scale = std::max(scale, std::abs(e));
    for (size_t j = 0; j < expect.size(); ++j)
        CHECK(std::abs(gr.g[j] - expect[j]) <= 1e-6 * scale);
}

TEST_CASE("descent recovers a feasible target source") {
    const Recovery r = recovery_fixture(0.25, 2);
    OptimizerConfig cfg;
    cfg.R = 1.0;
    cfg.epsilon = 1e-7;
    cfg.max_outer = 200;

    const DescentResult res = projected_descent(r.ctx, cfg);
    CHECK(res.trace.final_cost <= 1e-4);
    CHECK(res.trace.final_cost <= res.trace.cost_history.front());
    for (size_t i = 1; i < res.trace.cost_history.size(); ++i)
        CHECK(res.trace.cost_history[i] < res.trace.cost_history[i - 1]);
    for (double v : res.control.values) CHECK(std::abs(v) <= cfg.R);

    // Identical configuration, identical trace.
    const DescentResult rerun = projected_descent(r.ctx, cfg);
    REQUIRE(rerun.trace.cost_history.size() == res.trace.cost_history.size());
    for (size_t i = 0; i < res.trace.cost_history.size(); ++i)
        CHECK(rerun.trace.cost_history[i] == res.trace.cost_history[i]);
}

TEST_CASE("a zero-radius box returns the zero control at once") {
    const Recovery r = recovery_fixture(0.25, 2);
    OptimizerConfig cfg;
    cfg.R = 0.0;
    const DescentResult res = projected_descent(r.ctx, cfg);
    CHECK(res.trace.cost_history.size() == 1);
    CHECK(res.trace.certified);
    for (double v : res.control.values) CHECK(v == 0.0);
}

TEST_CASE("starting at the optimum stops without movement") {
    const Recovery r = recovery_fixture(0.25, 2);
    OptimizerConfig cfg;
    cfg.R = 1.0;
    const DescentResult res = projected_descent(r.ctx, cfg, r.f_star);
    CHECK(res.trace.final_cost == 0.0);
    CHECK(res.trace.certified);
    REQUIRE(res.control.values.size() == r.f_star.values.size());
    for (size_t i = 0; i < r.f_star.values.size(); ++i)
        CHECK(res.control.values[i] == r.f_star.values[i]);
}

TEST_CASE("certificates vanish when the target comes from the zero source") {
    ChainProblem prob{Domain{{{0.0, 1.0}}, 0.4},
                      base_fields(),
                      two_phase(0.5),
                      8,
                      0.1,
                      0.0,
                      [](std::span<const double>, double) { return 0.0; }};
    const std::vector<GridLevel> chain{{0.25, 2}, {0.125, 4}};
    OptimizerConfig base;
    base.R = 1.0;
    const auto rows = epsilon_certificate(prob, chain, base, 1e-3);
    REQUIRE(rows.size() == 2);
    for (size_t i = 0; i < rows.size(); ++i) {
        CHECK(rows[i].cost == 0.0);
        CHECK(rows[i].surrogate == 0.0);
        CHECK(rows[i].certified);
        CHECK(rows[i].epsilon == 1e-3 * chain[i].h);
    }
}

TEST_CASE("descent matches a box-constrained quadratic oracle") {
    SolveContext ctx =
        make_context(Domain{{{0.0, 1.0}}, 0.4}, base_fields(), identity_graph(),
                     8, 0.1, 0.25, 2, 0.0);
    ctx.coeff.gamma.assign(static_cast<size_t>(ctx.grid->node_count()), 0.0);
    for (long nd = 0; nd < ctx.grid->node_count(); ++nd) {
        double x[2];
        ctx.grid->node_coords(nd, x);
        ctx.coeff.gamma[static_cast<size_t>(nd)] = 0.3 * std::sin(kPi * x[0]);
    }

    SolverOptions tight;
    tight.tol_fp = 1e-12;
    tight.tol_sc = 1e-14;
    const double R = 0.15;
    const long cells = ctx.grid->cell_count();
    const long prisms = ctx.grid->prism_count();

    ControlVector zero;
    zero.R = R;
    zero.values.assign(static_cast<size_t>(cells), 0.0);
    const std::vector<double> v0 = solve_with_control(ctx, zero, tight).v.back();
    std::vector<std::vector<double>> sens(static_cast<size_t>(cells));
    for (long j = 0; j < cells; ++j) {
        ControlVector unit = zero;
        unit.R = 1.0;
        unit.values[static_cast<size_t>(j)] = 1.0;
        sens[static_cast<size_t>(j)] =
            solve_with_control(ctx, unit, tight).v.back();
        for (size_t nd = 0; nd < v0.size(); ++nd)
            sens[static_cast<size_t>(j)][nd] -= v0[nd];
    }

    const auto quad_cost = [&](const std::vector<double>& f) {
        double total = 0.0;
        for (long p = 0; p < prisms; ++p) {
            const size_t c =
                static_cast<size_t>(ctx.grid->prism_corner_node(p));
            double acc = v0[c] - ctx.coeff.gamma[c];
            for (long j = 0; j < cells; ++j)
                acc += f[static_cast<size_t>(j)] * sens[static_cast<size_t>(j)][c];
            total += ctx.grid->h() * acc * acc;
        }
        return total;
    };

    // The assembled quadratic must reproduce the solver-evaluated cost.
    {
        std::mt19937_64 rng(303);
        ControlVector probe;
        probe.R = R;
        probe.values.resize(static_cast<size_t>(cells));
        for (double& v : probe.values) v = oracle::uniform(rng, -R, R);
        const double direct = cost_of_control(ctx, probe, tight);
        CHECK(std::abs(direct - quad_cost(probe.values)) <=
              1e-9 * (1.0 + direct));
    }

    // Exact coordinate descent with clamping on the assembled quadratic.
    std::vector<double> f(static_cast<size_t>(cells), 0.0);
    std::vector<double> resid(static_cast<size_t>(prisms));
    for (long p = 0; p < prisms; ++p) {
        const size_t c = static_cast<size_t>(ctx.grid->prism_corner_node(p));
        resid[static_cast<size_t>(p)] = v0[c] - ctx.coeff.gamma[c];
    }
    for (int sweep = 0; sweep < 20000; ++sweep) {
        double change = 0.0;
        for (long j = 0; j < cells; ++j) {
            double num = 0.0;
            double den = 0.0;
            for (long p = 0; p < prisms; ++p) {
                const size_t c =
                    static_cast<size_t>(ctx.grid->prism_corner_node(p));
                const double s = sens[static_cast<size_t>(j)][c];
                num += resid[static_cast<size_t>(p)] * s;
                den += s * s;
            }
            if (den == 0.0) continue;
            const double old = f[static_cast<size_t>(j)];
            double next = old - num / den;
            next = std::min(R, std::max(-R, next));
            if (next == old) continue;
            for (long p = 0; p < prisms; ++p) {
                const size_t c =
                    static_cast<size_t>(ctx.grid->prism_corner_node(p));
                resid[static_cast<size_t>(p)] +=
                    (next - old) * sens[static_cast<size_t>(j)][c];
            }
            f[static_cast<size_t>(j)] = next;
            change = std::max(change, std::abs(next - old));
        }
        if (change < 1e-14) break;
    }
    const double qp_min = quad_cost(f);

    OptimizerConfig cfg;
    cfg.R = R;
    cfg.epsilon = 1e-9;
    cfg.max_outer = 400;
    const DescentResult res = projected_descent(ctx, cfg, {}, tight);
    CHECK(res.trace.final_cost >= qp_min - 1e-9);
    CHECK(res.trace.final_cost <= qp_min + 1e-6);
}
