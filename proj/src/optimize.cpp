#include "stefan/optimize.hpp"

#include <algorithm>
#include <cmath>

#include "stefan/error.hpp"

namespace stefan {

namespace {

double boxed(double v, double R) { return std::clamp(v, -R, R); }

// Gradient probes may step outside the feasible box; widen the recorded bound
// so the perturbed vector still validates.
double probe_cost(const SolveContext& ctx, ControlVector cv,
                  const SolverOptions& opt) {
    cv.R = std::max(cv.R, cv.linf());
    return cost_of_control(ctx, cv, opt);
}

void check_config(const OptimizerConfig& cfg) {
    if (!(cfg.R >= 0.0) || !(cfg.epsilon > 0.0) || cfg.max_outer < 0 ||
        !(cfg.step_init > 0.0) || !(cfg.backtrack > 0.0) ||
        !(cfg.backtrack < 1.0) || !(cfg.step_min > 0.0) ||
        !(cfg.fd_step >= 0.0) || !(cfg.growth >= 1.0))
        throw Error("optimizer.config",
                    "need R >= 0, epsilon > 0, positive steps, backtrack in "
                    "(0,1), growth >= 1");
}

} // namespace

GradientResult fd_gradient(const SolveContext& ctx, const ControlVector& cv,
                           double fd_step, const SolverOptions& options) {
    validate_control(cv, *ctx.grid);
    const double step0 = fd_step > 0.0 ? fd_step : 1e-4 * std::max(1.0, cv.R);
    const long n = static_cast<long>(cv.values.size());

    GradientResult out;
    out.g.assign(static_cast<size_t>(n), 0.0);
    std::vector<char> failed(static_cast<size_t>(n), 0);

    // The probes are the parallel axis; keep each solve serial.
    SolverOptions probe_opt = options;
    probe_opt.parallel = false;

#pragma omp parallel for schedule(dynamic) if (options.parallel)
    for (long i = 0; i < n; ++i) {
        ControlVector plus = cv;
        ControlVector minus = cv;
        plus.values[static_cast<size_t>(i)] += step0;
        minus.values[static_cast<size_t>(i)] -= step0;
        try {
            const double cp = probe_cost(ctx, plus, probe_opt);
            const double cm = probe_cost(ctx, minus, probe_opt);
            out.g[static_cast<size_t>(i)] = (cp - cm) / (2.0 * step0);
        } catch (const Error&) {
            failed[static_cast<size_t>(i)] = 1;
        }
    }
    out.solves += 2 * n;

    for (long i = 0; i < n; ++i) {
        if (!failed[static_cast<size_t>(i)]) continue;
        out.flagged.push_back(i);
        const double s = 0.5 * step0;
        ControlVector plus = cv;
        ControlVector minus = cv;
        plus.values[static_cast<size_t>(i)] += s;
        minus.values[static_cast<size_t>(i)] -= s;
        out.g[static_cast<size_t>(i)] =
            (probe_cost(ctx, plus, probe_opt) -
             probe_cost(ctx, minus, probe_opt)) /
            (2.0 * s);
        out.solves += 2;
    }
    return out;
}

DescentResult projected_descent(const SolveContext& ctx,
                                const OptimizerConfig& cfg,
                                std::optional<ControlVector> start,
                                const SolverOptions& options) {
    check_config(cfg);

    DescentResult out;
    ControlVector& cv = out.control;
    OptimizerTrace& tr = out.trace;

    const long cells = ctx.grid->cell_count();
    cv.R = cfg.R;
    if (start) {
        if (static_cast<long>(start->values.size()) != cells)
            throw Error("control", "start point does not match the grid");
        cv.values = std::move(start->values);
        for (double& v : cv.values) v = boxed(v, cfg.R);
    } else {
        cv.values.assign(static_cast<size_t>(cells), 0.0);
    }

    double cost = cost_of_control(ctx, cv, options);
    tr.cost_history.push_back(cost);

    if (cfg.R == 0.0) {
        tr.final_cost = cost;
        tr.certified = true;
        tr.stop_reason = "degenerate box, only the zero control is feasible";
        return out;
    }

    double step = cfg.step_init;
    for (int outer = 1; outer <= cfg.max_outer; ++outer) {
        const GradientResult gr = fd_gradient(ctx, cv, cfg.fd_step, options);
        tr.gradient_solves += gr.solves;
        tr.flagged_probes.insert(tr.flagged_probes.end(), gr.flagged.begin(),
                                 gr.flagged.end());

        bool accepted = false;
        double trial_cost = 0.0;
        ControlVector trial = cv;
        while (step >= cfg.step_min) {
            double dir = 0.0; // Armijo reference for the projected move
            for (size_t i = 0; i < trial.values.size(); ++i) {
                trial.values[i] = boxed(cv.values[i] - step * gr.g[i], cfg.R);
                dir += gr.g[i] * (cv.values[i] - trial.values[i]);
            }
            trial_cost = cost_of_control(ctx, trial, options);
            const bool ok = dir > 0.0 && trial_cost <= cost - 1e-4 * dir;
            tr.steps.push_back({outer, step, trial_cost, ok});
            if (ok) {
                accepted = true;
                break;
            }
            step *= cfg.backtrack;
        }

        if (!accepted) {
            // The gradient direction stalled; poll coordinate moves before
            // declaring the point stationary.
            const double delta = std::max(cfg.epsilon, 8.0 * cfg.step_min);
            for (size_t i = 0; i < cv.values.size() && !accepted; ++i)
                for (const double s : {delta, -delta}) {
                    trial = cv;
                    trial.values[i] = boxed(cv.values[i] + s, cfg.R);
                    if (trial.values[i] == cv.values[i]) continue;
                    trial_cost = cost_of_control(ctx, trial, options);
                    const bool ok = trial_cost < cost;
                    tr.steps.push_back({outer, s, trial_cost, ok});
                    if (ok) {
                        accepted = true;
                        break;
                    }
                }
            if (!accepted) {
                tr.final_cost = cost;
                tr.certified = true;
                tr.stop_reason = "stationary within the poll radius";
                return out;
            }
            step = cfg.step_init; // fresh schedule after a poll move
        }

        double move = 0.0;
        for (size_t i = 0; i < cv.values.size(); ++i)
            move = std::max(move, std::abs(trial.values[i] - cv.values[i]));
        const double decrease = cost - trial_cost;
        cv.values = trial.values;
        cost = trial_cost;
        tr.cost_history.push_back(cost);
        step = std::min(step * cfg.growth, 1e6 * cfg.step_init);

        if (decrease < cfg.epsilon || move < cfg.epsilon) {
            tr.final_cost = cost;
            tr.certified = true;
            tr.stop_reason = decrease < cfg.epsilon ? "decrease below target"
                                                    : "move below target";
            return out;
        }
    }

    tr.final_cost = cost;
    tr.certified = false;
    tr.stop_reason = "iteration budget exhausted";
    return out;
}

std::vector<CertificateRow> epsilon_certificate(
    const ChainProblem& prob, std::span<const GridLevel> chain,
    const OptimizerConfig& base, double eps_coeff, int surrogate_refine,
    const SolverOptions& options) {
    if (!(eps_coeff > 0.0) || surrogate_refine < 2)
        throw Error("optimizer.config",
                    "certificate needs eps_coeff > 0 and refine >= 2");

    std::vector<CertificateRow> rows;
    for (const GridLevel& lvl : chain) {
        SolveContext ctx =
            make_context(prob.dom, prob.fields, prob.graph, prob.n_moll,
                         prob.a_floor, lvl.h, lvl.n_t, prob.sum_b_inf);
        if (prob.target_source) {
            const ControlVector ref =
                discretize_Q(prob.target_source, *ctx.grid, base.R);
            ctx.coeff.gamma = solve_with_control(ctx, ref, options).v.back();
        }

        OptimizerConfig cfg = base;
        cfg.epsilon = eps_coeff * lvl.h;
        DescentResult res = projected_descent(ctx, cfg, {}, options);

        SolveContext fine = make_context(
            prob.dom, prob.fields, prob.graph, prob.n_moll, prob.a_floor,
            lvl.h / surrogate_refine, lvl.n_t * surrogate_refine,
            prob.sum_b_inf);
        if (prob.target_source) {
            const ControlVector ref =
                discretize_Q(prob.target_source, *fine.grid, base.R);
            fine.coeff.gamma = solve_with_control(fine, ref, options).v.back();
        }
        const double surrogate = cost_continuous_reference(
            fine, lift_P(res.control, ctx.grid), options);

        rows.push_back({lvl.h, lvl.n_t, cfg.epsilon, res.trace.final_cost,
                        surrogate, res.trace.certified});
    }
    return rows;
}

} // namespace stefan
