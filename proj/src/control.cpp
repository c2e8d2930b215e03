#include "stefan/control.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "stefan/error.hpp"
#include "stefan/interpolate.hpp"

namespace stefan {

double ControlVector::linf() const {
    double m = 0.0;
    for (double v : values) m = std::max(m, std::abs(v));
    return m;
}

void validate_control(const ControlVector& cv, const Discretization& grid) {
    if (static_cast<long>(cv.values.size()) != grid.cell_count())
        throw Error("control", "expected one value per cell, got " +
                                   std::to_string(cv.values.size()));
    if (!(cv.R >= 0.0))
        throw Error("control", "bound must be nonnegative");
    const double norm = cv.linf();
    if (norm > cv.R * (1.0 + 1e-12))
        throw Error("control", "sup norm " + std::to_string(norm) +
                                   " exceeds the bound " +
                                   std::to_string(cv.R));
}

SpaceTimeFn lift_P(ControlVector cv, std::shared_ptr<const Discretization> grid) {
    return [cv = std::move(cv), grid = std::move(grid)](
               std::span<const double> x, double t) -> double {
        const int k = time_slab(*grid, t);
        if (k < 1) return 0.0;
        const long cell = grid->cell_index(attributed_prism(*grid, x), k);
        return cv.values[static_cast<size_t>(cell)];
    };
}

ControlVector discretize_Q(const SpaceTimeFn& f, const Discretization& grid,
                           double R, int order) {
    ControlVector cv;
    cv.R = R;
    cv.values.assign(static_cast<size_t>(grid.cell_count()), 0.0);
    for (long p = 0; p < grid.prism_count(); ++p)
        for (int k = 1; k <= grid.n_t(); ++k)
            cv.values[static_cast<size_t>(grid.cell_index(p, k))] =
                steklov_cell(f, grid, p, k, order);
    return cv;
}

CostReport cost_discrete(const DiscreteState& state,
                         const std::vector<double>& gamma_nodes) {
    const Discretization& grid = *state.grid;
    const std::vector<double>& final_level = state.v.back();
    CostReport report;
    report.contributions.assign(static_cast<size_t>(grid.prism_count()), 0.0);
    for (long p = 0; p < grid.prism_count(); ++p) {
        const size_t corner = static_cast<size_t>(grid.prism_corner_node(p));
        const double diff = final_level[corner] - gamma_nodes[corner];
        report.contributions[static_cast<size_t>(p)] =
            grid.cell_volume() * diff * diff;
    }
    for (double c : report.contributions) report.total += c;
    return report;
}

SolveContext make_context(const Domain& dom, const ProblemFields& fields,
                          const MonotoneGraph& base, int n_moll,
                          double a_floor, double h, int n_t, double sum_b_inf) {
    SolveContext ctx;
    CoeffNorms norms{sum_b_inf, base.slope_floor()};
    ctx.grid = std::make_shared<Discretization>(
        build_discretization(dom, h, n_t, norms));
    ctx.graph = std::make_shared<MollifiedGraph>(base, n_moll);
    ctx.coeff = build_coefficients(fields, *ctx.grid, a_floor);
    return ctx;
}

DiscreteState solve_with_control(const SolveContext& ctx,
                                 const ControlVector& cv,
                                 const SolverOptions& options) {
    validate_control(cv, *ctx.grid);
    StateProblem problem;
    problem.grid = ctx.grid;
    problem.graph = ctx.graph;
    problem.coeff = ctx.coeff;
    problem.coeff.f = cv.values; // cell averages of the lift are the entries
    problem.shift = ctx.shift;
    return solve_state(problem, options);
}

double cost_of_control(const SolveContext& ctx, const ControlVector& cv,
                       const SolverOptions& options) {
    const DiscreteState st = solve_with_control(ctx, cv, options);
    return cost_discrete(st, ctx.coeff.gamma).total;
}

double cost_continuous_reference(const SolveContext& fine,
                                 const SpaceTimeFn& field,
                                 const SolverOptions& options, int order) {
    ControlVector cv = discretize_Q(field, *fine.grid, 0.0, order);
    cv.R = cv.linf(); // averaged entries define their own feasible bound
    return cost_of_control(fine, cv, options);
}

void write_control_csv(const std::string& path, const ControlVector& cv,
                       const Discretization& grid,
                       const std::vector<std::string>& header_lines) {
    validate_control(cv, grid);
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error("io", "cannot open " + path + " for writing");
    for (const std::string& line : header_lines) out << "# " << line << '\n';
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", cv.R);
    out << "# R " << buf << '\n';
    const int d = grid.dim();
    for (int i = 1; i <= d; ++i) out << 'p' << i << ',';
    out << "k,value\n";
    std::vector<int> multi(static_cast<size_t>(d));
    for (int k = 1; k <= grid.n_t(); ++k)
        for (long p = 0; p < grid.prism_count(); ++p) {
            grid.prism_multi(p, multi.data());
            for (int i = 0; i < d; ++i) out << multi[static_cast<size_t>(i)] << ',';
            const long cell = grid.cell_index(p, k);
            std::snprintf(buf, sizeof buf, "%.17g",
                          cv.values[static_cast<size_t>(cell)]);
            out << k << ',' << buf << '\n';
        }
    if (!out)
        throw Error("io", "failed writing " + path);
}

ControlVector read_control_csv(const std::string& path,
                               const Discretization& grid) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("io", "cannot open " + path);
    ControlVector cv;
    cv.values.assign(static_cast<size_t>(grid.cell_count()), 0.0);
    std::vector<bool> seen(cv.values.size(), false);
    const int d = grid.dim();
    std::vector<int> multi(static_cast<size_t>(d));
    std::string line;
    bool header_skipped = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            if (line.rfind("# R ", 0) == 0) cv.R = std::stod(line.substr(4));
            continue;
        }
        if (!header_skipped) { // column header row
            header_skipped = true;
            continue;
        }
        size_t pos = 0;
        auto next_field = [&]() {
            const size_t comma = line.find(',', pos);
            const std::string field = line.substr(
                pos, comma == std::string::npos ? std::string::npos
                                                : comma - pos);
            pos = comma == std::string::npos ? line.size() : comma + 1;
            return field;
        };
        try {
            for (int i = 0; i < d; ++i)
                multi[static_cast<size_t>(i)] = std::stoi(next_field());
            const int k = std::stoi(next_field());
            const double value = std::stod(next_field());
            if (k < 1 || k > grid.n_t())
                throw Error("control.csv",
                            "time index " + std::to_string(k) + " out of range");
            const long cell = grid.cell_index(grid.prism_flat(multi.data()), k);
            cv.values[static_cast<size_t>(cell)] = value;
            seen[static_cast<size_t>(cell)] = true;
        } catch (const std::invalid_argument&) {
            throw Error("control.csv", "malformed row: " + line);
        } catch (const std::out_of_range&) {
            throw Error("control.csv", "malformed row: " + line);
        }
    }
    for (size_t i = 0; i < seen.size(); ++i)
        if (!seen[i])
            throw Error("control.csv",
                        "missing cell " + std::to_string(i) + " of " +
                            std::to_string(seen.size()));
    return cv;
}

} // namespace stefan
