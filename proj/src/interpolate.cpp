#include "stefan/interpolate.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "stefan/error.hpp"
#include "stefan/quadrature.hpp"

namespace stefan {
namespace {

void check_domain(const Discretization& grid, std::span<const double> x,
                  double t) {
    const Domain& dom = grid.domain();
    if (static_cast<int>(x.size()) != grid.dim())
        throw Error("domain", "query dimension mismatch");
    for (int i = 0; i < grid.dim(); ++i) {
        const auto& side = dom.box[static_cast<size_t>(i)];
        const double slack =
            1e-12 * (1.0 + std::abs(side[0]) + std::abs(side[1]));
        if (x[static_cast<size_t>(i)] < side[0] - slack ||
            x[static_cast<size_t>(i)] > side[1] + slack)
            throw Error("domain", "query outside the box on axis " +
                                      std::to_string(i));
    }
    const double tslack = 1e-12 * (1.0 + dom.T);
    if (t < -tslack || t > dom.T + tslack)
        throw Error("domain", "query outside the time interval");
}

// Per-axis prism index containing x, resolving lattice-plane hits to the
// smaller-cornered prism.
int attributed_index(const Discretization& grid, int axis, double x) {
    const double lo = grid.domain().box[static_cast<size_t>(axis)][0];
    const double r = (x - lo) / grid.h();
    double j = std::floor(r);
    if (j == r && j >= 1.0) j -= 1.0;
    const int m = grid.cells_per_axis()[static_cast<size_t>(axis)];
    return std::clamp(static_cast<int>(j), 0, m - 1);
}

// Prism containing x for continuous interpolation plus local coordinates in
// [0, 1] per axis.
void locate(const Discretization& grid, std::span<const double> x, int* multi,
            double* theta) {
    for (int i = 0; i < grid.dim(); ++i) {
        const double lo = grid.domain().box[static_cast<size_t>(i)][0];
        const double r = (x[static_cast<size_t>(i)] - lo) / grid.h();
        const int m = grid.cells_per_axis()[static_cast<size_t>(i)];
        int j = std::clamp(static_cast<int>(std::floor(r)), 0, m - 1);
        multi[i] = j;
        theta[i] = std::clamp(r - static_cast<double>(j), 0.0, 1.0);
    }
}

// Gather the 2^d corner values of one prism at time level k.
void gather_corners(const DiscreteState& state, long prism, int k,
                    double* out) {
    const Discretization& grid = *state.grid;
    const int d = grid.dim();
    const long corner = grid.prism_corner_node(prism);
    const std::vector<double>& level = state.v[static_cast<size_t>(k)];
    for (int mask = 0; mask < (1 << d); ++mask) {
        long node = corner;
        for (int i = 0; i < d; ++i)
            if (mask & (1 << i)) node = grid.node_neighbor(node, i, +1);
        out[mask] = level[static_cast<size_t>(node)];
    }
}

double mlin(const double* corners, const double* theta, int d) {
    double acc = 0.0;
    for (int mask = 0; mask < (1 << d); ++mask) {
        double w = 1.0;
        for (int i = 0; i < d; ++i)
            w *= (mask & (1 << i)) ? theta[i] : 1.0 - theta[i];
        acc += w * corners[mask];
    }
    return acc;
}

// d/dtheta_axis of the multilinear form (divide by h for d/dx).
double mlin_diff(const double* corners, const double* theta, int d, int axis) {
    double acc = 0.0;
    for (int mask = 0; mask < (1 << d); ++mask) {
        if (mask & (1 << axis)) continue;
        double w = 1.0;
        for (int i = 0; i < d; ++i) {
            if (i == axis) continue;
            w *= (mask & (1 << i)) ? theta[i] : 1.0 - theta[i];
        }
        acc += w * (corners[mask | (1 << axis)] - corners[mask]);
    }
    return acc;
}

constexpr int kMaxDim = 6;
constexpr int kMaxCorners = 1 << kMaxDim;

void check_dim(const Discretization& grid) {
    if (grid.dim() > kMaxDim)
        throw Error("dimension", "interpolation supports up to " +
                                     std::to_string(kMaxDim) + " axes");
}

// Per-cell accumulation with a deterministic serial reduction; body(cell)
// must not touch shared state.
template <typename Body>
double sum_over_cells(const Discretization& grid, const Body& body) {
    const long n = grid.cell_count();
    std::vector<double> part(static_cast<size_t>(n), 0.0);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (long c = 0; c < n; ++c) part[static_cast<size_t>(c)] = body(c);
    double total = 0.0;
    for (long c = 0; c < n; ++c) total += part[static_cast<size_t>(c)];
    return total;
}

const double kGL2Node = 0.5 / std::sqrt(3.0);

} // namespace

int time_slab(const Discretization& grid, double t) {
    const int k = static_cast<int>(std::ceil(t / grid.tau()));
    return std::clamp(k, 0, grid.n_t());
}

long attributed_prism(const Discretization& grid, std::span<const double> x) {
    int multi[kMaxDim];
    for (int i = 0; i < grid.dim(); ++i)
        multi[i] = attributed_index(grid, i, x[static_cast<size_t>(i)]);
    return grid.prism_flat(multi);
}

double interp_slice(const DiscreteState& state, int k,
                    std::span<const double> x) {
    const Discretization& grid = *state.grid;
    check_dim(grid);
    const int d = grid.dim();
    int multi[kMaxDim];
    double theta[kMaxDim];
    locate(grid, x, multi, theta);
    double corners[kMaxCorners];
    gather_corners(state, grid.prism_flat(multi), k, corners);
    return mlin(corners, theta, d);
}

double interp_eval(const DiscreteState& state, InterpMode mode,
                   std::span<const double> x, double t, int axis) {
    const Discretization& grid = *state.grid;
    check_domain(grid, x, t);

    if (mode == InterpMode::CellConstant || mode == InterpMode::ForwardDiff) {
        const int k = time_slab(grid, t);
        if (k < 1) return 0.0; // the initial face belongs to no cell
        const long corner =
            grid.prism_corner_node(attributed_prism(grid, x));
        const std::vector<double>& level = state.v[static_cast<size_t>(k)];
        const double vc = level[static_cast<size_t>(corner)];
        if (mode == InterpMode::CellConstant) return vc;
        const double vf = level[static_cast<size_t>(
            grid.node_neighbor(corner, axis, +1))];
        return (vf - vc) / grid.h();
    }

    if (mode == InterpMode::SpaceLinearHold)
        return interp_slice(state, time_slab(grid, t), x);

    const int k = std::max(1, time_slab(grid, t));
    const double s = (t - grid.time(k - 1)) / grid.tau();
    const double lo = interp_slice(state, k - 1, x);
    const double hi = interp_slice(state, k, x);
    return lo + (hi - lo) * s;
}

DiscreteNorms discrete_norms(const DiscreteState& state) {
    const Discretization& grid = *state.grid;
    const int d = grid.dim();
    const double h = grid.h();
    const double tau = grid.tau();
    const double hd = grid.cell_volume();

    DiscreteNorms out;
    for (const auto& level : state.v)
        for (double v : level) out.linf = std::max(out.linf, std::abs(v));

    std::vector<double> grad_sq(static_cast<size_t>(grid.n_t()) + 1, 0.0);
    for (long p = 0; p < grid.prism_count(); ++p) {
        const long corner = grid.prism_corner_node(p);
        for (int k = 0; k <= grid.n_t(); ++k) {
            const std::vector<double>& level = state.v[static_cast<size_t>(k)];
            double g = 0.0;
            for (int i = 0; i < d; ++i) {
                const double dq =
                    (level[static_cast<size_t>(grid.node_neighbor(corner, i, +1))] -
                     level[static_cast<size_t>(corner)]) /
                    h;
                g += dq * dq;
            }
            grad_sq[static_cast<size_t>(k)] += hd * g;

            if (k == 0) continue;
            const std::vector<double>& prev =
                state.v[static_cast<size_t>(k - 1)];
            const double dt =
                (level[static_cast<size_t>(corner)] -
                 prev[static_cast<size_t>(corner)]) /
                tau;
            out.time_diff_sq += tau * hd * dt * dt;
            for (int i = 0; i < d; ++i) {
                const long fwd = grid.node_neighbor(corner, i, +1);
                const double gx_now =
                    (level[static_cast<size_t>(fwd)] -
                     level[static_cast<size_t>(corner)]) /
                    h;
                const double gx_prev =
                    (prev[static_cast<size_t>(fwd)] -
                     prev[static_cast<size_t>(corner)]) /
                    h;
                const double dq = (gx_now - gx_prev) / tau;
                out.cross_diff_sq += tau * tau * hd * dq * dq;
            }
        }
    }
    for (int k = 0; k <= grid.n_t(); ++k) {
        out.grad_max_all_sq =
            std::max(out.grad_max_all_sq, grad_sq[static_cast<size_t>(k)]);
        if (k >= 1)
            out.grad_max_sq =
                std::max(out.grad_max_sq, grad_sq[static_cast<size_t>(k)]);
    }
    return out;
}

double l2_sq_grad_space(const DiscreteState& state) {
    const Discretization& grid = *state.grid;
    check_dim(grid);
    const int d = grid.dim();
    const double h = grid.h();
    const double scale = grid.cell_volume() * grid.tau();
    return sum_over_cells(grid, [&](long cell) {
        const long prism = cell % grid.prism_count();
        const int k = static_cast<int>(cell / grid.prism_count()) + 1;
        double c0[kMaxCorners];
        double c1[kMaxCorners];
        gather_corners(state, prism, k - 1, c0);
        gather_corners(state, prism, k, c1);
        double acc = 0.0;
        double theta[kMaxDim];
        for (int sm = 0; sm < (1 << d); ++sm) {
            for (int i = 0; i < d; ++i)
                theta[i] =
                    (sm & (1 << i)) ? 0.5 + kGL2Node : 0.5 - kGL2Node;
            for (int st = 0; st < 2; ++st) {
                const double s = st ? 0.5 + kGL2Node : 0.5 - kGL2Node;
                double g2 = 0.0;
                for (int i = 0; i < d; ++i) {
                    const double gx = ((1.0 - s) * mlin_diff(c0, theta, d, i) +
                                       s * mlin_diff(c1, theta, d, i)) /
                                      h;
                    g2 += gx * gx;
                }
                acc += g2;
            }
        }
        return scale * acc / static_cast<double>(1 << (d + 1));
    });
}

double l2_sq_dt(const DiscreteState& state) {
    const Discretization& grid = *state.grid;
    check_dim(grid);
    const int d = grid.dim();
    const double scale = grid.cell_volume() * grid.tau();
    return sum_over_cells(grid, [&](long cell) {
        const long prism = cell % grid.prism_count();
        const int k = static_cast<int>(cell / grid.prism_count()) + 1;
        double c0[kMaxCorners];
        double c1[kMaxCorners];
        gather_corners(state, prism, k - 1, c0);
        gather_corners(state, prism, k, c1);
        double acc = 0.0;
        double theta[kMaxDim];
        for (int sm = 0; sm < (1 << d); ++sm) {
            for (int i = 0; i < d; ++i)
                theta[i] =
                    (sm & (1 << i)) ? 0.5 + kGL2Node : 0.5 - kGL2Node;
            const double dt =
                (mlin(c1, theta, d) - mlin(c0, theta, d)) / grid.tau();
            acc += 2.0 * dt * dt; // both time samples contribute equally
        }
        return scale * acc / static_cast<double>(1 << (d + 1));
    });
}

double l2_sq_hold_minus_linear(const DiscreteState& state) {
    const Discretization& grid = *state.grid;
    check_dim(grid);
    const int d = grid.dim();
    const double scale = grid.cell_volume() * grid.tau();
    return sum_over_cells(grid, [&](long cell) {
        const long prism = cell % grid.prism_count();
        const int k = static_cast<int>(cell / grid.prism_count()) + 1;
        double c0[kMaxCorners];
        double c1[kMaxCorners];
        gather_corners(state, prism, k - 1, c0);
        gather_corners(state, prism, k, c1);
        double acc = 0.0;
        double theta[kMaxDim];
        for (int sm = 0; sm < (1 << d); ++sm) {
            for (int i = 0; i < d; ++i)
                theta[i] =
                    (sm & (1 << i)) ? 0.5 + kGL2Node : 0.5 - kGL2Node;
            const double jump = mlin(c1, theta, d) - mlin(c0, theta, d);
            for (int st = 0; st < 2; ++st) {
                const double s = st ? 0.5 + kGL2Node : 0.5 - kGL2Node;
                const double diff = jump * (1.0 - s);
                acc += diff * diff;
            }
        }
        return scale * acc / static_cast<double>(1 << (d + 1));
    });
}

double l2_mismatch_gap(const DiscreteState& state) {
    const Discretization& grid = *state.grid;
    check_dim(grid);
    const int d = grid.dim();
    const int n = grid.n_t();
    std::vector<double> part(static_cast<size_t>(grid.prism_count()), 0.0);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (long p = 0; p < grid.prism_count(); ++p) {
        double corners[kMaxCorners];
        gather_corners(state, p, n, corners);
        double acc = 0.0;
        double theta[kMaxDim];
        for (int sm = 0; sm < (1 << d); ++sm) {
            for (int i = 0; i < d; ++i)
                theta[i] =
                    (sm & (1 << i)) ? 0.5 + kGL2Node : 0.5 - kGL2Node;
            const double diff = mlin(corners, theta, d) - corners[0];
            acc += diff * diff;
        }
        part[static_cast<size_t>(p)] =
            grid.cell_volume() * acc / static_cast<double>(1 << d);
    }
    double total = 0.0;
    for (double v : part) total += v;
    return std::sqrt(total);
}

double l2_error_vs(const DiscreteState& state, const SpaceTimeFn& ref,
                   int order) {
    const Discretization& grid = *state.grid;
    check_dim(grid);
    const int d = grid.dim();
    const GLRule& rule = gauss_legendre(order);
    const double scale = grid.cell_volume() * grid.tau();

    const double total = sum_over_cells(grid, [&](long cell) {
        const long prism = cell % grid.prism_count();
        const int k = static_cast<int>(cell / grid.prism_count()) + 1;
        double c0[kMaxCorners];
        double c1[kMaxCorners];
        gather_corners(state, prism, k - 1, c0);
        gather_corners(state, prism, k, c1);
        int pm[kMaxDim];
        grid.prism_multi(prism, pm);

        double acc = 0.0;
        std::vector<int> idx(static_cast<size_t>(d) + 1, 0);
        const size_t q = rule.nodes.size();
        double x[kMaxDim];
        double theta[kMaxDim];
        while (true) {
            double w = 1.0;
            for (int i = 0; i < d; ++i) {
                const size_t qi = static_cast<size_t>(idx[static_cast<size_t>(i)]);
                theta[i] = 0.5 * (rule.nodes[qi] + 1.0);
                x[i] = grid.coord(i, pm[i]) + grid.h() * theta[i];
                w *= 0.5 * rule.weights[qi];
            }
            const size_t qt = static_cast<size_t>(idx[static_cast<size_t>(d)]);
            const double s = 0.5 * (rule.nodes[qt] + 1.0);
            const double t = grid.time(k - 1) + grid.tau() * s;
            w *= 0.5 * rule.weights[qt];

            const double lo = mlin(c0, theta, d);
            const double hi = mlin(c1, theta, d);
            const double diff =
                lo + (hi - lo) * s - ref(std::span<const double>(x, static_cast<size_t>(d)), t);
            acc += w * diff * diff;

            int axis = 0;
            while (axis <= d) {
                if (++idx[static_cast<size_t>(axis)] <
                    static_cast<int>(q))
                    break;
                idx[static_cast<size_t>(axis)] = 0;
                ++axis;
            }
            if (axis > d) break;
        }
        return scale * acc;
    });
    return std::sqrt(total);
}

double l2_space_time(const SpaceTimeFn& f, const Discretization& grid,
                     int order) {
    check_dim(grid);
    const int d = grid.dim();
    const GLRule& rule = gauss_legendre(order);
    const double scale = grid.cell_volume() * grid.tau();

    const double total = sum_over_cells(grid, [&](long cell) {
        const long prism = cell % grid.prism_count();
        const int k = static_cast<int>(cell / grid.prism_count()) + 1;
        int pm[kMaxDim];
        grid.prism_multi(prism, pm);
        double acc = 0.0;
        std::vector<int> idx(static_cast<size_t>(d) + 1, 0);
        const size_t q = rule.nodes.size();
        double x[kMaxDim];
        while (true) {
            double w = 1.0;
            for (int i = 0; i < d; ++i) {
                const size_t qi = static_cast<size_t>(idx[static_cast<size_t>(i)]);
                x[i] = grid.coord(i, pm[i]) +
                       grid.h() * 0.5 * (rule.nodes[qi] + 1.0);
                w *= 0.5 * rule.weights[qi];
            }
            const size_t qt = static_cast<size_t>(idx[static_cast<size_t>(d)]);
            const double t =
                grid.time(k - 1) + grid.tau() * 0.5 * (rule.nodes[qt] + 1.0);
            w *= 0.5 * rule.weights[qt];
            const double val = f(std::span<const double>(x, static_cast<size_t>(d)), t);
            acc += w * val * val;

            int axis = 0;
            while (axis <= d) {
                if (++idx[static_cast<size_t>(axis)] <
                    static_cast<int>(q))
                    break;
                idx[static_cast<size_t>(axis)] = 0;
                ++axis;
            }
            if (axis > d) break;
        }
        return scale * acc;
    });
    return std::sqrt(total);
}

} // namespace stefan
