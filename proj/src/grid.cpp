#include "stefan/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "stefan/error.hpp"
#include "stefan/quadrature.hpp"

namespace stefan {

Discretization::Discretization(Domain dom, double h, int n_t,
                               std::vector<int> m)
    : dom_(std::move(dom)), h_(h), tau_(dom_.T / n_t), n_t_(n_t),
      m_(std::move(m)) {
    const int d = dom_.dim();
    node_stride_.resize(static_cast<size_t>(d));
    prism_stride_.resize(static_cast<size_t>(d));
    long ns = 1, ps = 1;
    n_interior_ = 1;
    for (int i = 0; i < d; ++i) {
        node_stride_[static_cast<size_t>(i)] = ns;
        prism_stride_[static_cast<size_t>(i)] = ps;
        ns *= m_[static_cast<size_t>(i)] + 1;
        ps *= m_[static_cast<size_t>(i)];
        n_interior_ *= std::max(0, m_[static_cast<size_t>(i)] - 1);
    }
    n_nodes_ = ns;
    n_prisms_ = ps;
    cell_volume_ = std::pow(h_, d);
}

void Discretization::node_multi(long flat, int* out) const {
    for (int i = 0; i < dim(); ++i) {
        const long base = m_[static_cast<size_t>(i)] + 1;
        out[i] = static_cast<int>(flat % base);
        flat /= base;
    }
}

long Discretization::node_flat(const int* multi) const {
    long flat = 0;
    for (int i = 0; i < dim(); ++i)
        flat += multi[i] * node_stride_[static_cast<size_t>(i)];
    return flat;
}

bool Discretization::node_on_boundary(long flat) const {
    for (int i = 0; i < dim(); ++i) {
        const long base = m_[static_cast<size_t>(i)] + 1;
        const int k = static_cast<int>(flat % base);
        if (k == 0 || k == m_[static_cast<size_t>(i)]) return true;
        flat /= base;
    }
    return false;
}

void Discretization::node_coords(long flat, double* out) const {
    for (int i = 0; i < dim(); ++i) {
        const long base = m_[static_cast<size_t>(i)] + 1;
        out[i] = coord(i, static_cast<int>(flat % base));
        flat /= base;
    }
}

void Discretization::prism_multi(long flat, int* out) const {
    for (int i = 0; i < dim(); ++i) {
        const long base = m_[static_cast<size_t>(i)];
        out[i] = static_cast<int>(flat % base);
        flat /= base;
    }
}

long Discretization::prism_flat(const int* multi) const {
    long flat = 0;
    for (int i = 0; i < dim(); ++i)
        flat += multi[i] * prism_stride_[static_cast<size_t>(i)];
    return flat;
}

long Discretization::prism_corner_node(long prism) const {
    int multi[3];
    prism_multi(prism, multi);
    return node_flat(multi);
}

long Discretization::node_prism(long node) const {
    int multi[3];
    node_multi(node, multi);
    return prism_flat(multi);
}

Discretization build_discretization(const Domain& dom, double h, int n_t,
                                    const CoeffNorms& norms) {
    const int d = dom.dim();
    if (d < 1 || d > 3)
        throw Error("dimension", "domain dimension must be 1, 2, or 3");
    if (!(h > 0.0)) throw Error("step", "h must be positive");
    if (n_t < 1) throw Error("step", "need at least one time level");
    if (!(dom.T > 0.0)) throw Error("step", "horizon T must be positive");
    if (!(norms.slope_floor > 0.0))
        throw Error("graph.slope", "slope floor must be positive");

    std::vector<int> m(static_cast<size_t>(d));
    for (int i = 0; i < d; ++i) {
        const double len = dom.box[static_cast<size_t>(i)][1] -
                           dom.box[static_cast<size_t>(i)][0];
        if (!(len > 0.0))
            throw Error("domain", "axis " + std::to_string(i + 1) +
                                      " has nonpositive extent");
        const double cells = len / h;
        const long rounded = std::lround(cells);
        if (rounded < 1 || std::abs(cells - static_cast<double>(rounded)) >
                               1e-9 * std::max(1.0, cells))
            throw Error("divisibility",
                        "axis " + std::to_string(i + 1) +
                            " extent is not an integer multiple of h");
        m[static_cast<size_t>(i)] = static_cast<int>(rounded);
    }

    const double tau = dom.T / n_t;
    const double required = (1.0 + 2.0 * norms.sum_b_inf) / norms.slope_floor;
    const double ratio = h / tau;
    if (ratio < required * (1.0 - 1e-12))
        throw Error("htau", "step ratio h/tau = " + std::to_string(ratio) +
                                " below the admissible bound " +
                                std::to_string(required));

    return Discretization(dom, h, n_t, std::move(m));
}

namespace {

// Tensor Gauss-Legendre mean over an axis-aligned box, clamped sampling.
// Bitwise-equal samples short-circuit to the common value, which makes the
// mean exact on constants and on fields constant over the window.
template <typename Sample>
double window_mean(const Discretization& grid, const double* lo,
                   const double* hi, int order, double t0, double t1,
                   bool with_time, const Sample& sample) {
    const int d = grid.dim();
    const GLRule& rule = gauss_legendre(order);
    const int tdim = with_time ? 1 : 0;

    long total = 1;
    for (int i = 0; i < d + tdim; ++i) total *= order;

    double first = 0.0;
    bool all_equal = true;
    double weighted = 0.0, weight_sum = 0.0;
    std::vector<double> x(static_cast<size_t>(d));

    for (long s = 0; s < total; ++s) {
        long rem = s;
        double w = 1.0;
        for (int i = 0; i < d; ++i) {
            const int q = static_cast<int>(rem % order);
            rem /= order;
            const double mid = 0.5 * (lo[i] + hi[i]);
            const double half = 0.5 * (hi[i] - lo[i]);
            double xi = mid + half * rule.nodes[static_cast<size_t>(q)];
            const auto& box = grid.domain().box[static_cast<size_t>(i)];
            xi = std::min(std::max(xi, box[0]), box[1]);
            x[static_cast<size_t>(i)] = xi;
            w *= rule.weights[static_cast<size_t>(q)];
        }
        double tt = 0.0;
        if (with_time) {
            const int q = static_cast<int>(rem % order);
            const double mid = 0.5 * (t0 + t1);
            const double half = 0.5 * (t1 - t0);
            tt = mid + half * rule.nodes[static_cast<size_t>(q)];
            w *= rule.weights[static_cast<size_t>(q)];
        }
        const double v = sample(std::span<const double>(x), tt);
        if (s == 0)
            first = v;
        else if (v != first)
            all_equal = false;
        weighted += w * v;
        weight_sum += w;
    }
    if (all_equal) return first;
    return weighted / weight_sum;
}

} // namespace

double steklov_prism(const SpatialFn& f, const Discretization& grid, long node,
                     int order) {
    const int d = grid.dim();
    int multi[3];
    grid.node_multi(node, multi);
    double lo[3], hi[3];
    for (int i = 0; i < d; ++i) {
        lo[i] = grid.coord(i, multi[i]);
        hi[i] = lo[i] + grid.h();
    }
    return window_mean(grid, lo, hi, order, 0.0, 0.0, false,
                       [&](std::span<const double> x, double) { return f(x); });
}

double steklov_cell(const SpaceTimeFn& f, const Discretization& grid,
                    long prism, int k, int order) {
    const int d = grid.dim();
    int multi[3];
    grid.prism_multi(prism, multi);
    double lo[3], hi[3];
    for (int i = 0; i < d; ++i) {
        lo[i] = grid.coord(i, multi[i]);
        hi[i] = lo[i] + grid.h();
    }
    return window_mean(
        grid, lo, hi, order, grid.time(k - 1), grid.time(k), true,
        [&](std::span<const double> x, double t) { return f(x, t); });
}

double sup_norm(const SpaceTimeFn& f, const Domain& dom, int nx, int nt) {
    const int d = dom.dim();
    long total = 1;
    for (int i = 0; i < d; ++i) total *= nx;
    double best = 0.0;
    std::vector<double> x(static_cast<size_t>(d));
    for (int kt = 0; kt < nt; ++kt) {
        const double t = dom.T * kt / (nt - 1);
        for (long s = 0; s < total; ++s) {
            long rem = s;
            for (int i = 0; i < d; ++i) {
                const int q = static_cast<int>(rem % nx);
                rem /= nx;
                const auto& box = dom.box[static_cast<size_t>(i)];
                x[static_cast<size_t>(i)] =
                    box[0] + (box[1] - box[0]) * q / (nx - 1);
            }
            best = std::max(best, std::abs(f(std::span<const double>(x), t)));
        }
    }
    return best;
}

double l2_spatial(const SpatialFn& f, const Discretization& grid, int order) {
    double acc = 0.0;
    const int d = grid.dim();
    const GLRule& rule = gauss_legendre(order);
    long total = 1;
    for (int i = 0; i < d; ++i) total *= order;
    std::vector<double> x(static_cast<size_t>(d));
    int multi[3];
    for (long p = 0; p < grid.prism_count(); ++p) {
        grid.prism_multi(p, multi);
        double cell = 0.0;
        for (long s = 0; s < total; ++s) {
            long rem = s;
            double w = 1.0;
            for (int i = 0; i < d; ++i) {
                const int q = static_cast<int>(rem % order);
                rem /= order;
                const double lo = grid.coord(i, multi[i]);
                const double mid = lo + 0.5 * grid.h();
                x[static_cast<size_t>(i)] =
                    mid + 0.5 * grid.h() * rule.nodes[static_cast<size_t>(q)];
                w *= 0.5 * grid.h() * rule.weights[static_cast<size_t>(q)];
            }
            const double v = f(std::span<const double>(x));
            cell += w * v * v;
        }
        acc += cell;
    }
    return std::sqrt(acc);
}

CoefficientGrid build_coefficients(const ProblemFields& fields,
                                   const Discretization& grid, double a_floor,
                                   int order) {
    const int d = grid.dim();
    if (static_cast<int>(fields.a.size()) != d)
        throw Error("coefficients", "need one diffusion coefficient per axis");
    const long cells = grid.cell_count();

    CoefficientGrid out;
    out.a.assign(static_cast<size_t>(d), std::vector<double>(cells, 0.0));
    out.b.assign(static_cast<size_t>(d), std::vector<double>(cells, 0.0));
    out.c.assign(static_cast<size_t>(d), std::vector<double>(cells, 0.0));
    out.r.assign(cells, 0.0);
    out.f.assign(cells, 0.0);
    out.a_min = std::numeric_limits<double>::infinity();

    for (int k = 1; k <= grid.n_t(); ++k) {
        for (long p = 0; p < grid.prism_count(); ++p) {
            const long cell = grid.cell_index(p, k);
            for (int i = 0; i < d; ++i) {
                const double ai =
                    steklov_cell(fields.a[static_cast<size_t>(i)], grid, p, k,
                                 order);
                if (!(ai >= a_floor))
                    throw Error("ellipticity",
                                "axis " + std::to_string(i + 1) + " cell " +
                                    std::to_string(cell) +
                                    " diffusion average " +
                                    std::to_string(ai) +
                                    " below the floor " +
                                    std::to_string(a_floor));
                out.a[static_cast<size_t>(i)][static_cast<size_t>(cell)] = ai;
                out.a_min = std::min(out.a_min, ai);
                if (i < static_cast<int>(fields.b.size()) &&
                    fields.b[static_cast<size_t>(i)])
                    out.b[static_cast<size_t>(i)][static_cast<size_t>(cell)] =
                        steklov_cell(fields.b[static_cast<size_t>(i)], grid, p,
                                     k, order);
                if (i < static_cast<int>(fields.c.size()) &&
                    fields.c[static_cast<size_t>(i)])
                    out.c[static_cast<size_t>(i)][static_cast<size_t>(cell)] =
                        steklov_cell(fields.c[static_cast<size_t>(i)], grid, p,
                                     k, order);
            }
            if (fields.r)
                out.r[static_cast<size_t>(cell)] =
                    steklov_cell(fields.r, grid, p, k, order);
            if (fields.f)
                out.f[static_cast<size_t>(cell)] =
                    steklov_cell(fields.f, grid, p, k, order);
        }
    }

    out.phi.assign(grid.node_count(), 0.0);
    out.gamma.assign(grid.node_count(), 0.0);
    for (long g = 0; g < grid.node_count(); ++g) {
        if (fields.phi) out.phi[static_cast<size_t>(g)] =
            steklov_prism(fields.phi, grid, g, order);
        if (fields.gamma) out.gamma[static_cast<size_t>(g)] =
            steklov_prism(fields.gamma, grid, g, order);
    }
    return out;
}

} // namespace stefan
