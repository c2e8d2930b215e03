#pragma once

// Independent per-step solvers for the implicit scheme, assembled from the
// divergence-form operator written out as flux differences.  Nothing here
// shares assembly code with the library; agreement is the point of the
// comparison tests.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "stefan/graph.hpp"
#include "stefan/grid.hpp"

namespace oracle {

inline std::vector<double> thomas_solve(std::vector<double> lower,
                                        std::vector<double> diag,
                                        std::vector<double> upper,
                                        std::vector<double> rhs) {
    const size_t n = diag.size();
    for (size_t i = 1; i < n; ++i) {
        const double w = lower[i] / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    std::vector<double> x(n);
    x[n - 1] = rhs[n - 1] / diag[n - 1];
    for (size_t i = n - 1; i-- > 0;) x[i] = (rhs[i] - upper[i] * x[i + 1]) / diag[i];
    return x;
}

// Gaussian elimination with partial pivoting; a is row-major n x n.
inline std::vector<double> dense_solve(std::vector<double> a,
                                       std::vector<double> rhs) {
    const size_t n = rhs.size();
    std::vector<size_t> piv(n);
    for (size_t i = 0; i < n; ++i) piv[i] = i;
    for (size_t col = 0; col < n; ++col) {
        size_t best = col;
        for (size_t r = col + 1; r < n; ++r)
            if (std::abs(a[r * n + col]) > std::abs(a[best * n + col]))
                best = r;
        if (best != col) {
            for (size_t c = 0; c < n; ++c)
                std::swap(a[col * n + c], a[best * n + c]);
            std::swap(rhs[col], rhs[best]);
        }
        const double p = a[col * n + col];
        if (p == 0.0) throw std::runtime_error("singular matrix");
        for (size_t r = col + 1; r < n; ++r) {
            const double w = a[r * n + col] / p;
            if (w == 0.0) continue;
            for (size_t c = col; c < n; ++c) a[r * n + c] -= w * a[col * n + c];
            rhs[r] -= w * rhs[col];
        }
    }
    std::vector<double> x(n);
    for (size_t i = n; i-- > 0;) {
        double s = rhs[i];
        for (size_t c = i + 1; c < n; ++c) s -= a[i * n + c] * x[c];
        x[i] = s / a[i * n + i];
    }
    return x;
}

// One implicit step of the linear problem beta(v) = sigma * v + c0 on a 1-D
// grid, solved directly as a tridiagonal system in flux-difference form.
// prev and the returned vector live on all nodes; boundary values are zero.
inline std::vector<double> linear_step_1d(const stefan::Discretization& grid,
                                          const stefan::CoefficientGrid& cg,
                                          double sigma, int k,
                                          const std::vector<double>& prev) {
    const double h = grid.h();
    const double tau = grid.tau();
    const long m = grid.cells_per_axis()[0];
    const long base = static_cast<long>(k - 1) * grid.prism_count();
    const size_t n = static_cast<size_t>(m - 1);

    std::vector<double> lo(n, 0.0), di(n, 0.0), up(n, 0.0), rhs(n, 0.0);
    for (size_t i = 0; i < n; ++i) {
        const long alpha = static_cast<long>(i) + 1 + base; // prism of node i+1
        const long back = alpha - 1;
        const double aF = cg.a[0][static_cast<size_t>(alpha)];
        const double aB = cg.a[0][static_cast<size_t>(back)];
        const double bF = cg.b[0][static_cast<size_t>(alpha)];
        const double bB = cg.b[0][static_cast<size_t>(back)];
        const double cF = cg.c[0][static_cast<size_t>(alpha)];
        const double rr = cg.r[static_cast<size_t>(alpha)];
        di[i] = sigma / tau + (aF + aB) / (h * h) - bF / h - cF / h + rr;
        up[i] = -aF / (h * h) + cF / h;
        lo[i] = -aB / (h * h) + bB / h;
        rhs[i] = sigma / tau * prev[i + 1] + cg.f[static_cast<size_t>(alpha)];
    }
    const std::vector<double> x = thomas_solve(lo, di, up, rhs);
    std::vector<double> out(static_cast<size_t>(grid.node_count()), 0.0);
    for (size_t i = 0; i < n; ++i) out[i + 1] = x[i];
    return out;
}

// One implicit step of the nonlinear problem by damped Newton on the full
// interior system, dense Jacobian.  shift may be empty.
inline std::vector<double> newton_step(const stefan::Discretization& grid,
                                       const stefan::CoefficientGrid& cg,
                                       const stefan::MollifiedGraph& graph,
                                       const std::vector<double>& shift, int k,
                                       const std::vector<double>& prev,
                                       double tol) {
    const int d = grid.dim();
    const double h = grid.h();
    const double tau = grid.tau();
    const long base = static_cast<long>(k - 1) * grid.prism_count();

    std::vector<long> nodes;
    std::vector<long> index(static_cast<size_t>(grid.node_count()), -1);
    for (long nd = 0; nd < grid.node_count(); ++nd)
        if (!grid.node_on_boundary(nd)) {
            index[static_cast<size_t>(nd)] = static_cast<long>(nodes.size());
            nodes.push_back(nd);
        }
    const size_t n = nodes.size();
    const auto sh = [&](long nd) {
        return shift.empty() ? 0.0 : shift[static_cast<size_t>(nd)];
    };

    std::vector<double> v(static_cast<size_t>(grid.node_count()), 0.0);
    for (size_t i = 0; i < n; ++i)
        v[static_cast<size_t>(nodes[i])] = prev[static_cast<size_t>(nodes[i])];

    const auto residual = [&](const std::vector<double>& w,
                              std::vector<double>& G) {
        for (size_t i = 0; i < n; ++i) {
            const long nd = nodes[i];
            const double wc = w[static_cast<size_t>(nd)];
            double val = (graph.value(wc + sh(nd)) -
                          graph.value(prev[static_cast<size_t>(nd)] + sh(nd))) /
                         tau;
            const long alpha = grid.node_prism(nd);
            for (int ax = 0; ax < d; ++ax) {
                const size_t a = static_cast<size_t>(ax);
                const long backn = grid.node_neighbor(nd, ax, -1);
                const long fwd = alpha + base;
                const long bck = grid.node_prism(backn) + base;
                const double wp = w[static_cast<size_t>(grid.node_neighbor(nd, ax, +1))];
                const double wm = w[static_cast<size_t>(backn)];
                val -= (cg.a[a][static_cast<size_t>(fwd)] * (wp - wc) -
                        cg.a[a][static_cast<size_t>(bck)] * (wc - wm)) /
                       (h * h);
                val -= (cg.b[a][static_cast<size_t>(fwd)] * wc -
                        cg.b[a][static_cast<size_t>(bck)] * wm) /
                       h;
                val += cg.c[a][static_cast<size_t>(fwd)] * (wp - wc) / h;
            }
            const long self = alpha + base;
            val += cg.r[static_cast<size_t>(self)] * wc;
            val -= cg.f[static_cast<size_t>(self)];
            G[i] = val;
        }
    };

    std::vector<double> G(n), Gtry(n);
    std::vector<double> J;
    std::vector<double> wtry(v.size());
    residual(v, G);
    double gnorm = 0.0;
    for (double g : G) gnorm = std::max(gnorm, std::abs(g));

    for (int it = 0; it < 100 && gnorm > tol; ++it) {
        J.assign(n * n, 0.0);
        for (size_t i = 0; i < n; ++i) {
            const long nd = nodes[i];
            const long alpha = grid.node_prism(nd);
            double diag =
                graph.derivative(v[static_cast<size_t>(nd)] + sh(nd)) / tau;
            for (int ax = 0; ax < d; ++ax) {
                const size_t a = static_cast<size_t>(ax);
                const long backn = grid.node_neighbor(nd, ax, -1);
                const long fwd = alpha + base;
                const long bck = grid.node_prism(backn) + base;
                diag += (cg.a[a][static_cast<size_t>(fwd)] +
                         cg.a[a][static_cast<size_t>(bck)]) /
                            (h * h) -
                        cg.b[a][static_cast<size_t>(fwd)] / h -
                        cg.c[a][static_cast<size_t>(fwd)] / h;
                const long jp = index[static_cast<size_t>(
                    grid.node_neighbor(nd, ax, +1))];
                const long jm = index[static_cast<size_t>(backn)];
                if (jp >= 0)
                    J[i * n + static_cast<size_t>(jp)] +=
                        -cg.a[a][static_cast<size_t>(fwd)] / (h * h) +
                        cg.c[a][static_cast<size_t>(fwd)] / h;
                if (jm >= 0)
                    J[i * n + static_cast<size_t>(jm)] +=
                        -cg.a[a][static_cast<size_t>(bck)] / (h * h) +
                        cg.b[a][static_cast<size_t>(bck)] / h;
            }
            diag += cg.r[static_cast<size_t>(alpha + base)];
            J[i * n + i] += diag;
        }
        const std::vector<double> step = dense_solve(J, G);
        double lambda = 1.0;
        for (int half = 0; half < 40; ++half) {
            wtry = v;
            for (size_t i = 0; i < n; ++i)
                wtry[static_cast<size_t>(nodes[i])] -= lambda * step[i];
            residual(wtry, Gtry);
            double gn = 0.0;
            for (double g : Gtry) gn = std::max(gn, std::abs(g));
            if (gn < gnorm || gn <= tol) {
                v = wtry;
                G = Gtry;
                gnorm = gn;
                break;
            }
            lambda *= 0.5;
            if (half == 39)
                throw std::runtime_error("newton line search stalled");
        }
    }
    if (gnorm > tol) throw std::runtime_error("newton did not converge");
    return v;
}

} // namespace oracle
