#include "stefan/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <string>

#include "stefan/error.hpp"
#include "stefan/quadrature.hpp"

namespace stefan {

namespace {

double bump(double u) {
    const double s = 1.0 - u * u;
    return s > 0.0 ? std::exp(-1.0 / s) : 0.0;
}

// Unit-window normalization integral, shared across all graphs.
double unit_bump_integral() {
    static std::once_flag flag;
    static double value = 0.0;
    std::call_once(flag, [] {
        value = integrate_adaptive(bump, -1.0, 1.0, 32, 1e-15);
    });
    return value;
}

constexpr int kPanelsPerPiece = 8;

} // namespace

double PiecewiseLinear::operator()(double y) const {
    const size_t nseg = knots.size() - 1;
    size_t i;
    if (y <= knots.front())
        i = 0;
    else if (y >= knots.back())
        i = nseg - 1;
    else
        i = static_cast<size_t>(
                std::upper_bound(knots.begin(), knots.end(), y) -
                knots.begin()) -
            1;
    const double s = (values[i + 1] - values[i]) / (knots[i + 1] - knots[i]);
    return values[i] + s * (y - knots[i]);
}

double PiecewiseLinear::slope_at(double y) const {
    const size_t nseg = knots.size() - 1;
    size_t i;
    if (y <= knots.front())
        i = 0;
    else if (y >= knots.back())
        i = nseg - 1;
    else
        i = static_cast<size_t>(
                std::upper_bound(knots.begin(), knots.end(), y) -
                knots.begin()) -
            1;
    return (values[i + 1] - values[i]) / (knots[i + 1] - knots[i]);
}

MonotoneGraph::MonotoneGraph(std::vector<double> breakpoints,
                             std::vector<double> jumps,
                             std::vector<PiecewiseLinear> branches,
                             double slope_floor)
    : breakpoints_(std::move(breakpoints)), jumps_(std::move(jumps)),
      branches_(std::move(branches)), slope_floor_(slope_floor) {
    const size_t m = breakpoints_.size();
    if (jumps_.size() != m)
        throw Error("graph.shape", "need one jump per breakpoint");
    if (branches_.size() != m + 1)
        throw Error("graph.shape", "need one branch more than breakpoints");
    if (!(slope_floor_ > 0.0))
        throw Error("graph.slope", "slope floor must be positive");
    for (size_t j = 0; j + 1 < m; ++j)
        if (!(breakpoints_[j] < breakpoints_[j + 1]))
            throw Error("graph.shape", "breakpoints must ascend");
    for (size_t j = 0; j < m; ++j)
        if (!(jumps_[j] > 0.0))
            throw Error("graph.shape",
                        "jump at breakpoint " + std::to_string(j + 1) +
                            " must be positive");
    for (size_t j = 0; j < branches_.size(); ++j) {
        const PiecewiseLinear& br = branches_[j];
        if (br.knots.size() < 2 || br.knots.size() != br.values.size())
            throw Error("graph.shape",
                        "branch " + std::to_string(j + 1) +
                            " needs matching knot/value lists of size >= 2");
        for (size_t i = 0; i + 1 < br.knots.size(); ++i) {
            if (!(br.knots[i] < br.knots[i + 1]))
                throw Error("graph.shape",
                            "branch " + std::to_string(j + 1) +
                                " knots must strictly ascend");
            const double s = (br.values[i + 1] - br.values[i]) /
                             (br.knots[i + 1] - br.knots[i]);
            if (!(s >= slope_floor_ * (1.0 - 1e-12)))
                throw Error("graph.slope",
                            "branch " + std::to_string(j + 1) + " segment " +
                                std::to_string(i + 1) +
                                " slope below the declared floor");
        }
    }
    // Branch continuity across each breakpoint.
    for (size_t j = 0; j < m; ++j) {
        const double left = branches_[j](breakpoints_[j]);
        const double right = branches_[j + 1](breakpoints_[j]);
        const double scale =
            std::max({1.0, std::abs(left), std::abs(right)});
        if (std::abs(left - right) > 1e-12 * scale)
            throw Error("graph.continuity",
                        "branches disagree at breakpoint " +
                            std::to_string(j + 1));
    }
    offsets_.assign(branches_.size(), 0.0);
    for (size_t j = 0; j < m; ++j) offsets_[j + 1] = offsets_[j] + jumps_[j];

    kinks_ = breakpoints_;
    for (size_t j = 0; j < branches_.size(); ++j) {
        const double lo = (j == 0) ? -std::numeric_limits<double>::infinity()
                                   : breakpoints_[j - 1];
        const double hi = (j == m) ? std::numeric_limits<double>::infinity()
                                   : breakpoints_[j];
        for (double k : branches_[j].knots)
            if (k > lo && k < hi) kinks_.push_back(k);
    }
    std::sort(kinks_.begin(), kinks_.end());
    kinks_.erase(std::unique(kinks_.begin(), kinks_.end()), kinks_.end());
}

int MonotoneGraph::branch_index(double y) const {
    // First breakpoint >= y; ties resolve to the left branch.
    return static_cast<int>(
        std::lower_bound(breakpoints_.begin(), breakpoints_.end(), y) -
        breakpoints_.begin());
}

Interval MonotoneGraph::eval(double y) const {
    const int j = branch_index(y);
    const double base = branches_[static_cast<size_t>(j)](y) +
                        offsets_[static_cast<size_t>(j)];
    if (j < static_cast<int>(breakpoints_.size()) &&
        y == breakpoints_[static_cast<size_t>(j)])
        return {base, base + jumps_[static_cast<size_t>(j)]};
    return {base, base};
}

double MonotoneGraph::point_value(double y) const {
    const int j = branch_index(y);
    return branches_[static_cast<size_t>(j)](y) +
           offsets_[static_cast<size_t>(j)];
}

double MonotoneGraph::slope_at(double y) const {
    const int j = branch_index(y);
    return branches_[static_cast<size_t>(j)].slope_at(y);
}

double kernel_constant(int n, int quadrature_order) {
    if (n < 1) throw Error("kernel.normalization", "n must be >= 1");
    if (quadrature_order < 2)
        throw Error("kernel.normalization", "quadrature order must be >= 2");
    const double integral =
        integrate_adaptive(bump, -1.0, 1.0, quadrature_order, 1e-14);
    const double check =
        integrate_adaptive(bump, -1.0, 1.0, quadrature_order + 8, 1e-14);
    if (std::abs(integral / check - 1.0) > 1e-12)
        throw Error("kernel.normalization",
                    "kernel integral not resolved to 1e-12");
    return static_cast<double>(n) / integral;
}

MollifiedGraph::MollifiedGraph(MonotoneGraph base, int n, int quadrature_order)
    : base_(std::move(base)), n_(n), quadrature_order_(quadrature_order) {
    if (n_ < 1) throw Error("graph.mollification", "n must be >= 1");
    if (quadrature_order_ < 2)
        throw Error("graph.mollification", "quadrature order must be >= 2");
    kernel_norm_ = 1.0 / unit_bump_integral();
}

double MollifiedGraph::omega(double u) const {
    return kernel_norm_ * n_ * bump(n_ * u);
}

double MollifiedGraph::value(double v) const {
    const double r = window();
    const auto& kinks = base_.kinks();
    auto lo = std::upper_bound(kinks.begin(), kinks.end(), v - r);
    auto hi = std::lower_bound(kinks.begin(), kinks.end(), v + r);
    if (lo == hi) return base_.point_value(v); // affine window: exact

    const GLRule& rule = gauss_legendre(quadrature_order_);
    double acc = 0.0;
    double left = v - r;
    auto piece = [&](double y0, double y1) {
        const double width = (y1 - y0) / kPanelsPerPiece;
        for (int p = 0; p < kPanelsPerPiece; ++p) {
            const double mid = y0 + (p + 0.5) * width;
            const double half = 0.5 * width;
            double s = 0.0;
            for (size_t q = 0; q < rule.nodes.size(); ++q) {
                const double y = mid + half * rule.nodes[q];
                s += rule.weights[q] * base_.point_value(y) * omega(v - y);
            }
            acc += half * s;
        }
    };
    for (auto it = lo; it != hi; ++it) {
        piece(left, *it);
        left = *it;
    }
    piece(left, v + r);
    return acc;
}

double MollifiedGraph::derivative(double v) const {
    const double r = window();
    const auto& kinks = base_.kinks();
    auto lo = std::upper_bound(kinks.begin(), kinks.end(), v - r);
    auto hi = std::lower_bound(kinks.begin(), kinks.end(), v + r);
    if (lo == hi) return base_.slope_at(v); // affine window: exact

    const GLRule& rule = gauss_legendre(quadrature_order_);
    double acc = 0.0;
    double left = v - r;
    auto piece = [&](double y0, double y1) {
        const double width = (y1 - y0) / kPanelsPerPiece;
        for (int p = 0; p < kPanelsPerPiece; ++p) {
            const double mid = y0 + (p + 0.5) * width;
            const double half = 0.5 * width;
            double s = 0.0;
            for (size_t q = 0; q < rule.nodes.size(); ++q) {
                const double y = mid + half * rule.nodes[q];
                s += rule.weights[q] * base_.slope_at(y) * omega(v - y);
            }
            acc += half * s;
        }
    };
    for (auto it = lo; it != hi; ++it) {
        piece(left, *it);
        left = *it;
    }
    piece(left, v + r);

    // Jumps inside the window contribute nu_j * omega(v - breakpoint).
    const auto& bp = base_.breakpoints();
    const auto& nu = base_.jumps();
    auto blo = std::upper_bound(bp.begin(), bp.end(), v - r);
    auto bhi = std::lower_bound(bp.begin(), bp.end(), v + r);
    for (auto it = blo; it != bhi; ++it)
        acc += nu[static_cast<size_t>(it - bp.begin())] * omega(v - *it);
    return acc;
}

} // namespace stefan
