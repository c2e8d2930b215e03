#pragma once

#include <array>
#include <functional>
#include <span>
#include <vector>

namespace stefan {

using SpatialFn = std::function<double(std::span<const double>)>;
using SpaceTimeFn = std::function<double(std::span<const double>, double)>;

// Space-time box: product of per-axis intervals times (0, T].
struct Domain {
    std::vector<std::array<double, 2>> box;
    double T = 0.0;
    int dim() const { return static_cast<int>(box.size()); }
};

// One entry of a refinement chain.
struct GridLevel {
    double h = 0.0;
    int n_t = 0;
};

// Norms entering the admissible step-ratio bound.
struct CoeffNorms {
    double sum_b_inf = 0.0;  // sum over axes of the sup of |b_i|
    double slope_floor = 1.0;
};

// Uniform lattice over the closed box with isotropic spatial step h and
// time step tau = T / n_t.  Nodes are lattice points (m_i + 1 per axis);
// prisms are the forward cells [x, x + h]^d whose natural corner is the
// lexicographically smallest vertex; a space-time cell is a prism times
// one time slab (t_{k-1}, t_k], k = 1..n_t.
class Discretization {
public:
    Discretization(Domain dom, double h, int n_t, std::vector<int> m);

    const Domain& domain() const { return dom_; }
    int dim() const { return dom_.dim(); }
    double h() const { return h_; }
    double tau() const { return tau_; }
    int n_t() const { return n_t_; }
    const std::vector<int>& cells_per_axis() const { return m_; }

    long node_count() const { return n_nodes_; }
    long prism_count() const { return n_prisms_; }
    long cell_count() const { return n_prisms_ * n_t_; }
    long interior_count() const { return n_interior_; }

    double cell_volume() const { return cell_volume_; } // h^d

    void node_multi(long flat, int* out) const;
    long node_flat(const int* multi) const;
    long node_neighbor(long flat, int axis, int dir) const {
        return flat + dir * node_stride_[static_cast<size_t>(axis)];
    }
    bool node_on_boundary(long flat) const;
    // Node coordinate along one axis.
    double coord(int axis, int k) const {
        return dom_.box[static_cast<size_t>(axis)][0] +
               h_ * static_cast<double>(k);
    }
    void node_coords(long flat, double* out) const;

    void prism_multi(long flat, int* out) const;
    long prism_flat(const int* multi) const;
    // Node at the prism's natural corner.
    long prism_corner_node(long prism) const;
    // Prism whose natural corner is the given node; requires k_i <= m_i - 1.
    long node_prism(long node) const;

    long cell_index(long prism, int k) const {
        return static_cast<long>(k - 1) * n_prisms_ + prism;
    }
    double time(int k) const { return tau_ * static_cast<double>(k); }

private:
    Domain dom_;
    double h_, tau_;
    int n_t_;
    std::vector<int> m_;
    std::vector<long> node_stride_, prism_stride_;
    long n_nodes_, n_prisms_, n_interior_;
    double cell_volume_;
};

// Validates positivity, box/step divisibility ("divisibility") and the
// admissible step ratio h/tau >= (1 + 2 sum||b_i||) / slope_floor ("htau").
Discretization build_discretization(const Domain& dom, double h, int n_t,
                                    const CoeffNorms& norms);

// Window average of f over the forward prism of the node, h^{-d} times the
// integral, by tensor Gauss-Legendre of the given per-axis order.  Sample
// coordinates clamp to the closed box, extending boundary windows by their
// nearest in-domain values.  If every sample is bitwise identical the common
// value is returned exactly.
double steklov_prism(const SpatialFn& f, const Discretization& grid, long node,
                     int order = 4);

// Cell mean of f over prism x slab k (k >= 1), same sampling contract.
double steklov_cell(const SpaceTimeFn& f, const Discretization& grid,
                    long prism, int k, int order = 4);

// Sup of |f| sampled on a fixed uniform space-time lattice over the closed
// box (nx points per axis, nt time levels).  Deterministic; a sample-based
// lower estimate of the true sup.
double sup_norm(const SpaceTimeFn& f, const Domain& dom, int nx = 65,
                int nt = 33);

// L2(Omega) norm via per-prism tensor Gauss-Legendre.
double l2_spatial(const SpatialFn& f, const Discretization& grid,
                  int order = 4);

// Coefficient and data averages on one grid: per-cell values for the
// operator coefficients and source, per-node window averages for initial
// and target data.
struct CoefficientGrid {
    std::vector<std::vector<double>> a, b, c; // [axis][cell]
    std::vector<double> r, f;                 // [cell]
    std::vector<double> phi, gamma;           // [node]
    double a_min = 0.0; // realized minimum over all a samples
};

struct ProblemFields {
    std::vector<SpaceTimeFn> a, b, c; // size d each
    SpaceTimeFn r, f;                 // may be null (treated as 0)
    SpatialFn phi, gamma;             // may be null (treated as 0)
};

// Builds all averages; rejects with "ellipticity" (naming the axis and cell)
// if any averaged diffusion coefficient falls below a_floor.
CoefficientGrid build_coefficients(const ProblemFields& fields,
                                   const Discretization& grid, double a_floor,
                                   int order = 4);

} // namespace stefan
