#include <doctest.h>

#include <cmath>
#include <span>

#include "stefan/error.hpp"
#include "stefan/grid.hpp"

using namespace stefan;

namespace {

Domain unit_interval(double T = 1.0) { return Domain{{{0.0, 1.0}}, T}; }
Domain unit_square(double T = 1.0) {
    return Domain{{{0.0, 1.0}, {0.0, 1.0}}, T};
}

} // namespace

TEST_CASE("lattice counts in one dimension") {
    auto grid = build_discretization(unit_interval(), 0.25, 4, {0.0, 1.0});
    CHECK(grid.node_count() == 5);
    CHECK(grid.prism_count() == 4);
    CHECK(grid.interior_count() == 3);
    CHECK(grid.cell_count() == 16);
    CHECK(grid.tau() == doctest::Approx(0.25));
    int boundary = 0;
    for (long g = 0; g < grid.node_count(); ++g)
        if (grid.node_on_boundary(g)) ++boundary;
    CHECK(boundary == 2);
}

TEST_CASE("lattice counts in two dimensions") {
    auto grid = build_discretization(unit_square(), 0.5, 2, {0.0, 1.0});
    CHECK(grid.node_count() == 9);
    CHECK(grid.prism_count() == 4);
    CHECK(grid.interior_count() == 1);
    int boundary = 0;
    for (long g = 0; g < grid.node_count(); ++g)
        if (grid.node_on_boundary(g)) ++boundary;
    CHECK(boundary == 8);
}

TEST_CASE("interior and boundary partition the lattice") {
    auto grid = build_discretization(unit_square(), 0.25, 4, {0.0, 1.0});
    long interior = 0;
    for (long g = 0; g < grid.node_count(); ++g)
        if (!grid.node_on_boundary(g)) ++interior;
    CHECK(interior == grid.interior_count());
    CHECK(interior + (grid.node_count() - interior) == grid.node_count());
}

TEST_CASE("step-ratio admissibility") {
    // slope floor 1, no drift: any h/tau >= 1 passes.
    CHECK_NOTHROW(build_discretization(unit_interval(), 0.25, 4, {0.0, 1.0}));
    // h/tau = 0.5 < 1 must be rejected by name.
    try {
        build_discretization(unit_interval(1.0), 0.25, 2, {0.0, 1.0});
        FAIL("expected rejection");
    } catch (const Error& e) {
        CHECK(e.name() == "htau");
    }
    // Drift raises the bound: sum||b|| = 1 needs h/tau >= 3.
    try {
        build_discretization(unit_interval(1.0), 0.25, 8, {1.0, 1.0});
        FAIL("expected rejection");
    } catch (const Error& e) {
        CHECK(e.name() == "htau");
    }
    // Ratio exactly at the bound is admissible: tau = h/3.
    CHECK_NOTHROW(
        build_discretization(unit_interval(1.0), 0.25, 12, {1.0, 1.0}));
}

TEST_CASE("box extent must be commensurate with h") {
    try {
        build_discretization(unit_interval(), 0.3, 2, {0.0, 1.0});
        FAIL("expected rejection");
    } catch (const Error& e) {
        CHECK(e.name() == "divisibility");
    }
}

TEST_CASE("window averages of constants are exact") {
    auto grid = build_discretization(unit_square(), 0.25, 4, {0.0, 1.0});
    SpatialFn c0 = [](std::span<const double>) { return 0.37; };
    SpaceTimeFn c1 = [](std::span<const double>, double) { return -2.25; };
    for (long g = 0; g < grid.node_count(); ++g)
        CHECK(steklov_prism(c0, grid, g) == 0.37);
    for (long p = 0; p < grid.prism_count(); ++p)
        for (int k = 1; k <= grid.n_t(); ++k)
            CHECK(steklov_cell(c1, grid, p, k) == -2.25);
}

TEST_CASE("window averages match analytic means") {
    // Prism mean of sin(pi x) over [x0, x0 + h]: (cos(pi x0) - cos(pi x1))/(pi h).
    auto grid = build_discretization(unit_interval(), 0.125, 8, {0.0, 1.0});
    const double pi = 3.14159265358979323846;
    SpatialFn f = [&](std::span<const double> x) { return std::sin(pi * x[0]); };
    for (long g = 0; g + 1 < grid.node_count(); ++g) {
        const double x0 = grid.coord(0, static_cast<int>(g));
        const double x1 = x0 + grid.h();
        const double exact =
            (std::cos(pi * x0) - std::cos(pi * x1)) / (pi * grid.h());
        CHECK(steklov_prism(f, grid, g) ==
              doctest::Approx(exact).epsilon(1e-10));
    }

    // Cell mean of x*t over one space-time cell is the product of midpoints.
    SpaceTimeFn g2 = [](std::span<const double> x, double t) {
        return x[0] * t;
    };
    const double mean = steklov_cell(g2, grid, 3, 2);
    const double x_mid = grid.coord(0, 3) + 0.5 * grid.h();
    const double t_mid = 0.5 * (grid.time(1) + grid.time(2));
    CHECK(mean == doctest::Approx(x_mid * t_mid).epsilon(1e-13));
}

TEST_CASE("boundary windows clamp to the box") {
    // The forward window of the last node sticks out; clamped sampling
    // replicates the boundary value of a linear-in-x field.
    auto grid = build_discretization(unit_interval(), 0.25, 4, {0.0, 1.0});
    SpatialFn lin = [](std::span<const double> x) {
        return std::min(x[0], 1.0) * 2.0;
    };
    const long last = grid.node_count() - 1;
    CHECK(steklov_prism(lin, grid, last) == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("coefficient averaging rejects degenerate diffusion") {
    auto grid = build_discretization(unit_interval(), 0.25, 4, {0.0, 1.0});
    ProblemFields fields;
    fields.a = {[](std::span<const double> x, double) {
        return x[0] < 0.5 ? 1.0 : -0.5;
    }};
    try {
        build_coefficients(fields, grid, 0.1);
        FAIL("expected rejection");
    } catch (const Error& e) {
        CHECK(e.name() == "ellipticity");
    }
}

TEST_CASE("coefficient grid carries all averages") {
    auto grid = build_discretization(unit_square(), 0.5, 2, {0.0, 1.0});
    ProblemFields fields;
    fields.a = {[](std::span<const double>, double) { return 2.0; },
                [](std::span<const double>, double) { return 3.0; }};
    fields.b = {[](std::span<const double>, double) { return 0.25; },
                SpaceTimeFn{}};
    fields.r = [](std::span<const double>, double) { return 0.5; };
    fields.phi = [](std::span<const double> x) { return x[0] + x[1]; };
    auto cg = build_coefficients(fields, grid, 1.0);
    CHECK(cg.a_min == 2.0);
    for (long cell = 0; cell < grid.cell_count(); ++cell) {
        CHECK(cg.a[0][static_cast<size_t>(cell)] == 2.0);
        CHECK(cg.a[1][static_cast<size_t>(cell)] == 3.0);
        CHECK(cg.b[0][static_cast<size_t>(cell)] == 0.25);
        CHECK(cg.b[1][static_cast<size_t>(cell)] == 0.0);
        CHECK(cg.r[static_cast<size_t>(cell)] == 0.5);
        CHECK(cg.f[static_cast<size_t>(cell)] == 0.0);
    }
    // Window average of x+y at the origin node: mean over [0,h]^2 = h.
    CHECK(cg.phi[0] == doctest::Approx(0.5).epsilon(1e-13));
}

TEST_CASE("discrete gradient energy of smooth data stays below the integral") {
    // Forward differences of window averages of sin(pi x): the lattice
    // energy approaches |d/dx sin(pi x)|^2 integrated over (0,1) from below
    // up to an O(h) excess; 5% slack covers the coarsest level.
    const double pi = 3.14159265358979323846;
    SpatialFn f = [&](std::span<const double> x) { return std::sin(pi * x[0]); };
    const double exact = 0.5 * pi * pi; // integral of (pi cos(pi x))^2
    for (double h : {1.0 / 8, 1.0 / 16, 1.0 / 32, 1.0 / 64}) {
        auto grid = build_discretization(unit_interval(), h,
                                         static_cast<int>(1.0 / h + 0.5),
                                         {0.0, 1.0});
        std::vector<double> phi(static_cast<size_t>(grid.node_count()));
        for (long g = 0; g < grid.node_count(); ++g)
            phi[static_cast<size_t>(g)] = steklov_prism(f, grid, g);
        double energy = 0.0;
        for (long p = 0; p < grid.prism_count(); ++p) {
            const long g = p; // one axis: prism index == corner node index
            const double diff = (phi[static_cast<size_t>(g + 1)] -
                                 phi[static_cast<size_t>(g)]) /
                                grid.h();
            energy += grid.h() * diff * diff;
        }
        CHECK(energy <= 1.05 * exact);
    }
}
