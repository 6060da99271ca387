#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "evac/model.hpp"
#include "evac/mesh.hpp"
#include "oracles.hpp"

using namespace evac;
using Catch::Approx;

TEST_CASE("density-velocity rule endpoints and linear core", "[model]") {
    REQUIRE(f_eval(0.0).f == 1.0);
    REQUIRE(f_eval(1.0).f == 0.0);
    for (double r = 0.0; r <= 1.0; r += 0.125) {
        REQUIRE(f_eval(r).f == Approx(1.0 - r).margin(1e-15));
        REQUIRE(f_eval(r).fp == Approx(-1.0).margin(1e-15));
        REQUIRE(f_eval(r).f <= 1.0 - r + 1e-15);   // box-preservation hypothesis
    }
    REQUIRE(f_eval(-1.5).f == 0.0);
    REQUIRE(f_eval(2.5).f == 0.0);
}

TEST_CASE("density-velocity rule derivative matches finite differences", "[model]") {
    for (double r = -0.5; r <= 1.5 + 1e-9; r += 0.05) {
        const double fd = oracles::central_diff([](double x) { return f_eval(x).f; }, r, 1e-6);
        REQUIRE(f_eval(r).fp == Approx(fd).margin(1e-8));
    }
}

TEST_CASE("density-velocity rule monotone on [0,1], continuous across 0 and 1", "[model]") {
    double prev = f_eval(0.0).f;
    for (double r = 0.01; r <= 1.0 + 1e-12; r += 0.01) {
        const double cur = f_eval(r).f;
        REQUIRE(cur <= prev + 1e-15);
        prev = cur;
    }
    for (double r0 : {0.0, 1.0}) {
        const double eps = 1e-9;
        REQUIRE(std::abs(f_eval(r0 + eps).f - f_eval(r0 - eps).f) < 1e-8);
        REQUIRE(std::abs(f_eval(r0 + eps).fp - f_eval(r0 - eps).fp) < 1e-7);
    }
}

TEST_CASE("smoothed unit-ball projection", "[model]") {
    const double w = 0.01;
    const HEval zero = h_eval({0.0, 0.0}, w);
    REQUIRE(zero.h.norm() == 0.0);

    const Vec2 big{6.0, -8.0};   // |v| = 10
    const HEval sat = h_eval(big, w);
    REQUIRE((sat.h - big / 10.0).norm() < 1e-15);

    // Identity inside the unit ball below the smoothing band.
    const Vec2 small{0.3, -0.4};
    REQUIRE((h_eval(small, w).h - small).norm() < 1e-15);

    // |h| <= 1 everywhere and rotation equivariance.
    for (int k = 0; k < 40; ++k) {
        const Vec2 v = oracles::random_vec(2.0);
        const HEval he = h_eval(v, w);
        REQUIRE(he.h.norm() <= 1.0 + 1e-14);
        const double ang = oracles::uniform(0.0, 6.28);
        const Mat2 rot{std::cos(ang), -std::sin(ang), std::sin(ang), std::cos(ang)};
        const Vec2 lhs = h_eval(rot.apply(v), w).h;
        const Vec2 rhs = rot.apply(he.h);
        REQUIRE((lhs - rhs).norm() < 1e-12);
    }
}

TEST_CASE("projection jacobian matches finite differences near the band", "[model]") {
    const double w = 0.01;
    for (const Vec2 v : {Vec2{0.5, 0.2}, Vec2{0.995, 0.05}, Vec2{0.7, 0.72}, Vec2{1.2, -0.4},
                         Vec2{0.0, 1.0}, Vec2{-1.004, 0.001}}) {
        const Mat2 jac = h_eval(v, w).jac;
        const double h = 1e-7;
        for (int comp = 0; comp < 2; ++comp) {
            const Vec2 dv = comp == 0 ? Vec2{h, 0} : Vec2{0, h};
            const Vec2 fd = (h_eval(v + dv, w).h - h_eval(v - dv, w).h) / (2 * h);
            const Vec2 an = comp == 0 ? Vec2{jac.a00, jac.a10} : Vec2{jac.a01, jac.a11};
            REQUIRE((fd - an).norm() < 1e-6 * std::max(1.0, an.norm()));
        }
    }
}

TEST_CASE("bump kernel values, support, derivatives", "[model]") {
    KernelSpec bump;
    bump.kind = KernelSpec::Bump;
    bump.R = 1.5;
    REQUIRE(kernel_eval(bump, {0, 0}).k == Approx(std::exp(-1.0)).epsilon(1e-14));
    REQUIRE(kernel_eval(bump, {0, 0}).k == Approx(0.3678794).epsilon(1e-6));
    for (const Vec2 x : {Vec2{1.5, 0.0}, Vec2{1.2, 1.2}, Vec2{-3.0, 0.1}}) {
        const KernelEval k = kernel_eval(bump, x);
        REQUIRE(k.k == 0.0);
        REQUIRE(k.grad.norm() == 0.0);
    }
    // Gradient and Hessian against finite differences.
    for (const Vec2 x : {Vec2{0.4, 0.3}, Vec2{-0.9, 0.5}, Vec2{1.1, 0.6}}) {
        const KernelEval k = kernel_eval(bump, x);
        const double h = 1e-6;
        const double fdx = (kernel_eval(bump, {x.x + h, x.y}).k - kernel_eval(bump, {x.x - h, x.y}).k) / (2 * h);
        const double fdy = (kernel_eval(bump, {x.x, x.y + h}).k - kernel_eval(bump, {x.x, x.y - h}).k) / (2 * h);
        REQUIRE(k.grad.x == Approx(fdx).margin(1e-7));
        REQUIRE(k.grad.y == Approx(fdy).margin(1e-7));
        const Vec2 gxp = kernel_eval(bump, {x.x + h, x.y}).grad, gxm = kernel_eval(bump, {x.x - h, x.y}).grad;
        const Vec2 gyp = kernel_eval(bump, {x.x, x.y + h}).grad, gym = kernel_eval(bump, {x.x, x.y - h}).grad;
        REQUIRE(k.hess.a00 == Approx((gxp.x - gxm.x) / (2 * h)).margin(1e-6));
        REQUIRE(k.hess.a10 == Approx((gxp.y - gxm.y) / (2 * h)).margin(1e-6));
        REQUIRE(k.hess.a01 == Approx((gyp.x - gym.x) / (2 * h)).margin(1e-6));
        REQUIRE(k.hess.a11 == Approx((gyp.y - gym.y) / (2 * h)).margin(1e-6));
    }
}

TEST_CASE("morse kernel value at the equilibrium distance", "[model]") {
    KernelSpec morse;
    morse.kind = KernelSpec::Morse;
    morse.a = 2.0;
    morse.r_a = 0.5;
    REQUIRE(kernel_eval(morse, {0.5, 0.0}).k == Approx(-1.0).epsilon(1e-14));
    // Repulsive near, attractive far: k decreasing then increasing in r.
    REQUIRE(kernel_eval(morse, {0.1, 0.0}).k > kernel_eval(morse, {0.5, 0.0}).k);
    REQUIRE(kernel_eval(morse, {2.5, 0.0}).k > kernel_eval(morse, {0.5, 0.0}).k);
}

TEST_CASE("agent potential: empty sum, zero intensities, superposition", "[model]") {
    KernelSpec bump;
    const AgentPotential none = agent_potential(bump, {0.3, 0.4}, {}, {});
    REQUIRE(none.value == 0.0);
    REQUIRE(none.grad_x.norm() == 0.0);

    const std::vector<Vec2> pos{{0.0, 0.0}, {1.0, 0.5}};
    const AgentPotential zeroc = agent_potential(bump, {0.3, 0.4}, pos, {0.0, 0.0});
    REQUIRE(zeroc.value == 0.0);
    REQUIRE(zeroc.d_intensity[0] == Approx(kernel_eval(bump, Vec2{0.3, 0.4}).k));
    REQUIRE(zeroc.d_intensity[1] == Approx(kernel_eval(bump, Vec2{-0.7, -0.1}).k));

    const std::vector<double> c{0.8, 0.6};
    const AgentPotential both = agent_potential(bump, {0.3, 0.4}, pos, c);
    const AgentPotential first = agent_potential(bump, {0.3, 0.4}, {pos[0]}, {c[0]});
    const AgentPotential second = agent_potential(bump, {0.3, 0.4}, {pos[1]}, {c[1]});
    REQUIRE(both.value == Approx(first.value + second.value).epsilon(1e-14));
    REQUIRE((both.grad_x - first.grad_x - second.grad_x).norm() < 1e-14);
    REQUIRE((both.d_position[0] - first.d_position[0]).norm() < 1e-15);
}

TEST_CASE("cellwise transport direction", "[model]") {
    RoomSpec spec;
    spec.x1 = 2.0;
    spec.y1 = 2.0;
    spec.target_edge = 0.35;
    spec.exits = {{ExitInterval::East, 0.5, 1.5}};
    const TriMesh mesh = generate_room(spec);
    const GeometryCache g = compute_geometry(mesh);
    const auto grads = p1_gradients(mesh, g);
    ModelParams params;

    // rho = 1 kills the speed factor.
    {
        const CellField rho(mesh.num_triangles(), 1.0);
        NodalField phi(mesh.num_vertices());
        for (int v = 0; v < mesh.num_vertices(); ++v) phi[v] = mesh.vertices[v].x;
        const auto beta = beta_cellwise(mesh, g, grads, rho, phi, {{1.0, 1.0}}, {0.5}, params);
        for (const auto& b : beta) REQUIRE(b.beta.norm() == 0.0);   // f(1) = 0 exactly
    }

    // Constant phi and no agents give a zero field.
    {
        const CellField rho(mesh.num_triangles(), 0.4);
        const NodalField phi(mesh.num_vertices(), 2.0);
        const auto beta = beta_cellwise(mesh, g, grads, rho, phi, {{1.0, 1.0}}, {0.0}, params);
        // The P1 gradient of a constant field only vanishes to round-off.
        for (const auto& b : beta) REQUIRE(b.beta.norm() < 1e-14);
    }

    // Speed limit |beta| <= v0 f(rho) on randomized fields.
    {
        CellField rho(mesh.num_triangles());
        for (auto& r : rho.v) r = oracles::uniform(0.0, 1.0);
        NodalField phi(mesh.num_vertices());
        for (auto& p : phi.v) p = oracles::uniform(-2.0, 2.0);
        const auto beta = beta_cellwise(mesh, g, grads, rho, phi, {{1.0, 1.0}, {0.4, 1.6}},
                                        {0.7, 0.9}, params);
        for (int t = 0; t < mesh.num_triangles(); ++t)
            REQUIRE(beta[t].beta.norm() <= params.v0 * f_eval(rho[t]).f + 1e-14);
    }
}

TEST_CASE("barrier field: boundary zero, interior in (0,1), sharpening", "[model]") {
    RoomSpec spec;
    spec.x1 = 2.0;
    spec.y1 = 2.0;
    spec.target_edge = 0.18;
    spec.exits = {{ExitInterval::East, 0.5, 1.5}};
    const TriMesh mesh = generate_room(spec);
    const GeometryCache g = compute_geometry(mesh);
    const auto bdry = boundary_vertex_mask(mesh);

    double prev = -1.0;
    for (const double delta4 : {0.1, 0.01, 0.001}) {
        const NodalField xi = solve_barrier(mesh, g, delta4);
        double center = 0.0;
        double best = 1e9;
        for (int v = 0; v < mesh.num_vertices(); ++v) {
            if (bdry[v]) REQUIRE(xi[v] == 0.0);
            else {
                REQUIRE(xi[v] > 0.0);
                REQUIRE(xi[v] < 1.0);
            }
            const double d = (mesh.vertices[v] - Vec2{1.0, 1.0}).norm();
            if (d < best) {
                best = d;
                center = xi[v];
            }
        }
        REQUIRE(center > prev);   // interior value approaches 1 as delta4 -> 0
        prev = center;
    }
    REQUIRE(prev > 0.95);
}

TEST_CASE("model parameter validation", "[model]") {
    ModelParams p;
    p.delta1 = 0.0;
    REQUIRE_THROWS_AS(p.validate(), Error);
    p = ModelParams{};
    p.v0 = -1.0;
    REQUIRE_THROWS_AS(p.validate(), Error);
    p = ModelParams{};
    REQUIRE_NOTHROW(p.validate());
}
