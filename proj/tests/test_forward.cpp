#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "evac/forward.hpp"
#include "oracles.hpp"

using namespace evac;
using Catch::Approx;

namespace {

Problem make_problem(const TriMesh& mesh, const GeometryCache& g, double T, int N) {
    Problem p;
    p.mesh = &mesh;
    p.geom = &g;
    p.T = T;
    p.N = N;
    p.params = ModelParams{};
    p.rho0 = CellField(mesh.num_triangles(), 0.0);
    p.obs_mask.assign(mesh.num_triangles(), 1);
    return p;
}

} // namespace

TEST_CASE("agent step: trivial cases", "[forward]") {
    RoomSpec spec;
    spec.x1 = 4.0;
    spec.y1 = 4.0;
    spec.target_edge = 0.4;
    spec.exits = {{ExitInterval::East, 1.0, 3.0}};
    const TriMesh mesh = generate_room(spec);
    const GeometryCache g = compute_geometry(mesh);
    ModelParams params;
    const double tau = 0.05;
    const Vec2 x0{2.0, 2.0};

    // u = 0 keeps the position.
    {
        const CellField rho(mesh.num_triangles(), 0.3);
        const Vec2 x1 = agent_step(mesh, g, params, x0, rho, {0.0, 0.0}, tau);
        REQUIRE((x1 - x0).norm() == 0.0);
    }
    // Empty room: full speed step tau v0 u.
    {
        const CellField rho(mesh.num_triangles(), 0.0);
        const Vec2 u{0.6, -0.8};
        const Vec2 x1 = agent_step(mesh, g, params, x0, rho, u, tau);
        REQUIRE((x1 - (x0 + u * (tau * params.v0))).norm() < 1e-12);
    }
    // Jammed room: f(1) = 0 freezes the agent.
    {
        const CellField rho(mesh.num_triangles(), 1.0);
        const Vec2 x1 = agent_step(mesh, g, params, x0, rho, {1.0, 0.0}, tau);
        REQUIRE((x1 - x0).norm() < 1e-12);
    }
    // Inadmissible direction magnitude is rejected.
    {
        const CellField rho(mesh.num_triangles(), 0.0);
        REQUIRE_THROWS_WITH(agent_step(mesh, g, params, x0, rho, {1.5, 0.0}, tau),
                            Catch::Matchers::ContainsSubstring("admissible"));
    }
}

TEST_CASE("forward sweep: N = 0 rejected, trivial horizon holds initial data", "[forward]") {
    RoomSpec spec;
    spec.x1 = 3.0;
    spec.y1 = 2.0;
    spec.target_edge = 0.35;
    spec.exits = {{ExitInterval::East, 0.5, 1.5}};
    const TriMesh mesh = generate_room(spec);
    const GeometryCache g = compute_geometry(mesh);
    Problem p = make_problem(mesh, g, 0.05, 1);
    p.rho0 = project_p0(mesh, g, [](Vec2 q) { return 0.5 * std::exp(-(q - Vec2{1.0, 1.0}).norm2()); });

    ControlGrid q(0, 1, p.tau());
    const StateTrajectory traj = forward_sweep(p, q);
    REQUIRE(traj.steps() == 1);
    REQUIRE(traj.rho[0].v == p.rho0.v);
    REQUIRE(traj.phi.size() == 1);
    REQUIRE(traj.mass.size() == 2);

    p.N = 0;
    REQUIRE_THROWS_AS(forward_sweep(p, q), Error);
}

TEST_CASE("forward sweep: mass conservation with gamma = 0", "[forward]") {
    RoomSpec spec;
    spec.x1 = 4.0;
    spec.y1 = 3.0;
    spec.target_edge = 0.35;
    spec.exits = {{ExitInterval::East, 0.5, 2.5}};
    const TriMesh mesh = generate_room(spec);
    const GeometryCache g = compute_geometry(mesh);

    Problem p = make_problem(mesh, g, 0.0, 40);
    p.params.gamma = 0.0;
    const double tau = 0.9 * cfl_max_tau(g);
    p.T = tau * p.N;
    p.rho0 = project_p0(mesh, g, [](Vec2 q) {
        return 0.8 * std::exp(-2.0 * (q - Vec2{1.0, 1.5}).norm2());
    });
    p.x0 = {{2.0, 1.5}};

    ControlGrid q(1, p.N, p.tau());
    for (auto& u : q.u) u = {0.5, 0.0};
    for (auto& c : q.c) c = 0.8;

    const StateTrajectory traj = forward_sweep(p, q, {.enforce_cfl = true});
    for (int n = 0; n <= p.N; ++n)
        REQUIRE(std::abs(traj.mass[n] - traj.mass[0]) <= 1e-12 * traj.mass[0]);
}

TEST_CASE("forward sweep: box preservation and outflow monotonicity", "[forward]") {
    RoomSpec spec;
    spec.x1 = 4.0;
    spec.y1 = 3.0;
    spec.target_edge = 0.33;
    spec.exits = {{ExitInterval::East, 0.5, 2.5}};
    const TriMesh mesh = generate_room(spec);
    const GeometryCache g = compute_geometry(mesh);

    Problem p = make_problem(mesh, g, 0.0, 60);
    p.params.gamma = 10.0;
    p.params.eta = 1.0;
    p.params.v0 = 1.0;
    const double tau = 0.9 * cfl_max_tau(g);
    p.T = tau * p.N;
    p.rho0 = project_p0(mesh, g, [](Vec2 q) {
        return 0.95 * std::exp(-1.5 * (q - Vec2{1.0, 1.5}).norm2()) +
               0.7 * std::exp(-3.0 * (q - Vec2{2.5, 1.0}).norm2());
    });
    p.x0 = {{1.5, 2.0}};

    ControlGrid q(1, p.N, p.tau());
    for (auto& u : q.u) u = {0.7, 0.1};
    for (auto& c : q.c) c = 0.6;

    const StateTrajectory traj = forward_sweep(p, q, {.enforce_cfl = true});
    for (int n = 0; n <= p.N; ++n) {
        REQUIRE(traj.rho_min[n] >= -1e-10);
        REQUIRE(traj.rho_max[n] <= 1.0 + 1e-10);
        if (n > 0) REQUIRE(traj.mass[n] <= traj.mass[n - 1] + 1e-12 * traj.mass[0]);
    }

    // Determinism: identical inputs give bit-identical trajectories.
    const StateTrajectory again = forward_sweep(p, q, {.enforce_cfl = true});
    for (int n = 0; n <= p.N; ++n) {
        REQUIRE(again.rho[n].v == traj.rho[n].v);
        for (int i = 0; i < p.num_agents(); ++i) {
            REQUIRE(again.x[n][i].x == traj.x[n][i].x);
            REQUIRE(again.x[n][i].y == traj.x[n][i].y);
        }
    }
}

TEST_CASE("forward sweep: cfl enforcement flag", "[forward]") {
    RoomSpec spec;
    spec.x1 = 2.0;
    spec.y1 = 2.0;
    spec.target_edge = 0.3;
    spec.exits = {{ExitInterval::East, 0.5, 1.5}};
    const TriMesh mesh = generate_room(spec);
    const GeometryCache g = compute_geometry(mesh);
    Problem p = make_problem(mesh, g, 1.0, 5);   // tau = 0.2 far above the bound
    ControlGrid q(0, 5, p.tau());
    REQUIRE_THROWS_WITH(forward_sweep(p, q, {.enforce_cfl = true}),
                        Catch::Matchers::ContainsSubstring("CFL"));
    REQUIRE_NOTHROW(forward_sweep(p, q));
}
