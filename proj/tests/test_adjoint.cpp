#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "evac/adjoint.hpp"
#include "evac/forward.hpp"
#include "oracles.hpp"

using namespace evac;
using Catch::Approx;

namespace {

struct TestSetup {
    TriMesh mesh;
    GeometryCache geom;
    Problem problem;
    ControlGrid q;

    TestSetup(int N, KernelSpec::Kind kind, double target = 0.45) {
        RoomSpec spec;
        spec.x1 = 5.0;
        spec.y1 = 4.0;
        spec.target_edge = target;
        spec.exits = {{ExitInterval::East, 1.0, 3.0}};
        mesh = generate_room(spec);
        geom = compute_geometry(mesh);

        problem.mesh = &mesh;
        problem.geom = &geom;
        problem.N = N;
        problem.T = 0.8 * cfl_max_tau(geom) * N;
        problem.params = ModelParams{};
        problem.params.kernel.kind = kind;
        problem.params.kernel.a = 0.7;
        problem.params.kernel.r_a = 0.5;
        problem.rho0 = project_p0(mesh, geom, [](Vec2 p) {
            return 0.75 * std::exp(-1.2 * (p - Vec2{1.4, 2.0}).norm2()) +
                   0.5 * std::exp(-2.0 * (p - Vec2{2.6, 2.6}).norm2());
        });
        problem.x0 = {{2.2, 1.6}, {2.0, 2.8}};
        problem.obs_mask.assign(mesh.num_triangles(), 1);
        problem.xi = solve_barrier(mesh, geom, problem.params.delta4);

        q = ControlGrid(2, N, problem.tau());
        for (int i = 0; i < 2; ++i)
            for (int n = 0; n <= N; ++n) {
                const double t = static_cast<double>(n) / N;
                q.u[q.index(i, n)] = Vec2{0.6 + 0.2 * std::sin(2 * t + i), 0.3 * std::cos(t - i)};
                q.c[q.index(i, n)] = 0.4 + 0.3 * t;
            }
    }

    ControlGrid random_direction(double scale) const {
        ControlGrid dq(q.agents, q.steps, q.tau);
        for (auto& u : dq.u) u = oracles::random_vec(scale);
        for (auto& c : dq.c) c = oracles::uniform(-scale, scale);
        return dq;
    }
};

} // namespace

TEST_CASE("objective: vanishing and analytic cases", "[adjoint]") {
    TestSetup s(6, KernelSpec::Bump);

    // rho = 0, mu = 0, q = 0 gives J = 0.
    {
        Problem p = s.problem;
        p.rho0 = CellField(s.mesh.num_triangles(), 0.0);
        p.params.mu = 0.0;
        p.x0.clear();
        ControlGrid q0(0, p.N, p.tau());
        const auto traj = forward_sweep(p, q0);
        REQUIRE(objective_eval(p, traj, q0) == 0.0);
    }

    // Constant u = (1,0), everything else off: J = alpha1/(2T) tau (N+1).
    {
        Problem p = s.problem;
        p.rho0 = CellField(s.mesh.num_triangles(), 0.0);
        p.params.mu = 0.0;
        p.x0 = {{2.5, 2.0}};
        ControlGrid q1(1, p.N, p.tau());
        for (auto& u : q1.u) u = {1.0, 0.0};
        const auto traj = forward_sweep(p, q1);
        const auto parts = objective_parts(p, traj, q1);
        REQUIRE(parts.density == 0.0);
        REQUIRE(parts.barrier == 0.0);
        REQUIRE(parts.control_c == 0.0);
        REQUIRE(parts.control_u ==
                Approx(p.params.alpha1 / (2.0 * p.T) * p.tau() * (p.N + 1)).epsilon(1e-13));
    }

    // Barrier term only, one resting agent: J = -mu tau sum_n log(eta * xi).
    {
        Problem p = s.problem;
        p.rho0 = CellField(s.mesh.num_triangles(), 0.0);
        p.obs_mask.assign(s.mesh.num_triangles(), 0);
        p.x0 = {{2.5, 2.0}};
        ControlGrid q1(1, p.N, p.tau());
        const auto traj = forward_sweep(p, q1);
        const double lg = std::log(mollified_eval(s.mesh, s.geom, p.xi, {2.5, 2.0}, p.params.zeta).value);
        REQUIRE(objective_eval(p, traj, q1) == Approx(-p.params.mu * p.tau() * p.N * lg).epsilon(1e-12));
    }

    // Recomputation from a stored trajectory is bit-identical.
    {
        const auto traj = forward_sweep(s.problem, s.q);
        const double j1 = objective_eval(s.problem, traj, s.q);
        const double j2 = objective_eval(s.problem, traj, s.q);
        REQUIRE(j1 == j2);
    }
}

TEST_CASE("adjoint: zero objective gives identically zero multipliers", "[adjoint]") {
    TestSetup s(5, KernelSpec::Bump);
    Problem p = s.problem;
    p.params.mu = 0.0;
    p.obs_mask.assign(s.mesh.num_triangles(), 0);
    const auto traj = forward_sweep(p, s.q);
    const auto adj = backward_sweep(p, traj, s.q);
    for (int n = 0; n <= p.N; ++n) {
        for (double v : adj.lambda_rho[n].v) REQUIRE(v == 0.0);
        for (const Vec2& v : adj.lambda_x[n]) REQUIRE(v.norm() == 0.0);
    }
    for (int n = 0; n < p.N; ++n)
        for (double v : adj.lambda_phi[n].v) REQUIRE(v == 0.0);
    const auto rep = gradient(p, traj, adj, s.q);
    for (std::size_t k = 0; k < rep.representer.u.size(); ++k) {
        REQUIRE(rep.representer.u[k].norm() == 0.0);
        REQUIRE(rep.representer.c[k] == 0.0);
        REQUIRE((rep.grad.u[k] - s.q.u[k] * (p.params.alpha1 / p.T)).norm() == 0.0);
        REQUIRE(rep.grad.c[k] == s.q.c[k] * (p.params.alpha2 / p.T));
    }
}

TEST_CASE("tangent: zero direction and linearity", "[adjoint]") {
    TestSetup s(5, KernelSpec::Morse);
    const auto traj = forward_sweep(s.problem, s.q);

    const ControlGrid zero(s.q.agents, s.q.steps, s.q.tau);
    REQUIRE(tangent_sweep(s.problem, traj, s.q, zero) == 0.0);

    const ControlGrid da = s.random_direction(0.3);
    const ControlGrid db = s.random_direction(0.3);
    ControlGrid combo = da;
    for (std::size_t k = 0; k < combo.u.size(); ++k) combo.u[k] = da.u[k] * 2.0 + db.u[k] * 0.5;
    for (std::size_t k = 0; k < combo.c.size(); ++k) combo.c[k] = 2.0 * da.c[k] + 0.5 * db.c[k];
    const double lhs = tangent_sweep(s.problem, traj, s.q, combo);
    const double rhs = 2.0 * tangent_sweep(s.problem, traj, s.q, da) +
                       0.5 * tangent_sweep(s.problem, traj, s.q, db);
    REQUIRE(lhs == Approx(rhs).epsilon(1e-12));
}

TEST_CASE("adjoint-tangent duality in both pairings", "[adjoint]") {
    for (const auto kind : {KernelSpec::Bump, KernelSpec::Morse}) {
        TestSetup s(8, kind);
        const auto traj = forward_sweep(s.problem, s.q);
        const auto adj = backward_sweep(s.problem, traj, s.q);
        const auto rep = gradient(s.problem, traj, adj, s.q);

        for (int trial = 0; trial < 5; ++trial) {
            const ControlGrid dq = s.random_direction(0.5);
            const double dJ = tangent_sweep(s.problem, traj, s.q, dq);

            // Euclidean pairing with the assembled partials plus regularization.
            double eucl = 0.0;
            for (std::size_t k = 0; k < dq.u.size(); ++k) {
                eucl += rep.euclid.u[k].dot(dq.u[k]);
                eucl += rep.euclid.c[k] * dq.c[k];
            }
            for (int i = 0; i < s.q.agents; ++i) {
                eucl += s.problem.params.alpha1 / s.problem.T * h1_inner(s.q.u_agent(i), dq.u_agent(i), s.q.tau);
                eucl += s.problem.params.alpha2 / s.problem.T * h1_inner(s.q.c_agent(i), dq.c_agent(i), s.q.tau);
            }
            REQUIRE(dJ == Approx(eucl).epsilon(1e-10));

            // H1 pairing with the represented gradient.
            REQUIRE(dJ == Approx(control_inner(rep.grad, dq)).epsilon(1e-10));
        }
    }
}

TEST_CASE("riesz property of the representers", "[adjoint]") {
    TestSetup s(12, KernelSpec::Bump);
    const auto traj = forward_sweep(s.problem, s.q);
    const auto adj = backward_sweep(s.problem, traj, s.q);
    const auto rep = gradient(s.problem, traj, adj, s.q);

    for (int trial = 0; trial < 20; ++trial) {
        const ControlGrid dq = s.random_direction(1.0);
        for (int i = 0; i < s.q.agents; ++i) {
            const double zu = h1_inner(rep.representer.u_agent(i), dq.u_agent(i), s.q.tau);
            double pu = 0.0;
            for (int n = 0; n <= s.q.steps; ++n)
                pu += rep.euclid.u[rep.euclid.index(i, n)].dot(dq.u[dq.index(i, n)]);
            REQUIRE(zu == Approx(pu).margin(1e-12 * std::max(1.0, std::abs(pu))));

            const double dc = h1_inner(rep.representer.c_agent(i), dq.c_agent(i), s.q.tau);
            double rc = 0.0;
            for (int n = 0; n <= s.q.steps; ++n)
                rc += rep.euclid.c[rep.euclid.index(i, n)] * dq.c[dq.index(i, n)];
            REQUIRE(dc == Approx(rc).margin(1e-12 * std::max(1.0, std::abs(rc))));
        }
    }
}

TEST_CASE("gradient matches central finite differences", "[adjoint]") {
    TestSetup s(10, KernelSpec::Morse);
    const auto traj = forward_sweep(s.problem, s.q);
    const auto adj = backward_sweep(s.problem, traj, s.q);
    const auto rep = gradient(s.problem, traj, adj, s.q);

    for (int trial = 0; trial < 3; ++trial) {
        const ControlGrid dq = s.random_direction(0.4);
        const double predicted = control_inner(rep.grad, dq);

        const double h = 1e-6;
        ControlGrid qp = s.q, qm = s.q;
        for (std::size_t k = 0; k < s.q.u.size(); ++k) {
            qp.u[k] = s.q.u[k] + dq.u[k] * h;
            qm.u[k] = s.q.u[k] - dq.u[k] * h;
            qp.c[k] = s.q.c[k] + h * dq.c[k];
            qm.c[k] = s.q.c[k] - h * dq.c[k];
        }
        const double jp = objective_eval(s.problem, forward_sweep(s.problem, qp), qp);
        const double jm = objective_eval(s.problem, forward_sweep(s.problem, qm), qm);
        const double fd = (jp - jm) / (2.0 * h);
        REQUIRE(predicted == Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("adjoint mutation hook breaks the gradient", "[adjoint]") {
    TestSetup s(6, KernelSpec::Bump);
    const auto traj = forward_sweep(s.problem, s.q);
    const auto good = gradient(s.problem, traj, backward_sweep(s.problem, traj, s.q), s.q);
    AdjointOptions flip;
    flip.debug_flip_term = 1;
    const auto bad = gradient(s.problem, traj, backward_sweep(s.problem, traj, s.q, flip), s.q);
    double diff = 0.0;
    for (std::size_t k = 0; k < good.grad.u.size(); ++k) diff += (good.grad.u[k] - bad.grad.u[k]).norm();
    REQUIRE(diff > 1e-8);
}
