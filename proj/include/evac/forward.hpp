#pragma once

// The fully discrete forward sweep in the decoupled order
//   rho^0, x^0 -> phi^0 -> rho^1 -> x^1 -> phi^1 -> ... -> rho^N -> x^N:
// semi-implicit transport, Newton Eikonal solve per step, and the implicit
// agent position update by fixed-point iteration.

#include <optional>
#include <vector>

#include "evac/controls.hpp"
#include "evac/core.hpp"
#include "evac/eikonal.hpp"
#include "evac/fields.hpp"
#include "evac/mesh.hpp"
#include "evac/model.hpp"
#include "evac/sparse.hpp"
#include "evac/transport.hpp"

namespace evac {

// A fully specified simulation/control problem on one mesh and time grid.
struct Problem {
    const TriMesh* mesh = nullptr;
    const GeometryCache* geom = nullptr;
    ModelParams params;
    double T = 0.0;
    int N = 0;
    CellField rho0;
    std::vector<Vec2> x0;
    NodalField xi;                  // barrier field (empty if mu = 0 and unused)
    std::vector<char> obs_mask;     // per-triangle observation region

    double tau() const { return T / N; }
    int num_agents() const { return static_cast<int>(x0.size()); }

    void validate() const {
        if (!mesh || !geom) fail("problem: mesh not set");
        if (N < 1) fail("problem: N must be >= 1");
        if (!(T > 0.0)) fail("problem: T must be positive");
        params.validate();
        if (rho0.size() != static_cast<std::size_t>(mesh->num_triangles())) fail("problem: rho0 size mismatch");
        if (obs_mask.size() != static_cast<std::size_t>(mesh->num_triangles())) fail("problem: mask size mismatch");
    }
};

struct StateTrajectory {
    double tau = 0.0;
    std::vector<CellField> rho;                 // n = 0..N
    std::vector<NodalField> phi;                // n = 0..N-1 (plus N if requested)
    std::vector<std::vector<Vec2>> x;           // n = 0..N, each of size M
    std::vector<double> mass, rho_min, rho_max; // per time node
    std::vector<double> eikonal_residuals;      // final Newton residual per solved step

    int steps() const { return static_cast<int>(rho.size()) - 1; }
};

struct ForwardOptions {
    bool want_phi_final = false;     // also solve phi^N (not needed by the adjoint)
    bool enforce_cfl = false;        // reject tau above the box-preservation bound
};

// One implicit agent update x = x_prev + tau v0 f(eta_x * rho) u, solved by
// fixed-point iteration started at x_prev.
inline Vec2 agent_step(const TriMesh& mesh, const GeometryCache& geom, const ModelParams& params,
                       Vec2 x_prev, const CellField& rho, Vec2 u, double tau) {
    if (u.norm() > 1.0 + 1e-12)
        fail("agent_step: |u| = ", u.norm(), " exceeds the admissible bound 1");
    Vec2 x = x_prev;
    double prev_inc = std::numeric_limits<double>::max();
    int growth = 0;
    for (int it = 0; it < 100; ++it) {
        const MollifiedValue g = mollified_eval(mesh, geom, rho, x, params.zeta);
        const Vec2 next = x_prev + u * (tau * params.v0 * f_eval(g.value).f);
        const double inc = (next - x).norm();
        x = next;
        if (inc <= 1e-12) return x;
        if (inc > prev_inc) {
            if (++growth >= 5)
                fail("agent_step: fixed-point iteration not contracting (increment ", inc,
                     "); reduce the time step");
        } else {
            growth = 0;
        }
        prev_inc = inc;
    }
    fail("agent_step: no convergence within 100 fixed-point iterations");
}

inline StateTrajectory forward_sweep(const Problem& p, const ControlGrid& q,
                                     ForwardOptions opts = {}) {
    p.validate();
    const double tau = p.tau();
    if (q.agents != p.num_agents() || q.steps != p.N || std::abs(q.tau - tau) > 1e-14 * std::max(1.0, tau))
        fail("forward_sweep: control grid does not match the problem time grid");
    const double cfl = cfl_max_tau(*p.geom);
    if (opts.enforce_cfl && tau > cfl)
        fail("forward_sweep: tau = ", tau, " violates the CFL bound ", cfl);
    if (p.params.v0 > 1.0)
        std::fprintf(stderr, "warning: v0 = %g > 1, box preservation is not guaranteed\n", p.params.v0);

    const TransportOperator transport(*p.mesh, *p.geom, p.params, tau);
    const EikonalSolver eikonal(*p.mesh, *p.geom, p.params);
    const auto grads = eikonal.gradients();

    StateTrajectory traj;
    traj.tau = tau;
    traj.rho.reserve(p.N + 1);
    traj.phi.reserve(p.N + 1);
    traj.x.reserve(p.N + 1);
    traj.rho.push_back(p.rho0);
    traj.x.push_back(p.x0);

    auto record = [&](const CellField& rho) {
        double mn = rho[0], mx = rho[0], mass = 0.0;
        for (std::size_t t = 0; t < rho.size(); ++t) {
            mn = std::min(mn, rho[t]);
            mx = std::max(mx, rho[t]);
            mass += p.geom->area[t] * rho[t];
        }
        traj.mass.push_back(mass);
        traj.rho_min.push_back(mn);
        traj.rho_max.push_back(mx);
    };
    record(traj.rho[0]);

    for (int n = 0; n < p.N; ++n) {
        try {
            const NodalField* warm = n > 0 ? &traj.phi[n - 1] : nullptr;
            auto eik = eikonal.solve(traj.rho[n], warm);
            traj.eikonal_residuals.push_back(eik.final_residual);
            traj.phi.push_back(std::move(eik.phi));

            std::vector<double> c_n(p.num_agents());
            for (int i = 0; i < p.num_agents(); ++i) c_n[i] = q.c[q.index(i, n)];
            const auto beta = beta_cellwise(*p.mesh, *p.geom, grads, traj.rho[n], traj.phi[n],
                                            traj.x[n], c_n, p.params);
            const SparseMatrix B = assemble_advection(*p.mesh, beta_vectors(beta), p.params.eta);
            traj.rho.push_back(transport.step(traj.rho[n], B));
            record(traj.rho[n + 1]);

            std::vector<Vec2> xn1(p.num_agents());
            for (int i = 0; i < p.num_agents(); ++i)
                xn1[i] = agent_step(*p.mesh, *p.geom, p.params, traj.x[n][i],
                                    traj.rho[n + 1], q.u[q.index(i, n + 1)], tau);
            traj.x.push_back(std::move(xn1));
        } catch (const Error& e) {
            fail("forward_sweep: step ", n, ": ", e.what());
        }
    }
    if (opts.want_phi_final) {
        auto eik = eikonal.solve(traj.rho[p.N], p.N > 0 ? &traj.phi[p.N - 1] : nullptr);
        traj.eikonal_residuals.push_back(eik.final_residual);
        traj.phi.push_back(std::move(eik.phi));
    }
    return traj;
}

} // namespace evac
