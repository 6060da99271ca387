#pragma once

// Discrete objective, hand-derived discrete adjoint backward sweep, the
// forward-mode tangent sweep used as its oracle, and assembly of the H1(0,T)
// control gradient via Riesz representers.
//
// All coupling blocks are written once and shared between the tangent and
// adjoint sweeps, so each adjoint operator is the exact transpose of the
// corresponding tangent operator by construction.

#include <vector>

#include "evac/controls.hpp"
#include "evac/core.hpp"
#include "evac/eikonal.hpp"
#include "evac/fields.hpp"
#include "evac/forward.hpp"
#include "evac/mesh.hpp"
#include "evac/model.hpp"
#include "evac/sparse.hpp"
#include "evac/transport.hpp"

namespace evac {

// ---------------------------------------------------------------------------
// Objective

struct ObjectiveParts {
    double density = 0.0;
    double barrier = 0.0;
    double control_u = 0.0;
    double control_c = 0.0;
    double total() const { return density + barrier + control_u + control_c; }
};

inline MollifiedValue barrier_eval(const Problem& p, Vec2 x) {
    const MollifiedValue g = mollified_eval(*p.mesh, *p.geom, p.xi, x, p.params.zeta);
    if (!(g.value > 0.0))
        fail("objective: mollified barrier value ", g.value, " at (", x.x, ",", x.y,
             ") is not positive (agent effectively outside the domain)");
    return g;
}

inline ObjectiveParts objective_parts(const Problem& p, const StateTrajectory& traj,
                                      const ControlGrid& q) {
    const double tau = p.tau();
    ObjectiveParts parts;
    for (int n = 1; n <= p.N; ++n) {
        const double w = tau * std::exp(p.params.nu * n * tau);
        double integral = 0.0;
        for (int t = 0; t < p.mesh->num_triangles(); ++t)
            if (p.obs_mask[t]) integral += p.geom->area[t] * traj.rho[n][t];
        parts.density += w * integral;
    }
    if (p.params.mu > 0.0)
        for (int i = 0; i < p.num_agents(); ++i)
            for (int n = 1; n <= p.N; ++n)
                parts.barrier -= p.params.mu * tau * std::log(barrier_eval(p, traj.x[n][i]).value);
    for (int i = 0; i < q.agents; ++i) {
        parts.control_u += p.params.alpha1 / (2.0 * p.T) * h1_inner(q.u_agent(i), q.u_agent(i), tau);
        parts.control_c += p.params.alpha2 / (2.0 * p.T) * h1_inner(q.c_agent(i), q.c_agent(i), tau);
    }
    return parts;
}

inline double objective_eval(const Problem& p, const StateTrajectory& traj, const ControlGrid& q) {
    return objective_parts(p, traj, q).total();
}

// ---------------------------------------------------------------------------
// Shared coupling blocks

namespace coupling {

// d/drho of the eikonal right-hand side 1/(f^2+delta2): the factor
// 2 f f' / (f^2+delta2)^2 per cell.
inline std::vector<double> eik_rho_factor(const CellField& rho, double delta2) {
    std::vector<double> e(rho.size());
    for (std::size_t t = 0; t < rho.size(); ++t) {
        const FEval f = f_eval(rho[t]);
        const double den = f.f * f.f + delta2;
        e[t] = 2.0 * f.f * f.fp / (den * den);
    }
    return e;
}

// Tangent direction: right-hand side of the linearized eikonal equation,
// rhs[v] = -sum_{T ni v} E_T (|T|/3) drho_T on non-Dirichlet vertices.
inline std::vector<double> eik_rhs_from_drho(const TriMesh& mesh, const GeometryCache& geom,
                                             const std::vector<double>& E, const CellField& drho,
                                             const std::vector<char>& dirichlet) {
    std::vector<double> rhs(mesh.num_vertices(), 0.0);
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        const double c = -E[t] * geom.area[t] / 3.0 * drho[t];
        for (int v : mesh.triangles[t])
            if (!dirichlet[v]) rhs[v] += c;
    }
    return rhs;
}

// Adjoint direction: cellwise source -E_T (|T|/3) sum_{v in T} lambda_phi_v.
inline std::vector<double> eik_source_to_rho(const TriMesh& mesh, const GeometryCache& geom,
                                             const std::vector<double>& E,
                                             const std::vector<double>& lambda_phi) {
    std::vector<double> out(mesh.num_triangles(), 0.0);
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        double s = 0.0;
        for (int v : mesh.triangles[t]) s += lambda_phi[v];
        out[t] = -E[t] * geom.area[t] / 3.0 * s;
    }
    return out;
}

// Kernel gradient/Hessian at every triangle centroid for every agent.
struct AgentKernelTable {
    int agents = 0;
    std::vector<Vec2> grad;    // [t * agents + i]
    std::vector<Mat2> hess;
};

inline AgentKernelTable agent_kernel_table(const TriMesh& mesh, const GeometryCache& geom,
                                           const KernelSpec& kernel, const std::vector<Vec2>& x) {
    AgentKernelTable tab;
    tab.agents = static_cast<int>(x.size());
    tab.grad.resize(static_cast<std::size_t>(mesh.num_triangles()) * tab.agents);
    tab.hess.resize(tab.grad.size());
    for (int t = 0; t < mesh.num_triangles(); ++t)
        for (int i = 0; i < tab.agents; ++i) {
            const KernelEval k = kernel_eval(kernel, geom.centroid[t] - x[i]);
            tab.grad[static_cast<std::size_t>(t) * tab.agents + i] = k.grad;
            tab.hess[static_cast<std::size_t>(t) * tab.agents + i] = k.hess;
        }
    return tab;
}

// Tangent direction of the cellwise transport direction:
// dbeta_T = v0 [f' drho h + f Dh (grad dphi + sum_i (-c_i Hess K dx_i + grad K dc_i))].
inline std::vector<Vec2> dbeta_from(const TriMesh& mesh, const std::vector<BetaRecord>& beta,
                                    const std::vector<std::array<Vec2, 3>>& grads,
                                    const AgentKernelTable& tab, const std::vector<double>& c_n,
                                    double v0, const CellField& drho, const NodalField& dphi,
                                    const std::vector<Vec2>& dx, const std::vector<double>& dc) {
    const int nt = mesh.num_triangles();
    const int M = tab.agents;
    std::vector<Vec2> out(nt);
    for (int t = 0; t < nt; ++t) {
        Vec2 darg = p1_gradient_on_tri(mesh, grads, dphi, t);
        for (int i = 0; i < M; ++i) {
            const std::size_t k = static_cast<std::size_t>(t) * M + i;
            darg += tab.grad[k] * dc[i] - tab.hess[k].apply(dx[i]) * c_n[i];
        }
        out[t] = beta[t].hval * (v0 * beta[t].fp * drho[t]) + beta[t].dh.apply(darg) * (v0 * beta[t].f);
    }
    return out;
}

// Adjoint of the beta chain for a given advection sensitivity q_T.
struct BetaChain {
    std::vector<double> rho_pull;   // q . (v0 f' h) per cell
    std::vector<Vec2> s;            // v0 f Dh^T q per cell, pairs with grad(dphi)
};

inline BetaChain beta_chain(const std::vector<BetaRecord>& beta, const std::vector<Vec2>& q, double v0) {
    BetaChain ch;
    ch.rho_pull.resize(beta.size());
    ch.s.resize(beta.size());
    for (std::size_t t = 0; t < beta.size(); ++t) {
        ch.rho_pull[t] = q[t].dot(beta[t].hval) * v0 * beta[t].fp;
        ch.s[t] = beta[t].dh.transposed().apply(q[t]) * (v0 * beta[t].f);
    }
    return ch;
}

// Nodal functional paired with grad(dphi): rhs[v] = sum_{T ni v} s_T . gradN_v|_T.
inline std::vector<double> phi_rhs_from_s(const TriMesh& mesh,
                                          const std::vector<std::array<Vec2, 3>>& grads,
                                          const std::vector<Vec2>& s,
                                          const std::vector<char>& dirichlet) {
    std::vector<double> rhs(mesh.num_vertices(), 0.0);
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        const auto& tr = mesh.triangles[t];
        for (int a = 0; a < 3; ++a)
            if (!dirichlet[tr[a]]) rhs[tr[a]] += s[t].dot(grads[t][a]);
    }
    return rhs;
}

// Position pull of the beta chain: sum_T (-c_i) Hess K_{T,i} s_T.
inline Vec2 x_pull(const AgentKernelTable& tab, const std::vector<Vec2>& s, int i, double c_i) {
    Vec2 out;
    for (std::size_t t = 0; t < s.size(); ++t)
        out += tab.hess[t * tab.agents + i].apply(s[t]);
    return out * (-c_i);
}

// Intensity pull of the beta chain: sum_T s_T . grad K_{T,i}.
inline double c_pull(const AgentKernelTable& tab, const std::vector<Vec2>& s, int i) {
    double out = 0.0;
    for (std::size_t t = 0; t < s.size(); ++t)
        out += s[t].dot(tab.grad[t * tab.agents + i]);
    return out;
}

} // namespace coupling

// ---------------------------------------------------------------------------
// Adjoint backward sweep

struct AdjointTrajectory {
    std::vector<CellField> lambda_rho;              // n = 0..N
    std::vector<NodalField> lambda_phi;             // n = 0..N-1
    std::vector<std::vector<Vec2>> lambda_x;        // n = 0..N, each of size M
    // Euclidean partials of the reduced objective with respect to the control
    // nodes (regularization excluded): p_i^n pairs with du_i^n, r_i^n with dc_i^n.
    std::vector<Vec2> partial_u;                    // [i*(N+1)+n]
    std::vector<double> partial_c;
};

struct AdjointOptions {
    // Test hook for the mutation check: 1 flips the sign of the barrier
    // source in the position adjoint.
    int debug_flip_term = 0;
};

inline AdjointTrajectory backward_sweep(const Problem& p, const StateTrajectory& traj,
                                        const ControlGrid& q, AdjointOptions opts = {}) {
    p.validate();
    const double tau = p.tau();
    const int N = p.N, M = p.num_agents(), nt = p.mesh->num_triangles();
    if (traj.steps() != N) fail("backward_sweep: trajectory does not match the problem grid");
    const double barrier_sign = opts.debug_flip_term == 1 ? -1.0 : 1.0;

    const TransportOperator transport(*p.mesh, *p.geom, p.params, tau);
    const EikonalSolver eikonal(*p.mesh, *p.geom, p.params);
    const auto& grads = eikonal.gradients();
    const auto& dirichlet = eikonal.dirichlet();

    AdjointTrajectory adj;
    adj.lambda_rho.assign(N + 1, CellField(nt));
    adj.lambda_phi.assign(N, NodalField(p.mesh->num_vertices()));
    adj.lambda_x.assign(N + 1, std::vector<Vec2>(M));
    adj.partial_u.assign(static_cast<std::size_t>(M) * (N + 1), Vec2{});
    adj.partial_c.assign(static_cast<std::size_t>(M) * (N + 1), 0.0);
    auto idx = [&](int i, int n) { return static_cast<std::size_t>(i) * (N + 1) + n; };

    // Density observation weight tau e^{nu t_n} |T| on masked cells, n >= 1.
    auto density_source = [&](int n, std::vector<double>& rhs) {
        const double w = tau * std::exp(p.params.nu * n * tau);
        for (int t = 0; t < nt; ++t)
            if (p.obs_mask[t]) rhs[t] += w * p.geom->area[t];
    };

    // Terminal level n = N: lambda_x^N from the barrier gradient, then
    // lambda_rho^N from the observation weight and the agent mollifier term.
    {
        std::vector<double> rhs(nt, 0.0);
        density_source(N, rhs);
        for (int i = 0; i < M; ++i) {
            const Vec2 u = q.u[q.index(i, N)];
            const MollifiedValue g = mollified_eval(*p.mesh, *p.geom, traj.rho[N], traj.x[N][i], p.params.zeta);
            const FEval f = f_eval(g.value);
            Vec2 bar{};
            if (p.params.mu > 0.0) {
                const MollifiedValue gx = barrier_eval(p, traj.x[N][i]);
                bar = gx.gradient * (-barrier_sign * p.params.mu * tau / gx.value);
            }
            const Mat2 A2 = Mat2::identity() - Mat2::outer(g.gradient, u) * (tau * p.params.v0 * f.fp);
            const Vec2 lx = A2.solve(bar);
            adj.lambda_x[N][i] = lx;
            adj.partial_u[idx(i, N)] = lx * (tau * p.params.v0 * f.f);
            const double coef = tau * p.params.v0 * f.fp * u.dot(lx);
            for (const auto& [t, w] : mollified_weights(*p.mesh, *p.geom, traj.x[N][i], p.params.zeta))
                rhs[t] += coef * w;
        }
        adj.lambda_rho[N].v = transport.solve_system(rhs);
    }

    for (int n = N - 1; n >= 0; --n) {
        // The beta chain of step n sources every adjoint family at this level.
        std::vector<double> c_n(M);
        for (int i = 0; i < M; ++i) c_n[i] = q.c[q.index(i, n)];
        const auto beta = beta_cellwise(*p.mesh, *p.geom, grads, traj.rho[n], traj.phi[n],
                                        traj.x[n], c_n, p.params);
        const SparseMatrix B = assemble_advection(*p.mesh, beta_vectors(beta), p.params.eta);
        const auto tab = coupling::agent_kernel_table(*p.mesh, *p.geom, p.params.kernel, traj.x[n]);
        const std::vector<Vec2> qsens = advection_beta_sensitivity(*p.mesh, traj.rho[n],
                                                                   adj.lambda_rho[n + 1].v);
        const auto chain = coupling::beta_chain(beta, qsens, p.params.v0);

        // lambda_phi^n: transposed linearized eikonal operator.
        {
            std::vector<double> rhs = coupling::phi_rhs_from_s(*p.mesh, grads, chain.s, dirichlet);
            for (double& v : rhs) v = -v;
            const SparseFactorization jt(eikonal.jacobian(traj.phi[n]).transposed());
            adj.lambda_phi[n].v = jt.solve(rhs);
        }

        // Intensity partial: r_i^n = -tau sum_T s_T . grad K_{T,i}.
        for (int i = 0; i < M; ++i)
            adj.partial_c[idx(i, n)] = -tau * coupling::c_pull(tab, chain.s, i);

        // lambda_x^n: recursion with the implicit mollifier matrix (n >= 1).
        for (int i = 0; i < M; ++i) {
            Vec2 rhs = adj.lambda_x[n + 1][i] - coupling::x_pull(tab, chain.s, i, c_n[i]) * tau;
            if (n >= 1) {
                if (p.params.mu > 0.0) {
                    const MollifiedValue gx = barrier_eval(p, traj.x[n][i]);
                    rhs += gx.gradient * (-barrier_sign * p.params.mu * tau / gx.value);
                }
                const Vec2 u = q.u[q.index(i, n)];
                const MollifiedValue g = mollified_eval(*p.mesh, *p.geom, traj.rho[n], traj.x[n][i], p.params.zeta);
                const FEval f = f_eval(g.value);
                const Mat2 A2 = Mat2::identity() - Mat2::outer(g.gradient, u) * (tau * p.params.v0 * f.fp);
                adj.lambda_x[n][i] = A2.solve(rhs);
                adj.partial_u[idx(i, n)] = adj.lambda_x[n][i] * (tau * p.params.v0 * f.f);
            } else {
                adj.lambda_x[0][i] = rhs;
            }
        }

        // lambda_rho^n: transposed transport plus all couplings of level n.
        {
            std::vector<double> rhs = B.apply_transposed(adj.lambda_rho[n + 1].v);
            for (int t = 0; t < nt; ++t)
                rhs[t] = transport.mass()[t] * adj.lambda_rho[n + 1][t] - tau * rhs[t] - tau * chain.rho_pull[t];
            const auto E = coupling::eik_rho_factor(traj.rho[n], p.params.delta2);
            const auto esrc = coupling::eik_source_to_rho(*p.mesh, *p.geom, E, adj.lambda_phi[n].v);
            for (int t = 0; t < nt; ++t) rhs[t] += tau * esrc[t];
            if (n >= 1) {
                density_source(n, rhs);
                for (int i = 0; i < M; ++i) {
                    const Vec2 u = q.u[q.index(i, n)];
                    const MollifiedValue g = mollified_eval(*p.mesh, *p.geom, traj.rho[n], traj.x[n][i], p.params.zeta);
                    const FEval f = f_eval(g.value);
                    const double coef = tau * p.params.v0 * f.fp * u.dot(adj.lambda_x[n][i]);
                    for (const auto& [t, w] : mollified_weights(*p.mesh, *p.geom, traj.x[n][i], p.params.zeta))
                        rhs[t] += coef * w;
                }
                adj.lambda_rho[n].v = transport.solve_system(rhs);
            } else {
                // n = 0 carries the initial-condition multiplier: a mass solve.
                for (int t = 0; t < nt; ++t) adj.lambda_rho[0].v[t] = rhs[t] / transport.mass()[t];
            }
        }
    }
    return adj;
}

// ---------------------------------------------------------------------------
// Tangent sweep: exact directional derivative of J along dq, differentiating
// the discrete steps in sequence. Serves as the adjoint's oracle.

inline double tangent_sweep(const Problem& p, const StateTrajectory& traj, const ControlGrid& q,
                            const ControlGrid& dq) {
    p.validate();
    const double tau = p.tau();
    const int N = p.N, M = p.num_agents(), nt = p.mesh->num_triangles();
    if (traj.steps() != N) fail("tangent_sweep: trajectory does not match the problem grid");
    if (!q.same_grid(dq)) fail("tangent_sweep: direction grid mismatch");

    const TransportOperator transport(*p.mesh, *p.geom, p.params, tau);
    const EikonalSolver eikonal(*p.mesh, *p.geom, p.params);
    const auto& grads = eikonal.gradients();
    const auto& dirichlet = eikonal.dirichlet();

    CellField drho(nt, 0.0);
    std::vector<Vec2> dx(M);
    double dJ = 0.0;

    for (int i = 0; i < M; ++i) {
        dJ += p.params.alpha1 / p.T * h1_inner(q.u_agent(i), dq.u_agent(i), tau);
        dJ += p.params.alpha2 / p.T * h1_inner(q.c_agent(i), dq.c_agent(i), tau);
    }

    for (int n = 0; n < N; ++n) {
        std::vector<double> c_n(M), dc_n(M);
        for (int i = 0; i < M; ++i) {
            c_n[i] = q.c[q.index(i, n)];
            dc_n[i] = dq.c[dq.index(i, n)];
        }
        const auto beta = beta_cellwise(*p.mesh, *p.geom, grads, traj.rho[n], traj.phi[n],
                                        traj.x[n], c_n, p.params);
        const SparseMatrix B = assemble_advection(*p.mesh, beta_vectors(beta), p.params.eta);
        const auto tab = coupling::agent_kernel_table(*p.mesh, *p.geom, p.params.kernel, traj.x[n]);

        // Linearized eikonal solve for dphi^n.
        NodalField dphi(p.mesh->num_vertices(), 0.0);
        {
            const auto E = coupling::eik_rho_factor(traj.rho[n], p.params.delta2);
            const std::vector<double> rhs = coupling::eik_rhs_from_drho(*p.mesh, *p.geom, E, drho, dirichlet);
            dphi.v = SparseFactorization(eikonal.jacobian(traj.phi[n])).solve(rhs);
        }

        const std::vector<Vec2> dbeta = coupling::dbeta_from(*p.mesh, beta, grads, tab, c_n,
                                                              p.params.v0, drho, dphi, dx, dc_n);

        // Linearized transport step.
        std::vector<double> rhs = B.apply(drho.v);
        const std::vector<double> dBrho = advection_apply_dbeta(*p.mesh, traj.rho[n], dbeta);
        for (int t = 0; t < nt; ++t)
            rhs[t] = transport.mass()[t] * drho[t] - tau * rhs[t] - tau * dBrho[t];
        CellField drho_next;
        drho_next.v = transport.solve_system(rhs);

        // Linearized implicit agent update.
        for (int i = 0; i < M; ++i) {
            const Vec2 u = q.u[q.index(i, n + 1)];
            const Vec2 du = dq.u[dq.index(i, n + 1)];
            const MollifiedValue g = mollified_eval(*p.mesh, *p.geom, traj.rho[n + 1], traj.x[n + 1][i], p.params.zeta);
            const FEval f = f_eval(g.value);
            double drho_at_x = 0.0;
            for (const auto& [t, w] : mollified_weights(*p.mesh, *p.geom, traj.x[n + 1][i], p.params.zeta))
                drho_at_x += w * drho_next[t];
            const Vec2 rhs_x = dx[i] + u * (tau * p.params.v0 * f.fp * drho_at_x) +
                               du * (tau * p.params.v0 * f.f);
            const Mat2 A2 = Mat2::identity() - Mat2::outer(u, g.gradient) * (tau * p.params.v0 * f.fp);
            dx[i] = A2.solve(rhs_x);
        }
        drho = std::move(drho_next);

        // Objective contributions of level n+1.
        const double w = tau * std::exp(p.params.nu * (n + 1) * tau);
        for (int t = 0; t < nt; ++t)
            if (p.obs_mask[t]) dJ += w * p.geom->area[t] * drho[t];
        if (p.params.mu > 0.0)
            for (int i = 0; i < M; ++i) {
                const MollifiedValue gx = barrier_eval(p, traj.x[n + 1][i]);
                dJ -= p.params.mu * tau * gx.gradient.dot(dx[i]) / gx.value;
            }
    }
    return dJ;
}

// ---------------------------------------------------------------------------
// H1 gradient representation

struct GradientRep {
    ControlGrid grad;         // (alpha1/T) u + z, (alpha2/T) c + d
    ControlGrid representer;  // z, d
    ControlGrid euclid;       // raw partials p, r
};

inline GradientRep gradient(const Problem& p, const StateTrajectory&, const AdjointTrajectory& adj,
                            const ControlGrid& q) {
    const int N = p.N, M = p.num_agents();
    const double tau = p.tau();
    GradientRep rep;
    rep.grad = ControlGrid(M, N, tau);
    rep.representer = ControlGrid(M, N, tau);
    rep.euclid = ControlGrid(M, N, tau);
    const H1Gram gram(N, tau);
    std::vector<double> rhs(N + 1), sol;
    for (int i = 0; i < M; ++i) {
        const std::size_t base = rep.grad.index(i, 0);
        for (int n = 0; n <= N; ++n) {
            rep.euclid.u[base + n] = adj.partial_u[base + n];
            rep.euclid.c[base + n] = adj.partial_c[base + n];
        }
        // Componentwise Riesz solves: (z, v)_H1 = sum_n p^n . v^n for all v.
        for (int comp = 0; comp < 2; ++comp) {
            for (int n = 0; n <= N; ++n)
                rhs[n] = comp == 0 ? adj.partial_u[base + n].x : adj.partial_u[base + n].y;
            sol = gram.solve(rhs);
            for (int n = 0; n <= N; ++n) {
                if (comp == 0) rep.representer.u[base + n].x = sol[n];
                else rep.representer.u[base + n].y = sol[n];
            }
        }
        for (int n = 0; n <= N; ++n) rhs[n] = adj.partial_c[base + n];
        sol = gram.solve(rhs);
        for (int n = 0; n <= N; ++n) rep.representer.c[base + n] = sol[n];

        for (int n = 0; n <= N; ++n) {
            rep.grad.u[base + n] = q.u[base + n] * (p.params.alpha1 / p.T) + rep.representer.u[base + n];
            rep.grad.c[base + n] = q.c[base + n] * (p.params.alpha2 / p.T) + rep.representer.c[base + n];
        }
    }
    return rep;
}

} // namespace evac
