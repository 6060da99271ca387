#pragma once

// Damped Newton solver for the regularized Eikonal equation in P1 elements:
//   delta1 (grad phi, grad w) + (|grad phi|^2, w) = (1/(f(rho)^2 + delta2), w)
// for all w in the space with zero values on exit vertices.

#include <optional>
#include <vector>

#include "evac/core.hpp"
#include "evac/fields.hpp"
#include "evac/mesh.hpp"
#include "evac/model.hpp"
#include "evac/sparse.hpp"

namespace evac {

struct EikonalOptions {
    double tol = 1e-10;      // absolute l2 norm of the assembled residual
    int max_newton = 50;
    int max_backtrack = 30;
};

class EikonalSolver {
public:
    EikonalSolver(const TriMesh& mesh, const GeometryCache& geom,
                  const ModelParams& params, EikonalOptions opts = {})
        : mesh_(&mesh), geom_(&geom), grads_(p1_gradients(mesh, geom)),
          dirichlet_(exit_vertex_mask(mesh)), delta1_(params.delta1), delta2_(params.delta2),
          opts_(opts) {
        if (!(delta1_ > 0.0 && delta2_ > 0.0)) fail("eikonal: delta1, delta2 must be positive");
        bool any_exit = false;
        for (char d : dirichlet_) any_exit |= (d != 0);
        if (!any_exit) fail("eikonal: mesh has no exit vertices (no Dirichlet data)");
    }

    const std::vector<char>& dirichlet() const { return dirichlet_; }
    const std::vector<std::array<Vec2, 3>>& gradients() const { return grads_; }

    // Residual vector over all vertices; Dirichlet entries are phi_v - 0.
    std::vector<double> residual(const NodalField& phi, const CellField& rho) const {
        return residual_impl(phi, rho, delta1_);
    }

    // Newton matrix delta1 (grad dphi, grad w) + 2 (grad phi . grad dphi, w),
    // with Dirichlet rows and columns eliminated (identity diagonal).
    SparseMatrix jacobian(const NodalField& phi) const { return jacobian_impl(phi, delta1_); }

    struct Result {
        NodalField phi;
        int iterations = 0;
        double final_residual = 0.0;
        std::vector<double> history;
    };

    // Warm start from the previous step when available. A cold start solves
    // the linearized problem (quadratic term dropped) first; if Newton stalls
    // from there, the viscosity is continued down from a larger delta1, each
    // level warm-starting the next.
    Result solve(const CellField& rho, const NodalField* warm_start = nullptr) const {
        const int nv = mesh_->num_vertices();
        NodalField phi(nv, 0.0);
        if (warm_start) {
            if (warm_start->size() != static_cast<std::size_t>(nv)) fail("eikonal: warm start size mismatch");
            phi = *warm_start;
            for (int v = 0; v < nv; ++v)
                if (dirichlet_[v]) phi[v] = 0.0;
        } else {
            phi = linearized_solve(rho, delta1_);
        }

        Result res;
        if (newton(rho, delta1_, opts_.tol, phi, res)) return res;

        // The transform psi = exp(-phi/delta1) turns the equation into a
        // linear screened problem; its solution is an excellent Newton start.
        phi = cole_hopf_start(rho, delta1_);
        if (newton(rho, delta1_, opts_.tol, phi, res)) return res;

        // Continuation in the density: walk s*rho up to s = 1, warm-starting
        // each level. Dense jams put the solution far from every cheap guess.
        {
            CellField scaled(rho.size());
            Result tmp;
            bool on_branch = false;
            for (const double s : {0.2, 0.4, 0.6, 0.7, 0.8, 0.9, 0.95}) {
                for (std::size_t t = 0; t < rho.size(); ++t) scaled[t] = s * rho[t];
                if (!on_branch) phi = cole_hopf_start(scaled, delta1_);
                if (newton(scaled, delta1_, 1e-8, phi, tmp)) {
                    phi = tmp.phi;
                    on_branch = true;
                } else if (on_branch) {
                    break;
                }
            }
            if (on_branch && newton(rho, delta1_, opts_.tol, phi, res)) return res;
        }

        // Last resort: viscosity continuation from 16x the regularization.
        double level = 16.0 * delta1_;
        phi = cole_hopf_start(rho, level);
        Result tmp;
        while (level > delta1_ * 1.0000001) {
            newton(rho, level, 1e-8, phi, tmp);
            phi = tmp.phi;   // best iterate of the level either way
            level = std::max(delta1_, 0.5 * level);
        }
        if (newton(rho, delta1_, opts_.tol, phi, res)) return res;

        std::string hist;
        for (double h : res.history) hist += concat(" ", h);
        fail("eikonal: no convergence within ", opts_.max_newton,
             " damped Newton steps (with continuation); residual history:", hist);
    }

private:
    // Damped Newton at a given viscosity level; leaves the best iterate and
    // its residual history in `out` whether or not the tolerance was reached.
    bool newton(const CellField& rho, double delta1, double tol, const NodalField& start,
                Result& out) const {
        const int nv = mesh_->num_vertices();
        NodalField phi = start;
        out = Result{};
        std::vector<double> r = residual_impl(phi, rho, delta1);
        double rnorm = l2(r);
        out.history.push_back(rnorm);
        for (int it = 0; it < opts_.max_newton; ++it) {
            if (rnorm <= tol) {
                out.phi = std::move(phi);
                out.iterations = it;
                out.final_residual = rnorm;
                return true;
            }
            const SparseMatrix jac = jacobian_impl(phi, delta1);
            std::vector<double> neg = r;
            for (double& x : neg) x = -x;
            const std::vector<double> delta = SparseFactorization(jac).solve(neg);

            double s = 1.0;
            NodalField trial(nv, 0.0);
            std::vector<double> rt;
            double rtnorm = rnorm;
            bool accepted = false;
            for (int bt = 0; bt <= opts_.max_backtrack; ++bt) {
                for (int v = 0; v < nv; ++v) trial[v] = phi[v] + s * delta[v];
                rt = residual_impl(trial, rho, delta1);
                rtnorm = l2(rt);
                if (rtnorm <= (1.0 - 1e-4 * s) * rnorm) {
                    accepted = true;
                    break;
                }
                s *= 0.5;
            }
            if (!accepted) break;
            phi = trial;
            r = std::move(rt);
            rnorm = rtnorm;
            out.history.push_back(rnorm);
        }
        out.iterations = static_cast<int>(out.history.size()) - 1;
        out.final_residual = rnorm;
        out.phi = std::move(phi);
        return rnorm <= tol;
    }

public:

private:
    std::vector<double> residual_impl(const NodalField& phi, const CellField& rho, double delta1) const {
        const int nv = mesh_->num_vertices();
        std::vector<double> r(nv, 0.0);
        for (int t = 0; t < mesh_->num_triangles(); ++t) {
            const auto& tr = mesh_->triangles[t];
            const double area = geom_->area[t];
            const Vec2 g = p1_gradient_on_tri(*mesh_, grads_, phi, t);
            const FEval f = f_eval(rho[t]);
            const double rhs = 1.0 / (f.f * f.f + delta2_);
            for (int a = 0; a < 3; ++a) {
                if (dirichlet_[tr[a]]) continue;
                r[tr[a]] += delta1 * area * g.dot(grads_[t][a]) + (g.norm2() - rhs) * area / 3.0;
            }
        }
        for (int v = 0; v < nv; ++v)
            if (dirichlet_[v]) r[v] = phi[v];
        return r;
    }

    SparseMatrix jacobian_impl(const NodalField& phi, double delta1) const {
        const int nv = mesh_->num_vertices();
        std::vector<Triplet> trip;
        for (int t = 0; t < mesh_->num_triangles(); ++t) {
            const auto& tr = mesh_->triangles[t];
            const double area = geom_->area[t];
            const Vec2 g = p1_gradient_on_tri(*mesh_, grads_, phi, t);
            for (int a = 0; a < 3; ++a) {
                if (dirichlet_[tr[a]]) continue;
                for (int b = 0; b < 3; ++b) {
                    if (dirichlet_[tr[b]]) continue;
                    trip.push_back({tr[a], tr[b],
                                    delta1 * area * grads_[t][a].dot(grads_[t][b]) +
                                        2.0 * g.dot(grads_[t][b]) * area / 3.0});
                }
            }
        }
        for (int v = 0; v < nv; ++v)
            if (dirichlet_[v]) trip.push_back({v, v, 1.0});
        return SparseMatrix::from_triplets(nv, nv, std::move(trip));
    }

    // Linear screened problem delta1^2 (grad psi, grad w) + (g psi, w) = 0
    // with psi = 1 on exits (lumped reaction term, so psi stays positive),
    // mapped back through phi = -delta1 log(psi). Cells in regions with no
    // path to an exit get psi ~ 0 and a large finite phi.
    NodalField cole_hopf_start(const CellField& rho, double delta1) const {
        const int nv = mesh_->num_vertices();
        std::vector<Triplet> trip;
        std::vector<double> rhs(nv, 0.0);
        for (int t = 0; t < mesh_->num_triangles(); ++t) {
            const auto& tr = mesh_->triangles[t];
            const double area = geom_->area[t];
            const FEval f = f_eval(rho[t]);
            const double g = 1.0 / (f.f * f.f + delta2_);
            for (int a = 0; a < 3; ++a) {
                if (dirichlet_[tr[a]]) continue;
                trip.push_back({tr[a], tr[a], g * area / 3.0});
                for (int b = 0; b < 3; ++b) {
                    const double val = delta1 * delta1 * area * grads_[t][a].dot(grads_[t][b]);
                    if (dirichlet_[tr[b]]) rhs[tr[a]] -= val;   // psi = 1 on exits
                    else trip.push_back({tr[a], tr[b], val});
                }
            }
        }
        for (int v = 0; v < nv; ++v)
            if (dirichlet_[v]) {
                trip.push_back({v, v, 1.0});
                rhs[v] = 1.0;
            }
        const std::vector<double> psi =
            evac::solve(SparseMatrix::from_triplets(nv, nv, std::move(trip)), rhs);
        NodalField phi(nv, 0.0);
        for (int v = 0; v < nv; ++v)
            phi[v] = dirichlet_[v] ? 0.0 : -delta1 * std::log(std::max(psi[v], 1e-290));
        return phi;
    }

    NodalField linearized_solve(const CellField& rho, double delta1) const {
        const int nv = mesh_->num_vertices();
        std::vector<Triplet> trip;
        std::vector<double> rhs(nv, 0.0);
        for (int t = 0; t < mesh_->num_triangles(); ++t) {
            const auto& tr = mesh_->triangles[t];
            const double area = geom_->area[t];
            const FEval f = f_eval(rho[t]);
            const double load = 1.0 / (f.f * f.f + delta2_);
            for (int a = 0; a < 3; ++a) {
                if (dirichlet_[tr[a]]) continue;
                rhs[tr[a]] += load * area / 3.0;
                for (int b = 0; b < 3; ++b) {
                    if (dirichlet_[tr[b]]) continue;
                    trip.push_back({tr[a], tr[b], delta1 * area * grads_[t][a].dot(grads_[t][b])});
                }
            }
        }
        for (int v = 0; v < nv; ++v)
            if (dirichlet_[v]) trip.push_back({v, v, 1.0});
        NodalField phi;
        phi.v = evac::solve(SparseMatrix::from_triplets(nv, nv, std::move(trip)), rhs);
        return phi;
    }

    static double l2(const std::vector<double>& x) {
        double s = 0.0;
        for (double v : x) s += v * v;
        return std::sqrt(s);
    }

    const TriMesh* mesh_;
    const GeometryCache* geom_;
    std::vector<std::array<Vec2, 3>> grads_;
    std::vector<char> dirichlet_;
    double delta1_, delta2_;
    EikonalOptions opts_;
};

} // namespace evac
