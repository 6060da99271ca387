#pragma once

// Finite volume transport operators: diagonal mass matrix, two-point-flux
// diffusion/outflow matrix A, Lax-Friedrichs advection matrix B(beta), the
// prefactored semi-implicit step, and the face-loop sensitivities of the
// advection form needed by the tangent and adjoint sweeps.

#include <vector>

#include "evac/core.hpp"
#include "evac/fields.hpp"
#include "evac/mesh.hpp"
#include "evac/model.hpp"
#include "evac/sparse.hpp"

namespace evac {

inline std::vector<double> mass_diagonal(const GeometryCache& geom) { return geom.area; }

// Diffusion + exit outflow matrix. Row sums vanish for gamma = 0; entries are
// eps*tau_F*|F| couplings plus gamma*|F| on exit faces.
inline SparseMatrix assemble_diffusion(const TriMesh& mesh, const GeometryCache& geom,
                                       double eps, double gamma) {
    if (eps < 0.0 || gamma < 0.0) fail("assemble_diffusion: eps and gamma must be >= 0");
    const int nt = mesh.num_triangles();
    std::vector<Triplet> trip;
    trip.reserve(4 * mesh.interior_faces.size() + mesh.boundary_faces.size());
    if (eps > 0.0)
        for (std::size_t f = 0; f < mesh.interior_faces.size(); ++f) {
            const auto& face = mesh.interior_faces[f];
            const double w = eps * geom.transmissibility[f] * face.length;
            trip.push_back({face.t1, face.t1, w});
            trip.push_back({face.t2, face.t2, w});
            trip.push_back({face.t1, face.t2, -w});
            trip.push_back({face.t2, face.t1, -w});
        }
    if (gamma > 0.0)
        for (const auto& face : mesh.boundary_faces)
            if (face.tag == BoundaryTag::Exit)
                trip.push_back({face.tri, face.tri, gamma * face.length});
    return SparseMatrix::from_triplets(nt, nt, std::move(trip));
}

// Lax-Friedrichs advection matrix for a per-triangle constant field beta.
// Face integrals of beta . n are exact (midpoint rule on constants); only
// interior faces contribute.
inline SparseMatrix assemble_advection(const TriMesh& mesh, const std::vector<Vec2>& beta,
                                       double eta) {
    const int nt = mesh.num_triangles();
    if (beta.size() != static_cast<std::size_t>(nt)) fail("assemble_advection: beta size mismatch");
    for (const auto& b : beta)
        if (!finite(b)) fail("assemble_advection: non-finite beta");
    std::vector<Triplet> trip;
    trip.reserve(4 * mesh.interior_faces.size());
    for (const auto& face : mesh.interior_faces) {
        const double len = face.length;
        const double b1n = beta[face.t1].dot(face.normal) * len;   // integral of beta|_T1 . n_F
        const double b2n = beta[face.t2].dot(face.normal) * len;
        const double stab = eta * len;
        // Row t1 (n_dT1 = n_F): diag -1/2 (b1n - stab), neighbor -1/2 (b2n + stab).
        trip.push_back({face.t1, face.t1, -0.5 * (b1n - stab)});
        trip.push_back({face.t1, face.t2, -0.5 * (b2n + stab)});
        // Row t2 (n_dT2 = -n_F): diag -1/2 (-b2n - stab), neighbor -1/2 (-b1n + stab).
        trip.push_back({face.t2, face.t2, 0.5 * (b2n + stab)});
        trip.push_back({face.t2, face.t1, 0.5 * (b1n - stab)});
    }
    return SparseMatrix::from_triplets(nt, nt, std::move(trip));
}

inline std::vector<Vec2> beta_vectors(const std::vector<BetaRecord>& records) {
    std::vector<Vec2> out(records.size());
    for (std::size_t t = 0; t < records.size(); ++t) out[t] = records[t].beta;
    return out;
}

// q_T = d(lambda^T B(beta) rho)/d(beta_T): the advection form's sensitivity to
// the cellwise direction, used as the adjoint source of every beta coupling.
inline std::vector<Vec2> advection_beta_sensitivity(const TriMesh& mesh, const CellField& rho,
                                                    const std::vector<double>& lambda) {
    std::vector<Vec2> q(mesh.num_triangles());
    for (const auto& face : mesh.interior_faces) {
        const double jump = lambda[face.t1] - lambda[face.t2];
        q[face.t1] += face.normal * (-0.5 * face.length * jump * rho[face.t1]);
        q[face.t2] += face.normal * (-0.5 * face.length * jump * rho[face.t2]);
    }
    return q;
}

// Directional derivative of B(beta) rho with respect to beta. Like the matrix
// itself, the result carries the negative of the averaged face flux.
inline std::vector<double> advection_apply_dbeta(const TriMesh& mesh, const CellField& rho,
                                                 const std::vector<Vec2>& dbeta) {
    std::vector<double> y(mesh.num_triangles(), 0.0);
    for (const auto& face : mesh.interior_faces) {
        const double dflux = 0.5 * face.length *
            (rho[face.t1] * dbeta[face.t1].dot(face.normal) + rho[face.t2] * dbeta[face.t2].dot(face.normal));
        y[face.t1] -= dflux;
        y[face.t2] += dflux;
    }
    return y;
}

struct StepStats {
    double min = 0.0, max = 0.0, mass = 0.0;
};

// Semi-implicit transport step (M + tau A) rho^{n+1} = (M - tau B^n) rho^n
// with (M + tau A) factored once.
class TransportOperator {
public:
    TransportOperator(const TriMesh& mesh, const GeometryCache& geom,
                      const ModelParams& params, double tau)
        : mass_(mass_diagonal(geom)), tau_(tau) {
        if (!(tau > 0.0)) fail("transport: tau must be positive");
        A_ = assemble_diffusion(mesh, geom, params.eps, params.gamma);
        std::vector<Triplet> trip;
        A_.for_each([&](int i, int j, double v) { trip.push_back({i, j, tau * v}); });
        for (int t = 0; t < static_cast<int>(mass_.size()); ++t) trip.push_back({t, t, mass_[t]});
        system_ = SparseMatrix::from_triplets(A_.rows(), A_.cols(), std::move(trip));
        lu_.emplace(system_);
    }

    const SparseMatrix& system() const { return system_; }       // M + tau A
    const SparseMatrix& diffusion() const { return A_; }
    const std::vector<double>& mass() const { return mass_; }
    double tau() const { return tau_; }

    CellField step(const CellField& rho, const SparseMatrix& advection, StepStats* stats = nullptr) const {
        std::vector<double> rhs = advection.apply(rho.v);
        for (std::size_t t = 0; t < rhs.size(); ++t) rhs[t] = mass_[t] * rho[t] - tau_ * rhs[t];
        CellField out;
        out.v = lu_->solve(rhs);
        if (stats) {
            stats->min = *std::min_element(out.v.begin(), out.v.end());
            stats->max = *std::max_element(out.v.begin(), out.v.end());
            stats->mass = 0.0;
            for (std::size_t t = 0; t < out.v.size(); ++t) stats->mass += mass_[t] * out[t];
        }
        return out;
    }

    // Solves (M + tau A) x = b; the matrix is symmetric, so the same
    // factorization serves the adjoint sweep.
    std::vector<double> solve_system(const std::vector<double>& b) const { return lu_->solve(b); }

private:
    std::vector<double> mass_;
    double tau_;
    SparseMatrix A_, system_;
    std::optional<SparseFactorization> lu_;
};

} // namespace evac
