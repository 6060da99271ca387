#pragma once

// Pointwise model ingredients: density-velocity rule f, smoothed unit-ball
// projection h, agent interaction kernels, the summed agent potential, the
// cellwise transport direction beta, and the wall-barrier field.

#include <vector>

#include "evac/core.hpp"
#include "evac/fields.hpp"
#include "evac/mesh.hpp"
#include "evac/sparse.hpp"

namespace evac {

struct KernelSpec {
    enum Kind { Bump, Morse } kind = Bump;
    double R = 1.5;              // bump attraction radius
    double a = 2.0, r_a = 0.5;   // Morse decay and equilibrium distance
};

// rho_max is fixed at 1 throughout.
struct ModelParams {
    double eps = 1e-5;       // density diffusion
    double delta1 = 0.2;     // eikonal Laplacian regularization
    double delta2 = 0.1;     // eikonal right-hand-side regularization
    double delta4 = 0.1;     // barrier equation perturbation
    double gamma = 10.0;     // exit outflow rate
    double v0 = 1.0;         // free-flow speed
    double nu = 1.0;         // objective time weight exponent
    double mu = 5e-2;        // barrier weight
    double alpha1 = 5e-2;    // direction regularization
    double alpha2 = 5e-2;    // intensity regularization
    double zeta = 1e-2;      // mollifier locality
    double eta = 1.0;        // Lax-Friedrichs stabilization
    double h_smooth = 1e-2;  // smoothing width of the min in h (the delta_3 of the experiments)
    KernelSpec kernel;

    void validate() const {
        if (!(delta1 > 0.0 && delta2 > 0.0 && delta4 > 0.0 && zeta > 0.0 && h_smooth > 0.0))
            fail("model params: regularization parameters must be strictly positive");
        if (!(eps >= 0.0 && gamma >= 0.0 && eta >= 0.0)) fail("model params: eps, gamma, eta must be >= 0");
        if (!(v0 > 0.0)) fail("model params: v0 must be positive");
        if (!(alpha1 > 0.0 && alpha2 > 0.0)) fail("model params: alpha1, alpha2 must be positive");
        if (!(mu >= 0.0)) fail("model params: mu must be >= 0");
        if (kernel.kind == KernelSpec::Bump && !(kernel.R > 0.0)) fail("model params: bump radius must be positive");
        if (kernel.kind == KernelSpec::Morse && !(kernel.a > 0.0 && kernel.r_a > 0.0))
            fail("model params: Morse parameters must be positive");
    }
};

// Quintic smoothstep: s(0)=0, s(1)=1, s'=s''=0 at both ends.
inline double smoothstep5(double t) { return t * t * t * (10.0 + t * (-15.0 + 6.0 * t)); }
inline double smoothstep5_d(double t) { return 30.0 * t * t * (1.0 + t * (-2.0 + t)); }

// Compactly supported cutoff: 0 outside (-1,2), 1 on [0,1], quintic
// transitions on (-1,0) and (1,2). Together with the linear factor below this
// makes f(rho) = 1 - rho exactly on [0,1] and f identically zero for
// rho <= -1 or rho >= 2.
inline double cutoff(double s) {
    if (s <= -1.0 || s >= 2.0) return 0.0;
    if (s < 0.0) return smoothstep5(s + 1.0);
    if (s <= 1.0) return 1.0;
    return smoothstep5(2.0 - s);
}

inline double cutoff_d(double s) {
    if (s <= -1.0 || s >= 2.0) return 0.0;
    if (s < 0.0) return smoothstep5_d(s + 1.0);
    if (s <= 1.0) return 0.0;
    return -smoothstep5_d(2.0 - s);
}

struct FEval {
    double f = 0.0;
    double fp = 0.0;   // df/drho
};

// Density-velocity rule f(rho) = cutoff(rho) * (1 - rho). Maps [0,1] onto
// [0,1] with f(0)=1, f(1)=0, and factors as (1-rho)*Phi with |Phi| <= 1,
// which is the hypothesis of the box-preservation theorem.
inline FEval f_eval(double rho) {
    const double c = cutoff(rho), cd = cutoff_d(rho);
    return {c * (1.0 - rho), cd * (1.0 - rho) - c};
}

struct HEval {
    Vec2 h;
    Mat2 jac;
};

namespace detail {
// C^2 smoothed min{1, r}: identity below 1-w, constant 1 above 1+w, and a
// monotone quartic blend q(t) = (1-w) + 2w t - 2w t^3 + w t^4 in between.
inline void smoothed_min(double r, double w, double& m, double& md) {
    if (r <= 1.0 - w) { m = r; md = 1.0; return; }
    if (r >= 1.0 + w) { m = 1.0; md = 0.0; return; }
    const double t = (r - (1.0 - w)) / (2.0 * w);
    m = (1.0 - w) + 2.0 * w * t * (1.0 + t * t * (-1.0 + 0.5 * t));
    md = (1.0 - t) * (1.0 - t) * (1.0 + 2.0 * t);
}
} // namespace detail

// Smoothed projection into the unit ball: h(v) = m(|v|) v/|v|, h(0) = 0.
inline HEval h_eval(Vec2 v, double width) {
    const double r = v.norm();
    if (r < 1e-300) return {Vec2{0.0, 0.0}, Mat2::identity()};
    double m = 0.0, md = 0.0;
    detail::smoothed_min(r, width, m, md);
    const Vec2 dir = v / r;
    HEval out;
    out.h = dir * m;
    const Mat2 rad = Mat2::outer(dir, dir);
    out.jac = rad * md + (Mat2::identity() - rad) * (m / r);
    return out;
}

struct KernelEval {
    double k = 0.0;
    Vec2 grad;
    Mat2 hess;
};

namespace detail {
inline void kernel_radial(const KernelSpec& spec, double r, double& k, double& kd, double& kdd) {
    if (spec.kind == KernelSpec::Bump) {
        const double R = spec.R;
        if (r >= R) { k = kd = kdd = 0.0; return; }
        const double s = R * R - r * r;
        const double e = -R * R / s;
        if (e < -700.0) { k = kd = kdd = 0.0; return; }
        k = std::exp(e);
        kd = -2.0 * R * R * r * k / (s * s);
        kdd = -2.0 * R * R * (k / (s * s) + r * kd / (s * s) + 4.0 * r * r * k / (s * s * s));
    } else {
        const double e1 = std::exp(-2.0 * spec.a * (r - spec.r_a));
        const double e2 = std::exp(-spec.a * (r - spec.r_a));
        k = e1 - 2.0 * e2;
        kd = -2.0 * spec.a * e1 + 2.0 * spec.a * e2;
        kdd = 4.0 * spec.a * spec.a * e1 - 2.0 * spec.a * spec.a * e2;
    }
}
} // namespace detail

// Radially symmetric kernel K(x) = k(|x|) with exact gradient and Hessian.
inline KernelEval kernel_eval(const KernelSpec& spec, Vec2 x) {
    double k = 0.0, kd = 0.0, kdd = 0.0;
    const double r = x.norm();
    detail::kernel_radial(spec, r, k, kd, kdd);
    KernelEval out;
    out.k = k;
    if (r < 1e-12) {
        // Smooth radial kernels have k'(0) = 0; the Morse cusp is flattened here.
        out.grad = {0.0, 0.0};
        out.hess = Mat2::identity() * kdd;
        return out;
    }
    const Vec2 dir = x / r;
    out.grad = dir * kd;
    const Mat2 rad = Mat2::outer(dir, dir);
    out.hess = rad * kdd + (Mat2::identity() - rad) * (kd / r);
    return out;
}

struct AgentPotential {
    double value = 0.0;
    Vec2 grad_x;                       // d/dx of the summed potential
    std::vector<Vec2> d_position;      // d/dx_i = -c_i grad K(x - x_i)
    std::vector<double> d_intensity;   // d/dc_i = K(x - x_i)
};

inline AgentPotential agent_potential(const KernelSpec& spec, Vec2 x,
                                      const std::vector<Vec2>& positions,
                                      const std::vector<double>& intensities) {
    if (positions.size() != intensities.size()) fail("agent_potential: agent count mismatch");
    AgentPotential out;
    out.d_position.resize(positions.size());
    out.d_intensity.resize(positions.size());
    for (std::size_t i = 0; i < positions.size(); ++i) {
        const KernelEval k = kernel_eval(spec, x - positions[i]);
        out.value += intensities[i] * k.k;
        out.grad_x += k.grad * intensities[i];
        out.d_position[i] = -k.grad * intensities[i];
        out.d_intensity[i] = k.k;
    }
    return out;
}

// Per-triangle transport direction beta = v0 f(rho) h(grad(phi) + grad(phi_K))
// with everything needed to differentiate it later.
struct BetaRecord {
    Vec2 beta;
    Vec2 arg;      // grad(phi)|_T + grad(phi_K)(centroid)
    double f = 0.0, fp = 0.0;
    Vec2 hval;
    Mat2 dh;
};

inline std::vector<BetaRecord> beta_cellwise(const TriMesh& mesh, const GeometryCache& geom,
                                             const std::vector<std::array<Vec2, 3>>& grads,
                                             const CellField& rho, const NodalField& phi,
                                             const std::vector<Vec2>& agent_pos,
                                             const std::vector<double>& agent_c,
                                             const ModelParams& params) {
    if (rho.size() != static_cast<std::size_t>(mesh.num_triangles())) fail("beta_cellwise: rho size mismatch");
    if (phi.size() != static_cast<std::size_t>(mesh.num_vertices())) fail("beta_cellwise: phi size mismatch");
    std::vector<BetaRecord> out(mesh.num_triangles());
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        Vec2 arg = p1_gradient_on_tri(mesh, grads, phi, t);
        for (std::size_t i = 0; i < agent_pos.size(); ++i) {
            const KernelEval k = kernel_eval(params.kernel, geom.centroid[t] - agent_pos[i]);
            arg += k.grad * agent_c[i];
        }
        const FEval f = f_eval(rho[t]);
        const HEval h = h_eval(arg, params.h_smooth);
        out[t] = {h.h * (params.v0 * f.f), arg, f.f, f.fp, h.h, h.jac};
    }
    return out;
}

// Barrier field: P1 solution of -delta4 * Laplace(xi) + xi = 1 with xi = 0 on
// the whole boundary. The reaction term uses a lumped mass matrix so the
// system stays an M-matrix on Delaunay-quality meshes and the discrete
// maximum principle keeps xi inside [0,1) even when the boundary layer is
// unresolved. -log of the mollified field penalizes agents near walls.
inline NodalField solve_barrier(const TriMesh& mesh, const GeometryCache& geom, double delta4) {
    if (!(delta4 > 0.0)) fail("solve_barrier: delta4 must be positive");
    const int nv = mesh.num_vertices();
    const auto grads = p1_gradients(mesh, geom);
    const auto dirichlet = boundary_vertex_mask(mesh);
    std::vector<Triplet> trip;
    std::vector<double> rhs(nv, 0.0);
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        const auto& tr = mesh.triangles[t];
        const double area = geom.area[t];
        for (int a = 0; a < 3; ++a) {
            if (dirichlet[tr[a]]) continue;
            rhs[tr[a]] += area / 3.0;
            trip.push_back({tr[a], tr[a], area / 3.0});   // lumped reaction term
            for (int b = 0; b < 3; ++b) {
                if (dirichlet[tr[b]]) continue;   // homogeneous data: drop the column too
                trip.push_back({tr[a], tr[b], delta4 * area * grads[t][a].dot(grads[t][b])});
            }
        }
    }
    for (int v = 0; v < nv; ++v)
        if (dirichlet[v]) trip.push_back({v, v, 1.0});
    const SparseMatrix sys = SparseMatrix::from_triplets(nv, nv, std::move(trip));
    NodalField xi;
    xi.v = solve(sys, rhs);
    for (int v = 0; v < nv; ++v) {
        if (dirichlet[v] && xi[v] != 0.0) fail("solve_barrier: Dirichlet value not preserved");
        if (xi[v] < -1e-12 || xi[v] >= 1.0)
            fail("solve_barrier: value ", xi[v], " at vertex ", v, " outside [0,1)");
    }
    return xi;
}

} // namespace evac
