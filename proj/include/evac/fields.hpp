#pragma once

// Piecewise-constant (cell) and continuous piecewise-linear (nodal) fields,
// fixed triangle quadrature, P0 projection of pointwise data, and mollified
// point evaluation of discrete fields with exact evaluation-point gradients.

#include <array>
#include <functional>
#include <limits>
#include <vector>

#include "evac/core.hpp"
#include "evac/mesh.hpp"

namespace evac {

struct CellField {
    std::vector<double> v;
    CellField() = default;
    explicit CellField(std::size_t n, double value = 0.0) : v(n, value) {}
    double& operator[](std::size_t i) { return v[i]; }
    double operator[](std::size_t i) const { return v[i]; }
    std::size_t size() const { return v.size(); }
};

struct NodalField {
    std::vector<double> v;
    NodalField() = default;
    explicit NodalField(std::size_t n, double value = 0.0) : v(n, value) {}
    double& operator[](std::size_t i) { return v[i]; }
    double operator[](std::size_t i) const { return v[i]; }
    std::size_t size() const { return v.size(); }
};

// Symmetric degree-5 rule (7 points); weights sum to 1 in barycentric form.
struct TriQuadrature {
    static constexpr int npoints = 7;
    // {w, b0, b1, b2}
    static constexpr std::array<std::array<double, 4>, 7> rule = {{
        {0.225, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0},
        {0.132394152788506, 0.059715871789770, 0.470142064105115, 0.470142064105115},
        {0.132394152788506, 0.470142064105115, 0.059715871789770, 0.470142064105115},
        {0.132394152788506, 0.470142064105115, 0.470142064105115, 0.059715871789770},
        {0.125939180544827, 0.797426985353087, 0.101286507323456, 0.101286507323456},
        {0.125939180544827, 0.101286507323456, 0.797426985353087, 0.101286507323456},
        {0.125939180544827, 0.101286507323456, 0.101286507323456, 0.797426985353087},
    }};
};

// Integrates fn over triangle t; fn receives the physical point.
template <typename Fn>
double integrate_triangle(const TriMesh& mesh, const GeometryCache& geom, int t, Fn&& fn) {
    const auto& tr = mesh.triangles[t];
    const Vec2 a = mesh.vertices[tr[0]], b = mesh.vertices[tr[1]], c = mesh.vertices[tr[2]];
    double sum = 0.0;
    for (const auto& q : TriQuadrature::rule) {
        const Vec2 p = a * q[1] + b * q[2] + c * q[3];
        sum += q[0] * fn(p);
    }
    return sum * geom.area[t];
}

struct P0ProjectionReport {
    int clamped_cells = 0;
    double worst_overshoot = 0.0;
};

// Cell averages of a pointwise density, clamped into [0,1] so the projected
// initial state satisfies the box-preservation hypothesis.
inline CellField project_p0(const TriMesh& mesh, const GeometryCache& geom,
                            const std::function<double(Vec2)>& f,
                            P0ProjectionReport* report = nullptr) {
    CellField out(mesh.num_triangles());
    P0ProjectionReport rep;
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        double avg = integrate_triangle(mesh, geom, t, f) / geom.area[t];
        if (avg < 0.0 || avg > 1.0) {
            rep.clamped_cells++;
            rep.worst_overshoot = std::max(rep.worst_overshoot, std::max(-avg, avg - 1.0));
            avg = std::clamp(avg, 0.0, 1.0);
        }
        out[t] = avg;
    }
    if (report) *report = rep;
    return out;
}

// Constant P1 shape-function gradients per triangle.
inline std::vector<std::array<Vec2, 3>> p1_gradients(const TriMesh& mesh, const GeometryCache& geom) {
    std::vector<std::array<Vec2, 3>> grads(mesh.num_triangles());
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        const auto& tr = mesh.triangles[t];
        const Vec2 a = mesh.vertices[tr[0]], b = mesh.vertices[tr[1]], c = mesh.vertices[tr[2]];
        const double inv2A = 1.0 / (2.0 * geom.area[t]);
        grads[t] = {(c - b).perp() * inv2A, (a - c).perp() * inv2A, (b - a).perp() * inv2A};
    }
    return grads;
}

inline Vec2 p1_gradient_on_tri(const TriMesh& mesh, const std::vector<std::array<Vec2, 3>>& grads,
                               const NodalField& u, int t) {
    const auto& tr = mesh.triangles[t];
    return grads[t][0] * u[tr[0]] + grads[t][1] * u[tr[1]] + grads[t][2] * u[tr[2]];
}

// ---------------------------------------------------------------------------
// Mollified point evaluation: eta_x * u = (delta_x * u) / (delta_x * 1) with a
// Gaussian of variance zeta, all integrals by the fixed triangle rule. The
// gradient with respect to the evaluation point is the exact derivative of
// the quadrature-defined ratio. Triangles farther than 8*sqrt(zeta) from the
// point are skipped (tail below 1e-13 of the kernel scale).

struct MollifierWorkspace;

struct MollifiedValue {
    double value = 0.0;
    Vec2 gradient;      // d(value)/d(evaluation point)
};

namespace detail {

struct MollifierSums {
    double num = 0.0, den = 0.0;
    Vec2 dnum, dden;
};

// Calls visit(t, quad point, quad weight * kernel value) for triangles in range.
template <typename Visit>
void mollifier_scan(const TriMesh& mesh, const GeometryCache& geom, Vec2 x0, double zeta, Visit&& visit) {
    const double cutoff = 8.0 * std::sqrt(zeta);
    const double scale = 1.0 / (2.0 * 3.14159265358979323846 * zeta);
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        if ((geom.centroid[t] - x0).norm() > cutoff + geom.diameter[t]) continue;
        const auto& tr = mesh.triangles[t];
        const Vec2 a = mesh.vertices[tr[0]], b = mesh.vertices[tr[1]], c = mesh.vertices[tr[2]];
        for (const auto& q : TriQuadrature::rule) {
            const Vec2 p = a * q[1] + b * q[2] + c * q[3];
            const double w = q[0] * geom.area[t] * scale * std::exp(-(p - x0).norm2() / (2.0 * zeta));
            visit(t, tr, q, p, w);
        }
    }
}

} // namespace detail

// Mollified evaluation of a cell field.
inline MollifiedValue mollified_eval(const TriMesh& mesh, const GeometryCache& geom,
                                     const CellField& rho, Vec2 x0, double zeta) {
    if (!(zeta > 0.0)) fail("mollified_eval: zeta must be positive");
    detail::MollifierSums s;
    detail::mollifier_scan(mesh, geom, x0, zeta,
        [&](int t, const std::array<int, 3>&, const std::array<double, 4>&, Vec2 p, double w) {
            const Vec2 dw = (p - x0) * (w / zeta);   // d(w)/d(x0)
            s.num += w * rho[t];
            s.den += w;
            s.dnum += dw * rho[t];
            s.dden += dw;
        });
    if (!(s.den > 1e-290))
        fail("mollified_eval: evaluation point (", x0.x, ",", x0.y, ") is effectively outside the domain");
    MollifiedValue out;
    out.value = s.num / s.den;
    out.gradient = (s.dnum * s.den - s.dden * s.num) / (s.den * s.den);
    return out;
}

// Mollified evaluation of a nodal (P1) field.
inline MollifiedValue mollified_eval(const TriMesh& mesh, const GeometryCache& geom,
                                     const NodalField& u, Vec2 x0, double zeta) {
    if (!(zeta > 0.0)) fail("mollified_eval: zeta must be positive");
    detail::MollifierSums s;
    detail::mollifier_scan(mesh, geom, x0, zeta,
        [&](int, const std::array<int, 3>& tr, const std::array<double, 4>& q, Vec2 p, double w) {
            const double val = u[tr[0]] * q[1] + u[tr[1]] * q[2] + u[tr[2]] * q[3];
            const Vec2 dw = (p - x0) * (w / zeta);
            s.num += w * val;
            s.den += w;
            s.dnum += dw * val;
            s.dden += dw;
        });
    if (!(s.den > 1e-290))
        fail("mollified_eval: evaluation point (", x0.x, ",", x0.y, ") is effectively outside the domain");
    MollifiedValue out;
    out.value = s.num / s.den;
    out.gradient = (s.dnum * s.den - s.dden * s.num) / (s.den * s.den);
    return out;
}

// Normalized cell weights of the mollified evaluation: value = sum_T w_T rho_T
// with sum_T w_T = 1. These are the partial derivatives of the value with
// respect to the cell unknowns, needed by the tangent and adjoint sweeps.
inline std::vector<std::pair<int, double>> mollified_weights(const TriMesh& mesh, const GeometryCache& geom,
                                                             Vec2 x0, double zeta) {
    if (!(zeta > 0.0)) fail("mollified_weights: zeta must be positive");
    std::vector<std::pair<int, double>> weights;
    double den = 0.0;
    detail::mollifier_scan(mesh, geom, x0, zeta,
        [&](int t, const std::array<int, 3>&, const std::array<double, 4>&, Vec2, double w) {
            if (!weights.empty() && weights.back().first == t) weights.back().second += w;
            else weights.emplace_back(t, w);
            den += w;
        });
    if (!(den > 1e-290))
        fail("mollified_weights: evaluation point (", x0.x, ",", x0.y, ") is effectively outside the domain");
    for (auto& [t, w] : weights) w /= den;
    return weights;
}

} // namespace evac
