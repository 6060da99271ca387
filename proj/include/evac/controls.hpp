#pragma once

// Per-time-node agent controls and the discrete H1(0,T) inner product:
//   (u, v)_tau = tau sum_n u^n.v^n + tau^{-1} sum_n (u^{n+1}-u^n).(v^{n+1}-v^n).
// The induced SPD tridiagonal Gram matrix drives the gradient representers
// and the admissible-set projections.

#include <span>
#include <vector>

#include "evac/core.hpp"

namespace evac {

// Directions u_i^n in R^2 and intensities c_i^n, i = 0..M-1, n = 0..N.
// Per-agent slices are contiguous: index(i, n) = i*(N+1) + n.
struct ControlGrid {
    int agents = 0;   // M
    int steps = 0;    // N
    double tau = 0.0;
    std::vector<Vec2> u;
    std::vector<double> c;

    ControlGrid() = default;
    ControlGrid(int M, int N, double tau_)
        : agents(M), steps(N), tau(tau_), u(static_cast<std::size_t>(M) * (N + 1)),
          c(static_cast<std::size_t>(M) * (N + 1), 0.0) {}

    std::size_t index(int i, int n) const { return static_cast<std::size_t>(i) * (steps + 1) + n; }
    int nodes() const { return steps + 1; }

    std::span<Vec2> u_agent(int i) { return {u.data() + index(i, 0), static_cast<std::size_t>(nodes())}; }
    std::span<const Vec2> u_agent(int i) const { return {u.data() + index(i, 0), static_cast<std::size_t>(nodes())}; }
    std::span<double> c_agent(int i) { return {c.data() + index(i, 0), static_cast<std::size_t>(nodes())}; }
    std::span<const double> c_agent(int i) const { return {c.data() + index(i, 0), static_cast<std::size_t>(nodes())}; }

    bool same_grid(const ControlGrid& o) const {
        return agents == o.agents && steps == o.steps &&
               std::abs(tau - o.tau) <= 1e-12 * std::max(tau, o.tau);
    }
};

inline double h1_inner(std::span<const double> a, std::span<const double> b, double tau) {
    if (a.size() != b.size()) fail("h1_inner: grid size mismatch");
    if (a.empty()) return 0.0;
    double sum = 0.0;
    for (std::size_t n = 0; n < a.size(); ++n) sum += tau * a[n] * b[n];
    for (std::size_t n = 0; n + 1 < a.size(); ++n)
        sum += (a[n + 1] - a[n]) * (b[n + 1] - b[n]) / tau;
    return sum;
}

inline double h1_inner(std::span<const Vec2> a, std::span<const Vec2> b, double tau) {
    if (a.size() != b.size()) fail("h1_inner: grid size mismatch");
    if (a.empty()) return 0.0;
    double sum = 0.0;
    for (std::size_t n = 0; n < a.size(); ++n) sum += tau * a[n].dot(b[n]);
    for (std::size_t n = 0; n + 1 < a.size(); ++n)
        sum += (a[n + 1] - a[n]).dot(b[n + 1] - b[n]) / tau;
    return sum;
}

// Combined control-space inner product: sum over agents of the H1 products of
// directions and intensities.
inline double control_inner(const ControlGrid& a, const ControlGrid& b) {
    if (!a.same_grid(b)) fail("control_inner: grid mismatch");
    double sum = 0.0;
    for (int i = 0; i < a.agents; ++i) {
        sum += h1_inner(a.u_agent(i), b.u_agent(i), a.tau);
        sum += h1_inner(a.c_agent(i), b.c_agent(i), a.tau);
    }
    return sum;
}

inline double control_norm(const ControlGrid& a) { return std::sqrt(control_inner(a, a)); }

// Gram matrix G = tau I + tau^{-1} L of the discrete H1 product, with L the
// (N+1)x(N+1) second-difference matrix. Tridiagonal SPD; solved by the
// Thomas algorithm.
class H1Gram {
public:
    H1Gram(int N, double tau) : n_(N + 1), tau_(tau) {
        if (N < 0 || !(tau > 0.0)) fail("H1Gram: invalid grid");
        diag_.assign(n_, tau);
        off_ = -1.0 / tau;
        if (n_ > 1) {
            diag_.front() += 1.0 / tau;
            diag_.back() += 1.0 / tau;
            for (int k = 1; k + 1 < n_; ++k) diag_[k] += 2.0 / tau;
        }
    }

    int size() const { return n_; }

    std::vector<double> apply(std::span<const double> x) const {
        if (static_cast<int>(x.size()) != n_) fail("H1Gram apply: size mismatch");
        std::vector<double> y(n_);
        for (int k = 0; k < n_; ++k) {
            double s = diag_[k] * x[k];
            if (n_ > 1) {
                if (k > 0) s += off_ * x[k - 1];
                if (k + 1 < n_) s += off_ * x[k + 1];
            }
            y[k] = s;
        }
        return y;
    }

    std::vector<double> solve(std::span<const double> rhs) const {
        if (static_cast<int>(rhs.size()) != n_) fail("H1Gram solve: size mismatch");
        std::vector<double> c(n_, 0.0), x(rhs.begin(), rhs.end());
        double piv = diag_[0];
        if (n_ == 1) return {rhs[0] / piv};
        c[0] = off_ / piv;
        x[0] /= piv;
        for (int k = 1; k < n_; ++k) {
            piv = diag_[k] - off_ * c[k - 1];
            if (k + 1 < n_) c[k] = off_ / piv;
            x[k] = (x[k] - off_ * x[k - 1]) / piv;
        }
        for (int k = n_ - 2; k >= 0; --k) x[k] -= c[k] * x[k + 1];
        return x;
    }

private:
    int n_;
    double tau_;
    std::vector<double> diag_;
    double off_ = 0.0;
};

} // namespace evac
