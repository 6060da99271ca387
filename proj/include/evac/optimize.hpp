#pragma once

// Admissible-set machinery in the discrete H1(0,T) metric: projection of the
// direction controls onto the unit ball per time node (semismooth Newton on
// the KKT system), projection of the intensities onto [0,1] (primal-dual
// active set), the projected Armijo line search, and the outer projected
// gradient loop.

#include <functional>
#include <span>
#include <vector>

#include "evac/controls.hpp"
#include "evac/core.hpp"
#include "evac/sparse.hpp"

namespace evac {

struct ProjectionReport {
    int iterations = 0;
    double kkt_residual = 0.0;
    std::vector<int> active_sizes;
    bool used_fallback = false;
};

namespace detail {

inline SparseMatrix gram_matrix(int N, double tau) {
    std::vector<Triplet> trip;
    const double off = -1.0 / tau;
    for (int n = 0; n <= N; ++n) {
        double d = tau;
        if (N > 0) d += (n == 0 || n == N) ? 1.0 / tau : 2.0 / tau;
        trip.push_back({n, n, d});
        if (n > 0) trip.push_back({n, n - 1, off});
        if (n < N) trip.push_back({n, n + 1, off});
    }
    return SparseMatrix::from_triplets(N + 1, N + 1, std::move(trip));
}

} // namespace detail

// Projection of one agent's direction grid onto {|w^n| <= 1} in the H1 norm.
// KKT system, with G the H1 Gram matrix and * the componentwise product:
//   G(w_j - u_j) + lambda * w_j = 0,  j = 1,2
//   lambda - max(0, lambda + (|w|^2 - 1)/2) = 0
// solved by semismooth Newton with active set {n: lambda^n + (|w^n|^2-1)/2 > 0}.
inline std::pair<std::vector<Vec2>, ProjectionReport>
project_u(std::span<const Vec2> u, double tau, double tol = 1e-10) {
    const int N = static_cast<int>(u.size()) - 1;
    if (N < 0) fail("project_u: empty grid");
    for (const Vec2& v : u)
        if (!finite(v)) fail("project_u: non-finite input");
    const int m = N + 1;
    const H1Gram gram(N, tau);

    std::vector<Vec2> w(u.begin(), u.end());
    std::vector<double> lambda(m, 0.0);
    ProjectionReport rep;

    auto residual = [&](const std::vector<Vec2>& w_, const std::vector<double>& l_,
                        std::vector<double>& F) {
        std::vector<double> w1(m), w2(m);
        for (int n = 0; n < m; ++n) { w1[n] = w_[n].x; w2[n] = w_[n].y; }
        const auto g1 = gram.apply(w1), g2 = gram.apply(w2);
        std::vector<double> u1(m), u2(m);
        for (int n = 0; n < m; ++n) { u1[n] = u[n].x; u2[n] = u[n].y; }
        const auto gu1 = gram.apply(u1), gu2 = gram.apply(u2);
        F.assign(3 * m, 0.0);
        for (int n = 0; n < m; ++n) {
            F[n] = g1[n] - gu1[n] + l_[n] * w_[n].x;
            F[m + n] = g2[n] - gu2[n] + l_[n] * w_[n].y;
            F[2 * m + n] = l_[n] - std::max(0.0, l_[n] + 0.5 * (w_[n].norm2() - 1.0));
        }
        double s = 0.0;
        for (double v : F) s += v * v;
        return std::sqrt(s);
    };

    const SparseMatrix G = detail::gram_matrix(N, tau);
    std::vector<double> F;

    // Start from the pointwise radial scaling with the multiplier estimate
    // implied by stationarity on the saturated nodes. The spec'd fallback
    // restarts from the same scaling with lambda = 0.
    auto radial_start = [&](bool with_multipliers) {
        for (int n = 0; n < m; ++n) w[n] = u[n] / std::max(1.0, u[n].norm());
        std::fill(lambda.begin(), lambda.end(), 0.0);
        if (!with_multipliers) return;
        std::vector<double> d1(m), d2(m);
        for (int n = 0; n < m; ++n) {
            d1[n] = w[n].x - u[n].x;
            d2[n] = w[n].y - u[n].y;
        }
        const auto g1 = gram.apply(d1), g2 = gram.apply(d2);
        for (int n = 0; n < m; ++n)
            if (w[n].norm() > 1.0 - 1e-12)
                lambda[n] = std::max(0.0, -(g1[n] * w[n].x + g2[n] * w[n].y) / w[n].norm2());
    };

    double fnorm = 0.0;
    std::vector<double> trace;

    // Damped semismooth Newton: backtrack on ||F|| to keep the active-set
    // switching under control.
    auto newton_loop = [&](int max_iters) -> bool {
        fnorm = residual(w, lambda, F);
        trace.push_back(fnorm);
        for (int it = 0; it < max_iters; ++it) {
            if (fnorm <= tol) return true;
            std::vector<char> active(m, 0);
            int nactive = 0;
            for (int n = 0; n < m; ++n) {
                active[n] = lambda[n] + 0.5 * (w[n].norm2() - 1.0) > 0.0;
                // A vanishing direction on the active set would zero the
                // complementarity row; treat it as inactive instead.
                if (active[n] && w[n].norm() < 1e-10) active[n] = 0;
                nactive += active[n] ? 1 : 0;
            }
            rep.active_sizes.push_back(nactive);

            std::vector<Triplet> trip;
            G.for_each([&](int i, int j, double v) {
                trip.push_back({i, j, v});
                trip.push_back({m + i, m + j, v});
            });
            for (int n = 0; n < m; ++n) {
                trip.push_back({n, n, lambda[n]});
                trip.push_back({m + n, m + n, lambda[n]});
                trip.push_back({n, 2 * m + n, w[n].x});
                trip.push_back({m + n, 2 * m + n, w[n].y});
                if (active[n]) {
                    trip.push_back({2 * m + n, n, -w[n].x});
                    trip.push_back({2 * m + n, m + n, -w[n].y});
                } else {
                    trip.push_back({2 * m + n, 2 * m + n, 1.0});
                }
            }
            const SparseMatrix J = SparseMatrix::from_triplets(3 * m, 3 * m, std::move(trip));
            std::vector<double> rhs(3 * m);
            for (int k = 0; k < 3 * m; ++k) rhs[k] = -F[k];
            std::vector<double> delta;
            try {
                delta = SparseFactorization(J).solve(rhs);
            } catch (const Error&) {
                return false;   // singular Newton system, let the fallback retry
            }

            const std::vector<Vec2> w_old = w;
            const std::vector<double> l_old = lambda;
            double fnew = fnorm;
            std::vector<double> Fnew;
            double s = 1.0;
            bool accepted = false;
            for (int bt = 0; bt < 30; ++bt) {
                for (int n = 0; n < m; ++n) {
                    w[n].x = w_old[n].x + s * delta[n];
                    w[n].y = w_old[n].y + s * delta[m + n];
                    lambda[n] = l_old[n] + s * delta[2 * m + n];
                }
                fnew = residual(w, lambda, Fnew);
                if (fnew <= (1.0 - 1e-4 * s) * fnorm) {
                    accepted = true;
                    break;
                }
                s *= 0.5;
            }
            if (!accepted) {
                w = w_old;
                lambda = l_old;
                return false;
            }
            F = std::move(Fnew);
            fnorm = fnew;
            trace.push_back(fnorm);
            rep.iterations++;
        }
        return fnorm <= tol;
    };

    radial_start(true);
    if (!newton_loop(100)) {
        rep.used_fallback = true;
        radial_start(false);
        if (!newton_loop(100)) {
            std::string hist;
            for (double h : trace) hist += concat(" ", h);
            fail("project_u: semismooth Newton did not converge; residual trace:", hist);
        }
    }
    rep.kkt_residual = fnorm;
    return {std::move(w), rep};
}

// Projection of one agent's intensity grid onto {0 <= d^n <= 1} in the H1
// norm, by a primal-dual active set iteration on the box-constrained QP.
inline std::pair<std::vector<double>, ProjectionReport>
project_c(std::span<const double> c, double tau, double tol = 1e-10) {
    const int N = static_cast<int>(c.size()) - 1;
    if (N < 0) fail("project_c: empty grid");
    for (double v : c)
        if (!finite(v)) fail("project_c: non-finite input");
    const int m = N + 1;
    const double lo = 0.0, hi = 1.0;
    const H1Gram gram(N, tau);
    const SparseMatrix G = detail::gram_matrix(N, tau);

    std::vector<double> d(c.begin(), c.end());
    for (double& v : d) v = std::clamp(v, lo, hi);
    std::vector<double> mu(m, 0.0);
    ProjectionReport rep;

    auto kkt_residual = [&](const std::vector<double>& d_) {
        // Optimal iff d = clamp(d - G(d-c)) pointwise.
        std::vector<double> gd(m);
        {
            std::vector<double> diff(m);
            for (int n = 0; n < m; ++n) diff[n] = d_[n] - c[n];
            gd = gram.apply(diff);
        }
        double s = 0.0;
        for (int n = 0; n < m; ++n) {
            const double r = d_[n] - std::clamp(d_[n] - gd[n], lo, hi);
            s += r * r;
        }
        return std::sqrt(s);
    };

    // Complementarity parameter scaled to ||G||; an O(1) parameter lets the
    // large off-diagonal multipliers flip nodes straight between the two
    // bounds and the active sets cycle.
    const double cpar = tau + 4.0 / tau;
    double resid = kkt_residual(d);
    std::vector<double> trace{resid};
    for (int it = 0; it < 100; ++it) {
        if (resid <= tol) break;
        std::vector<int> state(m, 0);   // -1 at lower bound, +1 at upper, 0 inactive
        int nactive = 0;
        for (int n = 0; n < m; ++n) {
            if (mu[n] + cpar * (d[n] - hi) > 0.0) state[n] = 1;
            else if (mu[n] + cpar * (d[n] - lo) < 0.0) state[n] = -1;
            nactive += state[n] != 0 ? 1 : 0;
        }
        rep.active_sizes.push_back(nactive);

        // Solve G_II d_I = (G c)_I - G_IA d_A with d fixed on the active sets.
        std::vector<int> pos(m, -1);
        std::vector<int> inactive;
        for (int n = 0; n < m; ++n)
            if (state[n] == 0) {
                pos[n] = static_cast<int>(inactive.size());
                inactive.push_back(n);
            }
        for (int n = 0; n < m; ++n) d[n] = state[n] == 1 ? hi : (state[n] == -1 ? lo : d[n]);
        if (!inactive.empty()) {
            const int ni = static_cast<int>(inactive.size());
            std::vector<Triplet> trip;
            std::vector<double> rhs(ni, 0.0);
            const auto gc = gram.apply(std::span<const double>(c));
            for (int n : inactive) rhs[pos[n]] = gc[n];
            G.for_each([&](int i, int j, double v) {
                if (pos[i] < 0) return;
                if (pos[j] >= 0) trip.push_back({pos[i], pos[j], v});
                else rhs[pos[i]] -= v * d[j];
            });
            const auto sol = SparseFactorization(SparseMatrix::from_triplets(ni, ni, std::move(trip))).solve(rhs);
            for (int n : inactive) d[n] = sol[pos[n]];
        }
        {
            std::vector<double> diff(m);
            for (int n = 0; n < m; ++n) diff[n] = d[n] - c[n];
            const auto gd = gram.apply(diff);
            for (int n = 0; n < m; ++n) mu[n] = state[n] == 0 ? 0.0 : -gd[n];
        }
        rep.iterations++;
        resid = kkt_residual(d);
        trace.push_back(resid);
    }
    if (!(resid <= tol)) {
        std::string hist;
        for (double h : trace) hist += concat(" ", h);
        fail("project_c: active set iteration did not converge; residual trace:", hist);
    }
    rep.kkt_residual = resid;
    return {std::move(d), rep};
}

// Componentwise projection of a whole control grid; the H1 norm decouples
// over agents and between directions and intensities.
inline ControlGrid project_admissible(const ControlGrid& q, double tol = 1e-10,
                                      std::vector<ProjectionReport>* reports = nullptr) {
    ControlGrid out = q;
    for (int i = 0; i < q.agents; ++i) {
        auto [wu, ru] = project_u(q.u_agent(i), q.tau, tol);
        std::copy(wu.begin(), wu.end(), out.u_agent(i).begin());
        auto [wc, rc] = project_c(q.c_agent(i), q.tau, tol);
        std::copy(wc.begin(), wc.end(), out.c_agent(i).begin());
        if (reports) {
            reports->push_back(std::move(ru));
            reports->push_back(std::move(rc));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Line search and outer loop

struct ReducedObjective {
    // Objective value at a control (runs the forward sweep).
    std::function<double(const ControlGrid&)> value;
    // Value plus the H1 gradient (forward + backward sweep).
    std::function<std::pair<double, ControlGrid>(const ControlGrid&)> value_and_gradient;
};

struct ArmijoOptions {
    double s0 = 1.0;
    double decrease = 1e-4;   // the d parameter of the sufficient decrease test
    double s_min = 1e-12;
};

struct ArmijoResult {
    bool success = false;
    double step = 0.0;
    ControlGrid trial;
    double j_trial = 0.0;
    int evaluations = 0;
};

// Halves s until j(P(q - s g)) <= j(q) - (d/s) ||q - P(q - s g)||_Q^2.
inline ArmijoResult armijo_search(const ReducedObjective& obj, const ControlGrid& q,
                                  const ControlGrid& grad, double j_q, ArmijoOptions opts = {},
                                  double proj_tol = 1e-10) {
    if (!(opts.s0 > 0.0) || !(opts.decrease > 0.0 && opts.decrease < 1.0))
        fail("armijo_search: invalid parameters");
    ArmijoResult res;
    double s = opts.s0;
    while (s >= opts.s_min) {
        ControlGrid shifted = q;
        for (std::size_t k = 0; k < q.u.size(); ++k) shifted.u[k] = q.u[k] - grad.u[k] * s;
        for (std::size_t k = 0; k < q.c.size(); ++k) shifted.c[k] = q.c[k] - grad.c[k] * s;
        ControlGrid trial = project_admissible(shifted, proj_tol);
        ControlGrid diff = q;
        for (std::size_t k = 0; k < q.u.size(); ++k) diff.u[k] = q.u[k] - trial.u[k];
        for (std::size_t k = 0; k < q.c.size(); ++k) diff.c[k] = q.c[k] - trial.c[k];
        const double dist2 = control_inner(diff, diff);
        // A trial control that drives an agent out of the domain has an
        // unbounded barrier term; treat the failed evaluation as +infinity.
        double j_trial = std::numeric_limits<double>::infinity();
        try {
            j_trial = obj.value(trial);
        } catch (const Error&) {
        }
        res.evaluations++;
        if (j_trial <= j_q - opts.decrease / s * dist2) {
            res.success = true;
            res.step = s;
            res.trial = std::move(trial);
            res.j_trial = j_trial;
            return res;
        }
        s *= 0.5;
    }
    res.success = false;
    res.step = s;
    return res;
}

struct OptimizeOptions {
    int max_iterations = 50;
    double stationarity_tol = 1e-3;
    double projection_tol = 1e-10;
    ArmijoOptions armijo;
};

struct OptimizerResult {
    ControlGrid q;
    std::vector<double> objective_history;       // one entry per accepted iterate
    std::vector<double> stationarity_history;
    std::vector<double> step_history;
    int iterations = 0;
    std::string termination;
};

// Projected gradient with Armijo steps; stops on the projected stationarity
// measure ||q - P(q - grad j)||_Q or on the iteration budget.
inline OptimizerResult projected_gradient(const ReducedObjective& obj, const ControlGrid& q0,
                                          OptimizeOptions opts = {}) {
    OptimizerResult res;
    res.q = project_admissible(q0, opts.projection_tol);
    double s_prev = opts.armijo.s0;
    for (int k = 0; k < opts.max_iterations; ++k) {
        auto [j, grad] = obj.value_and_gradient(res.q);
        if (res.objective_history.empty()) res.objective_history.push_back(j);

        ControlGrid shifted = res.q;
        for (std::size_t m = 0; m < shifted.u.size(); ++m) shifted.u[m] = res.q.u[m] - grad.u[m];
        for (std::size_t m = 0; m < shifted.c.size(); ++m) shifted.c[m] = res.q.c[m] - grad.c[m];
        ControlGrid stat_point = project_admissible(shifted, opts.projection_tol);
        ControlGrid diff = res.q;
        for (std::size_t m = 0; m < diff.u.size(); ++m) diff.u[m] = res.q.u[m] - stat_point.u[m];
        for (std::size_t m = 0; m < diff.c.size(); ++m) diff.c[m] = res.q.c[m] - stat_point.c[m];
        const double stat = control_norm(diff);
        res.stationarity_history.push_back(stat);
        if (stat <= opts.stationarity_tol) {
            res.termination = "stationary";
            return res;
        }

        ArmijoOptions ao = opts.armijo;
        ao.s0 = s_prev;
        const ArmijoResult ls = armijo_search(obj, res.q, grad, j, ao, opts.projection_tol);
        if (!ls.success) {
            res.termination = "line_search_failed";
            return res;
        }
        res.q = ls.trial;
        res.objective_history.push_back(ls.j_trial);
        res.step_history.push_back(ls.step);
        res.iterations = k + 1;
        s_prev = 2.0 * ls.step;
    }
    res.termination = "max_iterations";
    return res;
}

} // namespace evac
