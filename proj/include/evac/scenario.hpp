#pragma once

// Glue between configurations and the solver stack: mesh/problem assembly,
// the simulate/optimize entry points with their output bundles, and the
// invariant check harness.

#include <filesystem>
#include <memory>
#include <random>
#include <string>

#include "json.hpp"

#include "evac/adjoint.hpp"
#include "evac/config.hpp"
#include "evac/forward.hpp"
#include "evac/io.hpp"
#include "evac/optimize.hpp"

namespace evac {

struct Scenario {
    std::unique_ptr<TriMesh> mesh;
    std::unique_ptr<GeometryCache> geom;
    Problem problem;
    ControlGrid q0;
    ScenarioConfig config;
};

inline Scenario build_scenario(const ScenarioConfig& cfg, bool allow_cfl_override = false) {
    Scenario s;
    s.config = cfg;
    s.mesh = std::make_unique<TriMesh>(cfg.use_mesh_file ? load_mesh(cfg.mesh_file)
                                                         : generate_room(cfg.room));
    s.geom = std::make_unique<GeometryCache>(compute_geometry(*s.mesh));

    const double cfl = cfl_max_tau(*s.geom);
    if (cfg.tau() > cfl && !cfg.allow_cfl_violation && !allow_cfl_override)
        throw ConfigError(concat("scenario: tau = ", cfg.tau(), " violates the CFL bound ", cfl,
                                 "; refine the time grid or set [run] allow_cfl_violation"));

    Problem& p = s.problem;
    p.mesh = s.mesh.get();
    p.geom = s.geom.get();
    p.params = cfg.params;
    p.T = cfg.horizon;
    p.N = cfg.steps;
    p.x0 = cfg.agent_positions;

    const auto bells = cfg.bells;
    P0ProjectionReport rep;
    p.rho0 = project_p0(*s.mesh, *s.geom, [&bells](Vec2 x) {
        double v = 0.0;
        for (const auto& b : bells)
            v += b.amplitude * std::exp(-((x - Vec2{b.cx, b.cy}).norm2()) / (2.0 * b.variance));
        return v;
    }, &rep);
    if (rep.clamped_cells > 0)
        std::fprintf(stderr, "warning: initial density clamped into [0,1] on %d cells (overshoot %g)\n",
                     rep.clamped_cells, rep.worst_overshoot);

    p.obs_mask.assign(s.mesh->num_triangles(), 1);
    if (!cfg.observation.all)
        for (int t = 0; t < s.mesh->num_triangles(); ++t) {
            const Vec2 c = s.geom->centroid[t];
            p.obs_mask[t] = (c.x >= cfg.observation.x0 && c.x <= cfg.observation.x1 &&
                             c.y >= cfg.observation.y0 && c.y <= cfg.observation.y1);
        }

    p.xi = solve_barrier(*s.mesh, *s.geom, cfg.params.delta4);

    const int M = static_cast<int>(cfg.agent_positions.size());
    s.q0 = ControlGrid(M, cfg.steps, cfg.tau());
    for (int i = 0; i < M; ++i) {
        const Vec2 u = cfg.initial_u.empty() ? Vec2{0.0, 0.0}
                     : (cfg.initial_u.size() == 1 ? cfg.initial_u[0] : cfg.initial_u[i]);
        const double c = cfg.initial_c.empty() ? 0.0
                       : (cfg.initial_c.size() == 1 ? cfg.initial_c[0] : cfg.initial_c[i]);
        for (int n = 0; n <= cfg.steps; ++n) {
            s.q0.u[s.q0.index(i, n)] = u;
            s.q0.c[s.q0.index(i, n)] = c;
        }
    }

    p.validate();
    return s;
}

struct RunOptions {
    std::string output_dir = "out";
    int snapshot_stride = 0;         // 0: take the config value
    bool allow_cfl_violation = false;
    int max_iterations = 0;          // 0: take the config value
    double tolerance = 0.0;          // 0: take the config value
};

inline void write_simulation_bundle(const std::string& dir, const Scenario& s,
                                    const StateTrajectory& traj, const ControlGrid& q,
                                    int stride, const std::string& prefix = "") {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    write_series(dir + "/" + prefix + "series.csv", traj);
    write_trajectories(dir + "/" + prefix + "agents.csv", traj);
    write_controls(dir + "/" + prefix + "control.csv", q);
    char name[64];
    for (int n = 0; n <= s.problem.N; n += stride) {
        std::snprintf(name, sizeof name, "%srho_%05d.vtk", prefix.c_str(), n);
        const NodalField* phi = n < static_cast<int>(traj.phi.size()) ? &traj.phi[n] : nullptr;
        write_vtk_snapshot(dir + "/" + name, *s.mesh, traj.rho[n], phi);
    }
}

inline void run_simulate(const ScenarioConfig& cfg, const RunOptions& opts) {
    Scenario s = build_scenario(cfg, opts.allow_cfl_violation);
    const StateTrajectory traj = forward_sweep(s.problem, s.q0);
    const int stride = opts.snapshot_stride > 0 ? opts.snapshot_stride : cfg.snapshot_stride;
    write_simulation_bundle(opts.output_dir, s, traj, s.q0, stride);
}

inline ReducedObjective make_reduced_objective(const Scenario& s) {
    const Problem* p = &s.problem;
    ReducedObjective obj;
    obj.value = [p](const ControlGrid& q) {
        const StateTrajectory traj = forward_sweep(*p, q);
        return objective_eval(*p, traj, q);
    };
    obj.value_and_gradient = [p](const ControlGrid& q) {
        const StateTrajectory traj = forward_sweep(*p, q);
        const double j = objective_eval(*p, traj, q);
        const AdjointTrajectory adj = backward_sweep(*p, traj, q);
        GradientRep rep = gradient(*p, traj, adj, q);
        return std::make_pair(j, std::move(rep.grad));
    };
    return obj;
}

inline OptimizerResult run_optimize(const ScenarioConfig& cfg, const RunOptions& opts) {
    Scenario s = build_scenario(cfg, opts.allow_cfl_violation);
    const ReducedObjective obj = make_reduced_objective(s);

    OptimizeOptions oo;
    oo.max_iterations = opts.max_iterations > 0 ? opts.max_iterations : cfg.optimizer.max_iterations;
    oo.stationarity_tol = opts.tolerance > 0 ? opts.tolerance : cfg.optimizer.stationarity_tol;
    oo.armijo.s0 = cfg.optimizer.initial_step;
    oo.armijo.decrease = cfg.optimizer.armijo_decrease;

    OptimizerResult res = projected_gradient(obj, s.q0, oo);

    namespace fs = std::filesystem;
    fs::create_directories(opts.output_dir);
    write_history(opts.output_dir + "/history.csv", res.objective_history,
                  res.stationarity_history, res.step_history);
    const StateTrajectory traj = forward_sweep(s.problem, res.q);
    const int stride = opts.snapshot_stride > 0 ? opts.snapshot_stride : cfg.snapshot_stride;
    write_simulation_bundle(opts.output_dir, s, traj, res.q, stride);
    {
        auto os = detail::open_out(opts.output_dir + "/termination.txt");
        os << res.termination << "\n";
    }
    return res;
}

// ---------------------------------------------------------------------------
// Invariant check harness

struct CheckOptions {
    double eta_override = -1.0;      // < 0: keep the config value
    double tau_factor = 1.0;         // scales the time step of the box check
    int adjoint_flip = 0;            // forwarded to the adjoint test hook
};

struct CheckReport {
    struct Item {
        std::string name;
        bool pass = false;
        double value = 0.0;
        double threshold = 0.0;
        std::string detail;
    };
    std::vector<Item> items;
    bool all_pass = true;

    void add(std::string name, bool pass, double value, double threshold, std::string detail = "") {
        items.push_back({std::move(name), pass, value, threshold, std::move(detail)});
        all_pass &= pass;
    }
};

inline nlohmann::json check_report_json(const CheckReport& rep) {
    nlohmann::json j;
    j["all_pass"] = rep.all_pass;
    j["checks"] = nlohmann::json::array();
    for (const auto& item : rep.items)
        j["checks"].push_back({{"name", item.name},
                               {"pass", item.pass},
                               {"value", item.value},
                               {"threshold", item.threshold},
                               {"detail", item.detail}});
    return j;
}

// A small scenario with fast defaults for `check` without a config.
inline ScenarioConfig default_check_config() {
    ScenarioConfig cfg;
    cfg.room = {0.0, 0.0, 5.0, 4.0, {{ExitInterval::East, 1.0, 3.0}}, {}, 0.45};
    cfg.horizon = 0.3;
    cfg.steps = 24;
    cfg.agent_positions = {{2.2, 1.6}, {2.0, 2.8}};
    cfg.initial_u = {{0.6, 0.1}};
    cfg.initial_c = {0.5};
    cfg.bells = {{1.4, 2.0, 0.4, 0.75}, {2.6, 2.6, 0.25, 0.5}};
    cfg.params.kernel.kind = KernelSpec::Morse;
    cfg.params.kernel.a = 0.7;
    cfg.params.kernel.r_a = 0.5;
    return cfg;
}

inline CheckReport run_check(const ScenarioConfig& cfg, CheckOptions opts = {}) {
    CheckReport rep;

    // Mass conservation: gamma = 0, CFL-respecting steps.
    {
        ScenarioConfig mc = cfg;
        mc.params.gamma = 0.0;
        mc.allow_cfl_violation = false;
        Scenario s = build_scenario(mc, true);
        const double tau = std::min(mc.tau(), 0.9 * cfl_max_tau(*s.geom));
        s.problem.N = std::min(mc.steps, 60);
        s.problem.T = tau * s.problem.N;
        ControlGrid q = s.q0;
        q = ControlGrid(s.q0.agents, s.problem.N, tau);
        for (int i = 0; i < q.agents; ++i)
            for (int n = 0; n <= q.steps; ++n) {
                q.u[q.index(i, n)] = s.q0.u[s.q0.index(i, 0)];
                q.c[q.index(i, n)] = s.q0.c[s.q0.index(i, 0)];
            }
        const StateTrajectory traj = forward_sweep(s.problem, q);
        double drift = 0.0;
        for (double m : traj.mass) drift = std::max(drift, std::abs(m - traj.mass[0]));
        const double rel = drift / std::max(traj.mass[0], 1e-300);
        rep.add("mass_conservation", rel <= 1e-12, rel, 1e-12);
    }

    // Box preservation under the CFL bound (or a deliberate violation via
    // tau_factor / eta_override).
    {
        ScenarioConfig bc = cfg;
        if (opts.eta_override >= 0.0) bc.params.eta = opts.eta_override;
        Scenario s = build_scenario(bc, true);
        const double tau = 0.9 * cfl_max_tau(*s.geom) * opts.tau_factor;
        s.problem.N = std::min(bc.steps, 60);
        s.problem.T = tau * s.problem.N;
        ControlGrid q(s.q0.agents, s.problem.N, tau);
        for (int i = 0; i < q.agents; ++i)
            for (int n = 0; n <= q.steps; ++n) {
                q.u[q.index(i, n)] = s.q0.u[s.q0.index(i, 0)];
                q.c[q.index(i, n)] = s.q0.c[s.q0.index(i, 0)];
            }
        double worst = 0.0;
        try {
            const StateTrajectory traj = forward_sweep(s.problem, q);
            for (std::size_t n = 0; n < traj.mass.size(); ++n)
                worst = std::max({worst, -traj.rho_min[n], traj.rho_max[n] - 1.0});
            rep.add("box_preservation", worst <= 1e-10, worst, 1e-10);
        } catch (const Error& e) {
            rep.add("box_preservation", false, std::numeric_limits<double>::infinity(), 1e-10, e.what());
        }
    }

    // M-matrix structure of the transport system matrix.
    {
        Scenario s = build_scenario(cfg, true);
        const TransportOperator op(*s.mesh, *s.geom, cfg.params, std::min(cfg.tau(), 0.9 * cfl_max_tau(*s.geom)));
        const MMatrixReport mm = check_m_matrix(op.system());
        rep.add("m_matrix", mm.is_m_matrix, mm.is_m_matrix ? 1.0 : 0.0, 1.0,
                mm.is_m_matrix ? "" : concat(mm.violations.size(), " offending entries"));
    }

    // Adjoint gradient vs central finite differences on a shortened horizon.
    {
        ScenarioConfig gc = cfg;
        Scenario s = build_scenario(gc, true);
        s.problem.N = std::min(gc.steps, 8);
        const double tau = std::min(gc.tau(), 0.8 * cfl_max_tau(*s.geom));
        s.problem.T = tau * s.problem.N;
        ControlGrid q(s.q0.agents, s.problem.N, tau);
        for (int i = 0; i < q.agents; ++i)
            for (int n = 0; n <= q.steps; ++n) {
                q.u[q.index(i, n)] = s.q0.u[s.q0.index(i, 0)];
                q.c[q.index(i, n)] = s.q0.c[s.q0.index(i, 0)];
            }
        const StateTrajectory traj = forward_sweep(s.problem, q);
        AdjointOptions ao;
        ao.debug_flip_term = opts.adjoint_flip;
        const AdjointTrajectory adj = backward_sweep(s.problem, traj, q, ao);
        const GradientRep grad = gradient(s.problem, traj, adj, q);

        std::mt19937 gen(2718);
        std::uniform_real_distribution<double> dist(-0.5, 0.5);
        double worst = 0.0;
        for (int trial = 0; trial < 3; ++trial) {
            ControlGrid dq(q.agents, q.steps, q.tau);
            for (auto& u : dq.u) u = {dist(gen), dist(gen)};
            for (auto& c : dq.c) c = dist(gen);
            const double predicted = control_inner(grad.grad, dq);
            const double h = 1e-6;
            ControlGrid qp = q, qm = q;
            for (std::size_t k = 0; k < q.u.size(); ++k) {
                qp.u[k] += dq.u[k] * h;
                qm.u[k] -= dq.u[k] * h;
                qp.c[k] += h * dq.c[k];
                qm.c[k] -= h * dq.c[k];
            }
            const double jp = objective_eval(s.problem, forward_sweep(s.problem, qp), qp);
            const double jm = objective_eval(s.problem, forward_sweep(s.problem, qm), qm);
            const double fd = (jp - jm) / (2.0 * h);
            worst = std::max(worst, std::abs(predicted - fd) / std::max(std::abs(fd), 1e-12));
        }
        rep.add("gradient_vs_fd", worst <= 1e-4, worst, 1e-4);
    }

    // Projection KKT residuals and idempotence on random grids.
    {
        std::mt19937 gen(3141);
        std::uniform_real_distribution<double> dist(-1.5, 2.0);
        const int N = 40;
        const double tau = cfg.tau();
        double worst_kkt = 0.0, worst_idem = 0.0;
        for (int trial = 0; trial < 4; ++trial) {
            std::vector<Vec2> u(N + 1);
            for (auto& v : u) v = {dist(gen), dist(gen)};
            const auto [w, ru] = project_u(u, tau);
            const auto [w2, ru2] = project_u(w, tau);
            worst_kkt = std::max(worst_kkt, ru.kkt_residual);
            std::vector<Vec2> diff(N + 1);
            for (int n = 0; n <= N; ++n) diff[n] = w[n] - w2[n];
            worst_idem = std::max(worst_idem, std::sqrt(h1_inner(std::span<const Vec2>(diff),
                                                                 std::span<const Vec2>(diff), tau)));
            std::vector<double> c(N + 1);
            for (auto& v : c) v = dist(gen);
            const auto [d, rc] = project_c(c, tau);
            worst_kkt = std::max(worst_kkt, rc.kkt_residual);
        }
        rep.add("projection_kkt", worst_kkt <= 1e-10, worst_kkt, 1e-10);
        rep.add("projection_idempotent", worst_idem <= 1e-10, worst_idem, 1e-10);
    }

    return rep;
}

} // namespace evac
