// Command line front end: simulate / optimize / check / mesh subcommands.
// Exit codes: 0 success, 1 solver error, 2 configuration error, 3 check failure.

#include <cstdio>
#include <iostream>
#include <random>

#include "CLI11.hpp"

#include "evac/config.hpp"
#include "evac/scenario.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitSolver = 1;
constexpr int kExitConfig = 2;
constexpr int kExitCheck = 3;

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Crowd evacuation simulation and agent-control optimization"};
    app.require_subcommand(1);

    std::string config_path;
    evac::RunOptions run;
    int snapshot_stride = 0;
    bool allow_cfl = false;
    int max_iters = 0;
    double tol = 0.0;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("config", config_path, "config file or preset (example1|example2|example3)")
            ->required();
        cmd->add_option("--output-dir", run.output_dir, "output directory");
        cmd->add_option("--snapshot-stride", snapshot_stride, "time steps between VTK snapshots");
        cmd->add_flag("--allow-cfl-violation", allow_cfl, "run even if tau exceeds the CFL bound");
    };

    CLI::App* simulate = app.add_subcommand("simulate", "run the forward model and write its outputs");
    add_common(simulate);

    CLI::App* optimize = app.add_subcommand("optimize", "run the projected gradient method");
    add_common(optimize);
    optimize->add_option("--max-iters", max_iters, "iteration budget override");
    optimize->add_option("--tol", tol, "stationarity tolerance override");

    CLI::App* check = app.add_subcommand("check", "run the invariant check harness");
    std::string check_config;
    check->add_option("config", check_config, "config file or preset (defaults to a coarse scenario)");
    check->add_option("--output-dir", run.output_dir, "output directory");

    CLI::App* mesh = app.add_subcommand("mesh", "mesh utilities");
    mesh->require_subcommand(1);
    CLI::App* mesh_gen = mesh->add_subcommand("gen", "generate a mesh from a config's geometry");
    std::string mesh_out = "room.mesh";
    mesh_gen->add_option("config", config_path, "config file or preset")->required();
    mesh_gen->add_option("-o,--output", mesh_out, "output mesh file");
    CLI::App* mesh_info = mesh->add_subcommand("info", "print mesh statistics");
    std::string mesh_path;
    mesh_info->add_option("mesh", mesh_path, "mesh file, config file, or preset")->required();

    CLI11_PARSE(app, argc, argv);
    run.snapshot_stride = snapshot_stride;
    run.allow_cfl_violation = allow_cfl;
    run.max_iterations = max_iters;
    run.tolerance = tol;

    try {
        if (simulate->parsed()) {
            evac::run_simulate(evac::load_config(config_path), run);
            return kExitOk;
        }
        if (optimize->parsed()) {
            const evac::OptimizerResult res = evac::run_optimize(evac::load_config(config_path), run);
            std::printf("termination: %s after %d iterations, objective %.12g\n",
                        res.termination.c_str(), res.iterations, res.objective_history.back());
            return kExitOk;
        }
        if (check->parsed()) {
            const evac::ScenarioConfig cfg = check_config.empty() ? evac::default_check_config()
                                                                  : evac::load_config(check_config);
            const evac::CheckReport rep = evac::run_check(cfg);
            const nlohmann::json j = evac::check_report_json(rep);
            std::filesystem::create_directories(run.output_dir);
            std::ofstream os(run.output_dir + "/check_report.json");
            os << j.dump(2) << "\n";
            std::cout << j.dump(2) << std::endl;
            return rep.all_pass ? kExitOk : kExitCheck;
        }
        if (mesh_gen->parsed()) {
            const evac::ScenarioConfig cfg = evac::load_config(config_path);
            const evac::TriMesh m = cfg.use_mesh_file ? evac::load_mesh(cfg.mesh_file)
                                                      : evac::generate_room(cfg.room);
            evac::save_mesh(m, mesh_out);
            std::printf("wrote %s (%d vertices, %d triangles)\n", mesh_out.c_str(),
                        m.num_vertices(), m.num_triangles());
            return kExitOk;
        }
        if (mesh_info->parsed()) {
            evac::TriMesh m = [&] {
                if (mesh_path == "example1" || mesh_path == "example2" || mesh_path == "example3" ||
                    mesh_path.ends_with(".cfg") || mesh_path.ends_with(".ini")) {
                    const evac::ScenarioConfig cfg = evac::load_config(mesh_path);
                    return cfg.use_mesh_file ? evac::load_mesh(cfg.mesh_file)
                                             : evac::generate_room(cfg.room);
                }
                return evac::load_mesh(mesh_path);
            }();
            const evac::GeometryCache g = evac::compute_geometry(m);
            int exits = 0;
            for (const auto& f : m.boundary_faces) exits += f.tag == evac::BoundaryTag::Exit ? 1 : 0;
            std::printf("vertices:        %d\n", m.num_vertices());
            std::printf("triangles:       %d\n", m.num_triangles());
            std::printf("interior faces:  %zu\n", m.interior_faces.size());
            std::printf("boundary faces:  %zu (%d exit, %zu wall)\n", m.boundary_faces.size(), exits,
                        m.boundary_faces.size() - exits);
            std::printf("total area:      %.12g\n", g.total_area);
            std::printf("h max/min:       %.6g / %.6g\n", g.h_max, g.h_min);
            std::printf("aspect ratio:    %.6g\n", g.kappa);
            std::printf("cfl max tau:     %.6g\n", evac::cfl_max_tau(g));
            return kExitOk;
        }
    } catch (const evac::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const evac::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitSolver;
    }
    return kExitOk;
}
