#pragma once

// Output writers: VTK legacy snapshots (cell density, nodal potential) and
// space-separated series/trajectory/control tables. All numeric output is
// printed with %.17g so reruns are byte-identical.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "evac/controls.hpp"
#include "evac/core.hpp"
#include "evac/fields.hpp"
#include "evac/forward.hpp"
#include "evac/mesh.hpp"

namespace evac {

namespace detail {
inline std::ofstream open_out(const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) fail("cannot open output file ", path);
    return os;
}
inline std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}
} // namespace detail

inline void write_vtk_snapshot(const std::string& path, const TriMesh& mesh,
                               const CellField& rho, const NodalField* phi) {
    auto os = detail::open_out(path);
    os << "# vtk DataFile Version 3.0\n";
    os << "crowd density snapshot\n";
    os << "ASCII\n";
    os << "DATASET UNSTRUCTURED_GRID\n";
    os << "POINTS " << mesh.num_vertices() << " double\n";
    for (const auto& v : mesh.vertices)
        os << detail::fmt(v.x) << " " << detail::fmt(v.y) << " 0\n";
    os << "CELLS " << mesh.num_triangles() << " " << 4 * mesh.num_triangles() << "\n";
    for (const auto& t : mesh.triangles) os << "3 " << t[0] << " " << t[1] << " " << t[2] << "\n";
    os << "CELL_TYPES " << mesh.num_triangles() << "\n";
    for (int t = 0; t < mesh.num_triangles(); ++t) os << "5\n";
    os << "CELL_DATA " << mesh.num_triangles() << "\n";
    os << "SCALARS rho double 1\nLOOKUP_TABLE default\n";
    for (std::size_t t = 0; t < rho.size(); ++t) os << detail::fmt(rho[t]) << "\n";
    if (phi) {
        os << "POINT_DATA " << mesh.num_vertices() << "\n";
        os << "SCALARS phi double 1\nLOOKUP_TABLE default\n";
        for (std::size_t v = 0; v < phi->size(); ++v) os << detail::fmt((*phi)[v]) << "\n";
    }
}

// k t mass rho_min rho_max
inline void write_series(const std::string& path, const StateTrajectory& traj) {
    auto os = detail::open_out(path);
    os << "k t mass rho_min rho_max\n";
    for (std::size_t n = 0; n < traj.mass.size(); ++n)
        os << n << " " << detail::fmt(n * traj.tau) << " " << detail::fmt(traj.mass[n]) << " "
           << detail::fmt(traj.rho_min[n]) << " " << detail::fmt(traj.rho_max[n]) << "\n";
}

// k t Ag_x_i Ag_y_i
inline void write_trajectories(const std::string& path, const StateTrajectory& traj) {
    auto os = detail::open_out(path);
    const std::size_t M = traj.x.empty() ? 0 : traj.x[0].size();
    os << "k t";
    for (std::size_t i = 0; i < M; ++i) os << " Ag_x_" << i << " Ag_y_" << i;
    os << "\n";
    for (std::size_t n = 0; n < traj.x.size(); ++n) {
        os << n << " " << detail::fmt(n * traj.tau);
        for (std::size_t i = 0; i < M; ++i)
            os << " " << detail::fmt(traj.x[n][i].x) << " " << detail::fmt(traj.x[n][i].y);
        os << "\n";
    }
}

// k Ag_int_0 .. Ag_int_{M-1} Ag_ux_0 Ag_uy_0 ..
inline void write_controls(const std::string& path, const ControlGrid& q) {
    auto os = detail::open_out(path);
    os << "k";
    for (int i = 0; i < q.agents; ++i) os << " Ag_int_" << i;
    for (int i = 0; i < q.agents; ++i) os << " Ag_ux_" << i << " Ag_uy_" << i;
    os << "\n";
    for (int n = 0; n <= q.steps; ++n) {
        os << n;
        for (int i = 0; i < q.agents; ++i) os << " " << detail::fmt(q.c[q.index(i, n)]);
        for (int i = 0; i < q.agents; ++i)
            os << " " << detail::fmt(q.u[q.index(i, n)].x) << " " << detail::fmt(q.u[q.index(i, n)].y);
        os << "\n";
    }
}

// iter objective stationarity step
inline void write_history(const std::string& path, const std::vector<double>& objective,
                          const std::vector<double>& stationarity, const std::vector<double>& steps) {
    auto os = detail::open_out(path);
    os << "iter objective stationarity step\n";
    for (std::size_t k = 0; k < objective.size(); ++k) {
        os << k << " " << detail::fmt(objective[k]);
        os << " " << (k < stationarity.size() ? detail::fmt(stationarity[k]) : "nan");
        os << " " << (k > 0 && k - 1 < steps.size() ? detail::fmt(steps[k - 1]) : "nan");
        os << "\n";
    }
}

} // namespace evac
