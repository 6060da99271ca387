#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>

#include "evac/eikonal.hpp"
#include "evac/mesh.hpp"
#include "oracles.hpp"

using namespace evac;
using Catch::Approx;

TEST_CASE("eikonal: convergence, nonnegativity, dirichlet", "[eikonal]") {
    RoomSpec spec;
    spec.x1 = 4.0;
    spec.y1 = 3.0;
    spec.target_edge = 0.35;
    spec.exits = {{ExitInterval::East, 0.5, 2.5}};
    const TriMesh mesh = generate_room(spec);
    const GeometryCache g = compute_geometry(mesh);
    ModelParams params;
    const EikonalSolver solver(mesh, g, params);

    CellField rho(mesh.num_triangles());
    for (int t = 0; t < mesh.num_triangles(); ++t)
        rho[t] = 0.5 * std::exp(-(g.centroid[t] - Vec2{1.0, 1.5}).norm2());

    const auto res = solver.solve(rho);
    REQUIRE(res.final_residual <= 1e-10);
    const auto exits = exit_vertex_mask(mesh);
    for (int v = 0; v < mesh.num_vertices(); ++v) {
        if (exits[v]) REQUIRE(res.phi[v] == 0.0);
        REQUIRE(res.phi[v] >= -1e-12);
    }

    // Warm start from the converged field finishes immediately.
    const auto warm = solver.solve(rho, &res.phi);
    REQUIRE(warm.iterations <= 1);
}

TEST_CASE("eikonal: mirror symmetry", "[eikonal]") {
    RoomSpec spec;
    spec.x1 = 4.0;
    spec.y1 = 3.0;
    spec.target_edge = 0.3;
    spec.exits = {{ExitInterval::East, 1.0, 2.0}, {ExitInterval::West, 1.0, 2.0}};
    const TriMesh mesh = generate_room(spec);
    const GeometryCache g = compute_geometry(mesh);
    ModelParams params;
    const EikonalSolver solver(mesh, g, params);

    // Density symmetric about x = 2.
    CellField rho(mesh.num_triangles());
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        const Vec2 c = g.centroid[t];
        rho[t] = 0.6 * std::exp(-2.0 * (std::abs(c.x - 2.0) + (c.y - 1.5) * (c.y - 1.5)));
    }
    const auto res = solver.solve(rho);

    // Vertex reflection map by coordinate lookup.
    std::map<std::pair<long long, long long>, int> lookup;
    auto key = [](Vec2 p) {
        return std::make_pair(static_cast<long long>(std::llround(p.x * 1e7)),
                              static_cast<long long>(std::llround(p.y * 1e7)));
    };
    for (int v = 0; v < mesh.num_vertices(); ++v) lookup[key(mesh.vertices[v])] = v;
    for (int v = 0; v < mesh.num_vertices(); ++v) {
        const auto it = lookup.find(key({4.0 - mesh.vertices[v].x, mesh.vertices[v].y}));
        REQUIRE(it != lookup.end());
        REQUIRE(res.phi[v] == Approx(res.phi[it->second]).margin(1e-8));
    }
}

TEST_CASE("eikonal: dense newton oracle on a two-triangle mesh", "[eikonal]") {
    std::vector<Vec2> v{{0, 0}, {1, 0}, {1.3, 1}, {0.3, 1}};
    std::vector<std::array<int, 3>> t{{0, 1, 2}, {0, 2, 3}};
    std::vector<std::tuple<int, int, BoundaryTag>> tags{
        {0, 1, BoundaryTag::Wall}, {1, 2, BoundaryTag::Exit},
        {2, 3, BoundaryTag::Wall}, {0, 3, BoundaryTag::Wall}};
    const TriMesh mesh = TriMesh::build(v, t, tags);
    const GeometryCache g = compute_geometry(mesh);
    ModelParams params;
    const CellField rho(2, 0.3);
    EikonalOptions opts;
    opts.tol = 1e-13;   // drive both routes well below the comparison tolerance
    const EikonalSolver solver(mesh, g, params, opts);
    const auto res = solver.solve(rho);

    // Independent dense implementation shared with the acceptance suite.
    REQUIRE(oracles::eikonal_dense_oracle_error(mesh, g, params, rho, res.phi) < 1e-12);
}

TEST_CASE("eikonal: missing exits and non-convergence are reported", "[eikonal]") {
    std::vector<Vec2> v{{0, 0}, {1, 0}, {1.3, 1}, {0.3, 1}};
    std::vector<std::array<int, 3>> t{{0, 1, 2}, {0, 2, 3}};
    std::vector<std::tuple<int, int, BoundaryTag>> tags{
        {0, 1, BoundaryTag::Wall}, {1, 2, BoundaryTag::Wall},
        {2, 3, BoundaryTag::Wall}, {0, 3, BoundaryTag::Wall}};
    const TriMesh mesh = TriMesh::build(v, t, tags);
    const GeometryCache g = compute_geometry(mesh);
    ModelParams params;
    REQUIRE_THROWS_WITH(EikonalSolver(mesh, g, params), Catch::Matchers::ContainsSubstring("exit"));
}
