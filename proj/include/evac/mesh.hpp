#pragma once

// Conforming triangular meshes with exit/wall boundary tagging, geometric
// preprocessing (circumcenter transmissibilities, shape-regularity data),
// a structured room generator and the plain-text mesh file format.

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "evac/core.hpp"

namespace evac {

enum class BoundaryTag { Exit, Wall };

struct InteriorFace {
    int t1 = -1;        // triangle on the side the normal points away from
    int t2 = -1;        // triangle the normal points into
    int v1 = -1, v2 = -1;
    Vec2 normal;        // unit, oriented from t1 into t2
    double length = 0.0;
};

struct BoundaryFace {
    int tri = -1;
    int v1 = -1, v2 = -1;
    Vec2 normal;        // unit outward
    double length = 0.0;
    BoundaryTag tag = BoundaryTag::Wall;
};

class TriMesh {
public:
    std::vector<Vec2> vertices;
    std::vector<std::array<int, 3>> triangles;   // CCW vertex indices
    std::vector<InteriorFace> interior_faces;
    std::vector<BoundaryFace> boundary_faces;
    // Per-triangle incident faces: non-negative = interior face index,
    // ~k (bit complement) = boundary face index k.
    std::vector<std::array<int, 3>> tri_faces;

    int num_vertices() const { return static_cast<int>(vertices.size()); }
    int num_triangles() const { return static_cast<int>(triangles.size()); }

    // Builds connectivity from raw vertices/triangles and a boundary tag list
    // given as (v1, v2, tag) with unordered vertex pairs. Validates geometric
    // conformity, positive CCW areas, and that the tag list covers exactly
    // the boundary edges.
    static TriMesh build(std::vector<Vec2> verts,
                         std::vector<std::array<int, 3>> tris,
                         const std::vector<std::tuple<int, int, BoundaryTag>>& boundary_tags);
};

inline double triangle_area(Vec2 a, Vec2 b, Vec2 c) {
    return 0.5 * (b - a).cross(c - a);
}

inline TriMesh TriMesh::build(std::vector<Vec2> verts,
                              std::vector<std::array<int, 3>> tris,
                              const std::vector<std::tuple<int, int, BoundaryTag>>& boundary_tags) {
    TriMesh m;
    m.vertices = std::move(verts);
    m.triangles = std::move(tris);
    const int nv = m.num_vertices();
    const int nt = m.num_triangles();
    if (nt == 0) fail("mesh: no triangles");

    for (int t = 0; t < nt; ++t) {
        for (int k : m.triangles[t])
            if (k < 0 || k >= nv) fail("mesh: triangle ", t, " references vertex ", k, " out of range");
        const auto& tr = m.triangles[t];
        const double area = triangle_area(m.vertices[tr[0]], m.vertices[tr[1]], m.vertices[tr[2]]);
        if (!(area > 0.0))
            fail("mesh: triangle ", t, " has non-positive area ", area, " (requires CCW orientation)");
    }

    // Directed edge map: (a, b) -> triangle owning that CCW edge.
    std::map<std::pair<int, int>, int> directed;
    for (int t = 0; t < nt; ++t) {
        const auto& tr = m.triangles[t];
        for (int e = 0; e < 3; ++e) {
            const int a = tr[e], b = tr[(e + 1) % 3];
            auto [it, inserted] = directed.insert({{a, b}, t});
            if (!inserted)
                fail("mesh: directed edge (", a, ",", b, ") shared by triangles ", it->second, " and ", t,
                     " (non-conforming or inconsistent orientation)");
        }
    }

    m.tri_faces.assign(nt, {-1, -1, -1});
    std::map<std::pair<int, int>, BoundaryTag> tagmap;
    for (const auto& [a, b, tag] : boundary_tags) {
        const auto key = std::minmax(a, b);
        if (!tagmap.insert({{key.first, key.second}, tag}).second)
            fail("mesh: duplicate boundary tag for edge (", a, ",", b, ")");
    }

    auto set_tri_face = [&](int t, int a, int b, int code) {
        const auto& tr = m.triangles[t];
        for (int e = 0; e < 3; ++e)
            if (tr[e] == a && tr[(e + 1) % 3] == b) {
                m.tri_faces[t][e] = code;
                return;
            }
        fail("mesh: internal face bookkeeping error");
    };

    for (const auto& [edge, t1] : directed) {
        const auto [a, b] = edge;
        if (a > b) continue;            // visit each undirected edge once, from its (min,max) orientation owner
        const auto rev = directed.find({b, a});
        const Vec2 pa = m.vertices[a], pb = m.vertices[b];
        const double len = (pb - pa).norm();
        if (!(len > 0.0)) fail("mesh: zero-length edge (", a, ",", b, ")");
        // Outward normal of the triangle holding the directed edge (a, b).
        const Vec2 n = Vec2{(pb - pa).y, -(pb - pa).x} / len;
        if (rev != directed.end()) {
            InteriorFace f;
            f.t1 = t1;
            f.t2 = rev->second;
            f.v1 = a;
            f.v2 = b;
            f.normal = n;
            f.length = len;
            const int idx = static_cast<int>(m.interior_faces.size());
            m.interior_faces.push_back(f);
            set_tri_face(f.t1, a, b, idx);
            set_tri_face(f.t2, b, a, idx);
            if (tagmap.count({a, b}))
                fail("mesh: boundary tag given for interior edge (", a, ",", b, ")");
        } else {
            BoundaryFace f;
            f.tri = t1;
            f.v1 = a;
            f.v2 = b;
            f.normal = n;
            f.length = len;
            const auto it = tagmap.find({a, b});
            if (it == tagmap.end())
                fail("mesh: boundary edge (", a, ",", b, ") has no exit/wall tag");
            f.tag = it->second;
            const int idx = static_cast<int>(m.boundary_faces.size());
            m.boundary_faces.push_back(f);
            set_tri_face(f.tri, a, b, ~idx);
        }
    }
    // Every undirected edge not visited from (min,max) is the reverse of one that was;
    // boundary edges whose directed owner has a > b still need handling.
    for (const auto& [edge, t1] : directed) {
        const auto [a, b] = edge;
        if (a < b) continue;
        if (directed.count({b, a})) continue;   // interior, already built
        const Vec2 pa = m.vertices[a], pb = m.vertices[b];
        const double len = (pb - pa).norm();
        const Vec2 n = Vec2{(pb - pa).y, -(pb - pa).x} / len;
        BoundaryFace f;
        f.tri = t1;
        f.v1 = a;
        f.v2 = b;
        f.normal = n;
        f.length = len;
        const auto it = tagmap.find({std::min(a, b), std::max(a, b)});
        if (it == tagmap.end())
            fail("mesh: boundary edge (", a, ",", b, ") has no exit/wall tag");
        f.tag = it->second;
        const int idx = static_cast<int>(m.boundary_faces.size());
        m.boundary_faces.push_back(f);
        set_tri_face(f.tri, a, b, ~idx);
    }

    const std::size_t nbdry = m.boundary_faces.size();
    if (tagmap.size() != nbdry)
        fail("mesh: ", tagmap.size(), " boundary tags given but mesh has ", nbdry, " boundary edges");
    return m;
}

struct GeometryCache {
    std::vector<double> area;            // per triangle
    std::vector<double> diameter;        // h_T
    std::vector<double> inradius;        // radius of inscribed circle
    std::vector<Vec2> circumcenter;
    std::vector<Vec2> centroid;
    std::vector<double> transmissibility; // per interior face, 1/|x_T1 - x_T2|
    double kappa = 0.0;                  // max h_T / inradius_T
    double h_max = 0.0;
    double h_min = 0.0;
    double total_area = 0.0;
};

inline Vec2 triangle_circumcenter(Vec2 a, Vec2 b, Vec2 c) {
    // Intersection of the perpendicular edge bisectors, solved relative to a.
    const Vec2 d1 = b - a, d2 = c - a;
    const Mat2 sys{2.0 * d1.x, 2.0 * d1.y, 2.0 * d2.x, 2.0 * d2.y};
    const Vec2 rhs{d1.norm2(), d2.norm2()};
    return a + sys.solve(rhs);
}

inline GeometryCache compute_geometry(const TriMesh& mesh) {
    const int nt = mesh.num_triangles();
    if (nt == 0) fail("compute_geometry: empty mesh");
    GeometryCache g;
    g.area.resize(nt);
    g.diameter.resize(nt);
    g.inradius.resize(nt);
    g.circumcenter.resize(nt);
    g.centroid.resize(nt);
    g.h_min = std::numeric_limits<double>::max();
    for (int t = 0; t < nt; ++t) {
        const auto& tr = mesh.triangles[t];
        const Vec2 a = mesh.vertices[tr[0]], b = mesh.vertices[tr[1]], c = mesh.vertices[tr[2]];
        const double area = triangle_area(a, b, c);
        const double la = (b - c).norm(), lb = (c - a).norm(), lc = (a - b).norm();
        const double perim = la + lb + lc;
        g.area[t] = area;
        g.diameter[t] = std::max({la, lb, lc});
        g.inradius[t] = 2.0 * area / perim;
        g.circumcenter[t] = triangle_circumcenter(a, b, c);
        g.centroid[t] = (a + b + c) / 3.0;
        g.total_area += area;
        g.h_max = std::max(g.h_max, g.diameter[t]);
        g.h_min = std::min(g.h_min, g.diameter[t]);
        g.kappa = std::max(g.kappa, g.diameter[t] / g.inradius[t]);
    }
    g.transmissibility.resize(mesh.interior_faces.size());
    for (std::size_t f = 0; f < mesh.interior_faces.size(); ++f) {
        const auto& face = mesh.interior_faces[f];
        const double d = (g.circumcenter[face.t1] - g.circumcenter[face.t2]).norm();
        if (!(d > 1e-12 * g.h_max))
            fail("compute_geometry: circumcenter distance ", d, " degenerate on interior face ",
                 f, " between triangles ", face.t1, " and ", face.t2,
                 " (mesh must be Delaunay-quality)");
        g.transmissibility[f] = 1.0 / d;
    }
    return g;
}

// Largest time step for which the box-preservation theorem applies.
inline double cfl_max_tau(const GeometryCache& g) {
    if (g.area.empty()) fail("cfl_max_tau: empty geometry cache");
    constexpr double pi = 3.14159265358979323846;
    return pi / (3.0 * g.kappa * g.kappa) * g.h_min;
}

// ---------------------------------------------------------------------------
// Room generator: structured near-equilateral triangulation of a rectangle,
// mirror-symmetric in x, with exit intervals on the outer boundary and
// optional rectangular wall blocks carved out of the interior.

struct ExitInterval {
    enum Side { South, East, North, West } side = South;
    double lo = 0.0, hi = 0.0;   // coordinate interval along the side
};

struct WallBox {
    double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;
};

struct RoomSpec {
    double x0 = 0.0, y0 = 0.0, x1 = 1.0, y1 = 1.0;
    std::vector<ExitInterval> exits;
    std::vector<WallBox> walls;
    double target_edge = 0.1;
};

inline const char* side_name(ExitInterval::Side s) {
    switch (s) {
        case ExitInterval::South: return "south";
        case ExitInterval::East: return "east";
        case ExitInterval::North: return "north";
        default: return "west";
    }
}

inline TriMesh generate_room(const RoomSpec& spec) {
    const double W = spec.x1 - spec.x0, H = spec.y1 - spec.y0;
    if (!(W > 0.0) || !(H > 0.0)) fail("generate_room: degenerate room extents (", W, " x ", H, ")");
    if (!(spec.target_edge > 0.0)) fail("generate_room: target edge length must be positive");
    if (spec.exits.empty()) fail("generate_room: at least one exit interval required");
    for (const auto& e : spec.exits) {
        const bool horizontal = (e.side == ExitInterval::South || e.side == ExitInterval::North);
        const double lo = horizontal ? spec.x0 : spec.y0;
        const double hi = horizontal ? spec.x1 : spec.y1;
        if (!(e.lo < e.hi)) fail("generate_room: empty exit interval on ", side_name(e.side));
        if (e.lo < lo - 1e-12 || e.hi > hi + 1e-12)
            fail("generate_room: exit interval [", e.lo, ",", e.hi, "] on ", side_name(e.side),
                 " lies outside the boundary [", lo, ",", hi, "]");
    }
    for (std::size_t i = 0; i < spec.exits.size(); ++i)
        for (std::size_t j = i + 1; j < spec.exits.size(); ++j) {
            const auto &a = spec.exits[i], &b = spec.exits[j];
            if (a.side == b.side && a.lo < b.hi && b.lo < a.hi)
                fail("generate_room: overlapping exits on ", side_name(a.side));
        }

    const int nx = std::max(2, static_cast<int>(std::lround(W / spec.target_edge)));
    const int ny = std::max(1, static_cast<int>(std::lround(H / (spec.target_edge * 0.8660254037844386))));
    const double dx = W / nx, dy = H / ny;

    // Rows alternate between nx+1 grid-aligned points (even rows) and
    // nx+2 half-offset points with clamped endpoints (odd rows). Both point
    // sets are symmetric about the vertical center line, and the strip
    // triangulation below preserves that symmetry.
    std::vector<int> row_start;
    std::vector<Vec2> verts;
    for (int j = 0; j <= ny; ++j) {
        row_start.push_back(static_cast<int>(verts.size()));
        const double y = (j == ny) ? spec.y1 : spec.y0 + j * dy;
        if (j % 2 == 0) {
            for (int i = 0; i <= nx; ++i)
                verts.push_back({(i == nx) ? spec.x1 : spec.x0 + i * dx, y});
        } else {
            verts.push_back({spec.x0, y});
            for (int i = 0; i < nx; ++i) verts.push_back({spec.x0 + (i + 0.5) * dx, y});
            verts.push_back({spec.x1, y});
        }
    }

    std::vector<std::array<int, 3>> tris;
    for (int j = 0; j < ny; ++j) {
        const int lo = row_start[j], hi = row_start[j + 1];
        if (j % 2 == 0) {
            // even row below (E, nx+1 points), odd row above (O, nx+2 points)
            auto E = [&](int i) { return lo + i; };
            auto O = [&](int i) { return hi + i; };
            tris.push_back({E(0), O(1), O(0)});
            for (int i = 0; i < nx; ++i) tris.push_back({E(i), E(i + 1), O(i + 1)});
            for (int i = 1; i < nx; ++i) tris.push_back({O(i + 1), O(i), E(i)});
            tris.push_back({E(nx), O(nx + 1), O(nx)});
        } else {
            // odd row below (O, nx+2 points), even row above (E, nx+1 points)
            auto O = [&](int i) { return lo + i; };
            auto E = [&](int i) { return hi + i; };
            tris.push_back({O(0), O(1), E(0)});
            for (int i = 0; i < nx; ++i) tris.push_back({E(i + 1), E(i), O(i + 1)});
            for (int i = 1; i < nx; ++i) tris.push_back({O(i), O(i + 1), E(i)});
            tris.push_back({O(nx + 1), E(nx), O(nx)});
        }
    }

    // Carve wall blocks: drop triangles whose centroid falls inside any box.
    auto carved = [&](const std::array<int, 3>& tr) {
        const Vec2 c = (verts[tr[0]] + verts[tr[1]] + verts[tr[2]]) / 3.0;
        for (const auto& w : spec.walls)
            if (c.x >= w.x0 && c.x <= w.x1 && c.y >= w.y0 && c.y <= w.y1) return true;
        return false;
    };
    std::vector<std::array<int, 3>> kept;
    for (const auto& tr : tris)
        if (!carved(tr)) kept.push_back(tr);
    if (kept.empty()) fail("generate_room: wall blocks carve away the entire room");

    // Drop unused vertices.
    std::vector<int> remap(verts.size(), -1);
    std::vector<Vec2> vkept;
    for (auto& tr : kept)
        for (int& v : tr) {
            if (remap[v] < 0) {
                remap[v] = static_cast<int>(vkept.size());
                vkept.push_back(verts[v]);
            }
            v = remap[v];
        }

    // Tag boundary edges: edges owned by exactly one triangle. An edge whose
    // midpoint lies on the outer rectangle inside an exit interval is an exit.
    std::map<std::pair<int, int>, int> edge_count;
    for (const auto& tr : kept)
        for (int e = 0; e < 3; ++e) {
            const auto key = std::minmax(tr[e], tr[(e + 1) % 3]);
            edge_count[{key.first, key.second}]++;
        }
    const double tol = 1e-9 * std::max(W, H);
    auto exit_edge = [&](Vec2 a, Vec2 b) {
        const Vec2 mid = (a + b) * 0.5;
        for (const auto& e : spec.exits) {
            bool on_side = false;
            double coord = 0.0;
            switch (e.side) {
                case ExitInterval::South: on_side = std::abs(a.y - spec.y0) < tol && std::abs(b.y - spec.y0) < tol; coord = mid.x; break;
                case ExitInterval::North: on_side = std::abs(a.y - spec.y1) < tol && std::abs(b.y - spec.y1) < tol; coord = mid.x; break;
                case ExitInterval::West: on_side = std::abs(a.x - spec.x0) < tol && std::abs(b.x - spec.x0) < tol; coord = mid.y; break;
                case ExitInterval::East: on_side = std::abs(a.x - spec.x1) < tol && std::abs(b.x - spec.x1) < tol; coord = mid.y; break;
            }
            if (on_side && coord > e.lo - tol && coord < e.hi + tol) return true;
        }
        return false;
    };
    std::vector<std::tuple<int, int, BoundaryTag>> tags;
    int exit_faces = 0;
    for (const auto& [edge, count] : edge_count) {
        if (count > 2) fail("generate_room: internal error, edge shared by ", count, " triangles");
        if (count != 1) continue;
        const bool is_exit = exit_edge(vkept[edge.first], vkept[edge.second]);
        exit_faces += is_exit ? 1 : 0;
        tags.emplace_back(edge.first, edge.second, is_exit ? BoundaryTag::Exit : BoundaryTag::Wall);
    }
    if (exit_faces == 0)
        fail("generate_room: no boundary face falls inside any exit interval "
             "(exits narrower than the mesh resolution?)");

    TriMesh mesh = TriMesh::build(std::move(vkept), std::move(kept), tags);
    compute_geometry(mesh);   // reject degenerate geometry early
    return mesh;
}

// ---------------------------------------------------------------------------
// Mesh file format (ASCII):
//   evacmesh 1
//   vertices N
//   x y                  (N lines)
//   triangles M
//   i j k                (M lines, 0-based)
//   boundary K
//   v1 v2 tag            (K lines, tag in {exit, wall})

inline void save_mesh(const TriMesh& mesh, std::ostream& os) {
    char buf[128];
    os << "evacmesh 1\n";
    os << "vertices " << mesh.num_vertices() << "\n";
    for (const auto& v : mesh.vertices) {
        std::snprintf(buf, sizeof buf, "%.17g %.17g\n", v.x, v.y);
        os << buf;
    }
    os << "triangles " << mesh.num_triangles() << "\n";
    for (const auto& t : mesh.triangles) os << t[0] << " " << t[1] << " " << t[2] << "\n";
    os << "boundary " << mesh.boundary_faces.size() << "\n";
    for (const auto& f : mesh.boundary_faces)
        os << f.v1 << " " << f.v2 << " " << (f.tag == BoundaryTag::Exit ? "exit" : "wall") << "\n";
}

inline void save_mesh(const TriMesh& mesh, const std::string& path) {
    std::ofstream os(path);
    if (!os) fail("save_mesh: cannot open ", path);
    save_mesh(mesh, os);
}

inline TriMesh load_mesh(std::istream& is, const std::string& name = "<stream>") {
    std::string word;
    int version = 0;
    if (!(is >> word >> version) || word != "evacmesh" || version != 1)
        fail("load_mesh: ", name, ": expected header 'evacmesh 1'");
    int nv = 0;
    if (!(is >> word >> nv) || word != "vertices" || nv < 3)
        fail("load_mesh: ", name, ": bad vertices section");
    std::vector<Vec2> verts(nv);
    for (auto& v : verts)
        if (!(is >> v.x >> v.y)) fail("load_mesh: ", name, ": truncated vertex list");
    int nt = 0;
    if (!(is >> word >> nt) || word != "triangles" || nt < 1)
        fail("load_mesh: ", name, ": bad triangles section");
    std::vector<std::array<int, 3>> tris(nt);
    for (auto& t : tris)
        if (!(is >> t[0] >> t[1] >> t[2])) fail("load_mesh: ", name, ": truncated triangle list");
    int nb = 0;
    if (!(is >> word >> nb) || word != "boundary" || nb < 1)
        fail("load_mesh: ", name, ": bad boundary section");
    std::vector<std::tuple<int, int, BoundaryTag>> tags;
    for (int k = 0; k < nb; ++k) {
        int a = 0, b = 0;
        std::string tag;
        if (!(is >> a >> b >> tag)) fail("load_mesh: ", name, ": truncated boundary list");
        if (tag == "exit") tags.emplace_back(a, b, BoundaryTag::Exit);
        else if (tag == "wall") tags.emplace_back(a, b, BoundaryTag::Wall);
        else fail("load_mesh: ", name, ": unknown boundary tag '", tag, "'");
    }
    return TriMesh::build(std::move(verts), std::move(tris), tags);
}

inline TriMesh load_mesh(const std::string& path) {
    std::ifstream is(path);
    if (!is) fail("load_mesh: cannot open ", path);
    return load_mesh(is, path);
}

// Vertices lying on at least one exit boundary face (Dirichlet set for the
// travel-time potential).
inline std::vector<char> exit_vertex_mask(const TriMesh& mesh) {
    std::vector<char> mask(mesh.num_vertices(), 0);
    for (const auto& f : mesh.boundary_faces)
        if (f.tag == BoundaryTag::Exit) mask[f.v1] = mask[f.v2] = 1;
    return mask;
}

// Vertices on any boundary face (Dirichlet set for the barrier field).
inline std::vector<char> boundary_vertex_mask(const TriMesh& mesh) {
    std::vector<char> mask(mesh.num_vertices(), 0);
    for (const auto& f : mesh.boundary_faces) mask[f.v1] = mask[f.v2] = 1;
    return mask;
}

} // namespace evac
