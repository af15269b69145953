#ifndef QHF_MESH_HPP
#define QHF_MESH_HPP

#include "qhf/dense.hpp"
#include "qhf/error.hpp"

#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <queue>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace qhf {

using Vec3 = Eigen::Vector3d;
using Triangle = std::array<int, 3>;

/// Closed, consistently oriented triangle surface. Only constructible through
/// make_mesh, which enforces the manifold/orientation/area invariants.
class TriangleMesh {
public:
    const std::vector<Vec3>& vertices() const { return vertices_; }
    const std::vector<Triangle>& triangles() const { return triangles_; }
    const std::string& provenance() const { return provenance_; }
    int num_vertices() const { return static_cast<int>(vertices_.size()); }
    int num_triangles() const { return static_cast<int>(triangles_.size()); }
    int num_components() const { return components_; }
    /// Connected component of each triangle.
    const std::vector<int>& triangle_component() const { return triangle_component_; }
    /// Connected component of each vertex.
    const std::vector<int>& vertex_component() const { return vertex_component_; }

    const Vec3& vertex(int t, int local) const { return vertices_[triangles_[t][local]]; }

    double area(int t) const
    {
        return 0.5 * (vertex(t, 1) - vertex(t, 0)).cross(vertex(t, 2) - vertex(t, 0)).norm();
    }

    /// Unit normal following the triangle's vertex order (outward after make_mesh).
    Vec3 normal(int t) const
    {
        return (vertex(t, 1) - vertex(t, 0)).cross(vertex(t, 2) - vertex(t, 0)).normalized();
    }

    Vec3 centroid(int t) const { return (vertex(t, 0) + vertex(t, 1) + vertex(t, 2)) / 3.0; }

private:
    friend TriangleMesh make_mesh(std::vector<Vec3>, std::vector<Triangle>, std::string);
    std::vector<Vec3> vertices_;
    std::vector<Triangle> triangles_;
    std::string provenance_;
    int components_ = 0;
    std::vector<int> triangle_component_;
    std::vector<int> vertex_component_;
};

struct MeshStats {
    int num_edges = 0;     // N
    int num_triangles = 0; // N_S
    int num_vertices = 0;  // N_L
    int components = 0;
    int genus = 0;
    double h_avg = 0.0;
    double diameter = 0.0;
};

/// One RWG function. `tail`/`head` are the edge endpoints in the order the
/// c_plus triangle traverses them; v_plus/v_minus are the free vertices.
struct EdgeRecord {
    int tail = -1;
    int head = -1;
    int c_plus = -1;
    int c_minus = -1;
    int v_plus = -1;
    int v_minus = -1;
    double area_plus = 0.0;
    double area_minus = 0.0;
};

/// Edge of a triangle as seen from that triangle: the RWG index, the local
/// index of the free vertex, and +1/-1 for c_plus/c_minus.
struct LocalEdge {
    int edge = -1;
    int free_local = -1;
    int sign = 0;
};

struct BasisTopology {
    std::vector<EdgeRecord> edges;
    std::vector<std::array<LocalEdge, 3>> triangle_edges;

    int num_edges() const { return static_cast<int>(edges.size()); }
};

namespace detail {

inline std::uint64_t edge_key(int a, int b)
{
    const auto lo = static_cast<std::uint64_t>(std::min(a, b));
    const auto hi = static_cast<std::uint64_t>(std::max(a, b));
    return (lo << 32) | hi;
}

/// True if triangle `tri` traverses a -> b in its cyclic order.
inline bool traverses(const Triangle& tri, int a, int b)
{
    for (int i = 0; i < 3; ++i) {
        if (tri[i] == a && tri[(i + 1) % 3] == b) {
            return true;
        }
    }
    return false;
}

} // namespace detail

/// Validates, compacts (drops unreferenced vertices), orients consistently and
/// outward per component. Throws ErrorKind::Mesh on any invariant violation.
inline TriangleMesh make_mesh(
    std::vector<Vec3> vertices, std::vector<Triangle> triangles, std::string provenance)
{
    if (triangles.empty()) {
        fail(ErrorKind::Mesh, "mesh has no triangles");
    }
    const int nv_in = static_cast<int>(vertices.size());
    std::vector<int> remap(nv_in, -1);
    std::vector<Vec3> used;
    for (auto& tri : triangles) {
        for (int& v : tri) {
            if (v < 0 || v >= nv_in) {
                fail(ErrorKind::Mesh, "triangle references missing vertex " + std::to_string(v));
            }
            if (remap[v] < 0) {
                remap[v] = static_cast<int>(used.size());
                used.push_back(vertices[v]);
            }
            v = remap[v];
        }
        if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2]) {
            fail(ErrorKind::Mesh, "triangle with repeated vertex");
        }
    }
    vertices = std::move(used);

    const int nt = static_cast<int>(triangles.size());
    for (int t = 0; t < nt; ++t) {
        const Vec3& a = vertices[triangles[t][0]];
        const Vec3& b = vertices[triangles[t][1]];
        const Vec3& c = vertices[triangles[t][2]];
        const double twice_area = (b - a).cross(c - a).norm();
        const double longest = std::max({(b - a).squaredNorm(), (c - b).squaredNorm(),
            (a - c).squaredNorm()});
        if (!(twice_area > 1e-12 * longest)) {
            fail(ErrorKind::Mesh, "degenerate triangle " + std::to_string(t));
        }
    }

    std::unordered_map<std::uint64_t, std::vector<int>> edge_tris;
    edge_tris.reserve(3 * triangles.size());
    for (int t = 0; t < nt; ++t) {
        for (int i = 0; i < 3; ++i) {
            edge_tris[detail::edge_key(triangles[t][i], triangles[t][(i + 1) % 3])].push_back(t);
        }
    }
    for (const auto& [key, tris] : edge_tris) {
        if (tris.size() > 2) {
            fail(ErrorKind::Mesh, "non-manifold edge shared by " + std::to_string(tris.size())
                    + " triangles");
        }
    }
    for (const auto& [key, tris] : edge_tris) {
        if (tris.size() == 1) {
            fail(ErrorKind::Mesh, "open surface: boundary edge detected");
        }
    }

    // Breadth-first orientation propagation; flips neighbours to agree.
    std::vector<int> component(nt, -1);
    int components = 0;
    for (int seed = 0; seed < nt; ++seed) {
        if (component[seed] >= 0) {
            continue;
        }
        std::queue<int> queue;
        queue.push(seed);
        component[seed] = components;
        while (!queue.empty()) {
            const int t = queue.front();
            queue.pop();
            for (int i = 0; i < 3; ++i) {
                const int a = triangles[t][i];
                const int b = triangles[t][(i + 1) % 3];
                for (int s : edge_tris[detail::edge_key(a, b)]) {
                    if (s == t) {
                        continue;
                    }
                    const bool same_direction = detail::traverses(triangles[s], a, b);
                    if (component[s] < 0) {
                        if (same_direction) {
                            std::swap(triangles[s][1], triangles[s][2]);
                        }
                        component[s] = components;
                        queue.push(s);
                    } else if (same_direction) {
                        fail(ErrorKind::Mesh,
                            "inconsistent orientation not repairable (non-orientable surface)");
                    }
                }
            }
        }
        ++components;
    }

    // Outward orientation: positive enclosed volume per component.
    std::vector<double> volume(components, 0.0);
    for (int t = 0; t < nt; ++t) {
        const Vec3& a = vertices[triangles[t][0]];
        const Vec3& b = vertices[triangles[t][1]];
        const Vec3& c = vertices[triangles[t][2]];
        volume[component[t]] += a.dot(b.cross(c)) / 6.0;
    }
    for (int t = 0; t < nt; ++t) {
        if (volume[component[t]] < 0.0) {
            std::swap(triangles[t][1], triangles[t][2]);
        }
    }

    TriangleMesh mesh;
    mesh.vertex_component_.assign(vertices.size(), -1);
    for (int t = 0; t < nt; ++t) {
        for (int v : triangles[t]) {
            mesh.vertex_component_[v] = component[t];
        }
    }
    mesh.vertices_ = std::move(vertices);
    mesh.triangles_ = std::move(triangles);
    mesh.provenance_ = std::move(provenance);
    mesh.components_ = components;
    mesh.triangle_component_ = std::move(component);
    return mesh;
}

/// RWG edge enumeration. Edges are ordered by (min vertex, max vertex); the
/// triangle traversing the edge from its lower to its higher vertex index is c_plus.
inline BasisTopology build_basis_topology(const TriangleMesh& mesh)
{
    const auto& tris = mesh.triangles();
    const int nt = mesh.num_triangles();
    std::map<std::pair<int, int>, std::array<int, 2>> edge_map; // (lo,hi) -> {c_plus, c_minus}
    for (int t = 0; t < nt; ++t) {
        for (int i = 0; i < 3; ++i) {
            const int a = tris[t][i];
            const int b = tris[t][(i + 1) % 3];
            auto& slot = edge_map.try_emplace({std::min(a, b), std::max(a, b)},
                                     std::array<int, 2>{-1, -1})
                             .first->second;
            slot[a < b ? 0 : 1] = t;
        }
    }

    BasisTopology topo;
    topo.edges.reserve(edge_map.size());
    topo.triangle_edges.assign(nt, {});
    std::vector<int> filled(nt, 0);
    auto free_local = [&](int t, int a, int b) {
        for (int i = 0; i < 3; ++i) {
            if (tris[t][i] != a && tris[t][i] != b) {
                return i;
            }
        }
        return -1;
    };
    for (const auto& [key, pm] : edge_map) {
        EdgeRecord e;
        e.tail = key.first;
        e.head = key.second;
        e.c_plus = pm[0];
        e.c_minus = pm[1];
        const int lp = free_local(e.c_plus, e.tail, e.head);
        const int lm = free_local(e.c_minus, e.tail, e.head);
        e.v_plus = tris[e.c_plus][lp];
        e.v_minus = tris[e.c_minus][lm];
        e.area_plus = mesh.area(e.c_plus);
        e.area_minus = mesh.area(e.c_minus);
        const int index = static_cast<int>(topo.edges.size());
        topo.triangle_edges[e.c_plus][filled[e.c_plus]++] = {index, lp, +1};
        topo.triangle_edges[e.c_minus][filled[e.c_minus]++] = {index, lm, -1};
        topo.edges.push_back(e);
    }
    return topo;
}

inline MeshStats compute_stats(const TriangleMesh& mesh)
{
    MeshStats stats;
    stats.num_triangles = mesh.num_triangles();
    stats.num_vertices = mesh.num_vertices();
    stats.components = mesh.num_components();
    double total_length = 0.0;
    int edges = 0;
    for (const auto& tri : mesh.triangles()) {
        for (int i = 0; i < 3; ++i) {
            // Each undirected edge appears twice; count it from the lower-index side.
            const int a = tri[i];
            const int b = tri[(i + 1) % 3];
            if (a < b) {
                total_length += (mesh.vertices()[a] - mesh.vertices()[b]).norm();
                ++edges;
            }
        }
    }
    stats.num_edges = edges;
    stats.h_avg = total_length / edges;
    const int chi = stats.num_vertices - stats.num_edges + stats.num_triangles;
    stats.genus = (2 * stats.components - chi) / 2;

    // Bounding sphere diameter (Ritter's approximation refined by a max-distance pass).
    Vec3 lo = mesh.vertices()[0];
    Vec3 hi = lo;
    for (const auto& v : mesh.vertices()) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }
    const Vec3 center = 0.5 * (lo + hi);
    double radius = 0.0;
    for (const auto& v : mesh.vertices()) {
        radius = std::max(radius, (v - center).norm());
    }
    stats.diameter = 2.0 * radius;
    return stats;
}

// ---------------------------------------------------------------------------
// File IO

enum class MeshFormat { Obj, GmshMsh2 };

inline MeshFormat mesh_format_from_path(const std::string& path)
{
    const auto ext = std::filesystem::path(path).extension().string();
    if (ext == ".obj" || ext == ".OBJ") {
        return MeshFormat::Obj;
    }
    if (ext == ".msh" || ext == ".MSH") {
        return MeshFormat::GmshMsh2;
    }
    fail(ErrorKind::Mesh, "unsupported mesh format '" + ext + "' (expected .obj or .msh)");
}

namespace detail {

inline int parse_obj_index(const std::string& token, int nv)
{
    const std::string head = token.substr(0, token.find('/'));
    int idx = 0;
    try {
        idx = std::stoi(head);
    } catch (const std::exception&) {
        fail(ErrorKind::Mesh, "obj: bad face index '" + token + "'");
    }
    if (idx < 0) {
        return nv + idx;
    }
    return idx - 1;
}

} // namespace detail

inline TriangleMesh read_obj(std::istream& in, const std::string& provenance)
{
    std::vector<Vec3> vertices;
    std::vector<Triangle> triangles;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag) || tag[0] == '#') {
            continue;
        }
        if (tag == "v") {
            Vec3 p;
            if (!(ls >> p.x() >> p.y() >> p.z())) {
                fail(ErrorKind::Mesh, "obj: bad vertex on line " + std::to_string(line_no));
            }
            vertices.push_back(p);
        } else if (tag == "f") {
            std::vector<int> face;
            std::string token;
            while (ls >> token) {
                face.push_back(detail::parse_obj_index(token, static_cast<int>(vertices.size())));
            }
            if (face.size() != 3) {
                fail(ErrorKind::Mesh, "obj: only triangular faces are supported (line "
                        + std::to_string(line_no) + ")");
            }
            triangles.push_back({face[0], face[1], face[2]});
        }
    }
    return make_mesh(std::move(vertices), std::move(triangles), provenance);
}

inline TriangleMesh read_msh2(std::istream& in, const std::string& provenance)
{
    std::string token;
    std::unordered_map<long, int> node_index;
    std::vector<Vec3> vertices;
    std::vector<std::array<long, 3>> raw_tris;
    bool saw_format = false;
    while (in >> token) {
        if (token == "$MeshFormat") {
            double version = 0.0;
            int file_type = 0;
            int data_size = 0;
            in >> version >> file_type >> data_size;
            if (!in || version < 2.0 || version >= 3.0 || file_type != 0) {
                fail(ErrorKind::Mesh, "msh: only ASCII format version 2 is supported");
            }
            saw_format = true;
        } else if (token == "$Nodes") {
            long count = 0;
            in >> count;
            for (long i = 0; i < count; ++i) {
                long id = 0;
                Vec3 p;
                if (!(in >> id >> p.x() >> p.y() >> p.z())) {
                    fail(ErrorKind::Mesh, "msh: truncated $Nodes section");
                }
                node_index[id] = static_cast<int>(vertices.size());
                vertices.push_back(p);
            }
        } else if (token == "$Elements") {
            long count = 0;
            in >> count;
            for (long i = 0; i < count; ++i) {
                long id = 0;
                int type = 0;
                int ntags = 0;
                if (!(in >> id >> type >> ntags)) {
                    fail(ErrorKind::Mesh, "msh: truncated $Elements section");
                }
                for (int k = 0; k < ntags; ++k) {
                    long tag = 0;
                    in >> tag;
                }
                static const std::map<int, int> nodes_per_type = {{1, 2}, {2, 3}, {3, 4},
                    {4, 4}, {5, 8}, {6, 6}, {7, 5}, {8, 3}, {9, 6}, {15, 1}};
                const auto it = nodes_per_type.find(type);
                if (it == nodes_per_type.end()) {
                    fail(ErrorKind::Mesh, "msh: unsupported element type " + std::to_string(type));
                }
                std::vector<long> nodes(it->second);
                for (auto& n : nodes) {
                    in >> n;
                }
                if (type == 2) {
                    raw_tris.push_back({nodes[0], nodes[1], nodes[2]});
                }
            }
        }
    }
    if (!saw_format) {
        fail(ErrorKind::Mesh, "msh: missing $MeshFormat header");
    }
    std::vector<Triangle> triangles;
    triangles.reserve(raw_tris.size());
    for (const auto& rt : raw_tris) {
        Triangle tri{};
        for (int k = 0; k < 3; ++k) {
            const auto it = node_index.find(rt[k]);
            if (it == node_index.end()) {
                fail(ErrorKind::Mesh, "msh: element references unknown node");
            }
            tri[k] = it->second;
        }
        triangles.push_back(tri);
    }
    return make_mesh(std::move(vertices), std::move(triangles), provenance);
}

inline TriangleMesh load_mesh(const std::string& path, MeshFormat format)
{
    std::ifstream in(path);
    if (!in) {
        fail(ErrorKind::Mesh, "cannot open mesh file '" + path + "'");
    }
    return format == MeshFormat::Obj ? read_obj(in, path) : read_msh2(in, path);
}

inline TriangleMesh load_mesh(const std::string& path)
{
    return load_mesh(path, mesh_format_from_path(path));
}

inline void write_obj(const TriangleMesh& mesh, std::ostream& out)
{
    out.precision(17);
    for (const auto& v : mesh.vertices()) {
        out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
    }
    for (const auto& t : mesh.triangles()) {
        out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
    }
}

// ---------------------------------------------------------------------------
// Gram matrices

/// [G]_mn = <f_m, f_n>. The integrand is quadratic on each triangle, so the
/// edge-midpoint rule is exact.
inline SparseMatrixd gram_rwg(const TriangleMesh& mesh, const BasisTopology& topo)
{
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(9 * mesh.num_triangles());
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        const double area = mesh.area(t);
        const std::array<Vec3, 3> mid = {0.5 * (mesh.vertex(t, 0) + mesh.vertex(t, 1)),
            0.5 * (mesh.vertex(t, 1) + mesh.vertex(t, 2)),
            0.5 * (mesh.vertex(t, 2) + mesh.vertex(t, 0))};
        const auto& local = topo.triangle_edges[t];
        for (const auto& a : local) {
            for (const auto& b : local) {
                const Vec3& pa = mesh.vertex(t, a.free_local);
                const Vec3& pb = mesh.vertex(t, b.free_local);
                double sum = 0.0;
                for (const auto& q : mid) {
                    sum += (q - pa).dot(q - pb);
                }
                const double value = a.sign * b.sign * sum * (area / 3.0) / (4.0 * area * area);
                trips.emplace_back(a.edge, b.edge, value);
            }
        }
    }
    SparseMatrixd g(topo.num_edges(), topo.num_edges());
    g.setFromTriplets(trips.begin(), trips.end());
    return g;
}

/// Diagonal of G_p: <p_m, p_m> = 1/A_m.
inline VectorXd gram_patch(const TriangleMesh& mesh)
{
    VectorXd d(mesh.num_triangles());
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        d[t] = 1.0 / mesh.area(t);
    }
    return d;
}

/// Linear-element mass matrix of the pyramid (hat) functions.
inline SparseMatrixd gram_pyramid(const TriangleMesh& mesh)
{
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(9 * mesh.num_triangles());
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        const double area = mesh.area(t);
        const auto& tri = mesh.triangles()[t];
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
                trips.emplace_back(tri[i], tri[j], area * (i == j ? 2.0 : 1.0) / 12.0);
            }
        }
    }
    SparseMatrixd g(mesh.num_vertices(), mesh.num_vertices());
    g.setFromTriplets(trips.begin(), trips.end());
    return g;
}

} // namespace qhf

#endif // QHF_MESH_HPP
