#ifndef QHF_MESH_GEN_HPP
#define QHF_MESH_GEN_HPP

// Procedural closed meshes used by tests, configs and sweeps.

#include "qhf/mesh.hpp"

#include <cmath>
#include <numbers>

namespace qhf {

inline TriangleMesh tetrahedron_mesh(double edge = 1.0)
{
    const double s = edge / std::sqrt(8.0);
    std::vector<Vec3> v = {{s, s, s}, {s, -s, -s}, {-s, s, -s}, {-s, -s, s}};
    std::vector<Triangle> t = {{0, 1, 2}, {0, 3, 1}, {0, 2, 3}, {1, 3, 2}};
    return make_mesh(std::move(v), std::move(t), "builtin:tetrahedron");
}

namespace detail {

inline void icosahedron_raw(std::vector<Vec3>& v, std::vector<Triangle>& t)
{
    const double p = (1.0 + std::sqrt(5.0)) / 2.0;
    v = {{-1, p, 0}, {1, p, 0}, {-1, -p, 0}, {1, -p, 0}, {0, -1, p}, {0, 1, p}, {0, -1, -p},
        {0, 1, -p}, {p, 0, -1}, {p, 0, 1}, {-p, 0, -1}, {-p, 0, 1}};
    for (auto& x : v) {
        x.normalize();
    }
    t = {{0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
        {11, 10, 2}, {10, 7, 6}, {7, 1, 8}, {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8},
        {3, 8, 9}, {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1}};
}

/// Unit-sphere icosphere vertices after `levels` midpoint subdivisions.
inline void icosphere_raw(int levels, std::vector<Vec3>& v, std::vector<Triangle>& t)
{
    icosahedron_raw(v, t);
    for (int l = 0; l < levels; ++l) {
        std::map<std::pair<int, int>, int> midpoints;
        auto midpoint = [&](int a, int b) {
            const auto key = std::minmax(a, b);
            const auto it = midpoints.find(key);
            if (it != midpoints.end()) {
                return it->second;
            }
            v.push_back((v[a] + v[b]).normalized());
            const int id = static_cast<int>(v.size()) - 1;
            midpoints.emplace(key, id);
            return id;
        };
        std::vector<Triangle> next;
        next.reserve(4 * t.size());
        for (const auto& tri : t) {
            const int ab = midpoint(tri[0], tri[1]);
            const int bc = midpoint(tri[1], tri[2]);
            const int ca = midpoint(tri[2], tri[0]);
            next.push_back({tri[0], ab, ca});
            next.push_back({tri[1], bc, ab});
            next.push_back({tri[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        t = std::move(next);
    }
}

inline double max_pairwise_distance(const std::vector<Vec3>& v)
{
    double best = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        for (std::size_t j = i + 1; j < v.size(); ++j) {
            best = std::max(best, (v[i] - v[j]).squaredNorm());
        }
    }
    return std::sqrt(best);
}

} // namespace detail

inline TriangleMesh icosahedron_mesh(double radius = 1.0)
{
    std::vector<Vec3> v;
    std::vector<Triangle> t;
    detail::icosahedron_raw(v, t);
    for (auto& x : v) {
        x *= radius;
    }
    return make_mesh(std::move(v), std::move(t), "builtin:icosahedron");
}

/// Subdivided icosahedron: 30·4^levels edges.
inline TriangleMesh icosphere_mesh(int levels, double radius = 1.0)
{
    if (levels < 0) {
        fail(ErrorKind::Config, "icosphere level must be non-negative");
    }
    std::vector<Vec3> v;
    std::vector<Triangle> t;
    detail::icosphere_raw(levels, v, t);
    for (auto& x : v) {
        x *= radius;
    }
    return make_mesh(std::move(v), std::move(t), "builtin:icosphere:" + std::to_string(levels));
}

/// Smoothly deformed sphere, rescaled so that its largest vertex-to-vertex
/// distance equals `max_diameter`.
inline TriangleMesh deformed_sphere_mesh(int levels, double max_diameter = 7.17)
{
    std::vector<Vec3> v;
    std::vector<Triangle> t;
    detail::icosphere_raw(levels, v, t);
    for (auto& x : v) {
        const double r = 1.0 + 0.2 * (1.5 * x.z() * x.z() - 0.5) + 0.15 * x.x() * x.y()
            + 0.1 * x.x() * x.x() * x.x();
        x *= r;
    }
    const double scale = max_diameter / detail::max_pairwise_distance(v);
    for (auto& x : v) {
        x *= scale;
    }
    return make_mesh(
        std::move(v), std::move(t), "builtin:deformed_sphere:" + std::to_string(levels));
}

/// NASA almond, sphere-mapped so the mesh inherits icosphere connectivity.
/// Rescaled so the diagonal of its axis-aligned bounding box is `bbox_diameter`.
inline TriangleMesh almond_mesh(int levels, double bbox_diameter = 1.09)
{
    std::vector<Vec3> v;
    std::vector<Triangle> t;
    detail::icosphere_raw(levels, v, t);
    for (auto& x : v) {
        const double psi = std::atan2(x.z(), x.y());
        const double s = std::sqrt(std::max(0.0, 1.0 - x.x() * x.x()));
        double tt = 0.0;
        double ry = 0.0;
        double rz = 0.0;
        if (x.x() < 0.0) {
            tt = 0.416667 * x.x();
            ry = 0.193333 * s;
            rz = 0.064444 * s;
        } else {
            tt = 0.583333 * x.x();
            const double prof = std::sqrt(1.0 - (tt / 2.08335) * (tt / 2.08335)) - 0.96;
            ry = 4.83345 * prof;
            rz = 1.61115 * prof;
        }
        x = Vec3(tt, ry * std::cos(psi), rz * std::sin(psi));
    }
    Vec3 lo = v[0];
    Vec3 hi = v[0];
    for (const auto& x : v) {
        lo = lo.cwiseMin(x);
        hi = hi.cwiseMax(x);
    }
    const double scale = bbox_diameter / (hi - lo).norm();
    for (auto& x : v) {
        x *= scale;
    }
    return make_mesh(std::move(v), std::move(t), "builtin:almond:" + std::to_string(levels));
}

/// Structured torus: nu cells around the major circle, nv around the tube,
/// each quad split into two triangles.
inline TriangleMesh torus_mesh(int nu, int nv, double major = 1.0, double minor = 0.1)
{
    if (nu < 3 || nv < 3) {
        fail(ErrorKind::Config, "torus grid needs at least 3x3 cells");
    }
    std::vector<Vec3> v;
    v.reserve(static_cast<std::size_t>(nu) * nv);
    const double two_pi = 2.0 * std::numbers::pi;
    for (int i = 0; i < nu; ++i) {
        const double u = two_pi * i / nu;
        for (int j = 0; j < nv; ++j) {
            const double w = two_pi * j / nv;
            const double rho = major + minor * std::cos(w);
            v.emplace_back(rho * std::cos(u), rho * std::sin(u), minor * std::sin(w));
        }
    }
    auto id = [&](int i, int j) { return ((i + nu) % nu) * nv + (j + nv) % nv; };
    std::vector<Triangle> t;
    t.reserve(2 * static_cast<std::size_t>(nu) * nv);
    for (int i = 0; i < nu; ++i) {
        for (int j = 0; j < nv; ++j) {
            t.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
            t.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
        }
    }
    return make_mesh(std::move(v), std::move(t),
        "builtin:torus:" + std::to_string(nu) + "x" + std::to_string(nv));
}

/// Resolves a mesh reference: a file path, or "builtin:<name>[:<arg>]" with
/// name in {tetrahedron, icosahedron, icosphere, deformed_sphere, almond, torus}.
inline TriangleMesh mesh_from_spec(const std::string& spec)
{
    const std::string prefix = "builtin:";
    if (spec.rfind(prefix, 0) != 0) {
        return load_mesh(spec);
    }
    const std::string body = spec.substr(prefix.size());
    const auto colon = body.find(':');
    const std::string name = body.substr(0, colon);
    const std::string arg = colon == std::string::npos ? "" : body.substr(colon + 1);
    auto level = [&]() {
        try {
            return arg.empty() ? 0 : std::stoi(arg);
        } catch (const std::exception&) {
            fail(ErrorKind::Config, "bad builtin mesh argument in '" + spec + "'");
        }
    };
    if (name == "tetrahedron") {
        return tetrahedron_mesh();
    }
    if (name == "icosahedron") {
        return icosahedron_mesh();
    }
    if (name == "icosphere") {
        return icosphere_mesh(level());
    }
    if (name == "deformed_sphere") {
        return deformed_sphere_mesh(level());
    }
    if (name == "almond") {
        return almond_mesh(level());
    }
    if (name == "torus") {
        int nu = 0;
        int nv = 0;
        if (std::sscanf(arg.c_str(), "%dx%d", &nu, &nv) != 2) {
            fail(ErrorKind::Config, "torus spec must look like builtin:torus:40x4");
        }
        return torus_mesh(nu, nv);
    }
    fail(ErrorKind::Config, "unknown builtin mesh '" + name + "'");
}

} // namespace qhf

#endif // QHF_MESH_GEN_HPP
