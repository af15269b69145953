#include "oracles.hpp"

#include "qhf/mesh.hpp"
#include "qhf/mesh_gen.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace qhf;

namespace {

std::string data(const std::string& name) { return std::string(QHF_DATA_DIR) + "/meshes/" + name; }

double signed_volume(const TriangleMesh& mesh)
{
    double vol = 0.0;
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        vol += mesh.vertex(t, 0).dot(mesh.vertex(t, 1).cross(mesh.vertex(t, 2))) / 6.0;
    }
    return vol;
}

void expect_consistent(const TriangleMesh& mesh)
{
    const BasisTopology topo = build_basis_topology(mesh);
    for (const auto& e : topo.edges) {
        EXPECT_TRUE(detail::traverses(mesh.triangles()[e.c_plus], e.tail, e.head));
        EXPECT_TRUE(detail::traverses(mesh.triangles()[e.c_minus], e.head, e.tail));
    }
}

} // namespace

TEST(MeshLoad, TetrahedronCounts)
{
    const TriangleMesh mesh = load_mesh(data("tetrahedron.obj"));
    const MeshStats s = compute_stats(mesh);
    EXPECT_EQ(s.num_edges, 6);
    EXPECT_EQ(s.num_triangles, 4);
    EXPECT_EQ(s.num_vertices, 4);
    EXPECT_EQ(s.genus, 0);
    EXPECT_EQ(s.components, 1);
    EXPECT_NEAR(s.h_avg, std::sqrt(8.0), 1e-14);
}

TEST(MeshLoad, IcosahedronCounts)
{
    const MeshStats s = compute_stats(load_mesh(data("icosahedron.obj")));
    EXPECT_EQ(s.num_edges, 30);
    EXPECT_EQ(s.num_triangles, 20);
    EXPECT_EQ(s.num_vertices, 12);
    EXPECT_EQ(s.genus, 0);
}

TEST(MeshLoad, GmshOctahedron)
{
    const TriangleMesh mesh = load_mesh(data("octahedron.msh"));
    const MeshStats s = compute_stats(mesh);
    EXPECT_EQ(s.num_edges, 12);
    EXPECT_EQ(s.num_triangles, 8);
    EXPECT_EQ(s.num_vertices, 6);
    EXPECT_NEAR(s.diameter, 2.0, 1e-14);
}

TEST(MeshLoad, OpenSurfaceRejected)
{
    try {
        load_mesh(data("open_patch.obj"));
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Mesh);
        EXPECT_NE(std::string(e.what()).find("open surface"), std::string::npos);
    }
}

TEST(MeshLoad, MissingFileAndBadFormat)
{
    EXPECT_THROW(load_mesh(data("does_not_exist.obj")), Error);
    EXPECT_THROW(load_mesh(data("tetrahedron.stl")), Error);
}

TEST(MeshLoad, NonManifoldEdgeRejected)
{
    // Three triangles hinged on the edge (0,1).
    std::istringstream in("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 -1 0\nv 0 0 1\n"
                          "f 1 2 3\nf 2 1 4\nf 1 2 5\n");
    try {
        read_obj(in, "inline");
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("non-manifold"), std::string::npos);
    }
}

TEST(MeshLoad, QuadFaceRejected)
{
    std::istringstream in("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n");
    EXPECT_THROW(read_obj(in, "inline"), Error);
}

TEST(MeshLoad, DegenerateTriangleRejected)
{
    std::vector<Vec3> v = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {0, 1, 0}};
    std::vector<Triangle> t = {{0, 1, 2}, {0, 2, 3}, {0, 3, 1}, {1, 3, 2}};
    EXPECT_THROW(make_mesh(v, t, "inline"), Error);
}

TEST(MeshLoad, NonOrientableRejected)
{
    // Grid torus whose last seam is glued with a reflection (Klein bottle).
    const int nu = 6;
    const int nv = 4;
    std::vector<Vec3> v;
    for (int i = 0; i < nu; ++i) {
        for (int j = 0; j < nv; ++j) {
            const double u = 2.0 * M_PI * i / nu;
            const double w = 2.0 * M_PI * j / nv;
            v.emplace_back((2 + std::cos(w)) * std::cos(u), (2 + std::cos(w)) * std::sin(u), std::sin(w));
        }
    }
    auto id = [&](int i, int j) {
        if (i == nu) {
            // Twisted gluing: j -> -j.
            return ((nv - j) % nv);
        }
        return i * nv + (j % nv);
    };
    std::vector<Triangle> t;
    for (int i = 0; i < nu; ++i) {
        for (int j = 0; j < nv; ++j) {
            t.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
            t.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
        }
    }
    EXPECT_THROW(make_mesh(v, t, "klein"), Error);
}

TEST(MeshOrientation, RepairsFlippedFacesAndDropsUnusedVertices)
{
    const TriangleMesh mesh = load_mesh(data("tetrahedron_flipped.obj"));
    EXPECT_EQ(mesh.num_vertices(), 4);
    EXPECT_GT(signed_volume(mesh), 0.0);
    expect_consistent(mesh);
}

TEST(MeshOrientation, OutwardAfterGlobalFlip)
{
    std::vector<Vec3> v;
    std::vector<Triangle> t;
    const TriangleMesh ref = icosphere_mesh(1);
    v = ref.vertices();
    t = ref.triangles();
    for (auto& tri : t) {
        std::swap(tri[1], tri[2]);
    }
    const TriangleMesh mesh = make_mesh(v, t, "flipped");
    EXPECT_GT(signed_volume(mesh), 0.0);
    for (int k = 0; k < mesh.num_triangles(); ++k) {
        EXPECT_GT(mesh.normal(k).dot(mesh.centroid(k)), 0.0);
    }
}

TEST(MeshStats, TorusGenusOne)
{
    const MeshStats s = compute_stats(torus_mesh(8, 8, 2.0, 1.0));
    EXPECT_EQ(s.genus, 1);
    EXPECT_EQ(s.num_vertices - s.num_edges + s.num_triangles, 0);
}

TEST(MeshStats, IcosphereOnceSubdivided)
{
    const MeshStats s = compute_stats(icosphere_mesh(1));
    EXPECT_EQ(s.num_edges, 120);
    EXPECT_EQ(s.num_triangles, 80);
    EXPECT_EQ(s.num_vertices, 42);
    EXPECT_EQ(s.genus, 0);
}

TEST(MeshStats, RefinementKeepsGenus)
{
    for (int level = 0; level < 3; ++level) {
        EXPECT_EQ(compute_stats(icosphere_mesh(level)).genus, 0);
        EXPECT_EQ(compute_stats(almond_mesh(level)).genus, 0);
        EXPECT_EQ(compute_stats(deformed_sphere_mesh(level)).genus, 0);
    }
    EXPECT_EQ(compute_stats(torus_mesh(40, 4)).genus, 1);
    EXPECT_EQ(compute_stats(torus_mesh(80, 8)).genus, 1);
}

TEST(MeshGen, GeometryTargets)
{
    const TriangleMesh ds = deformed_sphere_mesh(2);
    EXPECT_NEAR(detail::max_pairwise_distance(ds.vertices()), 7.17, 1e-12);

    const TriangleMesh al = almond_mesh(2);
    Vec3 lo = al.vertices()[0];
    Vec3 hi = lo;
    for (const auto& p : al.vertices()) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    EXPECT_NEAR((hi - lo).norm(), 1.09, 1e-12);

    const TriangleMesh tor = torus_mesh(40, 4);
    double rmin = 1e9;
    double rmax = 0.0;
    for (const auto& p : tor.vertices()) {
        const double r = std::hypot(p.x(), p.y());
        rmin = std::min(rmin, r);
        rmax = std::max(rmax, r);
    }
    EXPECT_NEAR(rmin, 0.9, 1e-12);
    EXPECT_NEAR(rmax, 1.1, 1e-12);
    EXPECT_EQ(compute_stats(tor).num_edges, 480);
    EXPECT_EQ(compute_stats(icosphere_mesh(2)).num_edges, 480);
}

TEST(MeshGen, SpecStrings)
{
    EXPECT_EQ(mesh_from_spec("builtin:icosphere:1").num_triangles(), 80);
    EXPECT_EQ(mesh_from_spec("builtin:torus:8x4").num_triangles(), 64);
    EXPECT_EQ(mesh_from_spec(data("tetrahedron.obj")).num_triangles(), 4);
    EXPECT_THROW(mesh_from_spec("builtin:cube"), Error);
    EXPECT_THROW(mesh_from_spec("builtin:torus:8"), Error);
}

TEST(MeshIo, ObjRoundTrip)
{
    const TriangleMesh a = icosphere_mesh(1);
    std::stringstream ss;
    write_obj(a, ss);
    const TriangleMesh b = read_obj(ss, "roundtrip");
    ASSERT_EQ(a.num_vertices(), b.num_vertices());
    for (int i = 0; i < a.num_vertices(); ++i) {
        EXPECT_EQ(a.vertices()[i], b.vertices()[i]);
    }
    EXPECT_EQ(a.triangles(), b.triangles());
}

TEST(BasisTopology, TetrahedronRecords)
{
    const TriangleMesh mesh = tetrahedron_mesh();
    const BasisTopology topo = build_basis_topology(mesh);
    EXPECT_EQ(topo.num_edges(), 6);
    std::vector<int> count(mesh.num_triangles(), 0);
    for (const auto& e : topo.edges) {
        ++count[e.c_plus];
        ++count[e.c_minus];
    }
    for (int c : count) {
        EXPECT_EQ(c, 3);
    }
}

TEST(BasisTopology, FreeVerticesOppositeEdge)
{
    for (const TriangleMesh& mesh : {icosphere_mesh(1), torus_mesh(8, 5)}) {
        const BasisTopology topo = build_basis_topology(mesh);
        std::vector<int> count(mesh.num_triangles(), 0);
        for (const auto& e : topo.edges) {
            ++count[e.c_plus];
            ++count[e.c_minus];
            EXPECT_NE(e.v_plus, e.tail);
            EXPECT_NE(e.v_plus, e.head);
            EXPECT_NE(e.v_minus, e.tail);
            EXPECT_NE(e.v_minus, e.head);
            EXPECT_GT(e.area_plus, 0.0);
            EXPECT_GT(e.area_minus, 0.0);
            EXPECT_LT(e.tail, e.head);
        }
        for (int c : count) {
            EXPECT_EQ(c, 3);
        }
        expect_consistent(mesh);
    }
    EXPECT_EQ(build_basis_topology(icosphere_mesh(1)).num_edges(), 120);
}

TEST(Gram, RwgSymmetricPositiveDefinite)
{
    const TriangleMesh mesh = almond_mesh(1);
    const BasisTopology topo = build_basis_topology(mesh);
    const MatrixXd g = MatrixXd(gram_rwg(mesh, topo));
    EXPECT_LE((g - g.transpose()).norm(), 1e-15 * g.norm());
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(g);
    EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
}

TEST(Gram, RwgEntriesMatchQuadratureOracle)
{
    // Regular tetrahedron with unit edges: every RWG lives on two unit equilateral triangles.
    const TriangleMesh mesh = tetrahedron_mesh(1.0);
    const BasisTopology topo = build_basis_topology(mesh);
    const MatrixXd g = MatrixXd(gram_rwg(mesh, topo));
    auto rwg = [&](int m, int t, const Vec3& r) -> Vec3 {
        const auto& e = topo.edges[m];
        if (t == e.c_plus) {
            return (r - mesh.vertices()[e.v_plus]) / (2.0 * e.area_plus);
        }
        if (t == e.c_minus) {
            return -(r - mesh.vertices()[e.v_minus]) / (2.0 * e.area_minus);
        }
        return Vec3::Zero();
    };
    for (int m = 0; m < topo.num_edges(); ++m) {
        for (int n = 0; n < topo.num_edges(); ++n) {
            double ref = 0.0;
            for (int t = 0; t < mesh.num_triangles(); ++t) {
                ref += oracle::integrate_triangle<20>(mesh.vertex(t, 0), mesh.vertex(t, 1), mesh.vertex(t, 2),
                    [&](const Vec3& r) { return rwg(m, t, r).dot(rwg(n, t, r)); });
            }
            EXPECT_NEAR(g(m, n), ref, 1e-12 * std::abs(g(0, 0)));
        }
    }
}

TEST(Gram, PatchAndPyramid)
{
    // Tetrahedron scaled so every face has area 2.
    const double edge = std::sqrt(8.0 / std::sqrt(3.0));
    const TriangleMesh mesh = tetrahedron_mesh(edge);
    const VectorXd gp = gram_patch(mesh);
    for (Eigen::Index i = 0; i < gp.size(); ++i) {
        EXPECT_NEAR(gp[i], 0.5, 1e-14);
    }

    const TriangleMesh sphere = almond_mesh(1);
    const MatrixXd gl = MatrixXd(gram_pyramid(sphere));
    VectorXd patch_area = VectorXd::Zero(sphere.num_vertices());
    for (int t = 0; t < sphere.num_triangles(); ++t) {
        for (int v : sphere.triangles()[t]) {
            patch_area[v] += sphere.area(t);
        }
    }
    const VectorXd rows = gl.rowwise().sum();
    for (Eigen::Index i = 0; i < rows.size(); ++i) {
        EXPECT_NEAR(rows[i], patch_area[i] / 3.0, 1e-15);
    }
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(gl);
    EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
}
