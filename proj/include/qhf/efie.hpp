#ifndef QHF_EFIE_HPP
#define QHF_EFIE_HPP

// Dense EFIE blocks on RWG functions:
//   [Ts]_mn = ik ∫∫ f_m·f_n G,   [Th]_mn = (1/ik) ∫∫ (∇·f_m)(∇'·f_n) G,
//   [R]_ts  = ⟨p_t, S p_s⟩,      Th = (1/ik) Σ R Σᵀ,
//   [v]_m   = −∫ f_m·Eⁱ,         G = e^{ikR}/(4πR).

#include "qhf/dense.hpp"
#include "qhf/error.hpp"
#include "qhf/mesh.hpp"
#include "qhf/qhd.hpp"
#include "qhf/quadrature.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

namespace qhf {

inline constexpr double kEpsilon0 = 8.8541878128e-12;
inline constexpr double kMu0 = 1.25663706212e-6;

struct PlaneWave {
    Vec3 direction = Vec3(0, 0, 1);
    Vec3 polarization = Vec3(1, 0, 0);
    double amplitude = 1.0;
};

struct WaveContext {
    double frequency = 1e6;
    double epsilon = kEpsilon0;
    double mu = kMu0;
    PlaneWave incident;

    double wavenumber() const { return 2.0 * std::numbers::pi * frequency * std::sqrt(mu * epsilon); }

    void validate() const
    {
        if (!(frequency > 0.0) || !(epsilon > 0.0) || !(mu > 0.0)) {
            fail(ErrorKind::Config, "frequency and medium constants must be positive");
        }
        const double dn = incident.direction.norm();
        const double pn = incident.polarization.norm();
        if (!(dn > 0.0) || !(pn > 0.0)) {
            fail(ErrorKind::Config, "plane-wave direction and polarization must be nonzero");
        }
        if (std::abs(incident.direction.dot(incident.polarization)) > 1e-12 * dn * pn) {
            fail(ErrorKind::Config, "plane-wave polarization must be orthogonal to the propagation direction");
        }
    }
};

struct QuadratureConfig {
    int edge_order = 8;        // graded outer rule for self/edge-adjacent pairs
    int vertex_order = 6;      // graded outer rule for vertex-adjacent pairs
    int near_levels = 1;       // outer subdivision for other near pairs
    double near_factor = 2.0;  // near if centroid distance < factor · max diameter
    int rhs_levels = 1;
};

using Tri3 = std::array<Vec3, 3>;

/// Kernel moments of one triangle pair (t outer, s inner), with positions
/// taken relative to the centroids c_t, c_s:
///   i0 = ∫∫ G,  jr = ∫∫ (r − c_t) G,  jrp = ∫∫ (r' − c_s) G,  jrr = ∫∫ (r − c_t)·(r' − c_s) G.
struct PairMoments {
    cplx i0{};
    Eigen::Vector3cd jr = Eigen::Vector3cd::Zero();
    Eigen::Vector3cd jrp = Eigen::Vector3cd::Zero();
    cplx jrr{};

    PairMoments mirrored() const
    {
        PairMoments m = *this;
        std::swap(m.jr, m.jrp);
        return m;
    }

    /// ∫∫ (r − p_a)·(r' − p_b) G for free vertices p_a on t and p_b on s.
    cplx vertex_moment(const Vec3& pa_rel, const Vec3& pb_rel) const
    {
        return jrr - pb_rel.cast<cplx>().dot(jr) - pa_rel.cast<cplx>().dot(jrp) + pa_rel.dot(pb_rel) * i0;
    }
};

namespace detail {

inline Vec3 at(const Tri3& t, const std::array<double, 3>& b) { return b[0] * t[0] + b[1] * t[1] + b[2] * t[2]; }

inline double tri_area(const Tri3& t) { return 0.5 * (t[1] - t[0]).cross(t[2] - t[0]).norm(); }

inline double tri_diameter(const Tri3& t)
{
    return std::max({(t[1] - t[0]).norm(), (t[2] - t[1]).norm(), (t[0] - t[2]).norm()});
}

/// e^{ikR}/(4πR) without the static part: (e^{ikR} − 1)/(4πR), finite at R = 0.
inline cplx smooth_kernel(double r, double k)
{
    const double x = k * r;
    if (x < 1e-3) {
        const cplx ik(0.0, k);
        // Series: ik (1 + ikR/2 + (ikR)²/6 + (ikR)³/24)
        const cplx z(0.0, x);
        return ik * (1.0 + z / 2.0 + z * z / 6.0 + z * z * z / 24.0) / (4.0 * std::numbers::pi);
    }
    return (std::exp(cplx(0.0, x)) - 1.0) / (4.0 * std::numbers::pi * r);
}

inline cplx full_kernel(double r, double k) { return std::exp(cplx(0.0, k * r)) / (4.0 * std::numbers::pi * r); }

} // namespace detail

/// Regular pair: the same rule on both triangles.
inline PairMoments pair_moments_regular(const Tri3& t, const Tri3& s, double k, const TriangleRule& rule)
{
    const Vec3 ct = (t[0] + t[1] + t[2]) / 3.0;
    const Vec3 cs = (s[0] + s[1] + s[2]) / 3.0;
    const double at = detail::tri_area(t);
    const double as = detail::tri_area(s);
    const std::size_t nq = rule.size();
    std::vector<Vec3> ps(nq);
    for (std::size_t j = 0; j < nq; ++j) {
        ps[j] = detail::at(s, rule.points[j]);
    }
    PairMoments m;
    for (std::size_t i = 0; i < nq; ++i) {
        const Vec3 r = detail::at(t, rule.points[i]);
        const Vec3 dr = r - ct;
        cplx k0{};
        Eigen::Vector3cd k1 = Eigen::Vector3cd::Zero();
        for (std::size_t j = 0; j < nq; ++j) {
            const cplx g = rule.weights[j] * detail::full_kernel((r - ps[j]).norm(), k);
            k0 += g;
            k1 += g * (ps[j] - cs).cast<cplx>();
        }
        const double w = rule.weights[i];
        m.i0 += w * k0;
        m.jr += (w * k0) * dr.cast<cplx>();
        m.jrp += w * k1;
        m.jrr += w * dr.cast<cplx>().dot(k1);
    }
    const double scale = at * as;
    m.i0 *= scale;
    m.jr *= scale;
    m.jrp *= scale;
    m.jrr *= scale;
    return m;
}

/// Near or singular pair: analytic inner static integrals plus the smooth
/// remainder on the inner rule, outer rule `outer` on t.
inline PairMoments pair_moments_singular(
    const Tri3& t, const Tri3& s, double k, const TriangleRule& outer, const TriangleRule& inner)
{
    const Vec3 ct = (t[0] + t[1] + t[2]) / 3.0;
    const Vec3 cs = (s[0] + s[1] + s[2]) / 3.0;
    const double at = detail::tri_area(t);
    const double as = detail::tri_area(s);
    const double inv4pi = 1.0 / (4.0 * std::numbers::pi);
    std::vector<Vec3> ps(inner.size());
    for (std::size_t j = 0; j < inner.size(); ++j) {
        ps[j] = detail::at(s, inner.points[j]);
    }
    PairMoments m;
    for (std::size_t i = 0; i < outer.size(); ++i) {
        const Vec3 r = detail::at(t, outer.points[i]);
        const Vec3 dr = r - ct;
        const StaticPotential sp = static_potential(r, s);
        const Vec3 n = (s[1] - s[0]).cross(s[2] - s[0]).normalized();
        const Vec3 rho = r - n.dot(r - s[0]) * n;
        // ∫ (r' − c_s)/R = ivec + (ρ − c_s) i0
        cplx k0 = inv4pi * sp.i0;
        Eigen::Vector3cd k1 = (inv4pi * (sp.ivec + (rho - cs) * sp.i0)).cast<cplx>();
        for (std::size_t j = 0; j < inner.size(); ++j) {
            const cplx g = (as * inner.weights[j]) * detail::smooth_kernel((r - ps[j]).norm(), k);
            k0 += g;
            k1 += g * (ps[j] - cs).cast<cplx>();
        }
        const double w = at * outer.weights[i];
        m.i0 += w * k0;
        m.jr += (w * k0) * dr.cast<cplx>();
        m.jrp += w * k1;
        m.jrr += w * dr.cast<cplx>().dot(k1);
    }
    return m;
}

/// Dense operator blocks and Gram matrices for one mesh and frequency.
struct OperatorSet {
    double k = 0.0;
    MatrixXc Ts;
    MatrixXc Th;
    MatrixXc R;
    SparseMatrixd G;
    VectorXd G_p;
    SparseMatrixd G_lambda;
    VectorXc v;
    bool normalized = false;

    MatrixXc T() const { return Ts + Th; }
    /// The constant c in Th = c Σ R Σᵀ.
    cplx th_constant() const { return 1.0 / cplx(0.0, k); }
};

struct AssemblyOptions {
    QuadratureConfig quadrature;
    int max_edges = 6000;
    bool assemble_ts = true;
    bool assemble_th = true;
};

namespace detail {

inline Tri3 triangle(const TriangleMesh& mesh, int t) { return {mesh.vertex(t, 0), mesh.vertex(t, 1), mesh.vertex(t, 2)}; }

inline bool share_vertex(const Triangle& a, const Triangle& b, int* shared = nullptr)
{
    int count = 0;
    for (int i : a) {
        for (int j : b) {
            count += i == j;
        }
    }
    if (shared) {
        *shared = count;
    }
    return count > 0;
}

/// Moments for every pair (t, s) with s ≥ t, row by row. `visit(t, s, m)`
/// receives the moments with t as the outer triangle; visiting order is fixed.
template <typename Visit>
void for_each_pair(const TriangleMesh& mesh, double k, const QuadratureConfig& q, Visit&& visit)
{
    const int nt = mesh.num_triangles();
    const TriangleRule& base = gauss7();
    const TriangleRule edge_rule = edge_graded(q.edge_order);
    const TriangleRule vertex_rule = edge_graded(q.vertex_order);
    const TriangleRule near_rule = subdivided(base, q.near_levels);
    std::vector<Tri3> tris(nt);
    std::vector<Vec3> cent(nt);
    std::vector<double> diam(nt);
    for (int t = 0; t < nt; ++t) {
        tris[t] = triangle(mesh, t);
        cent[t] = mesh.centroid(t);
        diam[t] = tri_diameter(tris[t]);
    }
    std::vector<PairMoments> row(nt);
    for (int t = 0; t < nt; ++t) {
#pragma omp parallel for schedule(dynamic, 16)
        for (int s = t; s < nt; ++s) {
            int shared = 0;
            share_vertex(mesh.triangles()[t], mesh.triangles()[s], &shared);
            const double dist = (cent[t] - cent[s]).norm();
            const bool near = shared > 0 || dist < q.near_factor * std::max(diam[t], diam[s]);
            if (!near) {
                row[s] = pair_moments_regular(tris[t], tris[s], k, base);
                continue;
            }
            const TriangleRule& outer = shared >= 2 ? edge_rule : shared == 1 ? vertex_rule : near_rule;
            // Average both outer/inner roles so the result does not depend on numbering.
            const PairMoments a = pair_moments_singular(tris[t], tris[s], k, outer, base);
            const PairMoments b = pair_moments_singular(tris[s], tris[t], k, outer, base).mirrored();
            PairMoments& m = row[s];
            m.i0 = 0.5 * (a.i0 + b.i0);
            m.jr = 0.5 * (a.jr + b.jr);
            m.jrp = 0.5 * (a.jrp + b.jrp);
            m.jrr = 0.5 * (a.jrr + b.jrr);
        }
        for (int s = t; s < nt; ++s) {
            visit(t, s, row[s]);
        }
    }
}

} // namespace detail

/// [v]_m = −∫ f_m · Eⁱ with Eⁱ = E₀ ê e^{ik d̂·r}.
inline VectorXc assemble_rhs(
    const TriangleMesh& mesh, const BasisTopology& topo, const WaveContext& ctx, const QuadratureConfig& q = {})
{
    ctx.validate();
    const double k = ctx.wavenumber();
    const Vec3 d = ctx.incident.direction.normalized();
    const Vec3 e = ctx.incident.polarization.normalized() * ctx.incident.amplitude;
    const TriangleRule rule = subdivided(gauss7(), q.rhs_levels);
    VectorXc v = VectorXc::Zero(topo.num_edges());
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        const Tri3 tri = detail::triangle(mesh, t);
        const double area = mesh.area(t);
        for (const auto& a : topo.triangle_edges[t]) {
            const Vec3& pa = mesh.vertex(t, a.free_local);
            cplx sum{};
            for (std::size_t i = 0; i < rule.size(); ++i) {
                const Vec3 r = detail::at(tri, rule.points[i]);
                sum += rule.weights[i] * (r - pa).dot(e) * std::exp(cplx(0.0, k * d.dot(r)));
            }
            // f = ±(r − p)/(2A) and ∫ = A Σ w: the area cancels up to the 1/2.
            v[a.edge] -= 0.5 * a.sign * sum;
        }
    }
    return v;
}

/// Assembles Ts, Th and R (direct path) together with the Gram matrices.
inline OperatorSet assemble_operators(
    const TriangleMesh& mesh, const BasisTopology& topo, const WaveContext& ctx, const AssemblyOptions& opt = {})
{
    ctx.validate();
    const int n = topo.num_edges();
    if (n > opt.max_edges) {
        fail(ErrorKind::Config, "mesh has " + std::to_string(n) + " edges, above the dense assembly cap of "
                + std::to_string(opt.max_edges));
    }
    const int nt = mesh.num_triangles();
    OperatorSet ops;
    ops.k = ctx.wavenumber();
    const cplx ik(0.0, ops.k);
    ops.R = MatrixXc::Zero(nt, nt);
    if (opt.assemble_ts) {
        ops.Ts = MatrixXc::Zero(n, n);
    }
    if (opt.assemble_th) {
        ops.Th = MatrixXc::Zero(n, n);
    }
    std::vector<Vec3> cent(nt);
    for (int t = 0; t < nt; ++t) {
        cent[t] = mesh.centroid(t);
    }
    auto scatter = [&](int t, int s, const PairMoments& m) {
        const double at = mesh.area(t);
        const double as = mesh.area(s);
        const cplx r = m.i0 / (at * as);
        ops.R(t, s) = r;
        ops.R(s, t) = r;
        const auto& lt = topo.triangle_edges[t];
        const auto& ls = topo.triangle_edges[s];
        for (const auto& a : lt) {
            const Vec3 pa = mesh.vertex(t, a.free_local) - cent[t];
            for (const auto& b : ls) {
                const double sign = a.sign * b.sign;
                if (opt.assemble_ts) {
                    const Vec3 pb = mesh.vertex(s, b.free_local) - cent[s];
                    const cplx val = ik * sign * m.vertex_moment(pa, pb) / (4.0 * at * as);
                    ops.Ts(a.edge, b.edge) += val;
                    if (s != t) {
                        ops.Ts(b.edge, a.edge) += val;
                    }
                }
                if (opt.assemble_th) {
                    const cplx val = sign * r / ik;
                    ops.Th(a.edge, b.edge) += val;
                    if (s != t) {
                        ops.Th(b.edge, a.edge) += val;
                    }
                }
            }
        }
    };
    detail::for_each_pair(mesh, ops.k, opt.quadrature, scatter);
    ops.G = gram_rwg(mesh, topo);
    ops.G_p = gram_patch(mesh);
    ops.G_lambda = gram_pyramid(mesh);
    ops.v = assemble_rhs(mesh, topo, ctx, opt.quadrature);
    return ops;
}

/// Th through the factorization c Σ R Σᵀ.
inline MatrixXc factorized_th(const OperatorSet& ops, const IncidenceMatrix& sigma)
{
    const MatrixXd s = sigma.dense();
    return ops.th_constant() * mul(s, mul(ops.R, MatrixXd(s.transpose())));
}

/// Gram-normalized operators T̃ = G^{-1/2} T G^{-1/2}, ṽ = G^{-1/2} v.
inline OperatorSet normalize_operator(const OperatorSet& ops, const MatrixXd& g_inv_sqrt)
{
    OperatorSet out = ops;
    if (ops.Ts.size()) {
        out.Ts = congruence(g_inv_sqrt, ops.Ts);
    }
    if (ops.Th.size()) {
        out.Th = congruence(g_inv_sqrt, ops.Th);
    }
    out.v = mul(g_inv_sqrt, MatrixXc(ops.v)).col(0);
    out.normalized = true;
    return out;
}

inline OperatorSet normalize_operator(const OperatorSet& ops)
{
    return normalize_operator(ops, spd_roots(MatrixXd(ops.G), "RWG Gram matrix").inv_sqrt);
}

/// Radiation vector ∫ J(r') e^{−ik r̂·r'} dS' transverse to r̂, for RWG
/// coefficients j. Used to compare solutions from different formulations.
inline Eigen::Vector3cd far_field(
    const TriangleMesh& mesh, const BasisTopology& topo, const VectorXc& j, double k, const Vec3& direction)
{
    const Vec3 rhat = direction.normalized();
    const TriangleRule rule = subdivided(gauss7(), 1);
    Eigen::Vector3cd sum = Eigen::Vector3cd::Zero();
    for (int t = 0; t < mesh.num_triangles(); ++t) {
        const Tri3 tri = detail::triangle(mesh, t);
        for (const auto& a : topo.triangle_edges[t]) {
            const Vec3& pa = mesh.vertex(t, a.free_local);
            Eigen::Vector3cd acc = Eigen::Vector3cd::Zero();
            for (std::size_t i = 0; i < rule.size(); ++i) {
                const Vec3 r = detail::at(tri, rule.points[i]);
                acc += rule.weights[i] * std::exp(cplx(0.0, -k * rhat.dot(r))) * (r - pa).cast<cplx>();
            }
            sum += (0.5 * a.sign) * j[a.edge] * acc;
        }
    }
    return sum - rhat.cast<cplx>() * rhat.cast<cplx>().dot(sum);
}

} // namespace qhf

#endif // QHF_EFIE_HPP
