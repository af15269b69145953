#ifndef QHF_QUADRATURE_HPP
#define QHF_QUADRATURE_HPP

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

namespace qhf {

/// Quadrature rule on the reference triangle in barycentric coordinates;
/// weights sum to one, so integrals are area * sum(w f).
struct TriangleRule {
    std::vector<std::array<double, 3>> points;
    std::vector<double> weights;

    std::size_t size() const { return weights.size(); }
};

/// Symmetric 7-point rule, exact to degree 5.
inline const TriangleRule& gauss7()
{
    static const TriangleRule rule = [] {
        TriangleRule r;
        const double a1 = 0.059715871789769820;
        const double b1 = 0.470142064105115090;
        const double a2 = 0.797426985353087322;
        const double b2 = 0.101286507323456339;
        const double w1 = 0.132394152788506181;
        const double w2 = 0.125939180544827153;
        r.points = {{1.0 / 3, 1.0 / 3, 1.0 / 3}, {a1, b1, b1}, {b1, a1, b1}, {b1, b1, a1},
            {a2, b2, b2}, {b2, a2, b2}, {b2, b2, a2}};
        r.weights = {0.225, w1, w1, w1, w2, w2, w2};
        return r;
    }();
    return rule;
}

/// `base` applied on each of the 4^levels congruent subtriangles.
inline TriangleRule subdivided(const TriangleRule& base, int levels)
{
    using Bary = std::array<double, 3>;
    std::vector<std::array<Bary, 3>> cells = {{Bary{1, 0, 0}, Bary{0, 1, 0}, Bary{0, 0, 1}}};
    auto mid = [](const Bary& a, const Bary& b) {
        return Bary{0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]), 0.5 * (a[2] + b[2])};
    };
    for (int l = 0; l < levels; ++l) {
        std::vector<std::array<Bary, 3>> next;
        next.reserve(4 * cells.size());
        for (const auto& c : cells) {
            const Bary ab = mid(c[0], c[1]);
            const Bary bc = mid(c[1], c[2]);
            const Bary ca = mid(c[2], c[0]);
            next.push_back({c[0], ab, ca});
            next.push_back({ab, c[1], bc});
            next.push_back({ca, bc, c[2]});
            next.push_back({ab, bc, ca});
        }
        cells = std::move(next);
    }
    TriangleRule out;
    const double scale = 1.0 / static_cast<double>(cells.size());
    for (const auto& c : cells) {
        for (std::size_t q = 0; q < base.size(); ++q) {
            Bary p{0, 0, 0};
            for (int k = 0; k < 3; ++k) {
                for (int j = 0; j < 3; ++j) {
                    p[j] += base.points[q][k] * c[k][j];
                }
            }
            out.points.push_back(p);
            out.weights.push_back(base.weights[q] * scale);
        }
    }
    return out;
}

/// Gauss–Legendre nodes and weights on [0, 1] (Newton on the Legendre recurrence).
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre01(int n)
{
    std::vector<double> x(n);
    std::vector<double> w(n);
    auto legendre = [n](double z, double& dp) {
        double p0 = 1.0;
        double p1 = z;
        for (int k = 2; k <= n; ++k) {
            const double p2 = ((2 * k - 1) * z * p1 - (k - 1) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        dp = n * (z * p1 - p0) / (z * z - 1.0);
        return p1;
    };
    for (int i = 0; i < n; ++i) {
        double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            const double dz = legendre(z, dp) / dp;
            z -= dz;
            if (std::abs(dz) < 1e-16) {
                break;
            }
        }
        legendre(z, dp);
        x[i] = 0.5 * (1.0 - z);
        w[i] = 1.0 / ((1.0 - z * z) * dp * dp);
    }
    return {x, w};
}

/// Rule for integrands with edge singularities (the static potential of a
/// touching triangle): three subtriangles from the centroid, each mapped to
/// the unit square with the radial coordinate graded as u = 1 − (1 − s)^p.
inline TriangleRule edge_graded(int n, int p = 2)
{
    const auto [x, w] = gauss_legendre01(n);
    TriangleRule r;
    for (int e = 0; e < 3; ++e) {
        for (int i = 0; i < n; ++i) {
            const double u = 1.0 - std::pow(1.0 - x[i], p);
            const double du = p * std::pow(1.0 - x[i], p - 1);
            for (int j = 0; j < n; ++j) {
                const double v = x[j];
                const double c = (1.0 - u) / 3.0;
                std::array<double, 3> b{c, c, c};
                b[e] += u * (1.0 - v);
                b[(e + 1) % 3] += u * v;
                r.points.push_back(b);
                r.weights.push_back((2.0 / 3.0) * u * du * w[i] * w[j]);
            }
        }
    }
    return r;
}

/// Static potentials of a flat triangle seen from `r`:
/// i0 = ∫ 1/|r - r'| dS', ivec = ∫ (r' - ρ)/|r - r'| dS' with ρ the
/// projection of r onto the triangle plane.
struct StaticPotential {
    double i0 = 0.0;
    Eigen::Vector3d ivec = Eigen::Vector3d::Zero();
};

inline StaticPotential static_potential(
    const Eigen::Vector3d& r, const std::array<Eigen::Vector3d, 3>& tri)
{
    using Eigen::Vector3d;
    const Vector3d n = (tri[1] - tri[0]).cross(tri[2] - tri[0]).normalized();
    const double d = n.dot(r - tri[0]);
    const double ad = std::abs(d);
    const Vector3d rho = r - d * n;
    const double scale = (tri[1] - tri[0]).squaredNorm() + (tri[2] - tri[1]).squaredNorm()
        + (tri[0] - tri[2]).squaredNorm();
    const double tiny = 1e-28 * scale;

    StaticPotential out;
    double solid = 0.0;
    for (int i = 0; i < 3; ++i) {
        const Vector3d& pm = tri[i];
        const Vector3d& pp = tri[(i + 1) % 3];
        const Vector3d lhat = (pp - pm).normalized();
        const Vector3d uhat = lhat.cross(n);
        const double lp = (pp - rho).dot(lhat);
        const double lm = (pm - rho).dot(lhat);
        const double p0 = (pm - rho).dot(uhat);
        const double r0sq = p0 * p0 + d * d;
        const double rp = (pp - r).norm();
        const double rm = (pm - r).norm();
        if (r0sq > tiny) {
            // R + l without cancellation when l < 0: (R + l)(R - l) = R0².
            const double gp = lp >= 0.0 ? rp + lp : r0sq / (rp - lp);
            const double gm = lm >= 0.0 ? rm + lm : r0sq / (rm - lm);
            const double f = std::log(gp / gm);
            out.i0 += p0 * f;
            out.ivec += 0.5 * uhat * (r0sq * f + lp * rp - lm * rm);
        } else {
            out.ivec += 0.5 * uhat * (lp * rp - lm * rm);
        }
        if (ad > 0.0) {
            solid += std::atan(p0 * lp / (r0sq + ad * rp)) - std::atan(p0 * lm / (r0sq + ad * rm));
        }
    }
    out.i0 -= ad * solid;
    return out;
}

} // namespace qhf

#endif // QHF_QUADRATURE_HPP
