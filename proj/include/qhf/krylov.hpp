#ifndef QHF_KRYLOV_HPP
#define QHF_KRYLOV_HPP

// Krylov solver for complex symmetric (Aᵀ = A, not Hermitian) systems.

#include "qhf/dense.hpp"

#include <type_traits>
#include <vector>

namespace qhf {

struct KrylovOptions {
    double tol = 1e-8;        // relative residual ‖b − Ax‖/‖b‖
    int max_iterations = 1000;
};

struct KrylovResult {
    VectorXc x;
    int iterations = 0;
    double residual = 0.0;
    bool converged = false;
    bool breakdown = false;
    std::vector<double> history;
};

namespace detail {

/// Unconjugated bilinear form xᵀy.
inline cplx bilinear(const VectorXc& x, const VectorXc& y) { return x.cwiseProduct(y).sum(); }

} // namespace detail

/// Conjugate orthogonal conjugate gradient. Same recurrences as CG with the
/// Hermitian inner product replaced by xᵀy. The iterate with the smallest
/// recurrence residual is returned since COCG residuals are not monotone.
template <typename Apply>
    requires std::is_invocable_r_v<VectorXc, Apply, const VectorXc&> && (!std::is_base_of_v<Eigen::EigenBase<std::decay_t<Apply>>, std::decay_t<Apply>>)
KrylovResult cocg(Apply&& apply, const VectorXc& b, const KrylovOptions& opt = {})
{
    KrylovResult out;
    out.x = VectorXc::Zero(b.size());
    const double bnorm = b.norm();
    if (bnorm == 0.0) {
        out.converged = true;
        return out;
    }
    VectorXc x = out.x;
    VectorXc r = b;
    VectorXc p = r;
    cplx rho = detail::bilinear(r, r);
    double best = 1.0;
    out.residual = 1.0;
    for (int it = 1; it <= opt.max_iterations; ++it) {
        const VectorXc ap = apply(p);
        const cplx pap = detail::bilinear(p, ap);
        if (std::abs(pap) == 0.0 || std::abs(rho) == 0.0) {
            out.breakdown = true;
            break;
        }
        const cplx alpha = rho / pap;
        x += alpha * p;
        r -= alpha * ap;
        const double rel = r.norm() / bnorm;
        out.history.push_back(rel);
        out.iterations = it;
        if (rel < best) {
            best = rel;
            out.x = x;
            out.residual = rel;
        }
        if (rel <= opt.tol) {
            out.converged = true;
            break;
        }
        const cplx rho_new = detail::bilinear(r, r);
        p = r + (rho_new / rho) * p;
        rho = rho_new;
    }
    return out;
}

inline KrylovResult cocg(const MatrixXc& a, const VectorXc& b, const KrylovOptions& opt = {})
{
    return cocg([&](const VectorXc& v) { return VectorXc(a * v); }, b, opt);
}

} // namespace qhf

#endif // QHF_KRYLOV_HPP
