#ifndef QHF_DENSE_HPP
#define QHF_DENSE_HPP

// Dense linear algebra kernels backed by LAPACKE. Eigen handles storage and
// BLAS-3 products (EIGEN_USE_BLAS); the factorizations below go straight to
// LAPACK because they dominate the runtime at desk scale.

#include "qhf/error.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <lapacke.h>

#include <algorithm>
#include <complex>
#include <string>

namespace qhf {

using cplx = std::complex<double>;
using MatrixXd = Eigen::MatrixXd;
using MatrixXc = Eigen::MatrixXcd;
using VectorXd = Eigen::VectorXd;
using VectorXc = Eigen::VectorXcd;
using SparseMatrixd = Eigen::SparseMatrix<double>;

/// Eigendecomposition of a real symmetric matrix, eigenvalues ascending.
struct SymmetricEigen {
    VectorXd values;
    MatrixXd vectors;
};

inline SymmetricEigen symmetric_eigen(const MatrixXd& a)
{
    if (a.rows() != a.cols()) {
        fail(ErrorKind::Numeric, "symmetric_eigen: matrix is not square");
    }
    SymmetricEigen out;
    const lapack_int n = static_cast<lapack_int>(a.rows());
    out.vectors = a;
    out.values.resize(n);
    if (n == 0) {
        return out;
    }
    const lapack_int info = LAPACKE_dsyevd(
        LAPACK_COL_MAJOR, 'V', 'U', n, out.vectors.data(), n, out.values.data());
    if (info != 0) {
        fail(ErrorKind::Numeric, "dsyevd failed with info=" + std::to_string(info));
    }
    return out;
}

/// Thin SVD of a real matrix, singular values descending.
struct RealSvd {
    MatrixXd u;
    VectorXd s;
    MatrixXd v;
};

inline RealSvd real_svd(const MatrixXd& a)
{
    const lapack_int m = static_cast<lapack_int>(a.rows());
    const lapack_int n = static_cast<lapack_int>(a.cols());
    const lapack_int k = std::min(m, n);
    RealSvd out;
    MatrixXd work = a;
    out.u.resize(m, k);
    out.s.resize(k);
    MatrixXd vt(k, n);
    if (k == 0) {
        out.v.resize(n, 0);
        return out;
    }
    const lapack_int info = LAPACKE_dgesdd(LAPACK_COL_MAJOR, 'S', m, n, work.data(), m,
        out.s.data(), out.u.data(), m, vt.data(), k);
    if (info != 0) {
        fail(ErrorKind::Numeric, "dgesdd failed with info=" + std::to_string(info));
    }
    out.v = vt.transpose();
    return out;
}

/// Singular values (descending) of a complex matrix.
inline VectorXd singular_values(const MatrixXc& a)
{
    const lapack_int m = static_cast<lapack_int>(a.rows());
    const lapack_int n = static_cast<lapack_int>(a.cols());
    const lapack_int k = std::min(m, n);
    VectorXd s(k);
    if (k == 0) {
        return s;
    }
    MatrixXc work = a;
    const lapack_int info = LAPACKE_zgesdd(LAPACK_COL_MAJOR, 'N', m, n,
        reinterpret_cast<lapack_complex_double*>(work.data()), m, s.data(), nullptr, 1,
        nullptr, 1);
    if (info != 0) {
        fail(ErrorKind::Numeric, "zgesdd failed with info=" + std::to_string(info));
    }
    return s;
}

inline VectorXd singular_values(const MatrixXd& a)
{
    const lapack_int m = static_cast<lapack_int>(a.rows());
    const lapack_int n = static_cast<lapack_int>(a.cols());
    const lapack_int k = std::min(m, n);
    VectorXd s(k);
    if (k == 0) {
        return s;
    }
    MatrixXd work = a;
    const lapack_int info = LAPACKE_dgesdd(
        LAPACK_COL_MAJOR, 'N', m, n, work.data(), m, s.data(), nullptr, 1, nullptr, 1);
    if (info != 0) {
        fail(ErrorKind::Numeric, "dgesdd failed with info=" + std::to_string(info));
    }
    return s;
}

/// f(A) for symmetric A through its eigendecomposition.
template <typename Fn>
MatrixXd symmetric_function(const SymmetricEigen& eig, Fn&& fn)
{
    VectorXd fv(eig.values.size());
    for (Eigen::Index i = 0; i < fv.size(); ++i) {
        fv[i] = fn(eig.values[i]);
    }
    return eig.vectors * fv.asDiagonal() * eig.vectors.transpose();
}

/// Square root and inverse square root of an SPD matrix.
struct SpdRoots {
    MatrixXd sqrt;
    MatrixXd inv_sqrt;
};

inline SpdRoots spd_roots(const MatrixXd& a, const std::string& what)
{
    const SymmetricEigen eig = symmetric_eigen(a);
    if (eig.values.size() > 0 && !(eig.values[0] > 0.0)) {
        fail(ErrorKind::Numeric, what + " is not positive definite");
    }
    return {symmetric_function(eig, [](double x) { return std::sqrt(x); }),
        symmetric_function(eig, [](double x) { return 1.0 / std::sqrt(x); })};
}

/// Real times complex product split into two real GEMMs so both go through BLAS.
inline MatrixXc mul(const MatrixXd& a, const MatrixXc& b)
{
    const MatrixXd re = a * b.real();
    const MatrixXd im = a * b.imag();
    MatrixXc out(re.rows(), re.cols());
    out.real() = re;
    out.imag() = im;
    return out;
}

inline MatrixXc mul(const MatrixXc& a, const MatrixXd& b)
{
    const MatrixXd re = a.real() * b;
    const MatrixXd im = a.imag() * b;
    MatrixXc out(re.rows(), re.cols());
    out.real() = re;
    out.imag() = im;
    return out;
}

/// Bᵀ A B for real B and complex A.
inline MatrixXc congruence(const MatrixXd& b, const MatrixXc& a)
{
    return mul(MatrixXd(b.transpose()), mul(a, b));
}

inline double relative_frobenius(const MatrixXd& a, const MatrixXd& reference)
{
    const double ref = reference.norm();
    return (a - reference).norm() / (ref > 0.0 ? ref : 1.0);
}

} // namespace qhf

#endif // QHF_DENSE_HPP
