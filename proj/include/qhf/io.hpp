#ifndef QHF_IO_HPP
#define QHF_IO_HPP

// Text exports for debugging: sparse triplets and dense CSV.

#include "qhf/dense.hpp"
#include "qhf/error.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

namespace qhf {

namespace detail {

inline std::string num(double x)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17e", x);
    return buf;
}

inline std::ofstream open_out(const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) {
        fail(ErrorKind::Io, "cannot write '" + path.string() + "'");
    }
    return out;
}

} // namespace detail

/// "rows cols nnz" header, then one "i j value" line per nonzero (0-based).
template <typename Scalar>
void write_triplets(const Eigen::SparseMatrix<Scalar>& m, const std::filesystem::path& path)
{
    std::ofstream out = detail::open_out(path);
    out << m.rows() << ' ' << m.cols() << ' ' << m.nonZeros() << '\n';
    for (Eigen::Index k = 0; k < m.outerSize(); ++k) {
        for (typename Eigen::SparseMatrix<Scalar>::InnerIterator it(m, k); it; ++it) {
            out << it.row() << ' ' << it.col() << ' ' << detail::num(static_cast<double>(it.value())) << '\n';
        }
    }
}

/// Dense triplets, dropping entries with |a_ij| ≤ drop.
inline void write_triplets(const MatrixXd& m, const std::filesystem::path& path, double drop = 0.0)
{
    std::ofstream out = detail::open_out(path);
    Eigen::Index nnz = (m.array().abs() > drop).count();
    out << m.rows() << ' ' << m.cols() << ' ' << nnz << '\n';
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            if (std::abs(m(i, j)) > drop) {
                out << i << ' ' << j << ' ' << detail::num(m(i, j)) << '\n';
            }
        }
    }
}

inline void write_dense_csv(const MatrixXd& m, const std::filesystem::path& path)
{
    std::ofstream out = detail::open_out(path);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            out << (j ? "," : "") << detail::num(m(i, j));
        }
        out << '\n';
    }
}

/// index,re,im per entry.
inline void write_vector_csv(const VectorXc& v, const std::filesystem::path& path)
{
    std::ofstream out = detail::open_out(path);
    out << "index,re,im\n";
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        out << i << ',' << detail::num(v[i].real()) << ',' << detail::num(v[i].imag()) << '\n';
    }
}

} // namespace qhf

#endif // QHF_IO_HPP
