#ifndef QHF_QHD_HPP
#define QHF_QHD_HPP

// Loop/Star incidence matrices, graph Laplacians and quasi-Helmholtz projectors.

#include "qhf/dense.hpp"
#include "qhf/error.hpp"
#include "qhf/mesh.hpp"

#include <Eigen/SparseCholesky>

#include <numeric>
#include <optional>

namespace qhf {

enum class IncidenceKind { Sigma, Lambda };

inline const char* to_string(IncidenceKind k) { return k == IncidenceKind::Sigma ? "sigma" : "lambda"; }

using SparseMatrixi = Eigen::SparseMatrix<int>;

struct IncidenceMatrix {
    IncidenceKind kind = IncidenceKind::Sigma;
    SparseMatrixi entries;

    int rows() const { return static_cast<int>(entries.rows()); }
    int cols() const { return static_cast<int>(entries.cols()); }
    SparseMatrixd real() const { return entries.cast<double>(); }
    MatrixXd dense() const { return MatrixXd(real()); }
};

/// [Σ]_{m,c} = +1 if c = c_m^+, -1 if c = c_m^-.
inline IncidenceMatrix sigma_matrix(const BasisTopology& topo)
{
    std::vector<Eigen::Triplet<int>> trips;
    trips.reserve(2 * topo.edges.size());
    for (int m = 0; m < topo.num_edges(); ++m) {
        trips.emplace_back(m, topo.edges[m].c_plus, 1);
        trips.emplace_back(m, topo.edges[m].c_minus, -1);
    }
    IncidenceMatrix x{IncidenceKind::Sigma, SparseMatrixi(topo.num_edges(),
                                                static_cast<int>(topo.triangle_edges.size()))};
    x.entries.setFromTriplets(trips.begin(), trips.end());
    return x;
}

/// Loop matrix: column v is the solenoidal circulation around vertex v.
/// [Λ]_{m,v} = +1 at the edge tail, -1 at the edge head (tail/head ordered
/// along the c_plus traversal), which makes ΣᵀΛ = 0.
inline IncidenceMatrix lambda_matrix(const BasisTopology& topo, int num_vertices)
{
    std::vector<Eigen::Triplet<int>> trips;
    trips.reserve(2 * topo.edges.size());
    for (int m = 0; m < topo.num_edges(); ++m) {
        trips.emplace_back(m, topo.edges[m].tail, 1);
        trips.emplace_back(m, topo.edges[m].head, -1);
    }
    IncidenceMatrix x{IncidenceKind::Lambda, SparseMatrixi(topo.num_edges(), num_vertices)};
    x.entries.setFromTriplets(trips.begin(), trips.end());
    return x;
}

/// Orthonormal basis of the constant-per-component vectors for the graph
/// whose nodes are the columns of X and whose links are its rows.
inline MatrixXd component_indicators(const SparseMatrixi& x)
{
    const int n = static_cast<int>(x.cols());
    std::vector<int> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int a) {
        while (parent[a] != a) {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        return a;
    };
    const SparseMatrixi xt = x.transpose();
    for (int r = 0; r < xt.cols(); ++r) {
        int first = -1;
        for (SparseMatrixi::InnerIterator it(xt, r); it; ++it) {
            if (first < 0) {
                first = static_cast<int>(it.row());
            } else {
                parent[find(static_cast<int>(it.row()))] = find(first);
            }
        }
    }
    std::map<int, int> label;
    std::vector<int> comp(n);
    for (int i = 0; i < n; ++i) {
        comp[i] = label.try_emplace(find(i), static_cast<int>(label.size())).first->second;
    }
    MatrixXd z = MatrixXd::Zero(n, static_cast<Eigen::Index>(label.size()));
    for (int i = 0; i < n; ++i) {
        z(i, comp[i]) = 1.0;
    }
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
        z.col(c).normalize();
    }
    return z;
}

enum class LaplacianBase { Sigma, Lambda, NormalizedSigma, NormalizedLambda };

/// XᵀX, stored sparse for the combinatorial case and dense for the
/// Gram-normalized one.
struct GraphLaplacian {
    LaplacianBase base = LaplacianBase::Sigma;
    std::optional<SparseMatrixd> sparse;
    MatrixXd dense;
    MatrixXd nullspace; // orthonormal columns
    int nullspace_dim() const { return static_cast<int>(nullspace.cols()); }

    int dim() const { return static_cast<int>(sparse ? sparse->rows() : dense.rows()); }
    bool is_sparse() const { return sparse.has_value(); }

    MatrixXd apply(const MatrixXd& x) const { return sparse ? MatrixXd(*sparse * x) : MatrixXd(dense * x); }
    VectorXd apply(const VectorXd& x) const { return sparse ? VectorXd(*sparse * x) : VectorXd(dense * x); }
    MatrixXd to_dense() const { return sparse ? MatrixXd(*sparse) : dense; }
    VectorXd diagonal() const { return sparse ? VectorXd(sparse->diagonal()) : VectorXd(dense.diagonal()); }
};

inline GraphLaplacian graph_laplacian(const IncidenceMatrix& x)
{
    GraphLaplacian l;
    l.base = x.kind == IncidenceKind::Sigma ? LaplacianBase::Sigma : LaplacianBase::Lambda;
    const SparseMatrixd xr = x.real();
    l.sparse = SparseMatrixd(xr.transpose() * xr);
    l.sparse->makeCompressed();
    l.nullspace = component_indicators(x.entries);
    return l;
}

/// Laplacian of a dense (normalized) basis; `nullspace` spans ker(X).
inline GraphLaplacian dense_laplacian(const MatrixXd& x, LaplacianBase base, const MatrixXd& nullspace)
{
    GraphLaplacian l;
    l.base = base;
    l.dense = x.transpose() * x;
    l.dense = 0.5 * (l.dense + l.dense.transpose()).eval();
    Eigen::HouseholderQR<MatrixXd> qr(nullspace);
    l.nullspace = qr.householderQ() * MatrixXd::Identity(nullspace.rows(), nullspace.cols());
    return l;
}

/// Removes the nullspace component: x - Z Zᵀ x.
inline void deflate(const MatrixXd& z, Eigen::Ref<VectorXd> x)
{
    if (z.cols() > 0) {
        x -= z * (z.transpose() * x);
    }
}

struct PinvOptions {
    int dense_cap = 5000;     // dense eigendecomposition up to this dimension
    double cg_tol = 1e-12;    // relative residual
    int cg_max_factor = 10;   // max iterations = factor * dim
    bool force_iterative = false;
};

/// Applies L⁺. Dense eigendecomposition at desk scale, otherwise CG on the
/// complement of the nullspace with Jacobi preconditioning.
class LaplacianPinv {
public:
    LaplacianPinv() = default;

    explicit LaplacianPinv(const GraphLaplacian& l, PinvOptions opt = {})
        : l_(&l)
        , opt_(opt)
    {
        if (!opt.force_iterative && l.dim() <= opt.dense_cap) {
            const SymmetricEigen eig = symmetric_eigen(l.to_dense());
            const int k = l.nullspace_dim();
            VectorXd inv = VectorXd::Zero(eig.values.size());
            for (Eigen::Index i = k; i < inv.size(); ++i) {
                inv[i] = 1.0 / eig.values[i];
            }
            pinv_ = eig.vectors * inv.asDiagonal() * eig.vectors.transpose();
            dense_ = true;
        }
    }

    bool dense() const { return dense_; }
    const MatrixXd& matrix() const { return pinv_; }

    VectorXd apply(const VectorXd& v) const
    {
        if (dense_) {
            return pinv_ * v;
        }
        return cg(v);
    }

    MatrixXd apply(const MatrixXd& v) const
    {
        if (dense_) {
            return pinv_ * v;
        }
        MatrixXd out(v.rows(), v.cols());
        for (Eigen::Index c = 0; c < v.cols(); ++c) {
            out.col(c) = cg(v.col(c));
        }
        return out;
    }

private:
    VectorXd cg(VectorXd b) const
    {
        const MatrixXd& z = l_->nullspace;
        const double input_norm = b.norm();
        deflate(z, b);
        const double bnorm = b.norm();
        VectorXd x = VectorXd::Zero(b.size());
        if (bnorm <= 1e-14 * input_norm || bnorm == 0.0) {
            return x;
        }
        const VectorXd dinv = l_->diagonal().cwiseInverse();
        VectorXd r = b;
        VectorXd s = dinv.cwiseProduct(r);
        deflate(z, s);
        VectorXd p = s;
        double rs = r.dot(s);
        const int max_it = opt_.cg_max_factor * static_cast<int>(b.size());
        for (int it = 0; it < max_it; ++it) {
            const VectorXd lp = l_->apply(p);
            const double alpha = rs / p.dot(lp);
            x += alpha * p;
            r -= alpha * lp;
            if (r.norm() <= opt_.cg_tol * bnorm) {
                deflate(z, x);
                return x;
            }
            s = dinv.cwiseProduct(r);
            deflate(z, s);
            const double rs_new = r.dot(s);
            p = s + (rs_new / rs) * p;
            rs = rs_new;
        }
        fail(ErrorKind::Convergence, "Laplacian pseudo-inverse CG did not converge");
    }

    const GraphLaplacian* l_ = nullptr;
    PinvOptions opt_;
    bool dense_ = false;
    MatrixXd pinv_;
};

inline VectorXd laplacian_pinv_apply(const GraphLaplacian& l, const VectorXd& v, PinvOptions opt = {})
{
    return LaplacianPinv(l, opt).apply(v);
}

/// SVD of a (dense) Loop or Star matrix re-indexed in ascending order of the
/// Laplacian eigenvalues λ_i = σ_i². Columns of u for null modes are zero.
struct SpectralBasis {
    VectorXd sigma;  // ascending
    VectorXd lambda; // σ², ascending
    MatrixXd u;      // N × N_X
    MatrixXd v;      // N_X × N_X
    int nullity = 0;

    int dim() const { return static_cast<int>(sigma.size()); }
};

inline SpectralBasis spectral_basis(const MatrixXd& x, int nullity)
{
    const RealSvd svd = real_svd(x);
    const Eigen::Index k = svd.s.size();
    if (k != x.cols()) {
        fail(ErrorKind::Numeric, "spectral basis needs at least as many rows as columns");
    }
    SpectralBasis b;
    b.nullity = nullity;
    b.sigma = svd.s.reverse();
    b.u = svd.u.rowwise().reverse();
    b.v = svd.v.rowwise().reverse();
    for (int i = 0; i < nullity; ++i) {
        b.sigma[i] = 0.0;
        b.u.col(i).setZero();
    }
    b.lambda = b.sigma.cwiseAbs2();
    return b;
}

/// Σ_{i in [lo, hi)} u_i u_iᵀ over ascending Laplacian ranks.
inline MatrixXd band_projector(const SpectralBasis& b, int lo, int hi)
{
    lo = std::max(lo, b.nullity);
    hi = std::min(hi, b.dim());
    if (hi <= lo) {
        return MatrixXd::Zero(b.u.rows(), b.u.rows());
    }
    const auto block = b.u.middleCols(lo, hi - lo);
    return block * block.transpose();
}

/// Standard projectors; P_Sigma/Pd_Lambda from the range of Σ/Λ.
struct ProjectorSet {
    MatrixXd P_Sigma;
    MatrixXd P_LambdaH;
    MatrixXd Pd_Lambda;
    MatrixXd Pd_SigmaH;
    MatrixXd P_H;
    bool normalized = false;
};

inline ProjectorSet projectors(const SpectralBasis& sigma, const SpectralBasis& lambda, bool normalized = false)
{
    const Eigen::Index n = sigma.u.rows();
    const MatrixXd id = MatrixXd::Identity(n, n);
    ProjectorSet p;
    p.normalized = normalized;
    p.P_Sigma = band_projector(sigma, 0, sigma.dim());
    p.Pd_Lambda = band_projector(lambda, 0, lambda.dim());
    p.P_LambdaH = id - p.P_Sigma;
    p.Pd_SigmaH = id - p.Pd_Lambda;
    p.P_H = id - p.P_Sigma - p.Pd_Lambda;
    return p;
}

inline ProjectorSet projectors(const IncidenceMatrix& sigma, const IncidenceMatrix& lambda)
{
    const int ns = graph_laplacian(sigma).nullspace_dim();
    const int nl = graph_laplacian(lambda).nullspace_dim();
    return projectors(spectral_basis(sigma.dense(), ns), spectral_basis(lambda.dense(), nl));
}

/// Gram-normalized Loop/Star matrices
/// Σ̃ = G^{-1/2} Σ G_p^{1/2},  Λ̃ = G^{1/2} Λ G_λ^{-1/2}
/// together with the Gram roots needed to map coefficients back.
struct NormalizedBases {
    MatrixXd sigma;
    MatrixXd lambda;
    MatrixXd g_sqrt;
    MatrixXd g_inv_sqrt;
    MatrixXd sigma_nullspace;  // ker(Σ̃) = G_p^{-1/2} · indicators
    MatrixXd lambda_nullspace; // ker(Λ̃) = G_λ^{1/2} · indicators
};

inline NormalizedBases normalized_bases(const IncidenceMatrix& sigma, const IncidenceMatrix& lambda,
    const SparseMatrixd& g, const VectorXd& g_p, const SparseMatrixd& g_lambda)
{
    NormalizedBases nb;
    const SpdRoots groots = spd_roots(MatrixXd(g), "RWG Gram matrix");
    const SpdRoots lroots = spd_roots(MatrixXd(g_lambda), "pyramid Gram matrix");
    if (!(g_p.minCoeff() > 0.0)) {
        fail(ErrorKind::Numeric, "patch Gram matrix is not positive definite");
    }
    nb.sigma = groots.inv_sqrt * (sigma.real() * g_p.cwiseSqrt().asDiagonal());
    nb.lambda = groots.sqrt * (lambda.real() * lroots.inv_sqrt);
    nb.g_sqrt = groots.sqrt;
    nb.g_inv_sqrt = groots.inv_sqrt;
    nb.sigma_nullspace = g_p.cwiseSqrt().cwiseInverse().asDiagonal() * component_indicators(sigma.entries);
    nb.lambda_nullspace = lroots.sqrt * component_indicators(lambda.entries);
    return nb;
}

/// Numerical rank via SVD with relative threshold.
inline int numerical_rank(const MatrixXd& a, double rel_tol = 1e-10)
{
    const VectorXd s = singular_values(a);
    if (s.size() == 0 || s[0] == 0.0) {
        return 0;
    }
    return static_cast<int>((s.array() > rel_tol * s[0]).count());
}

} // namespace qhf

#endif // QHF_QHD_HPP
