#ifndef QHF_FILTERS_HPP
#define QHF_FILTERS_HPP

// Laplacian spectral filters h_n(L) that keep the n smallest eigenmodes of a
// graph Laplacian L = XᵀX. Every filtered quantity is a function of h_n(L):
//   (XᵀX)_n  = L h_n(L)        (XᵀX)⁺_n = L⁺ h_n(L)
//   X_n      = X h_n(L)        P_n      = X L⁺ h_n(L) Xᵀ

#include "qhf/dense.hpp"
#include "qhf/error.hpp"
#include "qhf/qhd.hpp"

#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace qhf {

enum class FilterBackend { ExactSvd, PowerMethod, Butterworth, Chebyshev };

inline const char* to_string(FilterBackend b)
{
    switch (b) {
    case FilterBackend::ExactSvd: return "svd";
    case FilterBackend::PowerMethod: return "power";
    case FilterBackend::Butterworth: return "butterworth";
    case FilterBackend::Chebyshev: return "chebyshev";
    }
    return "unknown";
}

inline FilterBackend filter_backend_from_string(const std::string& s)
{
    if (s == "svd" || s == "exact") {
        return FilterBackend::ExactSvd;
    }
    if (s == "power") {
        return FilterBackend::PowerMethod;
    }
    if (s == "butterworth") {
        return FilterBackend::Butterworth;
    }
    if (s == "chebyshev") {
        return FilterBackend::Chebyshev;
    }
    fail(ErrorKind::Config, "unknown filter backend '" + s + "'");
}

struct SpectralFilterSpec {
    int n = 1;
    FilterBackend backend = FilterBackend::ExactSvd;
    double power_tol = 1e-10;       // residual tolerance relative to ‖L‖
    int power_max_iterations = 2000;
    int butterworth_order = 16;     // number of root-of-unity factors m
    int poly_count = 200;           // n_c
    std::optional<double> cutoff;   // x_c; estimated when absent
    unsigned seed = 1234;
};

inline void validate(const SpectralFilterSpec& spec, int dim)
{
    if (spec.n < 0 || spec.n > dim) {
        fail(ErrorKind::Config, "filtering index " + std::to_string(spec.n) + " outside [0, "
                + std::to_string(dim) + "]");
    }
    if (spec.butterworth_order < 1 || spec.poly_count < 1) {
        fail(ErrorKind::Config, "filter order and polynomial count must be positive");
    }
    if (spec.cutoff && !(*spec.cutoff > 0.0)) {
        fail(ErrorKind::Config, "filter cutoff must be positive");
    }
}

struct FilterMeta {
    FilterBackend backend = FilterBackend::ExactSvd;
    int n = 0;
    double cutoff = 0.0;
    double accuracy = 0.0; // backend-specific: max residual, or 0 for exact
    bool degenerate_cut = false;
    bool degenerate_cluster = false;
    std::vector<std::string> warnings;
};

/// h(L) for some spectral response h. apply() is linear and reentrant.
class LaplacianFilter {
public:
    virtual ~LaplacianFilter() = default;
    virtual MatrixXd apply(const MatrixXd& b) const = 0;
    VectorXd apply_vector(const VectorXd& b) const { return apply(MatrixXd(b)).col(0); }
    const FilterMeta& meta() const { return meta_; }

protected:
    FilterMeta meta_;
};

// ---------------------------------------------------------------------------
// Scalar profiles

/// Squared Butterworth profile 1/(1 + (x/x_c)^m), evaluated without overflow.
inline double butterworth(double x, double cutoff, int order)
{
    const double y = std::abs(x) / cutoff;
    if (y <= 1.0) {
        return 1.0 / (1.0 + std::pow(y, order));
    }
    const double r = std::pow(1.0 / y, order);
    return r / (1.0 + r);
}

/// Chebyshev series f(y) ≈ Σ_{k=0}^{n_c} c_k T_k(t) − c_0/2 on [lo, hi],
/// t = (2y − lo − hi)/(hi − lo).
struct ChebyshevSeries {
    double lo = 0.0;
    double hi = 1.0;
    VectorXd c;

    int degree() const { return static_cast<int>(c.size()) - 1; }

    double to_unit(double y) const { return (2.0 * y - lo - hi) / (hi - lo); }

    /// Coefficients from `points`-node Gauss–Chebyshev quadrature of fn.
    template <typename Fn>
    static ChebyshevSeries fit(Fn&& fn, double lo, double hi, int degree, int points)
    {
        ChebyshevSeries s;
        s.lo = lo;
        s.hi = hi;
        s.c = VectorXd::Zero(degree + 1);
        VectorXd fv(points);
        for (int k = 0; k < points; ++k) {
            const double t = std::cos(std::numbers::pi * (k + 0.5) / points);
            fv[k] = fn(0.5 * (hi - lo) * t + 0.5 * (hi + lo));
        }
        for (int j = 0; j <= degree; ++j) {
            double sum = 0.0;
            for (int k = 0; k < points; ++k) {
                sum += fv[k] * std::cos(std::numbers::pi * j * (k + 0.5) / points);
            }
            s.c[j] = 2.0 * sum / points;
        }
        return s;
    }

    /// Clenshaw evaluation of the scalar series.
    double operator()(double y) const
    {
        const double t = to_unit(y);
        double b1 = 0.0;
        double b2 = 0.0;
        for (int k = degree(); k >= 1; --k) {
            const double b0 = 2.0 * t * b1 - b2 + c[k];
            b2 = b1;
            b1 = b0;
        }
        return t * b1 - b2 + 0.5 * c[0];
    }

    /// Linear combination Σ w_i s_i of series on the same interval.
    static ChebyshevSeries combine(const std::vector<std::pair<double, const ChebyshevSeries*>>& terms)
    {
        ChebyshevSeries out;
        int degree = 0;
        for (const auto& [w, s] : terms) {
            degree = std::max(degree, s->degree());
            out.lo = s->lo;
            out.hi = s->hi;
        }
        out.c = VectorXd::Zero(degree + 1);
        for (const auto& [w, s] : terms) {
            if (s->lo != out.lo || s->hi != out.hi) {
                fail(ErrorKind::Numeric, "cannot combine Chebyshev series on different intervals");
            }
            out.c.head(s->c.size()) += w * s->c;
        }
        return out;
    }

    /// f_i(L) B for several series on one interval, sharing the recurrence.
    static std::vector<MatrixXd> apply_many(
        const GraphLaplacian& l, const MatrixXd& b, const std::vector<const ChebyshevSeries*>& fs)
    {
        std::vector<MatrixXd> out;
        if (fs.empty()) {
            return out;
        }
        const double lo = fs[0]->lo;
        const double hi = fs[0]->hi;
        int degree = 0;
        for (const ChebyshevSeries* f : fs) {
            if (f->lo != lo || f->hi != hi) {
                fail(ErrorKind::Numeric, "cannot share a Chebyshev recurrence across intervals");
            }
            degree = std::max(degree, f->degree());
            out.push_back(0.5 * f->c[0] * b);
        }
        const double alpha = 2.0 / (hi - lo);
        const double beta = -(hi + lo) / (hi - lo);
        auto y = [&](const MatrixXd& v) -> MatrixXd { return alpha * l.apply(v) + beta * v; };
        MatrixXd t_prev = b;
        MatrixXd t_cur = y(b);
        for (int k = 1; k <= degree; ++k) {
            if (k > 1) {
                MatrixXd t_next = 2.0 * y(t_cur) - t_prev;
                t_prev = std::move(t_cur);
                t_cur = std::move(t_next);
            }
            for (std::size_t i = 0; i < fs.size(); ++i) {
                if (k <= fs[i]->degree()) {
                    out[i] += fs[i]->c[k] * t_cur;
                }
            }
        }
        return out;
    }

    /// Three-term recurrence on a block of vectors: f(L) B.
    MatrixXd apply(const GraphLaplacian& l, const MatrixXd& b) const
    {
        const double alpha = 2.0 / (hi - lo);
        const double beta = -(hi + lo) / (hi - lo);
        auto y = [&](const MatrixXd& v) -> MatrixXd { return alpha * l.apply(v) + beta * v; };
        MatrixXd t_prev = b;
        MatrixXd out = 0.5 * c[0] * b;
        if (degree() == 0) {
            return out;
        }
        MatrixXd t_cur = y(b);
        out += c[1] * t_cur;
        for (int k = 2; k <= degree(); ++k) {
            MatrixXd t_next = 2.0 * y(t_cur) - t_prev;
            out += c[k] * t_next;
            t_prev = std::move(t_cur);
            t_cur = std::move(t_next);
        }
        return out;
    }
};

/// T_k(x) by the three-term recurrence.
inline double chebyshev_t(int k, double x)
{
    if (k == 0) {
        return 1.0;
    }
    double t0 = 1.0;
    double t1 = x;
    for (int j = 2; j <= k; ++j) {
        const double t2 = 2.0 * x * t1 - t0;
        t0 = t1;
        t1 = t2;
    }
    return t1;
}

// ---------------------------------------------------------------------------
// Spectral estimates

/// Largest eigenvalue of L by power iteration (Rayleigh quotient).
inline double largest_eigenvalue(const GraphLaplacian& l, unsigned seed = 1, int iterations = 200)
{
    std::mt19937 gen(seed);
    std::normal_distribution<double> dist;
    VectorXd x(l.dim());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        x[i] = dist(gen);
    }
    x.normalize();
    double rq = 0.0;
    for (int it = 0; it < iterations; ++it) {
        VectorXd y = l.apply(x);
        const double next = x.dot(y);
        const double ny = y.norm();
        if (ny == 0.0) {
            return 0.0;
        }
        x = y / ny;
        if (it > 10 && std::abs(next - rq) <= 1e-10 * std::abs(next)) {
            return next;
        }
        rq = next;
    }
    return rq;
}

/// ‖L⁺‖ = 1/λ_min⁺ by power iteration on the pseudo-inverse (deflated).
inline double pinv_norm(const GraphLaplacian& l, unsigned seed = 1, int max_iterations = 500, double tol = 1e-10)
{
    const LaplacianPinv pinv(l);
    std::mt19937 gen(seed);
    std::normal_distribution<double> dist;
    VectorXd x(l.dim());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        x[i] = dist(gen);
    }
    deflate(l.nullspace, x);
    if (x.norm() == 0.0) {
        return 0.0;
    }
    x.normalize();
    double est = 0.0;
    for (int it = 0; it < max_iterations; ++it) {
        VectorXd y = pinv.apply(x);
        deflate(l.nullspace, y);
        const double next = x.dot(y);
        x = y / y.norm();
        if (it > 5 && std::abs(next - est) <= tol * next) {
            return next;
        }
        est = next;
    }
    fail(ErrorKind::Convergence, "inverse power iteration for ‖L⁺‖ did not converge");
}

/// Cutoff heuristic (N_X − n)/‖L⁺‖.
inline double sigma_n_estimate(const GraphLaplacian& l, int n, unsigned seed = 1)
{
    if (n < 0 || n > l.dim()) {
        fail(ErrorKind::Config, "sigma_n_estimate: index out of range");
    }
    if (n == l.dim()) {
        return 0.0;
    }
    return static_cast<double>(l.dim() - n) / pinv_norm(l, seed);
}

/// ‖L‖₁, an upper bound on the spectral radius.
inline double one_norm(const GraphLaplacian& l)
{
    if (!l.is_sparse()) {
        return l.dense.cwiseAbs().colwise().sum().maxCoeff();
    }
    double best = 0.0;
    for (Eigen::Index c = 0; c < l.sparse->outerSize(); ++c) {
        double sum = 0.0;
        for (SparseMatrixd::InnerIterator it(*l.sparse, c); it; ++it) {
            sum += std::abs(it.value());
        }
        best = std::max(best, sum);
    }
    return best;
}

/// Smallest eigenpairs by block shift-and-invert subspace iteration with
/// Rayleigh–Ritz. The known nullspace is taken exactly; the remaining pairs are
/// computed in its orthogonal complement.
struct Eigenpairs {
    VectorXd values;
    MatrixXd vectors;
    double max_residual = 0.0;
    int iterations = 0;
};

inline Eigenpairs smallest_eigenpairs(const GraphLaplacian& l, int count, double tol = 1e-10,
    int max_iterations = 2000, unsigned seed = 1)
{
    const int dim = l.dim();
    count = std::clamp(count, 0, dim);
    const int k0 = std::min(l.nullspace_dim(), count);
    Eigenpairs out;
    out.values = VectorXd::Zero(count);
    out.vectors = MatrixXd::Zero(dim, count);
    out.vectors.leftCols(k0) = l.nullspace.leftCols(k0);
    const int want = count - k0;
    if (want == 0) {
        return out;
    }
    const int free_dim = dim - l.nullspace_dim();
    const int block = std::min(free_dim, want + std::max(4, want / 2));

    const double lnorm = one_norm(l);
    const double shift = 1e-6 * lnorm;

    std::function<MatrixXd(const MatrixXd&)> solve;
    if (l.is_sparse()) {
        SparseMatrixd a = *l.sparse;
        SparseMatrixd id(dim, dim);
        id.setIdentity();
        a += shift * id;
        auto ldlt = std::make_shared<Eigen::SimplicialLDLT<SparseMatrixd>>(a);
        if (ldlt->info() != Eigen::Success) {
            fail(ErrorKind::Numeric, "shifted Laplacian factorization failed");
        }
        solve = [ldlt](const MatrixXd& b) { return MatrixXd(ldlt->solve(b)); };
    } else {
        auto llt = std::make_shared<Eigen::LLT<MatrixXd>>(l.dense + shift * MatrixXd::Identity(dim, dim));
        if (llt->info() != Eigen::Success) {
            fail(ErrorKind::Numeric, "shifted Laplacian factorization failed");
        }
        solve = [llt](const MatrixXd& b) { return MatrixXd(llt->solve(b)); };
    }

    auto project_out = [&](MatrixXd& q) {
        if (l.nullspace_dim() > 0) {
            q -= l.nullspace * (l.nullspace.transpose() * q);
        }
    };
    auto orthonormalize = [&](MatrixXd& q) {
        for (int pass = 0; pass < 2; ++pass) {
            project_out(q);
            Eigen::HouseholderQR<MatrixXd> qr(q);
            q = qr.householderQ() * MatrixXd::Identity(q.rows(), q.cols());
        }
    };

    std::mt19937 gen(seed);
    std::normal_distribution<double> dist;
    MatrixXd q(dim, block);
    for (Eigen::Index j = 0; j < q.cols(); ++j) {
        for (Eigen::Index i = 0; i < q.rows(); ++i) {
            q(i, j) = dist(gen);
        }
    }
    orthonormalize(q);

    for (int it = 1; it <= max_iterations; ++it) {
        MatrixXd y = solve(q);
        orthonormalize(y);
        const MatrixXd ly = l.apply(y);
        const SymmetricEigen rr = symmetric_eigen(MatrixXd(y.transpose() * ly));
        q = y * rr.vectors;
        const MatrixXd lq = ly * rr.vectors;
        double worst = 0.0;
        for (int j = 0; j < want; ++j) {
            worst = std::max(worst, (lq.col(j) - rr.values[j] * q.col(j)).norm());
        }
        if (worst <= tol * lnorm || block == free_dim) {
            out.values.tail(want) = rr.values.head(want);
            out.vectors.rightCols(want) = q.leftCols(want);
            out.max_residual = worst / lnorm;
            out.iterations = it;
            // Keep the next Ritz value for gap checks.
            if (block > want) {
                VectorXd ext(count + 1);
                ext.head(count) = out.values;
                ext[count] = rr.values[want];
                out.values = ext;
            }
            return out;
        }
    }
    fail(ErrorKind::Convergence, "power-method eigenpairs did not converge");
}

/// Kernel polynomial estimate of the eigenvalue counting function of L.
class SpectralCounter {
public:
    SpectralCounter(const GraphLaplacian& l, double upper, int moments = 400, int probes = 40, unsigned seed = 7)
        : upper_(upper)
        , dim_(l.dim())
    {
        std::mt19937 gen(seed);
        std::uniform_int_distribution<int> coin(0, 1);
        MatrixXd z(dim_, probes);
        for (Eigen::Index j = 0; j < z.cols(); ++j) {
            for (Eigen::Index i = 0; i < z.rows(); ++i) {
                z(i, j) = coin(gen) ? 1.0 : -1.0;
            }
        }
        // Y = 2L/b − I maps [0, b] to [−1, 1].
        auto y = [&](const MatrixXd& v) -> MatrixXd { return (2.0 / upper_) * l.apply(v) - v; };
        mu_ = VectorXd::Zero(moments);
        MatrixXd t0 = z;
        MatrixXd t1 = y(z);
        mu_[0] = static_cast<double>(dim_);
        mu_[1] = (z.array() * t1.array()).sum() / probes;
        for (int k = 2; k < moments; ++k) {
            MatrixXd t2 = 2.0 * y(t1) - t0;
            mu_[k] = (z.array() * t2.array()).sum() / probes;
            t0 = std::move(t1);
            t1 = std::move(t2);
        }
        // Jackson damping.
        const int m = moments;
        const double a = std::numbers::pi / (m + 1);
        jackson_ = VectorXd(m);
        for (int k = 0; k < m; ++k) {
            jackson_[k] = ((m - k + 1) * std::cos(a * k) + std::sin(a * k) / std::tan(a)) / (m + 1);
        }
    }

    /// Estimated number of eigenvalues ≤ x.
    double count(double x) const
    {
        const double t = std::clamp(2.0 * x / upper_ - 1.0, -1.0, 1.0);
        const double theta = std::acos(t);
        double sum = jackson_[0] * (1.0 - theta / std::numbers::pi) * mu_[0];
        for (Eigen::Index k = 1; k < mu_.size(); ++k) {
            sum += jackson_[k] * (-2.0 * std::sin(k * theta) / (k * std::numbers::pi)) * mu_[k];
        }
        return sum;
    }

    /// Smallest x with count(x) ≥ target, by bisection.
    double inverse(double target) const
    {
        double lo = 0.0;
        double hi = upper_;
        for (int it = 0; it < 100; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (count(mid) < target) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        return 0.5 * (lo + hi);
    }

    double upper() const { return upper_; }

private:
    double upper_;
    int dim_;
    VectorXd mu_;
    VectorXd jackson_;
};

/// Eigenvalue estimates of L by ascending rank (1-based): exact Ritz values
/// from the power method up to `power_max_rank`, kernel-polynomial counting above.
class SpectrumEstimator {
public:
    explicit SpectrumEstimator(const GraphLaplacian& l, int power_max_rank = 32, unsigned seed = 7)
        : l_(&l)
        , power_max_rank_(std::min(power_max_rank, l.dim()))
        , seed_(seed)
    {
        upper_ = 1.1 * largest_eigenvalue(l, seed);
    }

    double upper() const { return upper_; }

    /// λ at ascending rank r (1 ≤ r ≤ dim).
    double at_rank(int r) const
    {
        if (r < 1 || r > l_->dim()) {
            fail(ErrorKind::Config, "spectrum rank out of range");
        }
        if (r <= power_max_rank_) {
            return pairs().values[r - 1];
        }
        return counter().inverse(r - 0.5);
    }

    /// A cutoff separating the n smallest eigenvalues from the rest.
    double cutoff_for(int n) const
    {
        if (n <= 0) {
            return 0.0;
        }
        if (n >= l_->dim()) {
            return upper_;
        }
        if (n < power_max_rank_) {
            const VectorXd& v = pairs().values;
            return 0.5 * (v[n - 1] + v[n]);
        }
        return counter().inverse(static_cast<double>(n));
    }

    const Eigenpairs& pairs() const
    {
        if (!pairs_) {
            pairs_ = smallest_eigenpairs(*l_, power_max_rank_, 1e-10, 4000, seed_);
        }
        return *pairs_;
    }

    const SpectralCounter& counter() const
    {
        if (!counter_) {
            counter_.emplace(*l_, upper_, 400, 40, seed_);
        }
        return *counter_;
    }

private:
    const GraphLaplacian* l_;
    int power_max_rank_;
    unsigned seed_;
    double upper_ = 0.0;
    mutable std::optional<Eigenpairs> pairs_;
    mutable std::optional<SpectralCounter> counter_;
};

// ---------------------------------------------------------------------------
// Backends

/// h_n(L) = V_n V_nᵀ from the exact SVD.
class ExactSvdFilter final : public LaplacianFilter {
public:
    ExactSvdFilter(const SpectralBasis& basis, int n)
        : basis_(&basis)
        , n_(n)
    {
        validate(SpectralFilterSpec{n}, basis.dim());
        meta_.backend = FilterBackend::ExactSvd;
        meta_.n = n;
        if (n > 0 && n < basis.dim()) {
            const double a = basis.sigma[n - 1];
            const double b = basis.sigma[n];
            meta_.cutoff = 0.5 * (basis.lambda[n - 1] + basis.lambda[n]);
            meta_.degenerate_cut = std::abs(b - a) <= 1e-10 * std::max(std::abs(b), 1e-300);
            if (meta_.degenerate_cut) {
                meta_.warnings.push_back("degenerate cut: filtered subspace is basis dependent");
            }
        }
    }

    MatrixXd apply(const MatrixXd& b) const override
    {
        if (n_ == 0) {
            return MatrixXd::Zero(b.rows(), b.cols());
        }
        const auto vn = basis_->v.leftCols(n_);
        return vn * (vn.transpose() * b);
    }

private:
    const SpectralBasis* basis_;
    int n_;
};

/// h_n(L) = V_n V_nᵀ from smallest eigenpairs computed iteratively.
class PowerMethodFilter final : public LaplacianFilter {
public:
    PowerMethodFilter(const GraphLaplacian& l, const SpectralFilterSpec& spec)
    {
        validate(spec, l.dim());
        meta_.backend = FilterBackend::PowerMethod;
        meta_.n = spec.n;
        pairs_ = smallest_eigenpairs(l, spec.n, spec.power_tol, spec.power_max_iterations, spec.seed);
        meta_.accuracy = pairs_.max_residual;
        const VectorXd& v = pairs_.values;
        const double scale = std::max(v.size() ? v.cwiseAbs().maxCoeff() : 0.0, 1e-300);
        for (Eigen::Index i = 1; i < spec.n; ++i) {
            if (std::abs(v[i] - v[i - 1]) <= 1e-8 * scale) {
                meta_.degenerate_cluster = true;
            }
        }
        if (v.size() > spec.n && spec.n > 0) {
            meta_.cutoff = 0.5 * (v[spec.n - 1] + v[spec.n]);
            if (std::abs(v[spec.n] - v[spec.n - 1]) <= 1e-8 * scale) {
                meta_.degenerate_cut = true;
                meta_.warnings.push_back("degenerate cut: filtered subspace is basis dependent");
            }
        }
        if (meta_.degenerate_cluster) {
            meta_.warnings.push_back("degenerate eigenvalue cluster among computed pairs");
        }
        vn_ = pairs_.vectors.leftCols(spec.n);
    }

    MatrixXd apply(const MatrixXd& b) const override { return vn_ * (vn_.transpose() * b); }
    const Eigenpairs& pairs() const { return pairs_; }

private:
    Eigenpairs pairs_;
    MatrixXd vn_;
};

/// Butterworth profile applied through its root-of-unity factorization
///   1/(1 + y^m) = Π_k (y − z_k)⁻¹,  z_k = e^{iπ(2k+1)/m},  y = L/x_c.
/// Conjugate roots are paired: (y − z)⁻¹(y − z̄)⁻¹ = Im((y − z)⁻¹)/Im z, so each
/// pair costs one complex shifted solve and keeps vectors real.
class ButterworthFilter final : public LaplacianFilter {
public:
    ButterworthFilter(const GraphLaplacian& l, double cutoff, int order)
        : l_(&l)
        , cutoff_(cutoff)
        , order_(order)
    {
        if (!(cutoff > 0.0) || order < 1) {
            fail(ErrorKind::Config, "Butterworth filter needs a positive cutoff and order");
        }
        meta_.backend = FilterBackend::Butterworth;
        meta_.cutoff = cutoff;
        const int dim = l.dim();
        // Interleave near-real and near-imaginary roots to limit intermediate growth.
        std::vector<int> ks;
        for (int lo = 0, hi = order / 2 - 1; lo <= hi; ++lo, --hi) {
            ks.push_back(lo);
            if (hi != lo) {
                ks.push_back(hi);
            }
        }
        for (int k : ks) {
            const cplx z = std::polar(1.0, std::numbers::pi * (2 * k + 1) / order);
            roots_.push_back(z);
            if (l.is_sparse()) {
                Eigen::SparseMatrix<cplx> a = (l.sparse->cast<cplx>() / cplx(cutoff));
                Eigen::SparseMatrix<cplx> id(dim, dim);
                id.setIdentity();
                a -= z * id;
                auto lu = std::make_shared<Eigen::SparseLU<Eigen::SparseMatrix<cplx>>>();
                lu->compute(a);
                if (lu->info() != Eigen::Success) {
                    fail(ErrorKind::Numeric, "Butterworth shifted factorization failed");
                }
                sparse_lu_.push_back(lu);
            } else {
                MatrixXc a = l.dense.cast<cplx>() / cplx(cutoff);
                a.diagonal().array() -= z;
                dense_lu_.push_back(std::make_shared<Eigen::PartialPivLU<MatrixXc>>(a));
            }
        }
        if (order % 2 == 1) {
            // Real root z = −1: (L/x_c + I)⁻¹.
            if (l.is_sparse()) {
                SparseMatrixd a = *l.sparse / cutoff;
                SparseMatrixd id(dim, dim);
                id.setIdentity();
                a += id;
                real_ldlt_ = std::make_shared<Eigen::SimplicialLDLT<SparseMatrixd>>(a);
            } else {
                real_llt_ = std::make_shared<Eigen::LLT<MatrixXd>>(
                    l.dense / cutoff + MatrixXd::Identity(dim, dim));
            }
        }
    }

    MatrixXd apply(const MatrixXd& b) const override
    {
        MatrixXd x = b;
        for (std::size_t i = 0; i < roots_.size(); ++i) {
            const MatrixXc rhs = x.cast<cplx>();
            const MatrixXc y = l_->is_sparse() ? MatrixXc(sparse_lu_[i]->solve(rhs)) : MatrixXc(dense_lu_[i]->solve(rhs));
            x = y.imag() / roots_[i].imag();
        }
        if (real_ldlt_) {
            x = real_ldlt_->solve(x);
        } else if (real_llt_) {
            x = real_llt_->solve(x);
        }
        return x;
    }

    double scalar(double x) const { return butterworth(x, cutoff_, order_); }

private:
    const GraphLaplacian* l_;
    double cutoff_;
    int order_;
    std::vector<cplx> roots_;
    std::vector<std::shared_ptr<Eigen::SparseLU<Eigen::SparseMatrix<cplx>>>> sparse_lu_;
    std::vector<std::shared_ptr<Eigen::PartialPivLU<MatrixXc>>> dense_lu_;
    std::shared_ptr<Eigen::SimplicialLDLT<SparseMatrixd>> real_ldlt_;
    std::shared_ptr<Eigen::LLT<MatrixXd>> real_llt_;
};

/// Chebyshev expansion of the Butterworth profile on [0, upper].
class ChebyshevFilter final : public LaplacianFilter {
public:
    ChebyshevFilter(const GraphLaplacian& l, double cutoff, int order, int poly_count, double upper)
        : l_(&l)
    {
        if (!(cutoff > 0.0) || !(upper > 0.0)) {
            fail(ErrorKind::Config, "Chebyshev filter needs positive cutoff and spectral bound");
        }
        meta_.backend = FilterBackend::Chebyshev;
        meta_.cutoff = cutoff;
        series_ = ChebyshevSeries::fit(
            [&](double x) { return butterworth(x, cutoff, order); }, 0.0, upper, poly_count, 2 * poly_count);
    }

    explicit ChebyshevFilter(const GraphLaplacian& l, ChebyshevSeries series)
        : l_(&l)
        , series_(std::move(series))
    {
        meta_.backend = FilterBackend::Chebyshev;
    }

    MatrixXd apply(const MatrixXd& b) const override { return series_.apply(*l_, b); }
    const ChebyshevSeries& series() const { return series_; }

private:
    const GraphLaplacian* l_;
    ChebyshevSeries series_;
};

/// h_0 = 0 and h_{N_X} = I, whatever the backend.
class EndpointFilter final : public LaplacianFilter {
public:
    EndpointFilter(FilterBackend backend, int n, int dim)
        : full_(n == dim)
    {
        meta_.backend = backend;
        meta_.n = n;
    }

    MatrixXd apply(const MatrixXd& b) const override { return full_ ? b : MatrixXd::Zero(b.rows(), b.cols()); }

private:
    bool full_;
};

/// Everything a backend may need for one Laplacian. The exact spectral basis
/// and the estimator are optional and built on demand by the owner.
struct FilterContext {
    const GraphLaplacian* laplacian = nullptr;
    const SpectralBasis* exact = nullptr;
    const SpectrumEstimator* estimator = nullptr;
};

inline std::unique_ptr<LaplacianFilter> make_filter(const SpectralFilterSpec& spec, const FilterContext& ctx)
{
    const GraphLaplacian& l = *ctx.laplacian;
    validate(spec, l.dim());
    auto cutoff = [&]() {
        if (spec.cutoff) {
            return *spec.cutoff;
        }
        if (ctx.estimator) {
            return ctx.estimator->cutoff_for(spec.n);
        }
        fail(ErrorKind::Config, "filter cutoff not given and no spectrum estimator available");
    };
    std::unique_ptr<LaplacianFilter> f;
    if (spec.backend != FilterBackend::ExactSvd && (spec.n == 0 || spec.n == l.dim())) {
        return std::make_unique<EndpointFilter>(spec.backend, spec.n, l.dim());
    }
    switch (spec.backend) {
    case FilterBackend::ExactSvd:
        if (!ctx.exact) {
            fail(ErrorKind::Config, "exact SVD backend requested without a spectral basis");
        }
        f = std::make_unique<ExactSvdFilter>(*ctx.exact, spec.n);
        break;
    case FilterBackend::PowerMethod:
        f = std::make_unique<PowerMethodFilter>(l, spec);
        break;
    case FilterBackend::Butterworth:
        f = std::make_unique<ButterworthFilter>(l, cutoff(), spec.butterworth_order);
        break;
    case FilterBackend::Chebyshev: {
        const double upper = ctx.estimator ? ctx.estimator->upper() : 1.1 * largest_eigenvalue(l, spec.seed);
        f = std::make_unique<ChebyshevFilter>(l, cutoff(), spec.butterworth_order, spec.poly_count, upper);
        break;
    }
    }
    return f;
}

// ---------------------------------------------------------------------------
// Filtered quantities

/// (XᵀX)_n B = L h(L) B.
inline MatrixXd filtered_laplacian_apply(const GraphLaplacian& l, const LaplacianFilter& h, const MatrixXd& b)
{
    return l.apply(h.apply(b));
}

/// (XᵀX)⁺_n B = L⁺ h(L) B.
inline MatrixXd filtered_pinv_apply(const LaplacianPinv& pinv, const LaplacianFilter& h, const MatrixXd& b)
{
    return pinv.apply(h.apply(b));
}

/// Dense (XᵀX)_n.
inline MatrixXd filtered_laplacian(const GraphLaplacian& l, const LaplacianFilter& h)
{
    MatrixXd m = filtered_laplacian_apply(l, h, MatrixXd::Identity(l.dim(), l.dim()));
    return 0.5 * (m + m.transpose());
}

/// X_n = X (XᵀX)⁺(XᵀX)_n = X h(L).
inline MatrixXd filtered_basis(const MatrixXd& x, const LaplacianFilter& h)
{
    return x * h.apply(MatrixXd(MatrixXd::Identity(x.cols(), x.cols())));
}

/// P_n = X (XᵀX)⁺_n Xᵀ.
inline MatrixXd filtered_projector(const MatrixXd& x, const LaplacianPinv& pinv, const LaplacianFilter& h)
{
    MatrixXd p = x * pinv.apply(h.apply(MatrixXd(x.transpose())));
    return 0.5 * (p + p.transpose());
}

enum class FilterKind { Sigma, LambdaH, DualLambda, DualSigmaH };

/// Projector-type filters; the H-completed kinds add P^H.
///   P_n^Σ, P_n^{ΛH} = Λ-filter + P^H, dual P_n^Λ, dual P_n^{ΣH} = Σ-filter + P^H.
inline MatrixXd filter_projector(const MatrixXd& x, const LaplacianPinv& pinv, const LaplacianFilter& h,
    FilterKind kind, const ProjectorSet& base)
{
    MatrixXd p = filtered_projector(x, pinv, h);
    if (kind == FilterKind::LambdaH || kind == FilterKind::DualSigmaH) {
        p += base.P_H;
    }
    return p;
}

} // namespace qhf

#endif // QHF_FILTERS_HPP
