#ifndef QHF_PRECOND_HPP
#define QHF_PRECOND_HPP

// Filtered Loop-Star (W) and quasi-Helmholtz filter (Q) preconditioners for
// the EFIE, with dyadic spectral sampling and norm-based band scaling.

#include "qhf/efie.hpp"
#include "qhf/filters.hpp"
#include "qhf/krylov.hpp"
#include "qhf/qhd.hpp"

#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace qhf {

/// Combinatorial frame: Σ, Λ and the raw operators T, v.
/// Normalized frame: Σ̃, Λ̃ and T̃ = G^{-1/2} T G^{-1/2}, ṽ = G^{-1/2} v.
enum class BasisFrame { Combinatorial, Normalized };

inline const char* to_string(BasisFrame f) { return f == BasisFrame::Combinatorial ? "combinatorial" : "normalized"; }

inline BasisFrame basis_frame_from_string(const std::string& s)
{
    if (s == "combinatorial") {
        return BasisFrame::Combinatorial;
    }
    if (s == "normalized") {
        return BasisFrame::Normalized;
    }
    fail(ErrorKind::Config, "unknown basis frame '" + s + "'");
}

/// One side (Star or Loop) of the decomposition with its Laplacian and the
/// spectral helpers filters need. Exact SVD and estimator are built lazily.
/// Holds internal pointers, so it is neither copyable nor movable.
class HelmholtzSide {
public:
    HelmholtzSide(IncidenceKind kind, MatrixXd x, GraphLaplacian laplacian, MatrixXd components)
        : kind_(kind)
        , x_(std::move(x))
        , laplacian_(std::move(laplacian))
        , components_(std::move(components))
        , pinv_(laplacian_)
    {
    }

    HelmholtzSide(const HelmholtzSide&) = delete;
    HelmholtzSide& operator=(const HelmholtzSide&) = delete;

    IncidenceKind kind() const { return kind_; }
    const MatrixXd& x() const { return x_; }
    const GraphLaplacian& laplacian() const { return laplacian_; }
    const LaplacianPinv& pinv() const { return pinv_; }
    /// Per-component indicator columns over the columns of X.
    const MatrixXd& components() const { return components_; }
    int dim() const { return static_cast<int>(x_.cols()); }
    int rows() const { return static_cast<int>(x_.rows()); }
    int nullity() const { return laplacian_.nullspace_dim(); }

    const SpectralBasis& exact() const
    {
        if (!exact_) {
            exact_ = spectral_basis(x_, nullity());
        }
        return *exact_;
    }

    const SpectrumEstimator& estimator() const
    {
        if (!estimator_) {
            estimator_.emplace(laplacian_);
        }
        return *estimator_;
    }

    std::unique_ptr<LaplacianFilter> filter(SpectralFilterSpec spec, int n) const
    {
        spec.n = n;
        FilterContext ctx;
        ctx.laplacian = &laplacian_;
        if (spec.backend == FilterBackend::ExactSvd) {
            ctx.exact = &exact();
        }
        if (spec.backend == FilterBackend::Butterworth || spec.backend == FilterBackend::Chebyshev) {
            ctx.estimator = &estimator();
        }
        return make_filter(spec, ctx);
    }

    /// P^X = X (XᵀX)⁺ Xᵀ.
    MatrixXd projector() const
    {
        MatrixXd p = x_ * pinv_.apply(MatrixXd(x_.transpose()));
        return 0.5 * (p + p.transpose());
    }

private:
    IncidenceKind kind_;
    MatrixXd x_;
    GraphLaplacian laplacian_;
    MatrixXd components_;
    LaplacianPinv pinv_;
    mutable std::optional<SpectralBasis> exact_;
    mutable std::optional<SpectrumEstimator> estimator_;
};

/// Both sides of the decomposition on one mesh, plus the harmonic projector.
struct Decomposition {
    BasisFrame frame = BasisFrame::Combinatorial;
    std::unique_ptr<HelmholtzSide> sigma;
    std::unique_ptr<HelmholtzSide> lambda;
    MatrixXd P_H;
    int harmonic_dim = 0;
    MatrixXd g_inv_sqrt; // normalized frame only

    int num_edges() const { return sigma->rows(); }

    /// RWG coefficients from frame coefficients.
    VectorXc to_rwg(const VectorXc& y) const
    {
        return frame == BasisFrame::Normalized ? VectorXc(mul(g_inv_sqrt, MatrixXc(y)).col(0)) : y;
    }

    /// Operators expressed in this frame.
    OperatorSet system(const OperatorSet& ops) const
    {
        if (ops.normalized) {
            fail(ErrorKind::Config, "expected raw operators, got normalized ones");
        }
        return frame == BasisFrame::Normalized ? normalize_operator(ops, g_inv_sqrt) : ops;
    }
};

inline Decomposition decompose(const TriangleMesh& mesh, const BasisTopology& topo, BasisFrame frame)
{
    const IncidenceMatrix s = sigma_matrix(topo);
    const IncidenceMatrix l = lambda_matrix(topo, mesh.num_vertices());
    Decomposition d;
    d.frame = frame;
    MatrixXd sc = component_indicators(s.entries);
    MatrixXd lc = component_indicators(l.entries);
    if (frame == BasisFrame::Combinatorial) {
        d.sigma = std::make_unique<HelmholtzSide>(IncidenceKind::Sigma, s.dense(), graph_laplacian(s), sc);
        d.lambda = std::make_unique<HelmholtzSide>(IncidenceKind::Lambda, l.dense(), graph_laplacian(l), lc);
    } else {
        const NormalizedBases nb
            = normalized_bases(s, l, gram_rwg(mesh, topo), gram_patch(mesh), gram_pyramid(mesh));
        d.sigma = std::make_unique<HelmholtzSide>(IncidenceKind::Sigma, nb.sigma,
            dense_laplacian(nb.sigma, LaplacianBase::NormalizedSigma, nb.sigma_nullspace), sc);
        d.lambda = std::make_unique<HelmholtzSide>(IncidenceKind::Lambda, nb.lambda,
            dense_laplacian(nb.lambda, LaplacianBase::NormalizedLambda, nb.lambda_nullspace), lc);
        d.g_inv_sqrt = nb.g_inv_sqrt;
    }
    const int n = topo.num_edges();
    d.P_H = MatrixXd::Identity(n, n) - d.sigma->projector() - d.lambda->projector();
    d.P_H = 0.5 * (d.P_H + d.P_H.transpose()).eval();
    d.harmonic_dim = static_cast<int>(std::lround(d.P_H.trace()));
    return d;
}

// ---------------------------------------------------------------------------
// Dyadic sampling

enum class WeightSource { Exact, Estimate };

/// Bands [lo_b, hi_b) over ascending Laplacian ranks with boundaries at the
/// level indices; the last band is terminal and ends at dim.
struct DyadicSampling {
    int alpha = 2;
    IncidenceKind side = IncidenceKind::Sigma;
    int dim = 0;
    double weight_exponent = 0.0;
    std::vector<int> level_indices;
    std::vector<double> level_weights; // one per band
    std::vector<int> sample_ranks;     // 1-based rank each weight was sampled at

    int bands() const { return static_cast<int>(level_indices.size()) + 1; }
    int band_lo(int b) const { return b == 0 ? 0 : level_indices[b - 1]; }
    int band_hi(int b) const { return b + 1 < bands() ? level_indices[b] : dim; }
};

/// Level indices α^l − 1 below dim, unit weights.
inline DyadicSampling dyadic_levels(int dim, int alpha, IncidenceKind side = IncidenceKind::Sigma)
{
    if (alpha < 2) {
        fail(ErrorKind::Config, "dyadic sampling needs alpha >= 2");
    }
    if (dim < 1) {
        fail(ErrorKind::Config, "dyadic sampling needs a non-empty Laplacian");
    }
    DyadicSampling s;
    s.alpha = alpha;
    s.side = side;
    s.dim = dim;
    for (long long p = alpha; p - 1 < dim; p *= alpha) {
        s.level_indices.push_back(static_cast<int>(p - 1));
    }
    s.level_weights.assign(s.bands(), 1.0);
    for (int b = 0; b < s.bands(); ++b) {
        s.sample_ranks.push_back(s.band_lo(b) + 1);
    }
    return s;
}

/// Single band covering the whole spectrum with unit weight.
inline DyadicSampling unit_sampling(int dim, IncidenceKind side)
{
    DyadicSampling s;
    s.side = side;
    s.dim = dim;
    s.level_weights = {1.0};
    s.sample_ranks = {1};
    return s;
}

/// Weights λ_r^exponent with r the first rank of each band. Levels that hold
/// only null modes are merged into the following band, and a band starting in
/// the nullspace is sampled at the first nonzero rank.
inline DyadicSampling build_dyadic_sampling(
    const HelmholtzSide& side, int alpha, double exponent, WeightSource source)
{
    DyadicSampling s = dyadic_levels(side.dim(), alpha, side.kind());
    s.weight_exponent = exponent;
    const int nullity = side.nullity();
    std::erase_if(s.level_indices, [&](int n) { return n <= nullity; });
    s.level_weights.clear();
    s.sample_ranks.clear();
    for (int b = 0; b < s.bands(); ++b) {
        const int r = std::max(s.band_lo(b) + 1, nullity + 1);
        if (r > side.dim()) {
            fail(ErrorKind::Numeric, "Laplacian has no nonzero eigenvalue to sample");
        }
        double w = 1.0;
        if (exponent != 0.0) {
            const double lambda
                = source == WeightSource::Exact ? side.exact().lambda[r - 1] : side.estimator().at_rank(r);
            if (!(lambda > 0.0) || !std::isfinite(lambda)) {
                fail(ErrorKind::Numeric, "Laplacian eigenvalue estimate at rank " + std::to_string(r)
                        + " is not positive");
            }
            w = std::pow(lambda, exponent);
        }
        s.sample_ranks.push_back(r);
        s.level_weights.push_back(w);
    }
    return s;
}

// ---------------------------------------------------------------------------
// Band pieces

enum class BandTarget { Basis, Projector };

/// Per-band pieces, frequency independent:
///   Basis:     X (h_hi − h_lo)(L)               N × N_X
///   Projector: X L⁺ (h_hi − h_lo)(L) Xᵀ        N × N
/// with h_0 = 0 and h_{N_X} = I.
struct FilteredBands {
    BandTarget target = BandTarget::Basis;
    DyadicSampling sampling;
    std::string backend;
    std::vector<MatrixXd> pieces;
    std::vector<FilterMeta> filters;

    MatrixXd weighted_sum(const std::vector<double>& w) const
    {
        if (w.size() != pieces.size() || pieces.empty()) {
            fail(ErrorKind::Config, "band weights do not match the band count");
        }
        MatrixXd out = w[0] * pieces[0];
        for (std::size_t b = 1; b < pieces.size(); ++b) {
            out += w[b] * pieces[b];
        }
        return out;
    }

    MatrixXd weighted_sum() const { return weighted_sum(sampling.level_weights); }
};

inline FilteredBands build_bands(
    const HelmholtzSide& side, const DyadicSampling& s, const SpectralFilterSpec& spec, BandTarget target)
{
    if (s.dim != side.dim() || s.side != side.kind()) {
        fail(ErrorKind::Config, "dyadic sampling does not belong to this Laplacian");
    }
    FilteredBands out;
    out.target = target;
    out.sampling = s;
    out.backend = to_string(spec.backend);
    if (spec.backend == FilterBackend::ExactSvd) {
        // Bands straight from the singular vectors: U_b U_bᵀ, or U_b S_b V_bᵀ.
        const SpectralBasis& e = side.exact();
        for (int b = 0; b < s.bands(); ++b) {
            if (s.band_hi(b) < side.dim()) {
                out.filters.push_back(ExactSvdFilter(e, s.band_hi(b)).meta());
            }
            const int lo = std::max(s.band_lo(b), e.nullity);
            const int hi = std::max(s.band_hi(b), lo);
            const auto u = e.u.middleCols(lo, hi - lo);
            if (target == BandTarget::Projector) {
                out.pieces.push_back(u * u.transpose());
            } else {
                out.pieces.push_back(u * e.sigma.segment(lo, hi - lo).asDiagonal() * e.v.middleCols(lo, hi - lo).transpose());
            }
        }
        return out;
    }
    // Band matrices h_hi(L) − h_lo(L) on the identity; a projector piece is
    // then X L⁺ band Xᵀ since h(L) commutes with L⁺.
    const int dim = side.dim();
    const MatrixXd id = MatrixXd::Identity(dim, dim);
    std::vector<std::unique_ptr<LaplacianFilter>> hs;
    for (int b = 0; b < s.bands(); ++b) {
        if (s.band_hi(b) < dim) {
            hs.push_back(side.filter(spec, s.band_hi(b)));
            out.filters.push_back(hs.back()->meta());
        }
    }
    std::vector<MatrixXd> cur;
    std::vector<const ChebyshevSeries*> series;
    for (const auto& h : hs) {
        if (const auto* c = dynamic_cast<const ChebyshevFilter*>(h.get())) {
            series.push_back(&c->series());
        }
    }
    if (!hs.empty() && series.size() == hs.size()) {
        cur = ChebyshevSeries::apply_many(side.laplacian(), id, series);
    } else {
        for (const auto& h : hs) {
            cur.push_back(h->apply(id));
        }
    }
    cur.push_back(id);
    MatrixXd prev = MatrixXd::Zero(dim, dim);
    for (int b = 0; b < s.bands(); ++b) {
        const MatrixXd band = cur[b] - prev;
        if (target == BandTarget::Basis) {
            out.pieces.push_back(side.x() * band);
        } else {
            const MatrixXd xb = side.x() * side.pinv().apply(band);
            MatrixXd p = xb * side.x().transpose();
            out.pieces.push_back(0.5 * (p + p.transpose()));
        }
        prev = cur[b];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Norm estimates

struct NormOptions {
    double tol = 1e-3;
    int max_iterations = 200;
    unsigned seed = 11;
};

/// ‖A‖₂ by power iteration on AᴴA.
inline double power_norm(const std::function<VectorXc(const VectorXc&)>& apply,
    const std::function<VectorXc(const VectorXc&)>& apply_adjoint, int n, const NormOptions& opt,
    const std::string& what)
{
    std::mt19937 rng(opt.seed);
    std::normal_distribution<double> dist;
    VectorXc x(n);
    for (int i = 0; i < n; ++i) {
        x[i] = cplx(dist(rng), dist(rng));
    }
    x.normalize();
    double est = 0.0;
    for (int it = 0; it < opt.max_iterations; ++it) {
        const VectorXc y = apply(x);
        const double ny = y.norm();
        if (!std::isfinite(ny)) {
            fail(ErrorKind::Numeric, "norm estimate of " + what + " is not finite");
        }
        if (ny == 0.0) {
            if (it == 0) {
                fail(ErrorKind::Numeric, what + " is a zero operator block");
            }
            break;
        }
        const VectorXc z = apply_adjoint(y);
        const double nz = z.norm();
        const double next = std::sqrt(nz);
        if (nz == 0.0) {
            fail(ErrorKind::Numeric, what + " is a zero operator block");
        }
        x = z / nz;
        if (it > 0 && std::abs(next - est) <= opt.tol * next) {
            return next;
        }
        est = next;
    }
    if (est == 0.0) {
        fail(ErrorKind::Numeric, what + " is a zero operator block");
    }
    fail(ErrorKind::Convergence, "power iteration for " + what + " did not converge");
}

namespace detail {

/// B x for real B and complex x, as two real GEMVs.
inline VectorXc real_apply(const MatrixXd& b, const VectorXc& x)
{
    VectorXc y(b.rows());
    y.real() = b * x.real();
    y.imag() = b * x.imag();
    return y;
}

inline VectorXc real_apply_transposed(const MatrixXd& b, const VectorXc& x)
{
    VectorXc y(b.cols());
    y.real() = b.transpose() * x.real();
    y.imag() = b.transpose() * x.imag();
    return y;
}

} // namespace detail

/// ‖Bᵀ A B‖₂ for real B without forming the product.
inline double sandwich_norm(const MatrixXd& b, const MatrixXc& a, const NormOptions& opt, const std::string& what)
{
    auto fwd = [&](const VectorXc& x) {
        const VectorXc y = a * detail::real_apply(b, x);
        return detail::real_apply_transposed(b, y);
    };
    auto adj = [&](const VectorXc& x) {
        const VectorXc y = a.adjoint() * detail::real_apply(b, x);
        return detail::real_apply_transposed(b, y);
    };
    return power_norm(fwd, adj, static_cast<int>(b.cols()), opt, what);
}

// ---------------------------------------------------------------------------
// Bundles

enum class PreconditionerVariant { Identity, FilteredLoopStar, QhFilters, QhFiltersNormScaled };

inline const char* to_string(PreconditionerVariant v)
{
    switch (v) {
    case PreconditionerVariant::Identity: return "identity";
    case PreconditionerVariant::FilteredLoopStar: return "filtered-loop-star";
    case PreconditionerVariant::QhFilters: return "qh-filters";
    case PreconditionerVariant::QhFiltersNormScaled: return "qh-filters-norm-scaled";
    }
    return "unknown";
}

struct PreconditionerScaling {
    double c_sigma = 0.0;
    double c_lambda = 0.0;
    double b_sigma = 0.0;
    double b_lambda = 0.0;
    double b_h = 0.0;
    bool harmonic_term = false;
};

/// The map M = loop + star + harmonic parts. The preconditioned system is
/// Mᵀ T M ĵ = Mᵀ ṽ (Qᵀ = Q for the Q-variants), and j = G^{-1/2} M ĵ in the
/// normalized frame. Keeping the parts apart lets Th act on the star part only.
struct PreconditionerBundle {
    PreconditionerVariant variant = PreconditionerVariant::Identity;
    BasisFrame frame = BasisFrame::Combinatorial;
    MatrixXc loop_part;
    MatrixXc star_part;
    MatrixXc harmonic_part;
    PreconditionerScaling scaling;
    DyadicSampling sigma_sampling;
    DyadicSampling lambda_sampling;
    std::vector<int> removed_sigma_columns;
    std::vector<int> removed_lambda_columns;
    int isolated_values = 0;
    bool imaginary_sigma = false;
    int alpha = 0;
    std::string backend;

    int rows() const { return static_cast<int>(loop_part.rows()); }
    int cols() const { return static_cast<int>(loop_part.cols()); }

    MatrixXc map() const
    {
        MatrixXc m = loop_part;
        if (star_part.size()) {
            m += star_part;
        }
        if (harmonic_part.size()) {
            m += harmonic_part;
        }
        return m;
    }
};

inline PreconditionerBundle identity_bundle(int n, BasisFrame frame)
{
    PreconditionerBundle b;
    b.frame = frame;
    b.loop_part = MatrixXc::Identity(n, n);
    b.backend = "none";
    return b;
}

struct ReducedBasis {
    MatrixXd basis;
    std::vector<int> removed;
    DyadicSampling sampling;
    std::string backend;
};

/// Drops the last column of each connected component of the Laplacian graph.
inline ReducedBasis remove_component_columns(const MatrixXd& xp, const HelmholtzSide& side)
{
    ReducedBasis out;
    const MatrixXd& comp = side.components();
    for (Eigen::Index c = 0; c < comp.cols(); ++c) {
        int last = -1;
        for (Eigen::Index i = 0; i < comp.rows(); ++i) {
            if (comp(i, c) != 0.0) {
                last = static_cast<int>(i);
            }
        }
        if (last >= 0) {
            out.removed.push_back(last);
        }
    }
    std::sort(out.removed.begin(), out.removed.end());
    out.basis.resize(xp.rows(), xp.cols() - static_cast<Eigen::Index>(out.removed.size()));
    Eigen::Index dst = 0;
    std::size_t k = 0;
    for (Eigen::Index j = 0; j < xp.cols(); ++j) {
        if (k < out.removed.size() && out.removed[k] == j) {
            ++k;
            continue;
        }
        out.basis.col(dst++) = xp.col(j);
    }
    return out;
}

/// X_{p,α}: weighted telescoping sum of filtered bases, component columns removed.
inline ReducedBasis build_filtered_ls_basis(
    const HelmholtzSide& side, const DyadicSampling& s, const SpectralFilterSpec& spec)
{
    const FilteredBands bands = build_bands(side, s, spec, BandTarget::Basis);
    ReducedBasis out = remove_component_columns(bands.weighted_sum(), side);
    out.sampling = s;
    out.backend = bands.backend;
    return out;
}

/// W = [√c_Λ Λ_{p,α}  √c_Σ Σ_{p,α}] for genus-0 meshes.
inline PreconditionerBundle build_W(const Decomposition& dec, const OperatorSet& sys, const ReducedBasis& sigma_p,
    const ReducedBasis& lambda_p, const NormOptions& nopt = {})
{
    if (dec.harmonic_dim != 0) {
        fail(ErrorKind::Config, "the filtered Loop-Star preconditioner needs a simply connected mesh (dim H = "
                + std::to_string(dec.harmonic_dim) + ")");
    }
    if (sys.normalized != (dec.frame == BasisFrame::Normalized)) {
        fail(ErrorKind::Config, "operator normalization does not match the decomposition frame");
    }
    PreconditionerBundle b;
    b.variant = PreconditionerVariant::FilteredLoopStar;
    b.frame = dec.frame;
    b.scaling.c_lambda = 1.0 / sandwich_norm(lambda_p.basis, sys.Ts, nopt, "loop block of Ts");
    b.scaling.c_sigma = 1.0 / sandwich_norm(sigma_p.basis, sys.Th, nopt, "star block of Th");
    const Eigen::Index n = lambda_p.basis.rows();
    const Eigen::Index ml = lambda_p.basis.cols();
    const Eigen::Index ms = sigma_p.basis.cols();
    b.loop_part = MatrixXc::Zero(n, ml + ms);
    b.star_part = MatrixXc::Zero(n, ml + ms);
    b.loop_part.leftCols(ml) = (std::sqrt(b.scaling.c_lambda) * lambda_p.basis).cast<cplx>();
    b.star_part.rightCols(ms) = (std::sqrt(b.scaling.c_sigma) * sigma_p.basis).cast<cplx>();
    b.removed_sigma_columns = sigma_p.removed;
    b.removed_lambda_columns = lambda_p.removed;
    b.isolated_values = static_cast<int>(sigma_p.removed.size() + lambda_p.removed.size());
    b.sigma_sampling = sigma_p.sampling;
    b.lambda_sampling = lambda_p.sampling;
    b.alpha = sigma_p.sampling.alpha;
    b.backend = sigma_p.backend;
    return b;
}

namespace detail {

inline PreconditionerBundle assemble_q(const Decomposition& dec, const OperatorSet& sys, const MatrixXd& q_sigma,
    const MatrixXd& q_lambda, PreconditionerVariant variant, const NormOptions& nopt)
{
    if (sys.normalized != (dec.frame == BasisFrame::Normalized)) {
        fail(ErrorKind::Config, "operator normalization does not match the decomposition frame");
    }
    PreconditionerBundle b;
    b.variant = variant;
    b.frame = dec.frame;
    b.imaginary_sigma = true;
    b.scaling.b_lambda = 1.0 / sandwich_norm(q_lambda, sys.Ts, nopt, "Q^Λ Ts Q^Λ");
    b.scaling.b_sigma = 1.0 / sandwich_norm(q_sigma, sys.Th, nopt, "Q^Σ Th Q^Σ");
    b.loop_part = (std::sqrt(b.scaling.b_lambda) * q_lambda).cast<cplx>();
    b.star_part = cplx(0.0, std::sqrt(b.scaling.b_sigma)) * q_sigma.cast<cplx>();
    if (dec.harmonic_dim > 0) {
        b.scaling.harmonic_term = true;
        b.scaling.b_h = 1.0 / sandwich_norm(dec.P_H, sys.Ts, nopt, "P^H Ts P^H");
        b.harmonic_part = (std::sqrt(b.scaling.b_h) * dec.P_H).cast<cplx>();
    }
    return b;
}

} // namespace detail

/// Q = √b_Λ Q^Λ + i√b_Σ Q^Σ + √b_H P^H with eigenvalue-sampled band weights.
inline PreconditionerBundle build_Q(const Decomposition& dec, const OperatorSet& sys, const FilteredBands& sigma,
    const FilteredBands& lambda, const NormOptions& nopt = {})
{
    if (sigma.target != BandTarget::Projector || lambda.target != BandTarget::Projector) {
        fail(ErrorKind::Config, "Q needs projector bands");
    }
    PreconditionerBundle b = detail::assemble_q(
        dec, sys, sigma.weighted_sum(), lambda.weighted_sum(), PreconditionerVariant::QhFilters, nopt);
    b.sigma_sampling = sigma.sampling;
    b.lambda_sampling = lambda.sampling;
    b.alpha = sigma.sampling.alpha;
    b.backend = sigma.backend;
    return b;
}

/// Per-band weights ‖B_l A B_l‖^{-1/2}.
inline std::vector<double> norm_band_weights(
    const FilteredBands& bands, const MatrixXc& a, const NormOptions& nopt, const std::string& what)
{
    std::vector<double> w;
    for (std::size_t l = 0; l < bands.pieces.size(); ++l) {
        const double nrm = sandwich_norm(bands.pieces[l], a, nopt, what + " band " + std::to_string(l));
        w.push_back(1.0 / std::sqrt(nrm));
    }
    return w;
}

/// Q with norm-based band weights b_l (Star side, against Th) and d_l (Loop
/// side, against Ts).
inline PreconditionerBundle build_Q_norm_scaled(const Decomposition& dec, const OperatorSet& sys,
    const FilteredBands& sigma, const FilteredBands& lambda, const NormOptions& nopt = {})
{
    if (sigma.target != BandTarget::Projector || lambda.target != BandTarget::Projector) {
        fail(ErrorKind::Config, "Q needs projector bands");
    }
    DyadicSampling ss = sigma.sampling;
    DyadicSampling ls = lambda.sampling;
    ss.level_weights = norm_band_weights(sigma, sys.Th, nopt, "Th");
    ls.level_weights = norm_band_weights(lambda, sys.Ts, nopt, "Ts");
    PreconditionerBundle b = detail::assemble_q(dec, sys, sigma.weighted_sum(ss.level_weights),
        lambda.weighted_sum(ls.level_weights), PreconditionerVariant::QhFiltersNormScaled, nopt);
    b.sigma_sampling = ss;
    b.lambda_sampling = ls;
    b.alpha = ss.alpha;
    b.backend = sigma.backend;
    return b;
}

// ---------------------------------------------------------------------------
// Preconditioned systems

struct PreconditionedSystem {
    MatrixXc a;
    VectorXc b;
    bool zeroed = false;
};

namespace detail {

/// A B, using real GEMMs when B is purely real or purely imaginary.
inline MatrixXc product(const MatrixXc& a, const MatrixXc& b)
{
    if (b.imag().isZero(0.0)) {
        return mul(a, MatrixXd(b.real()));
    }
    if (b.real().isZero(0.0)) {
        return cplx(0.0, 1.0) * mul(a, MatrixXd(b.imag()));
    }
    return a * b;
}

/// Bᵀ A B.
inline MatrixXc sandwich(const MatrixXc& b, const MatrixXc& a)
{
    const MatrixXc ab = product(a, b);
    const MatrixXc bt = b.transpose();
    if (bt.imag().isZero(0.0)) {
        return mul(MatrixXd(bt.real()), ab);
    }
    if (bt.real().isZero(0.0)) {
        return cplx(0.0, 1.0) * mul(MatrixXd(bt.imag()), ab);
    }
    return bt * ab;
}

} // namespace detail

/// Mᵀ T M and Mᵀ v. With zeroing, Th only meets the star part, which drops
/// every Th·Q^Λ, Q^Λ·Th, P^H·Th and Th·P^H product.
inline PreconditionedSystem preconditioned_system(
    const PreconditionerBundle& bundle, const OperatorSet& sys, bool zeroing)
{
    PreconditionedSystem out;
    if (bundle.variant == PreconditionerVariant::Identity) {
        out.a = sys.T();
        out.b = sys.v;
        return out;
    }
    const MatrixXc m = bundle.map();
    out.b = m.transpose() * sys.v;
    if (zeroing) {
        out.a = detail::sandwich(m, sys.Ts);
        out.a += detail::sandwich(bundle.star_part, sys.Th);
        out.zeroed = true;
    } else {
        out.a = detail::sandwich(m, sys.T());
    }
    return out;
}

inline PreconditionedSystem apply_stability_zeroing(const PreconditionerBundle& bundle, const OperatorSet& sys)
{
    return preconditioned_system(bundle, sys, true);
}

struct SolveOptions {
    KrylovOptions krylov;
    bool zeroing = true;
    bool throw_on_failure = true;
};

struct SolveReport {
    VectorXc j;     // RWG coefficients
    VectorXc jhat;  // preconditioned unknowns
    int iterations = 0;
    double residual = 0.0;      // preconditioned system, relative
    double rwg_residual = 0.0;  // ‖T y − v‖/‖v‖ in the frame, y = M ĵ
    bool converged = false;
};

inline SolveReport solve_preconditioned(const PreconditionerBundle& bundle, const Decomposition& dec,
    const OperatorSet& sys, const SolveOptions& opt = {})
{
    if (bundle.rows() != sys.v.size()) {
        fail(ErrorKind::Config, "preconditioner and operator dimensions differ");
    }
    const PreconditionedSystem ps = preconditioned_system(bundle, sys, opt.zeroing);
    const KrylovResult kr = cocg(ps.a, ps.b, opt.krylov);
    SolveReport r;
    r.jhat = kr.x;
    r.iterations = kr.iterations;
    r.residual = kr.residual;
    r.converged = kr.converged;
    const VectorXc y = bundle.variant == PreconditionerVariant::Identity ? kr.x : VectorXc(bundle.map() * kr.x);
    const double vn = sys.v.norm();
    r.rwg_residual = vn > 0.0 ? (sys.T() * y - sys.v).norm() / vn : 0.0;
    r.j = dec.to_rwg(y);
    if (!r.converged && opt.throw_on_failure) {
        fail(ErrorKind::Convergence, "COCG stopped after " + std::to_string(r.iterations)
                + " iterations at relative residual " + std::to_string(r.residual));
    }
    return r;
}

} // namespace qhf

#endif // QHF_PRECOND_HPP
