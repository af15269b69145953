#ifndef QHF_ANALYSIS_HPP
#define QHF_ANALYSIS_HPP

// Condition numbers, Laplacian-ordered spectra, slope fits and
// condition-number sweeps over meshes, frequencies and formulations.

#include "qhf/mesh_gen.hpp"
#include "qhf/precond.hpp"

#include <cstdio>
#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace qhf {

struct ConditionOptions {
    int exclude_isolated = 0;
    double null_tol = 1e-12; // relative to σ_max
};

struct ConditionInfo {
    double cond = 0.0;
    double sigma_max = 0.0; // largest retained
    double sigma_min = 0.0; // smallest retained
    int nullity = 0;
    int excluded = 0;
};

/// Drops singular values below null_tol·σ_max, then removes `exclude_isolated`
/// outliers one at a time from whichever end has the larger log-gap.
inline ConditionInfo condition_info(const VectorXd& singular, const ConditionOptions& opt = {})
{
    if (singular.size() == 0) {
        fail(ErrorKind::Numeric, "condition number of an empty matrix");
    }
    std::vector<double> s(singular.data(), singular.data() + singular.size());
    std::sort(s.begin(), s.end());
    const double top = s.back();
    if (!(top > 0.0) || !std::isfinite(top)) {
        fail(ErrorKind::Numeric, "condition number of an all-zero or non-finite matrix");
    }
    ConditionInfo info;
    std::size_t lo = 0;
    while (lo < s.size() && s[lo] <= opt.null_tol * top) {
        ++lo;
    }
    info.nullity = static_cast<int>(lo);
    std::size_t hi = s.size() - 1;
    for (int e = 0; e < opt.exclude_isolated; ++e) {
        if (hi <= lo) {
            fail(ErrorKind::Numeric, "cannot exclude more isolated singular values than available");
        }
        const double gap_lo = std::log(s[lo + 1] / s[lo]);
        const double gap_hi = std::log(s[hi] / s[hi - 1]);
        if (gap_lo >= gap_hi) {
            ++lo;
        } else {
            --hi;
        }
        ++info.excluded;
    }
    info.sigma_max = s[hi];
    info.sigma_min = s[lo];
    info.cond = s[hi] / s[lo];
    return info;
}

inline double condition_number(const MatrixXc& a, const ConditionOptions& opt = {})
{
    return condition_info(singular_values(a), opt).cond;
}

inline double condition_number(const MatrixXd& a, const ConditionOptions& opt = {})
{
    return condition_info(singular_values(a), opt).cond;
}

inline double condition_number(const MatrixXc& a, int exclude_isolated)
{
    return condition_number(a, ConditionOptions{exclude_isolated});
}

// ---------------------------------------------------------------------------
// Spectra ordered by Laplacian eigenvectors

struct SpectrumReport {
    VectorXd labels; // ξ = 1, 2, ...
    VectorXd values; // first entry scaled to one
    double scale = 1.0; // unnormalized first value
    std::string operator_name;
    std::string mesh_id;
    double frequency = 0.0;
};

/// values_i = |e_iᵀ A e_i| for the columns e_i of `eigvectors`, which must be
/// ordered by ascending Laplacian eigenvalue.
inline SpectrumReport spectrum_by_laplacian_ordering(const MatrixXc& block, const MatrixXd& eigvectors)
{
    if (block.rows() != block.cols() || block.cols() != eigvectors.rows()) {
        fail(ErrorKind::Config, "operator block and eigenvectors have incompatible sizes");
    }
    const MatrixXc ae = mul(block, eigvectors);
    SpectrumReport r;
    const Eigen::Index n = eigvectors.cols();
    r.labels = VectorXd::LinSpaced(n, 1.0, static_cast<double>(n));
    r.values.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        r.values[i] = std::abs(eigvectors.col(i).cast<cplx>().cwiseProduct(ae.col(i)).sum());
    }
    if (n > 0) {
        r.scale = r.values[0];
        if (r.scale > 0.0) {
            r.values /= r.scale;
        }
    }
    return r;
}

/// 1-based inclusive label range; {0, 0} means all points.
struct SlopeWindow {
    int first = 0;
    int last = 0;
};

/// Least-squares slope of log(value) against log(ξ).
inline double slope_fit(const SpectrumReport& report, SlopeWindow window = {})
{
    const int n = static_cast<int>(report.values.size());
    const int first = window.first > 0 ? window.first : 1;
    const int last = window.last > 0 ? window.last : n;
    if (first < 1 || last > n || last - first + 1 < 8) {
        fail(ErrorKind::Config, "slope window needs at least 8 points inside the report");
    }
    double sx = 0.0;
    double sy = 0.0;
    double sxx = 0.0;
    double sxy = 0.0;
    int m = 0;
    for (int i = first - 1; i < last; ++i) {
        if (!(report.values[i] > 0.0) || !(report.labels[i] > 0.0)) {
            fail(ErrorKind::Numeric, "slope fit needs positive labels and values");
        }
        const double x = std::log(report.labels[i]);
        const double y = std::log(report.values[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++m;
    }
    const double den = m * sxx - sx * sx;
    if (!(std::abs(den) > 0.0)) {
        fail(ErrorKind::Config, "degenerate slope window");
    }
    return (m * sxy - sx * sy) / den;
}

/// Left singular vectors of X for the nonzero Laplacian eigenvalues, ascending.
inline MatrixXd laplacian_modes(const HelmholtzSide& side)
{
    const SpectralBasis& e = side.exact();
    return e.u.rightCols(e.dim() - e.nullity);
}

/// Coefficient-space eigenvectors of XᵀX for the nonzero eigenvalues, ascending.
inline MatrixXd laplacian_coefficient_modes(const HelmholtzSide& side)
{
    const SpectralBasis& e = side.exact();
    return e.v.rightCols(e.dim() - e.nullity);
}

// ---------------------------------------------------------------------------
// Condition-number sweeps

enum class Formulation { Plain, LoopStar, FilteredLoopStar, QhProjectors, FilteredQh, FilteredQhNormScaled };

inline const char* to_string(Formulation f)
{
    switch (f) {
    case Formulation::Plain: return "plain";
    case Formulation::LoopStar: return "loop-star";
    case Formulation::FilteredLoopStar: return "filtered-ls";
    case Formulation::QhProjectors: return "qh-projectors";
    case Formulation::FilteredQh: return "filtered-qh";
    case Formulation::FilteredQhNormScaled: return "filtered-qh-norm";
    }
    return "unknown";
}

inline Formulation formulation_from_string(const std::string& s)
{
    for (Formulation f : {Formulation::Plain, Formulation::LoopStar, Formulation::FilteredLoopStar,
             Formulation::QhProjectors, Formulation::FilteredQh, Formulation::FilteredQhNormScaled}) {
        if (s == to_string(f)) {
            return f;
        }
    }
    fail(ErrorKind::Config, "unknown formulation '" + s + "'");
}

inline bool uses_filters(Formulation f)
{
    return f == Formulation::FilteredLoopStar || f == Formulation::FilteredQh
        || f == Formulation::FilteredQhNormScaled;
}

inline bool is_loop_star_type(Formulation f)
{
    return f == Formulation::LoopStar || f == Formulation::FilteredLoopStar;
}

struct SweepConfig {
    std::vector<std::string> meshes;
    std::vector<double> frequencies;
    std::vector<Formulation> formulations = {Formulation::Plain, Formulation::LoopStar,
        Formulation::FilteredLoopStar, Formulation::QhProjectors, Formulation::FilteredQh};
    SpectralFilterSpec filter;
    int alpha = 2;
    BasisFrame frame = BasisFrame::Combinatorial;
    double null_tol = 1e-12;
    int exclude_isolated = 0;
    int exclude_isolated_loop_star = 2;
    bool solve = false;
    KrylovOptions krylov;
    NormOptions norms;
    QuadratureConfig quadrature;
    PlaneWave incident;
    unsigned seed = 1234;

    void validate() const
    {
        if (meshes.empty()) {
            fail(ErrorKind::Config, "sweep needs at least one mesh");
        }
        if (frequencies.empty()) {
            fail(ErrorKind::Config, "sweep needs at least one frequency");
        }
        if (formulations.empty()) {
            fail(ErrorKind::Config, "sweep needs at least one formulation");
        }
        for (double f : frequencies) {
            if (!(f > 0.0)) {
                fail(ErrorKind::Config, "frequencies must be positive");
            }
        }
        if (alpha < 2) {
            fail(ErrorKind::Config, "alpha must be at least 2");
        }
    }
};

struct CondSweepRow {
    std::string mesh_id;
    double h_avg = 0.0;
    int N = 0;
    double frequency_hz = 0.0;
    std::string formulation;
    std::string backend;
    double cond = 0.0;
    int isolated_excluded = 0;
    int iterations = -1;
    std::string error;
    std::optional<ErrorKind> error_kind; // unset for non-library exceptions

    bool ok() const { return error.empty(); }
};

/// Frequency-independent pieces of every formulation on one mesh, built on demand.
class SweepMeshCache {
public:
    SweepMeshCache(const TriangleMesh& mesh, const SweepConfig& cfg)
        : mesh_(&mesh)
        , cfg_(&cfg)
        , topo_(build_basis_topology(mesh))
        , dec_(decompose(mesh, topo_, cfg.frame))
    {
    }

    const BasisTopology& topology() const { return topo_; }
    const Decomposition& decomposition() const { return dec_; }

    const std::pair<ReducedBasis, ReducedBasis>& ls_bases(bool filtered)
    {
        auto& slot = filtered ? ls_filtered_ : ls_unit_;
        if (!slot) {
            slot.emplace(build_filtered_ls_basis(*dec_.sigma, sampling(*dec_.sigma, filtered, -0.75), spec(filtered)),
                build_filtered_ls_basis(*dec_.lambda, sampling(*dec_.lambda, filtered, -0.25), spec(filtered)));
        }
        return *slot;
    }

    const std::pair<FilteredBands, FilteredBands>& q_bands(bool filtered)
    {
        auto& slot = filtered ? q_filtered_ : q_unit_;
        if (!slot) {
            slot.emplace(
                build_bands(*dec_.sigma, sampling(*dec_.sigma, filtered, -0.25), spec(filtered), BandTarget::Projector),
                build_bands(*dec_.lambda, sampling(*dec_.lambda, filtered, 0.25), spec(filtered), BandTarget::Projector));
        }
        return *slot;
    }

private:
    DyadicSampling sampling(const HelmholtzSide& side, bool filtered, double exponent) const
    {
        if (!filtered) {
            return unit_sampling(side.dim(), side.kind());
        }
        const WeightSource src
            = cfg_->filter.backend == FilterBackend::ExactSvd ? WeightSource::Exact : WeightSource::Estimate;
        return build_dyadic_sampling(side, cfg_->alpha, exponent, src);
    }

    SpectralFilterSpec spec(bool filtered) const
    {
        SpectralFilterSpec s = cfg_->filter;
        s.seed = cfg_->seed;
        if (!filtered) {
            s.backend = FilterBackend::ExactSvd;
        }
        return s;
    }

    const TriangleMesh* mesh_;
    const SweepConfig* cfg_;
    BasisTopology topo_;
    Decomposition dec_;
    std::optional<std::pair<ReducedBasis, ReducedBasis>> ls_unit_;
    std::optional<std::pair<ReducedBasis, ReducedBasis>> ls_filtered_;
    std::optional<std::pair<FilteredBands, FilteredBands>> q_unit_;
    std::optional<std::pair<FilteredBands, FilteredBands>> q_filtered_;
};

/// Preconditioner for one formulation at one frequency.
inline PreconditionerBundle formulation_bundle(
    Formulation f, SweepMeshCache& cache, const OperatorSet& sys, const SweepConfig& cfg)
{
    const Decomposition& dec = cache.decomposition();
    switch (f) {
    case Formulation::Plain:
        return identity_bundle(dec.num_edges(), dec.frame);
    case Formulation::LoopStar:
    case Formulation::FilteredLoopStar: {
        if (dec.harmonic_dim != 0) {
            fail(ErrorKind::Config, "Loop-Star formulations need a simply connected mesh");
        }
        const auto& [s, l] = cache.ls_bases(f == Formulation::FilteredLoopStar);
        return build_W(dec, sys, s, l, cfg.norms);
    }
    case Formulation::QhProjectors:
    case Formulation::FilteredQh: {
        const auto& [s, l] = cache.q_bands(f == Formulation::FilteredQh);
        return build_Q(dec, sys, s, l, cfg.norms);
    }
    case Formulation::FilteredQhNormScaled: {
        const auto& [s, l] = cache.q_bands(true);
        return build_Q_norm_scaled(dec, sys, s, l, cfg.norms);
    }
    }
    fail(ErrorKind::Config, "unhandled formulation");
}

/// Runs every formulation on every (mesh, frequency) pair. Failures are
/// recorded in the row and the sweep continues.
inline std::vector<CondSweepRow> cond_sweep(
    const SweepConfig& cfg, const std::function<void(const CondSweepRow&)>& on_row = {})
{
    cfg.validate();
    std::vector<CondSweepRow> rows;
    auto emit = [&](CondSweepRow row) {
        if (on_row) {
            on_row(row);
        }
        rows.push_back(std::move(row));
    };
    for (const std::string& mesh_id : cfg.meshes) {
        std::optional<TriangleMesh> mesh;
        std::optional<SweepMeshCache> cache;
        std::string mesh_error;
        std::optional<ErrorKind> mesh_kind;
        MeshStats stats;
        try {
            mesh.emplace(mesh_from_spec(mesh_id));
            stats = compute_stats(*mesh);
            cache.emplace(*mesh, cfg);
        } catch (const Error& e) {
            mesh_error = e.what();
            mesh_kind = e.kind();
        } catch (const std::exception& e) {
            mesh_error = e.what();
        }
        for (double freq : cfg.frequencies) {
            std::optional<OperatorSet> sys;
            std::string freq_error = mesh_error;
            std::optional<ErrorKind> freq_kind = mesh_kind;
            if (freq_error.empty()) {
                try {
                    WaveContext ctx;
                    ctx.frequency = freq;
                    ctx.incident = cfg.incident;
                    AssemblyOptions aopt;
                    aopt.quadrature = cfg.quadrature;
                    sys.emplace(cache->decomposition().system(
                        assemble_operators(*mesh, cache->topology(), ctx, aopt)));
                } catch (const Error& e) {
                    freq_error = e.what();
                    freq_kind = e.kind();
                } catch (const std::exception& e) {
                    freq_error = e.what();
                }
            }
            for (Formulation f : cfg.formulations) {
                CondSweepRow row;
                row.mesh_id = mesh_id;
                row.h_avg = stats.h_avg;
                row.N = stats.num_edges;
                row.frequency_hz = freq;
                row.formulation = to_string(f);
                row.backend = uses_filters(f) ? to_string(cfg.filter.backend) : "none";
                if (!freq_error.empty()) {
                    row.error = freq_error;
                    row.error_kind = freq_kind;
                    emit(std::move(row));
                    continue;
                }
                try {
                    const PreconditionerBundle b = formulation_bundle(f, *cache, *sys, cfg);
                    const PreconditionedSystem ps = preconditioned_system(b, *sys, true);
                    ConditionOptions copt;
                    copt.null_tol = cfg.null_tol;
                    copt.exclude_isolated = is_loop_star_type(f) ? cfg.exclude_isolated_loop_star : cfg.exclude_isolated;
                    const ConditionInfo ci = condition_info(singular_values(ps.a), copt);
                    row.cond = ci.cond;
                    row.isolated_excluded = ci.excluded;
                    if (cfg.solve) {
                        row.iterations = cocg(ps.a, ps.b, cfg.krylov).iterations;
                    }
                } catch (const Error& e) {
                    row.error = e.what();
                    row.error_kind = e.kind();
                } catch (const std::exception& e) {
                    row.error = e.what();
                }
                emit(std::move(row));
            }
        }
    }
    return rows;
}

namespace detail {

inline std::string csv_field(std::string s)
{
    for (char& c : s) {
        if (c == ',' || c == '"' || c == '\n' || c == '\r') {
            c = ';';
        }
    }
    return s;
}

inline std::string full_precision(double x)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17e", x);
    return buf;
}

} // namespace detail

inline void write_sweep_csv(const std::vector<CondSweepRow>& rows, std::ostream& out)
{
    out << "mesh_id,h_avg,N,frequency_hz,formulation,backend,cond,isolated_excluded,iterations,error\n";
    for (const CondSweepRow& r : rows) {
        out << detail::csv_field(r.mesh_id) << ',' << detail::full_precision(r.h_avg) << ',' << r.N << ','
            << detail::full_precision(r.frequency_hz) << ',' << r.formulation << ',' << r.backend << ','
            << (r.ok() ? detail::full_precision(r.cond) : std::string("nan")) << ',' << r.isolated_excluded << ','
            << r.iterations << ',' << detail::csv_field(r.error) << '\n';
    }
}

/// max/min condition number over the rows of one formulation (and backend,
/// when given). Returns 0 if any such row failed or none exist.
inline double cond_spread(
    const std::vector<CondSweepRow>& rows, const std::string& formulation, const std::string& backend = "")
{
    double lo = 0.0;
    double hi = 0.0;
    bool any = false;
    for (const CondSweepRow& r : rows) {
        if (r.formulation != formulation || (!backend.empty() && r.backend != backend)) {
            continue;
        }
        if (!r.ok()) {
            return 0.0;
        }
        lo = any ? std::min(lo, r.cond) : r.cond;
        hi = any ? std::max(hi, r.cond) : r.cond;
        any = true;
    }
    return any ? hi / lo : 0.0;
}

/// Condition number of one row, or 0 if absent or failed.
inline double row_cond(const std::vector<CondSweepRow>& rows, const std::string& mesh_id, double freq,
    const std::string& formulation)
{
    for (const CondSweepRow& r : rows) {
        if (r.mesh_id == mesh_id && r.frequency_hz == freq && r.formulation == formulation) {
            return r.ok() ? r.cond : 0.0;
        }
    }
    return 0.0;
}

} // namespace qhf

#endif // QHF_ANALYSIS_HPP
