#include "oracles.hpp"

#include "qhf/analysis.hpp"
#include "qhf/config.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace qhf;

namespace {

MatrixXd random_orthogonal(int n, unsigned seed)
{
    Eigen::HouseholderQR<MatrixXd> qr(oracle::random_matrix(n, n, seed));
    return qr.householderQ();
}

template <typename F>
ErrorKind error_kind(F&& f)
{
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no error raised";
    return ErrorKind::Io;
}

SpectrumReport power_law(int n, double exponent)
{
    MatrixXc a = MatrixXc::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        a(i, i) = std::pow(i + 1.0, exponent);
    }
    return spectrum_by_laplacian_ordering(a, MatrixXd::Identity(n, n));
}

} // namespace

// ---------------------------------------------------------------------------
// Condition numbers

TEST(ConditionNumber, DiagonalCases)
{
    EXPECT_DOUBLE_EQ(condition_number(MatrixXd(MatrixXd::Identity(7, 7))), 1.0);
    const MatrixXd d = VectorXd::Map(std::vector<double>{10.0, 1.0, 0.0}.data(), 3).asDiagonal();
    const ConditionInfo ci = condition_info(VectorXd::Map(std::vector<double>{10.0, 1.0, 0.0}.data(), 3));
    EXPECT_DOUBLE_EQ(condition_number(d), 10.0);
    EXPECT_EQ(ci.nullity, 1);
    EXPECT_DOUBLE_EQ(ci.sigma_max, 10.0);
    EXPECT_DOUBLE_EQ(ci.sigma_min, 1.0);
}

TEST(ConditionNumber, SpdMatchesEigenvalueRatio)
{
    const MatrixXd b = oracle::random_matrix(25, 25, 21);
    MatrixXd a = b * b.transpose();
    a.diagonal().array() += 0.1;
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(a);
    const double ref = es.eigenvalues().maxCoeff() / es.eigenvalues().minCoeff();
    EXPECT_NEAR(condition_number(a), ref, 1e-10 * ref);
}

TEST(ConditionNumber, InvariantUnderUnitaryAndPermutation)
{
    const MatrixXc a = oracle::random_matrix(20, 20, 1).cast<cplx>() + cplx(0, 1) * oracle::random_matrix(20, 20, 2).cast<cplx>();
    const double ref = condition_number(a);
    const MatrixXc q1 = random_orthogonal(20, 3).cast<cplx>();
    const MatrixXc q2 = cplx(0, 1) * random_orthogonal(20, 4).cast<cplx>();
    EXPECT_NEAR(condition_number(MatrixXc(q1 * a * q2)), ref, 1e-9 * ref);
    Eigen::PermutationMatrix<Eigen::Dynamic> p(20);
    p.setIdentity();
    std::swap(p.indices()[0], p.indices()[13]);
    std::swap(p.indices()[4], p.indices()[7]);
    EXPECT_NEAR(condition_number(MatrixXc(p * a * p.transpose())), ref, 1e-9 * ref);
}

TEST(ConditionNumber, ExcludesIsolatedValuesFromLargerGap)
{
    // One tiny outlier at the bottom, one moderate outlier at the top.
    const std::vector<double> s = {1e-6, 1.0, 1.5, 2.0, 2.5, 30.0};
    const VectorXd v = VectorXd::Map(s.data(), 6);
    ConditionOptions opt;
    opt.exclude_isolated = 1;
    EXPECT_DOUBLE_EQ(condition_info(v, opt).cond, 30.0);
    opt.exclude_isolated = 2;
    const ConditionInfo ci = condition_info(v, opt);
    EXPECT_DOUBLE_EQ(ci.cond, 2.5);
    EXPECT_EQ(ci.excluded, 2);
    opt.exclude_isolated = 10;
    EXPECT_EQ(error_kind([&] { condition_info(v, opt); }), ErrorKind::Numeric);
}

TEST(ConditionNumber, ZeroMatrixIsError)
{
    EXPECT_EQ(error_kind([] { condition_number(MatrixXd(MatrixXd::Zero(4, 4))); }), ErrorKind::Numeric);
    EXPECT_EQ(error_kind([] { condition_info(VectorXd()); }), ErrorKind::Numeric);
}

// ---------------------------------------------------------------------------
// Spectra and slopes

TEST(Spectrum, DiagonalOperatorInPermutedBasis)
{
    const int n = 12;
    MatrixXc a = MatrixXc::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        a(i, i) = cplx(0.0, 2.0 * (n - i));
    }
    // Columns of the reversed identity: ξ = 1 picks the last diagonal entry.
    const MatrixXd e = MatrixXd::Identity(n, n).rowwise().reverse();
    const SpectrumReport r = spectrum_by_laplacian_ordering(a, e);
    EXPECT_DOUBLE_EQ(r.scale, 2.0);
    for (int i = 0; i < n; ++i) {
        EXPECT_DOUBLE_EQ(r.labels[i], i + 1.0);
        EXPECT_NEAR(r.values[i], i + 1.0, 1e-14);
    }
    EXPECT_EQ(error_kind([&] { spectrum_by_laplacian_ordering(a, MatrixXd::Identity(n + 1, n)); }), ErrorKind::Config);
}

TEST(Slope, RecoversPowerLaws)
{
    EXPECT_NEAR(slope_fit(power_law(64, 0.5)), 0.5, 1e-12);
    EXPECT_NEAR(slope_fit(power_law(64, -0.5)), -0.5, 1e-12);
    EXPECT_NEAR(slope_fit(power_law(64, 0.0)), 0.0, 1e-12);
    EXPECT_NEAR(slope_fit(power_law(64, 1.5), {10, 40}), 1.5, 1e-12);
}

TEST(Slope, WindowValidation)
{
    const SpectrumReport r = power_law(20, 0.5);
    EXPECT_EQ(error_kind([&] { slope_fit(power_law(7, 0.5)); }), ErrorKind::Config);
    EXPECT_EQ(error_kind([&] { slope_fit(r, {5, 11}); }), ErrorKind::Config);
    EXPECT_EQ(error_kind([&] { slope_fit(r, {5, 21}); }), ErrorKind::Config);
    EXPECT_NO_THROW(slope_fit(r, {5, 12}));
}

TEST(Slope, EfieBlocksOnDeformedSphere)
{
    const TriangleMesh mesh = deformed_sphere_mesh(2);
    const BasisTopology topo = build_basis_topology(mesh);
    const Decomposition dec = decompose(mesh, topo, BasisFrame::Normalized);
    WaveContext ctx;
    ctx.frequency = 1e6;
    const OperatorSet sys = dec.system(assemble_operators(mesh, topo, ctx));
    const HelmholtzSide& l = *dec.lambda;
    const HelmholtzSide& s = *dec.sigma;

    const double ts = slope_fit(spectrum_by_laplacian_ordering(sys.Ts, laplacian_modes(l)));
    const double th = slope_fit(spectrum_by_laplacian_ordering(sys.Th, laplacian_modes(s)));
    EXPECT_GT(ts, -0.75);
    EXPECT_LT(ts, -0.35);
    EXPECT_GT(th, 0.35);
    EXPECT_LT(th, 0.7);

    SpectralFilterSpec svd;
    const MatrixXd lp = build_bands(l, build_dyadic_sampling(l, 2, -0.25, WeightSource::Exact), svd, BandTarget::Basis)
                            .weighted_sum();
    const MatrixXd sp = build_bands(s, build_dyadic_sampling(s, 2, -0.75, WeightSource::Exact), svd, BandTarget::Basis)
                            .weighted_sum();
    const double tsp
        = slope_fit(spectrum_by_laplacian_ordering(congruence(lp, sys.Ts), laplacian_coefficient_modes(l)));
    const double thp
        = slope_fit(spectrum_by_laplacian_ordering(congruence(sp, sys.Th), laplacian_coefficient_modes(s)));
    EXPECT_LT(std::abs(tsp), 0.1);
    EXPECT_LT(std::abs(thp), 0.1);
}

// ---------------------------------------------------------------------------
// Sweeps

namespace {

SweepConfig small_sweep()
{
    SweepConfig cfg;
    cfg.meshes = {"builtin:deformed_sphere:0", "builtin:deformed_sphere:1"};
    cfg.frequencies = {1e4, 1e6};
    cfg.formulations = {Formulation::Plain, Formulation::LoopStar, Formulation::FilteredLoopStar,
        Formulation::QhProjectors, Formulation::FilteredQh, Formulation::FilteredQhNormScaled};
    return cfg;
}

std::string csv(const std::vector<CondSweepRow>& rows)
{
    std::ostringstream out;
    write_sweep_csv(rows, out);
    return out.str();
}

} // namespace

class Sweep : public ::testing::Test {
protected:
    static void SetUpTestSuite() { rows_ = new std::vector<CondSweepRow>(cond_sweep(small_sweep())); }
    static void TearDownTestSuite() { delete rows_; }
    static std::vector<CondSweepRow>* rows_;
};

std::vector<CondSweepRow>* Sweep::rows_ = nullptr;

TEST_F(Sweep, RowsCoverGrid)
{
    ASSERT_EQ(rows_->size(), 2u * 2u * 6u);
    for (const CondSweepRow& r : *rows_) {
        EXPECT_TRUE(r.ok()) << r.mesh_id << ' ' << r.formulation << ": " << r.error;
        EXPECT_GE(r.cond, 1.0);
        EXPECT_EQ(r.iterations, -1);
        EXPECT_EQ(r.backend, uses_filters(formulation_from_string(r.formulation)) ? "svd" : "none");
        EXPECT_EQ(r.isolated_excluded, is_loop_star_type(formulation_from_string(r.formulation)) ? 2 : 0);
    }
}

TEST_F(Sweep, PlainConditioningGrowsAtLowFrequency)
{
    for (const char* mesh : {"builtin:deformed_sphere:0", "builtin:deformed_sphere:1"}) {
        const double lo = row_cond(*rows_, mesh, 1e4, "plain");
        const double hi = row_cond(*rows_, mesh, 1e6, "plain");
        EXPECT_GT(lo, 10.0 * hi) << mesh;
        // Loop-Star cures the frequency dependence.
        const double ls_lo = row_cond(*rows_, mesh, 1e4, "loop-star");
        const double ls_hi = row_cond(*rows_, mesh, 1e6, "loop-star");
        EXPECT_LT(std::max(ls_lo, ls_hi) / std::min(ls_lo, ls_hi), 1.5) << mesh;
    }
    EXPECT_LT(cond_spread(*rows_, "filtered-qh", "svd"), 3.0);
    EXPECT_LT(cond_spread(*rows_, "filtered-ls", "svd"), 3.0);
    EXPECT_GT(cond_spread(*rows_, "plain"), 10.0);
}

TEST_F(Sweep, CsvIsDeterministic)
{
    const std::string a = csv(*rows_);
    const std::string b = csv(cond_sweep(small_sweep()));
    EXPECT_EQ(a, b);
    std::istringstream in(a);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "mesh_id,h_avg,N,frequency_hz,formulation,backend,cond,isolated_excluded,iterations,error");
    int count = 0;
    while (std::getline(in, line)) {
        EXPECT_EQ(std::count(line.begin(), line.end(), ','), 9) << line;
        ++count;
    }
    EXPECT_EQ(count, 24);
}

TEST(SweepErrors, FailedRowsAreRecorded)
{
    SweepConfig cfg;
    cfg.meshes = {"builtin:torus:12x4", "builtin:no_such_shape"};
    cfg.frequencies = {1e6};
    cfg.formulations = {Formulation::FilteredLoopStar, Formulation::FilteredQh};
    std::vector<std::string> seen;
    const auto rows = cond_sweep(cfg, [&](const CondSweepRow& r) { seen.push_back(r.formulation); });
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_EQ(seen.size(), 4u);
    EXPECT_FALSE(rows[0].ok());
    EXPECT_TRUE(rows[1].ok()) << rows[1].error;
    EXPECT_FALSE(rows[2].ok());
    EXPECT_FALSE(rows[3].ok());
    EXPECT_EQ(cond_spread(rows, "filtered-ls"), 0.0);
    const std::string text = csv(rows);
    EXPECT_NE(text.find(",nan,"), std::string::npos);
}

TEST(SweepErrors, ConfigValidation)
{
    SweepConfig cfg;
    EXPECT_EQ(error_kind([&] { cond_sweep(cfg); }), ErrorKind::Config);
    cfg.meshes = {"builtin:icosahedron"};
    cfg.frequencies = {-1.0};
    EXPECT_EQ(error_kind([&] { cond_sweep(cfg); }), ErrorKind::Config);
    cfg.frequencies = {1e6};
    cfg.alpha = 1;
    EXPECT_EQ(error_kind([&] { cond_sweep(cfg); }), ErrorKind::Config);
    EXPECT_EQ(error_kind([] { formulation_from_string("nope"); }), ErrorKind::Config);
}

TEST(SweepSolve, IterationsRecordedWhenRequested)
{
    SweepConfig cfg;
    cfg.meshes = {"builtin:deformed_sphere:1"};
    cfg.frequencies = {1e6};
    cfg.formulations = {Formulation::Plain, Formulation::FilteredQh};
    cfg.solve = true;
    const auto rows = cond_sweep(cfg);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_GT(rows[0].iterations, 0);
    EXPECT_GT(rows[1].iterations, 0);
    EXPECT_LT(rows[1].iterations, rows[0].iterations);
}

// ---------------------------------------------------------------------------
// Config

TEST(Config, DefaultsRoundTrip)
{
    RunConfig c;
    c.sweep.meshes = {"builtin:icosphere:2"};
    c.sweep.frequencies = {1e4, 1e6};
    c.sweep.filter.backend = FilterBackend::Chebyshev;
    c.sweep.filter.cutoff = 0.5;
    c.sweep.frame = BasisFrame::Normalized;
    c.far_field_direction = Vec3(1, 0, 0);
    const json j = to_json(c);
    const RunConfig back = run_config_from_json(j);
    EXPECT_EQ(to_json(back).dump(), j.dump());
    EXPECT_EQ(back.sweep.filter.backend, FilterBackend::Chebyshev);
    ASSERT_TRUE(back.sweep.filter.cutoff.has_value());
    EXPECT_EQ(*back.sweep.filter.cutoff, 0.5);
    EXPECT_EQ(back.sweep.frame, BasisFrame::Normalized);
}

TEST(Config, PartialConfigKeepsDefaults)
{
    const RunConfig c = run_config_from_json(json::parse(R"({"meshes": ["builtin:icosahedron"], "alpha": 3,
        "solver": {"tol": 1e-6}})"));
    const RunConfig d;
    EXPECT_EQ(c.sweep.alpha, 3);
    EXPECT_EQ(c.sweep.krylov.tol, 1e-6);
    EXPECT_EQ(c.sweep.krylov.max_iterations, d.sweep.krylov.max_iterations);
    EXPECT_EQ(c.output_dir, d.output_dir);
    EXPECT_EQ(c.sweep.formulations.size(), d.sweep.formulations.size());
}

TEST(Config, RejectsUnknownKeysAndBadValues)
{
    EXPECT_EQ(error_kind([] { run_config_from_json(json::parse(R"({"mesh": []})")); }), ErrorKind::Config);
    EXPECT_EQ(error_kind([] { run_config_from_json(json::parse(R"({"filter": {"order": 3}})")); }), ErrorKind::Config);
    EXPECT_EQ(error_kind([] { run_config_from_json(json::parse(R"({"alpha": "two"})")); }), ErrorKind::Config);
    EXPECT_EQ(error_kind([] { run_config_from_json(json::parse(R"({"frame": "weird"})")); }), ErrorKind::Config);
    EXPECT_EQ(error_kind([] { run_config_from_json(json::parse(R"({"excitation": {"direction": [1, 0]}})")); }),
        ErrorKind::Config);
    EXPECT_EQ(error_kind([] { run_config_from_json(json::parse(R"({"solver": {"tol": 0}})")); }), ErrorKind::Config);
    EXPECT_EQ(error_kind([] { run_config_from_json(json::parse(R"([1, 2])")); }), ErrorKind::Config);
}

TEST(Config, FileErrors)
{
    EXPECT_EQ(error_kind([] { load_run_config("/nonexistent/qhf.json"); }), ErrorKind::Io);
    const auto path = std::filesystem::temp_directory_path() / "qhf_bad_config.json";
    {
        std::ofstream out(path);
        out << "{ not json";
    }
    EXPECT_EQ(error_kind([&] { load_run_config(path.string()); }), ErrorKind::Config);
    {
        std::ofstream out(path);
        out << "// comment\n{\"meshes\": [\"builtin:tetrahedron\"]}";
    }
    EXPECT_EQ(load_run_config(path.string()).sweep.meshes.front(), "builtin:tetrahedron");
    std::filesystem::remove(path);
}

TEST(Config, ShippedConfigsLoad)
{
    const std::filesystem::path dir = std::filesystem::path(QHF_SOURCE_DIR) / "configs";
    int count = 0;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.path().extension() == ".json") {
            EXPECT_NO_THROW(load_run_config(entry.path().string())) << entry.path();
            ++count;
        }
    }
    EXPECT_GE(count, 3);
}

TEST(Config, BundleMetadata)
{
    const TriangleMesh mesh = deformed_sphere_mesh(0);
    const BasisTopology topo = build_basis_topology(mesh);
    const Decomposition dec = decompose(mesh, topo, BasisFrame::Combinatorial);
    const OperatorSet sys = assemble_operators(mesh, topo, WaveContext{});
    SpectralFilterSpec svd;
    const FilteredBands sb = build_bands(
        *dec.sigma, build_dyadic_sampling(*dec.sigma, 2, -0.25, WeightSource::Exact), svd, BandTarget::Projector);
    const FilteredBands lb = build_bands(
        *dec.lambda, build_dyadic_sampling(*dec.lambda, 2, 0.25, WeightSource::Exact), svd, BandTarget::Projector);
    const json j = bundle_metadata(build_Q(dec, sys, sb, lb));
    EXPECT_EQ(j["variant"], "qh-filters");
    EXPECT_EQ(j["alpha"], 2);
    EXPECT_GT(j["scaling"]["b_sigma"].get<double>(), 0.0);
    EXPECT_FALSE(j["scaling"]["harmonic_term"].get<bool>());
    EXPECT_EQ(j["sigma_sampling"]["level_weights"].size(), sb.sampling.level_weights.size());
}
