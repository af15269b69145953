#include "qhf/analysis.hpp"
#include "qhf/config.hpp"
#include "qhf/io.hpp"

#include "CLI11.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#ifdef _OPENMP
#include <omp.h>
#endif

extern "C" void openblas_set_num_threads(int);

namespace fs = std::filesystem;
using namespace qhf;

namespace {

enum ExitCode { Ok = 0, Unexpected = 1, ConfigFail = 2, MeshFail = 3, NumericFail = 4, ConvergenceFail = 5, IoFail = 6 };

int exit_code(ErrorKind k)
{
    switch (k) {
    case ErrorKind::Config: return ConfigFail;
    case ErrorKind::Mesh: return MeshFail;
    case ErrorKind::Numeric: return NumericFail;
    case ErrorKind::Convergence: return ConvergenceFail;
    case ErrorKind::Io: return IoFail;
    }
    return Unexpected;
}

void apply_thread_env()
{
    const char* env = std::getenv("QHF_NUM_THREADS");
    if (!env) {
        return;
    }
    const int n = std::atoi(env);
    if (n < 1) {
        fail(ErrorKind::Config, std::string("QHF_NUM_THREADS must be a positive integer, got '") + env + "'");
    }
#ifdef _OPENMP
    omp_set_num_threads(n);
#endif
    openblas_set_num_threads(n);
}

fs::path prepare_output(const std::string& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
        fail(ErrorKind::Io, "cannot create output directory '" + dir + "'");
    }
    return fs::path(dir);
}

void write_json(const json& j, const fs::path& path)
{
    std::ofstream out = detail::open_out(path);
    out << j.dump(2) << '\n';
}

std::string file_tag(const std::string& mesh_id)
{
    std::string s = mesh_id;
    for (char& c : s) {
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '.') {
            c = '_';
        }
    }
    return s;
}

/// ‖a − ref‖/max(‖ref‖, 1), so a zero reference gives an absolute residual.
double rel_fro(const MatrixXd& a, const MatrixXd& ref) { return (a - ref).norm() / std::max(ref.norm(), 1.0); }

json mesh_json(const std::string& id, const MeshStats& st)
{
    return {{"id", id}, {"N", st.num_edges}, {"triangles", st.num_triangles}, {"vertices", st.num_vertices},
        {"components", st.components}, {"genus", st.genus}, {"h_avg", st.h_avg}, {"diameter", st.diameter}};
}

// ---------------------------------------------------------------------------

struct DecomposeArgs {
    std::string mesh;
    std::string frame = "combinatorial";
    std::string output_dir = "qhf_out";
    bool export_matrices = false;
};

int cmd_decompose(const DecomposeArgs& a)
{
    const fs::path out = prepare_output(a.output_dir);
    const TriangleMesh mesh = mesh_from_spec(a.mesh);
    const MeshStats st = compute_stats(mesh);
    const BasisTopology topo = build_basis_topology(mesh);
    const Decomposition dec = decompose(mesh, topo, basis_frame_from_string(a.frame));
    const ProjectorSet p = projectors(dec.sigma->exact(), dec.lambda->exact(), dec.frame == BasisFrame::Normalized);
    const IncidenceMatrix s = sigma_matrix(topo);
    const IncidenceMatrix l = lambda_matrix(topo, mesh.num_vertices());

    json r;
    r["mesh"] = mesh_json(a.mesh, st);
    r["frame"] = a.frame;
    r["rank_sigma"] = numerical_rank(dec.sigma->x());
    r["rank_lambda"] = numerical_rank(dec.lambda->x());
    r["nullity_sigma"] = dec.sigma->nullity();
    r["nullity_lambda"] = dec.lambda->nullity();
    r["dim_H"] = dec.harmonic_dim;
    r["trace_P_H"] = dec.P_H.trace();
    r["sigma_t_lambda_max_abs"] = (s.dense().transpose() * l.dense()).cwiseAbs().maxCoeff();
    json idem;
    for (const auto& [name, m] : {std::pair<const char*, const MatrixXd*>{"P_Sigma", &p.P_Sigma},
             {"P_LambdaH", &p.P_LambdaH}, {"Pd_Lambda", &p.Pd_Lambda}, {"Pd_SigmaH", &p.Pd_SigmaH}, {"P_H", &p.P_H}}) {
        idem[name] = rel_fro(*m * *m, *m);
    }
    r["idempotency_residual"] = idem;
    r["cross_annihilation_residual"] = (p.P_Sigma * p.Pd_Lambda).norm();
    write_json(r, out / "decompose_report.json");

    if (a.export_matrices) {
        write_triplets(s.real(), out / "sigma.txt");
        write_triplets(l.real(), out / "lambda.txt");
        write_triplets(dec.sigma->laplacian().to_dense(), out / "laplacian_sigma.txt");
        write_triplets(dec.lambda->laplacian().to_dense(), out / "laplacian_lambda.txt");
        write_dense_csv(dec.P_H, out / "P_H.csv");
    }
    std::cout << "rank Sigma = " << r["rank_sigma"] << ", rank Lambda = " << r["rank_lambda"]
              << ", dim H = " << dec.harmonic_dim << '\n';
    return Ok;
}

// ---------------------------------------------------------------------------

struct FilterArgs {
    std::string mesh;
    std::string side = "sigma";
    std::string frame = "combinatorial";
    std::string backend = "chebyshev";
    int n = 1;
    int order = 16;
    int poly_count = 200;
    double cutoff = 0.0;
    int oracle_cap = 3000;
    int profile_points = 201;
    unsigned seed = 1234;
    std::string output_dir = "qhf_out";
};

int cmd_filter(const FilterArgs& a)
{
    const fs::path out = prepare_output(a.output_dir);
    const TriangleMesh mesh = mesh_from_spec(a.mesh);
    const BasisTopology topo = build_basis_topology(mesh);
    const Decomposition dec = decompose(mesh, topo, basis_frame_from_string(a.frame));
    if (a.side != "sigma" && a.side != "lambda") {
        fail(ErrorKind::Config, "side must be 'sigma' or 'lambda'");
    }
    const HelmholtzSide& side = a.side == "sigma" ? *dec.sigma : *dec.lambda;

    SpectralFilterSpec spec;
    spec.backend = filter_backend_from_string(a.backend);
    spec.butterworth_order = a.order;
    spec.poly_count = a.poly_count;
    spec.seed = a.seed;
    if (a.cutoff > 0.0) {
        spec.cutoff = a.cutoff;
    }
    validate(spec, side.dim());
    const auto h = side.filter(spec, a.n);
    const FilterMeta& meta = h->meta();

    json r;
    r["mesh"] = a.mesh;
    r["side"] = a.side;
    r["frame"] = a.frame;
    r["dim"] = side.dim();
    r["nullity"] = side.nullity();
    r["filter"] = to_json(spec);
    r["filter"]["n"] = a.n;
    r["meta"] = {{"cutoff", meta.cutoff}, {"accuracy", meta.accuracy}, {"degenerate_cut", meta.degenerate_cut},
        {"degenerate_cluster", meta.degenerate_cluster}, {"warnings", meta.warnings}};

    if (side.dim() <= a.oracle_cap) {
        const SpectralBasis& e = side.exact();
        const MatrixXd id = MatrixXd::Identity(side.dim(), side.dim());
        const MatrixXd hm = h->apply(id);
        const auto vn = e.v.leftCols(a.n);
        const MatrixXd ref = vn * vn.transpose();
        const VectorXd sv = singular_values(MatrixXd(hm - ref));
        json o;
        o["spectral_error"] = sv.size() ? sv[0] : 0.0;
        o["frobenius_error"] = (hm - ref).norm();
        // Per-mode error away from the cutoff, where a smooth profile can be accurate.
        if (meta.cutoff > 0.0) {
            const MatrixXd resp = h->apply(e.v);
            double worst = 0.0;
            int compared = 0;
            for (int i = 0; i < side.dim(); ++i) {
                if (std::abs(e.lambda[i] - meta.cutoff) < 0.1 * meta.cutoff) {
                    continue;
                }
                const double target = i < a.n ? 1.0 : 0.0;
                worst = std::max(worst, (resp.col(i) - target * e.v.col(i)).norm());
                ++compared;
            }
            o["transition_band"] = {0.9 * meta.cutoff, 1.1 * meta.cutoff};
            o["modes_outside_transition"] = compared;
            o["spectral_error_outside_transition"] = worst;
        }
        const MatrixXd pf = filtered_projector(side.x(), side.pinv(), *h);
        const MatrixXd pe = side.x() * side.pinv().apply(MatrixXd(ref * side.x().transpose()));
        o["projector_error"] = rel_fro(pf, pe);
        if (a.n == side.dim()) {
            o["projector_limit_residual"] = rel_fro(pf, side.projector());
        }
        r["oracle"] = o;
    } else {
        r["oracle"] = nullptr;
    }
    write_json(r, out / ("filter_" + a.side + "_" + std::to_string(a.n) + ".json"));

    // Scalar profile of the spectral response.
    const double upper = side.estimator().upper();
    std::function<double(double)> f;
    if (const auto* b = dynamic_cast<const ButterworthFilter*>(h.get())) {
        f = [b](double x) { return b->scalar(x); };
    } else if (const auto* c = dynamic_cast<const ChebyshevFilter*>(h.get())) {
        f = [c](double x) { return c->series()(x); };
    }
    if (f && a.profile_points > 1) {
        std::ofstream csv = detail::open_out(out / ("filter_" + a.side + "_" + std::to_string(a.n) + "_profile.csv"));
        csv << "x,f\n";
        for (int i = 0; i < a.profile_points; ++i) {
            const double x = upper * i / (a.profile_points - 1);
            csv << detail::num(x) << ',' << detail::num(f(x)) << '\n';
        }
    }
    if (r["oracle"].is_object()) {
        const json& o = r["oracle"];
        std::cout << "spectral error vs SVD oracle: " << o["spectral_error"].get<double>();
        if (o.contains("spectral_error_outside_transition")) {
            std::cout << " (outside transition band: " << o["spectral_error_outside_transition"].get<double>() << ')';
        }
        std::cout << '\n';
    }
    return Ok;
}

// ---------------------------------------------------------------------------

int cmd_sweep(const RunConfig& cfg, const std::string& csv_name)
{
    const fs::path out = prepare_output(cfg.output_dir);
    const auto rows = cond_sweep(cfg.sweep, [](const CondSweepRow& r) {
        std::cerr << r.mesh_id << " f=" << r.frequency_hz << ' ' << r.formulation << ": ";
        if (r.ok()) {
            std::cerr << "cond " << r.cond << '\n';
        } else {
            std::cerr << "error: " << r.error << '\n';
        }
    });
    {
        std::ofstream csv = detail::open_out(out / csv_name);
        write_sweep_csv(rows, csv);
    }
    int code = Ok;
    int failed = 0;
    for (const CondSweepRow& r : rows) {
        if (!r.ok()) {
            ++failed;
            if (code == Ok) {
                code = r.error_kind ? exit_code(*r.error_kind) : Unexpected;
            }
        }
    }
    if (failed) {
        std::cerr << failed << " of " << rows.size() << " rows failed\n";
    }
    return code;
}

// ---------------------------------------------------------------------------

int cmd_solve(const RunConfig& cfg, const std::string& compare)
{
    cfg.sweep.validate();
    const fs::path out = prepare_output(cfg.output_dir);
    const std::optional<Formulation> cmp
        = compare.empty() ? std::nullopt : std::optional<Formulation>(formulation_from_string(compare));
    int code = Ok;
    for (const std::string& mesh_id : cfg.sweep.meshes) {
        const TriangleMesh mesh = mesh_from_spec(mesh_id);
        const MeshStats st = compute_stats(mesh);
        SweepMeshCache cache(mesh, cfg.sweep);
        for (double freq : cfg.sweep.frequencies) {
            WaveContext ctx;
            ctx.frequency = freq;
            ctx.incident = cfg.sweep.incident;
            AssemblyOptions aopt;
            aopt.quadrature = cfg.sweep.quadrature;
            const OperatorSet sys
                = cache.decomposition().system(assemble_operators(mesh, cache.topology(), ctx, aopt));
            SolveOptions sopt;
            sopt.krylov = cfg.sweep.krylov;
            sopt.zeroing = cfg.solve_zeroing;
            sopt.throw_on_failure = false;

            auto run = [&](Formulation f) {
                const PreconditionerBundle b = formulation_bundle(f, cache, sys, cfg.sweep);
                return std::pair{b, solve_preconditioned(b, cache.decomposition(), sys, sopt)};
            };
            const auto [bundle, rep] = run(cfg.solve_formulation);
            const auto ff = far_field(mesh, cache.topology(), rep.j, sys.k, cfg.far_field_direction);

            char fbuf[32];
            std::snprintf(fbuf, sizeof fbuf, "%.6g", freq);
            const std::string stem = "solve_" + file_tag(mesh_id) + "_f" + fbuf;
            json r;
            r["mesh"] = mesh_json(mesh_id, st);
            r["frequency_hz"] = freq;
            r["formulation"] = to_string(cfg.solve_formulation);
            r["zeroing"] = cfg.solve_zeroing;
            r["converged"] = rep.converged;
            r["iterations"] = rep.iterations;
            r["residual"] = rep.residual;
            r["rwg_residual"] = rep.rwg_residual;
            r["tolerance"] = cfg.sweep.krylov.tol;
            r["max_iterations"] = cfg.sweep.krylov.max_iterations;
            r["preconditioner"] = bundle_metadata(bundle);
            r["far_field"] = {{"direction", detail::vec3_json(cfg.far_field_direction)},
                {"re", {ff.x().real(), ff.y().real(), ff.z().real()}},
                {"im", {ff.x().imag(), ff.y().imag(), ff.z().imag()}}};
            if (cmp) {
                const auto [cb, crep] = run(*cmp);
                const auto cff = far_field(mesh, cache.topology(), crep.j, sys.k, cfg.far_field_direction);
                r["comparison"] = {{"formulation", to_string(*cmp)}, {"converged", crep.converged},
                    {"iterations", crep.iterations}, {"far_field_relative_difference", (cff - ff).norm() / ff.norm()},
                    {"current_relative_difference", (crep.j - rep.j).norm() / rep.j.norm()}};
                if (!crep.converged && code == Ok) {
                    code = ConvergenceFail;
                }
            }
            write_vector_csv(rep.j, out / (stem + "_j.csv"));
            write_json(r, out / (stem + ".json"));
            std::cout << mesh_id << " f=" << freq << ' ' << to_string(cfg.solve_formulation) << ": "
                      << (rep.converged ? "converged" : "NOT converged") << " in " << rep.iterations
                      << " iterations, residual " << rep.residual << '\n';
            if (!rep.converged && code == Ok) {
                code = ConvergenceFail;
            }
        }
    }
    return code;
}

RunConfig config_with_overrides(const std::string& path, const std::string& output_dir)
{
    RunConfig c = path.empty() ? RunConfig{} : load_run_config(path);
    if (!output_dir.empty()) {
        c.output_dir = output_dir;
    }
    return c;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Laplacian-filtered Loop-Star and quasi-Helmholtz EFIE preconditioners"};
    app.require_subcommand(1);

    DecomposeArgs dargs;
    auto* dec = app.add_subcommand("decompose", "Loop/Star matrices, ranks and projector diagnostics");
    dec->add_option("--mesh", dargs.mesh, "mesh file or builtin:<name>[:arg]")->required();
    dec->add_option("--frame", dargs.frame, "combinatorial or normalized");
    dec->add_option("--output-dir", dargs.output_dir);
    dec->add_flag("--export-matrices", dargs.export_matrices, "write triplet files for Sigma, Lambda and Laplacians");

    FilterArgs fargs;
    auto* fil = app.add_subcommand("filter", "one Laplacian filter checked against the SVD oracle");
    fil->add_option("--mesh", fargs.mesh)->required();
    fil->add_option("--side", fargs.side, "sigma or lambda");
    fil->add_option("--frame", fargs.frame);
    fil->add_option("--backend", fargs.backend, "svd, power, butterworth or chebyshev");
    fil->add_option("--n", fargs.n, "number of smallest modes kept")->required();
    fil->add_option("--order", fargs.order, "Butterworth order m");
    fil->add_option("--poly-count", fargs.poly_count, "Chebyshev polynomial count");
    fil->add_option("--cutoff", fargs.cutoff, "explicit cutoff (estimated when omitted)");
    fil->add_option("--oracle-cap", fargs.oracle_cap, "largest dimension checked against the SVD");
    fil->add_option("--profile-points", fargs.profile_points);
    fil->add_option("--seed", fargs.seed);
    fil->add_option("--output-dir", fargs.output_dir);

    std::string config_path;
    std::string output_dir;
    std::string csv_name = "cond_sweep.csv";
    auto* swp = app.add_subcommand("sweep", "condition numbers over meshes, frequencies and formulations");
    swp->add_option("--config", config_path)->required();
    swp->add_option("--output-dir", output_dir);
    swp->add_option("--csv", csv_name, "CSV file name inside the output directory");

    std::string compare;
    auto* sol = app.add_subcommand("solve", "preconditioned COCG solve with a plane-wave excitation");
    sol->add_option("--config", config_path)->required();
    sol->add_option("--output-dir", output_dir);
    sol->add_option("--compare", compare, "second formulation whose far field is compared");

    auto* pc = app.add_subcommand("print-config", "print the full configuration with defaults");
    pc->add_option("--config", config_path);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? Ok : ConfigFail;
    }

    try {
        apply_thread_env();
        if (*dec) {
            return cmd_decompose(dargs);
        }
        if (*fil) {
            return cmd_filter(fargs);
        }
        if (*swp) {
            return cmd_sweep(config_with_overrides(config_path, output_dir), csv_name);
        }
        if (*sol) {
            return cmd_solve(config_with_overrides(config_path, output_dir), compare);
        }
        if (*pc) {
            std::cout << to_json(config_with_overrides(config_path, "")).dump(2) << '\n';
            return Ok;
        }
    } catch (const Error& e) {
        std::cerr << "qhf: " << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "qhf: unexpected failure: " << e.what() << '\n';
        return Unexpected;
    }
    return Unexpected;
}
