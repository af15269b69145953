#ifndef QHF_CONFIG_HPP
#define QHF_CONFIG_HPP

// Run configuration (JSON) and report serialization.

#include "qhf/analysis.hpp"

#include "json.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <string>

namespace qhf {

using json = nlohmann::ordered_json;

struct RunConfig {
    SweepConfig sweep;
    std::string output_dir = "qhf_out";
    Formulation solve_formulation = Formulation::FilteredQh;
    bool solve_zeroing = true;
    Vec3 far_field_direction = Vec3(0, 0, 1);
};

namespace detail {

inline void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where)
{
    if (!j.is_object()) {
        fail(ErrorKind::Config, where + " must be an object");
    }
    for (const auto& item : j.items()) {
        if (!allowed.count(item.key())) {
            fail(ErrorKind::Config, "unknown key '" + item.key() + "' in " + where);
        }
    }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where)
{
    if (!j.contains(key)) {
        return;
    }
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        fail(ErrorKind::Config, std::string("bad value for '") + key + "' in " + where);
    }
}

inline Vec3 read_vec3(const json& j, const std::string& where)
{
    if (!j.is_array() || j.size() != 3) {
        fail(ErrorKind::Config, where + " must be a 3-vector");
    }
    try {
        return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
    } catch (const nlohmann::json::exception&) {
        fail(ErrorKind::Config, where + " must hold numbers");
    }
}

inline json vec3_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

} // namespace detail

inline json to_json(const SpectralFilterSpec& s)
{
    json j;
    j["backend"] = to_string(s.backend);
    j["n"] = s.n;
    j["butterworth_order"] = s.butterworth_order;
    j["poly_count"] = s.poly_count;
    j["power_tol"] = s.power_tol;
    j["power_max_iterations"] = s.power_max_iterations;
    j["cutoff"] = s.cutoff ? json(*s.cutoff) : json(nullptr);
    return j;
}

inline SpectralFilterSpec filter_spec_from_json(const json& j)
{
    detail::check_keys(j, {"backend", "n", "butterworth_order", "poly_count", "power_tol", "power_max_iterations", "cutoff"},
        "filter");
    SpectralFilterSpec s;
    std::string backend = to_string(s.backend);
    detail::read(j, "backend", backend, "filter");
    s.backend = filter_backend_from_string(backend);
    detail::read(j, "n", s.n, "filter");
    detail::read(j, "butterworth_order", s.butterworth_order, "filter");
    detail::read(j, "poly_count", s.poly_count, "filter");
    detail::read(j, "power_tol", s.power_tol, "filter");
    detail::read(j, "power_max_iterations", s.power_max_iterations, "filter");
    if (j.contains("cutoff") && !j["cutoff"].is_null()) {
        double c = 0.0;
        detail::read(j, "cutoff", c, "filter");
        s.cutoff = c;
    }
    if (s.butterworth_order < 1 || s.poly_count < 1) {
        fail(ErrorKind::Config, "filter order and polynomial count must be positive");
    }
    return s;
}

/// Every field with its default, as printed by `print-config`.
inline json to_json(const RunConfig& c)
{
    const SweepConfig& s = c.sweep;
    json j;
    j["meshes"] = s.meshes;
    j["frequencies"] = s.frequencies;
    json forms = json::array();
    for (Formulation f : s.formulations) {
        forms.push_back(to_string(f));
    }
    j["formulations"] = forms;
    j["frame"] = to_string(s.frame);
    j["alpha"] = s.alpha;
    j["filter"] = to_json(s.filter);
    j["analysis"] = {{"null_tol", s.null_tol}, {"exclude_isolated", s.exclude_isolated},
        {"exclude_isolated_loop_star", s.exclude_isolated_loop_star}};
    j["solver"] = {{"tol", s.krylov.tol}, {"max_iterations", s.krylov.max_iterations},
        {"iterations_in_sweep", s.solve}, {"formulation", to_string(c.solve_formulation)},
        {"zeroing", c.solve_zeroing}};
    j["norms"] = {{"tol", s.norms.tol}, {"max_iterations", s.norms.max_iterations}};
    j["quadrature"] = {{"edge_order", s.quadrature.edge_order}, {"vertex_order", s.quadrature.vertex_order},
        {"near_levels", s.quadrature.near_levels}, {"near_factor", s.quadrature.near_factor},
        {"rhs_levels", s.quadrature.rhs_levels}};
    j["excitation"] = {{"direction", detail::vec3_json(s.incident.direction)},
        {"polarization", detail::vec3_json(s.incident.polarization)}, {"amplitude", s.incident.amplitude}};
    j["far_field_direction"] = detail::vec3_json(c.far_field_direction);
    j["output_dir"] = c.output_dir;
    j["seed"] = s.seed;
    return j;
}

inline RunConfig run_config_from_json(const json& j)
{
    detail::check_keys(j, {"meshes", "frequencies", "formulations", "frame", "alpha", "filter", "analysis", "solver",
                              "norms", "quadrature", "excitation", "far_field_direction", "output_dir", "seed"},
        "config");
    RunConfig c;
    SweepConfig& s = c.sweep;
    detail::read(j, "meshes", s.meshes, "config");
    detail::read(j, "frequencies", s.frequencies, "config");
    if (j.contains("formulations")) {
        std::vector<std::string> names;
        detail::read(j, "formulations", names, "config");
        s.formulations.clear();
        for (const auto& n : names) {
            s.formulations.push_back(formulation_from_string(n));
        }
    }
    if (j.contains("frame")) {
        std::string frame;
        detail::read(j, "frame", frame, "config");
        s.frame = basis_frame_from_string(frame);
    }
    detail::read(j, "alpha", s.alpha, "config");
    if (j.contains("filter")) {
        s.filter = filter_spec_from_json(j["filter"]);
    }
    if (j.contains("analysis")) {
        const json& a = j["analysis"];
        detail::check_keys(a, {"null_tol", "exclude_isolated", "exclude_isolated_loop_star"}, "analysis");
        detail::read(a, "null_tol", s.null_tol, "analysis");
        detail::read(a, "exclude_isolated", s.exclude_isolated, "analysis");
        detail::read(a, "exclude_isolated_loop_star", s.exclude_isolated_loop_star, "analysis");
    }
    if (j.contains("solver")) {
        const json& a = j["solver"];
        detail::check_keys(a, {"tol", "max_iterations", "iterations_in_sweep", "formulation", "zeroing"}, "solver");
        detail::read(a, "tol", s.krylov.tol, "solver");
        detail::read(a, "max_iterations", s.krylov.max_iterations, "solver");
        detail::read(a, "iterations_in_sweep", s.solve, "solver");
        detail::read(a, "zeroing", c.solve_zeroing, "solver");
        if (a.contains("formulation")) {
            std::string f;
            detail::read(a, "formulation", f, "solver");
            c.solve_formulation = formulation_from_string(f);
        }
    }
    if (j.contains("norms")) {
        const json& a = j["norms"];
        detail::check_keys(a, {"tol", "max_iterations"}, "norms");
        detail::read(a, "tol", s.norms.tol, "norms");
        detail::read(a, "max_iterations", s.norms.max_iterations, "norms");
    }
    if (j.contains("quadrature")) {
        const json& a = j["quadrature"];
        detail::check_keys(a, {"edge_order", "vertex_order", "near_levels", "near_factor", "rhs_levels"}, "quadrature");
        detail::read(a, "edge_order", s.quadrature.edge_order, "quadrature");
        detail::read(a, "vertex_order", s.quadrature.vertex_order, "quadrature");
        detail::read(a, "near_levels", s.quadrature.near_levels, "quadrature");
        detail::read(a, "near_factor", s.quadrature.near_factor, "quadrature");
        detail::read(a, "rhs_levels", s.quadrature.rhs_levels, "quadrature");
    }
    if (j.contains("excitation")) {
        const json& a = j["excitation"];
        detail::check_keys(a, {"direction", "polarization", "amplitude"}, "excitation");
        if (a.contains("direction")) {
            s.incident.direction = detail::read_vec3(a["direction"], "excitation.direction");
        }
        if (a.contains("polarization")) {
            s.incident.polarization = detail::read_vec3(a["polarization"], "excitation.polarization");
        }
        detail::read(a, "amplitude", s.incident.amplitude, "excitation");
    }
    if (j.contains("far_field_direction")) {
        c.far_field_direction = detail::read_vec3(j["far_field_direction"], "far_field_direction");
    }
    detail::read(j, "output_dir", c.output_dir, "config");
    detail::read(j, "seed", s.seed, "config");
    if (s.krylov.tol <= 0.0 || s.krylov.max_iterations < 1) {
        fail(ErrorKind::Config, "solver tolerance and iteration budget must be positive");
    }
    if (s.norms.tol <= 0.0 || s.norms.max_iterations < 1) {
        fail(ErrorKind::Config, "norm estimate tolerance and iteration budget must be positive");
    }
    if (c.output_dir.empty()) {
        fail(ErrorKind::Config, "output_dir must not be empty");
    }
    return c;
}

inline RunConfig load_run_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        fail(ErrorKind::Io, "cannot open config '" + path + "'");
    }
    json j;
    try {
        j = json::parse(in, nullptr, true, true);
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorKind::Config, "config '" + path + "' is not valid JSON: " + e.what());
    }
    return run_config_from_json(j);
}

inline json sampling_json(const DyadicSampling& s)
{
    return {{"side", to_string(s.side)}, {"dim", s.dim}, {"weight_exponent", s.weight_exponent},
        {"level_indices", s.level_indices}, {"level_weights", s.level_weights}, {"sample_ranks", s.sample_ranks}};
}

/// Variant, α, weights, removed columns and norm constants.
inline json bundle_metadata(const PreconditionerBundle& b)
{
    json j;
    j["variant"] = to_string(b.variant);
    j["frame"] = to_string(b.frame);
    j["backend"] = b.backend;
    j["alpha"] = b.alpha;
    j["size"] = {b.rows(), b.cols()};
    const PreconditionerScaling& s = b.scaling;
    if (b.variant == PreconditionerVariant::FilteredLoopStar) {
        j["scaling"] = {{"c_sigma", s.c_sigma}, {"c_lambda", s.c_lambda}};
        j["removed_columns"] = {{"sigma", b.removed_sigma_columns}, {"lambda", b.removed_lambda_columns}};
        j["isolated_singular_values"] = b.isolated_values;
    } else if (b.variant != PreconditionerVariant::Identity) {
        j["scaling"] = {{"b_sigma", s.b_sigma}, {"b_lambda", s.b_lambda}, {"b_h", s.b_h},
            {"harmonic_term", s.harmonic_term}};
        j["imaginary_sigma_term"] = b.imaginary_sigma;
    }
    if (!b.sigma_sampling.level_weights.empty()) {
        j["sigma_sampling"] = sampling_json(b.sigma_sampling);
    }
    if (!b.lambda_sampling.level_weights.empty()) {
        j["lambda_sampling"] = sampling_json(b.lambda_sampling);
    }
    return j;
}

} // namespace qhf

#endif // QHF_CONFIG_HPP
