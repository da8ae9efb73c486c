#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ddkf/io/csv.hpp"
#include "ddkf/io/model_json.hpp"
#include "ddkf/monte_carlo.hpp"

namespace ddkf::io {

inline std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

/// Strict benchmark-config schema: every key is known, extras are rejected,
/// and the gust block (with its mandatory airspeed V) must be present.
inline bench::BenchmarkConfig benchmark_config_from_json(const json& j) {
    detail::require(j.is_object(), ErrorCategory::schema_violation,
                    "benchmark config must be a JSON object");
    detail::require(j.value("schema_version", 0) == 1, ErrorCategory::schema_violation,
                    "benchmark config: schema_version must be 1");
    static const std::set<std::string> known{
        "schema_version", "N", "L", "T_p", "T_f", "n_x_bar", "dt", "sigma_w",
        "sigma_v", "mc_runs", "master_seed", "step_time", "sim_duration", "q_weight",
        "r_weight", "gust", "reference_step", "u_min", "u_max", "methods", "threads"};
    for (const auto& [key, value] : j.items())
        detail::require(known.count(key) == 1, ErrorCategory::schema_violation,
                        "benchmark config: unknown key '" + key + "'");

    bench::BenchmarkConfig cfg;
    auto get_index = [&](const char* key, Eigen::Index& slot) {
        if (j.contains(key)) slot = j.at(key).get<Eigen::Index>();
    };
    get_index("N", cfg.N);
    get_index("L", cfg.L);
    get_index("T_p", cfg.T_p);
    get_index("T_f", cfg.T_f);
    get_index("n_x_bar", cfg.n_x_bar);
    if (j.contains("dt")) cfg.dt = j.at("dt").get<double>();
    if (j.contains("mc_runs")) cfg.mc_runs = j.at("mc_runs").get<int>();
    if (j.contains("master_seed")) cfg.master_seed = j.at("master_seed").get<std::uint64_t>();
    if (j.contains("step_time")) cfg.step_time = j.at("step_time").get<double>();
    if (j.contains("sim_duration")) cfg.sim_duration = j.at("sim_duration").get<double>();
    if (j.contains("sigma_w")) cfg.Sigma_w = matrix_from_json(j.at("sigma_w"));
    if (j.contains("sigma_v")) cfg.Sigma_v = matrix_from_json(j.at("sigma_v"));
    if (j.contains("q_weight")) cfg.Q = matrix_from_json(j.at("q_weight"));
    if (j.contains("r_weight")) cfg.R = matrix_from_json(j.at("r_weight"));

    detail::require(j.contains("gust") && j.at("gust").is_object(),
                    ErrorCategory::schema_violation,
                    "benchmark config: 'gust' block (with airspeed V) is required");
    const json& g = j.at("gust");
    static const std::set<std::string> gust_keys{"sigma_u", "sigma_v", "L_u", "L_v", "V"};
    for (const auto& [key, value] : g.items())
        detail::require(gust_keys.count(key) == 1, ErrorCategory::schema_violation,
                        "benchmark config: unknown gust key '" + key + "'");
    detail::require(g.contains("V"), ErrorCategory::schema_violation,
                    "benchmark config: gust.V (airspeed) is mandatory");
    cfg.gust.V = g.at("V").get<double>();
    if (g.contains("sigma_u")) cfg.gust.sigma_u = g.at("sigma_u").get<double>();
    if (g.contains("sigma_v")) cfg.gust.sigma_v = g.at("sigma_v").get<double>();
    if (g.contains("L_u")) cfg.gust.L_u = g.at("L_u").get<double>();
    if (g.contains("L_v")) cfg.gust.L_v = g.at("L_v").get<double>();

    if (j.contains("reference_step")) {
        const auto vals = j.at("reference_step").get<std::vector<double>>();
        cfg.reference_step = Eigen::Map<const Eigen::VectorXd>(
            vals.data(), static_cast<Eigen::Index>(vals.size()));
    }
    auto get_bound = [&](const char* key, std::optional<Eigen::VectorXd>& slot) {
        if (!j.contains(key)) return;
        const auto vals = j.at(key).get<std::vector<double>>();
        slot = Eigen::Map<const Eigen::VectorXd>(vals.data(),
                                                 static_cast<Eigen::Index>(vals.size()));
    };
    get_bound("u_min", cfg.u_min);
    get_bound("u_max", cfg.u_max);
    cfg.validate();
    return cfg;
}

inline std::vector<bench::Method> methods_from_json(const json& j) {
    if (!j.contains("methods")) return bench::all_methods();
    std::vector<bench::Method> out;
    for (const auto& name : j.at("methods")) {
        const std::string s = name.get<std::string>();
        bool found = false;
        for (bench::Method m : bench::all_methods())
            if (s == bench::method_name(m)) {
                out.push_back(m);
                found = true;
            }
        detail::require(found, ErrorCategory::schema_violation,
                        "benchmark config: unknown method '" + s + "'");
    }
    detail::require(!out.empty(), ErrorCategory::schema_violation,
                    "benchmark config: empty method list");
    return out;
}

inline json benchmark_config_to_json(const bench::BenchmarkConfig& cfg) {
    json j;
    j["schema_version"] = 1;
    j["N"] = cfg.N;
    j["L"] = cfg.L;
    j["T_p"] = cfg.T_p;
    j["T_f"] = cfg.T_f;
    j["n_x_bar"] = cfg.n_x_bar;
    j["dt"] = cfg.dt;
    j["mc_runs"] = cfg.mc_runs;
    j["master_seed"] = cfg.master_seed;
    j["step_time"] = cfg.step_time;
    j["sim_duration"] = cfg.sim_duration;
    j["sigma_w"] = matrix_to_json(cfg.Sigma_w);
    j["sigma_v"] = matrix_to_json(cfg.Sigma_v);
    j["q_weight"] = matrix_to_json(cfg.Q);
    j["r_weight"] = matrix_to_json(cfg.R);
    j["gust"] = {{"sigma_u", cfg.gust.sigma_u},
                 {"sigma_v", cfg.gust.sigma_v},
                 {"L_u", cfg.gust.L_u},
                 {"L_v", cfg.gust.L_v},
                 {"V", cfg.gust.V}};
    j["reference_step"] =
        std::vector<double>(cfg.reference_step.data(),
                            cfg.reference_step.data() + cfg.reference_step.size());
    if (cfg.u_min)
        j["u_min"] = std::vector<double>(cfg.u_min->data(),
                                         cfg.u_min->data() + cfg.u_min->size());
    if (cfg.u_max)
        j["u_max"] = std::vector<double>(cfg.u_max->data(),
                                         cfg.u_max->data() + cfg.u_max->size());
    return j;
}

inline json quartiles_to_json(const bench::Quartiles& q) {
    return json{{"min", q.min}, {"q1", q.q1}, {"median", q.median}, {"q3", q.q3},
                {"max", q.max}};
}

/// Boxplot five-number summaries per method per index, over successful runs.
inline json boxplot_summary(const bench::McResult& mc, const bench::BenchmarkConfig& cfg) {
    json summary = json::object();
    for (const std::string& method : mc.methods) {
        json per_index = json::object();
        for (const std::string& index : bench::index_names(cfg)) {
            auto values = bench::collect_index(mc, method, cfg, index);
            if (values.empty()) continue;
            per_index[index] = quartiles_to_json(bench::quartiles(std::move(values)));
        }
        summary[method] = std::move(per_index);
    }
    return summary;
}

/// Full machine-readable result: provenance, config echo, per-run tables,
/// diagnostics, and the boxplot summary. Deliberately timestamp-free so
/// identical configurations produce byte-identical payloads.
inline json result_bundle(const bench::McResult& mc, const bench::BenchmarkConfig& cfg,
                          const std::string& tool_version) {
    json j;
    j["schema_version"] = 1;
    j["kind"] = "ddkf-benchmark-result";
    json cfg_json = benchmark_config_to_json(cfg);
    j["provenance"] = {{"config_hash", fnv1a_hex(cfg_json.dump())},
                       {"master_seed", cfg.master_seed},
                       {"tool_version", tool_version}};
    j["config"] = std::move(cfg_json);
    j["methods"] = mc.methods;
    j["indices"] = bench::index_names(cfg);

    json runs = json::array();
    for (const auto& run : mc.runs) {
        json r;
        r["run"] = run.run_index;
        r["ok"] = run.ok;
        r["message"] = run.message;
        if (run.ok) {
            json values = json::object();
            for (const auto& [method, idx] : run.indices) {
                Eigen::VectorXd flat = bench::flatten_indices(idx);
                json per = json::object();
                const auto names = bench::index_names(cfg);
                for (Eigen::Index i = 0; i < flat.size(); ++i)
                    per[names[static_cast<std::size_t>(i)]] = flat(i);
                values[method] = std::move(per);
            }
            r["values"] = std::move(values);
            const auto& d = run.diagnostics;
            r["diagnostics"] = {
                {"innovations_correlation",
                 std::vector<double>(d.innovations_correlation.data(),
                                     d.innovations_correlation.data() +
                                         d.innovations_correlation.size())},
                {"innovations_whiteness_fraction", d.innovations_whiteness_fraction},
                {"riccati_residual_innov", d.riccati_residual_innov},
                {"riccati_residual_disturbance", d.riccati_residual_disturbance}};
        }
        runs.push_back(std::move(r));
    }
    j["runs"] = std::move(runs);
    j["summary"] = boxplot_summary(mc, cfg);
    return j;
}

/// Validates the documented result schema; used by tests and consumers.
inline void validate_result_bundle(const json& j) {
    detail::require(j.is_object(), ErrorCategory::schema_violation, "result: not an object");
    detail::require(j.value("schema_version", 0) == 1 &&
                        j.value("kind", "") == "ddkf-benchmark-result",
                    ErrorCategory::schema_violation, "result: bad kind/schema_version");
    for (const char* key : {"provenance", "config", "methods", "indices", "runs", "summary"})
        detail::require(j.contains(key), ErrorCategory::schema_violation,
                        std::string("result: missing key ") + key);
    detail::require(j.at("runs").is_array(), ErrorCategory::schema_violation,
                    "result: runs must be an array");
    for (const auto& r : j.at("runs"))
        detail::require(r.contains("run") && r.contains("ok") && r.contains("message"),
                        ErrorCategory::schema_violation, "result: malformed run entry");
    const auto& prov = j.at("provenance");
    detail::require(prov.contains("config_hash") && prov.contains("master_seed") &&
                        prov.contains("tool_version"),
                    ErrorCategory::schema_violation, "result: malformed provenance");
}

/// Per-run CSV table: one row per (run, method).
inline void write_runs_csv(const std::filesystem::path& path, const bench::McResult& mc,
                           const bench::BenchmarkConfig& cfg) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp);
        detail::require(out.good(), ErrorCategory::io_error,
                        "cannot open for writing: " + tmp.string());
        out << "run,method,ok";
        for (const std::string& name : bench::index_names(cfg)) out << ',' << name;
        out << '\n';
        for (const auto& run : mc.runs) {
            for (const std::string& method : mc.methods) {
                out << run.run_index << ',' << method << ',' << (run.ok ? 1 : 0);
                if (run.ok && run.indices.count(method)) {
                    Eigen::VectorXd flat = bench::flatten_indices(run.indices.at(method));
                    for (Eigen::Index i = 0; i < flat.size(); ++i)
                        out << ',' << detail_csv::format_double(flat(i));
                } else {
                    for (std::size_t i = 0; i < bench::index_names(cfg).size(); ++i)
                        out << ',';
                }
                out << '\n';
            }
        }
        detail::require(out.good(), ErrorCategory::io_error, "write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

} // namespace ddkf::io
