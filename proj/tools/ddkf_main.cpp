#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "ddkf/innovations.hpp"
#include "ddkf/io/csv.hpp"
#include "ddkf/io/model_json.hpp"
#include "ddkf/io/result_json.hpp"
#include "ddkf/monte_carlo.hpp"
#include "ddkf/predictor.hpp"

#ifndef DDKF_VERSION
#define DDKF_VERSION "0.0.0"
#endif

namespace {

namespace fs = std::filesystem;
using ddkf::io::json;

int log_level() {
    const char* env = std::getenv("DDKF_LOG");
    if (!env) return 1;
    const std::string v(env);
    if (v == "quiet") return 0;
    if (v == "debug") return 2;
    return 1;
}

void info(const std::string& msg) {
    if (log_level() >= 1) std::cerr << "ddkf: " << msg << "\n";
}

void emit_error(const std::string& category, const std::string& message) {
    json j;
    j["error"] = {{"category", category}, {"message", message}};
    std::cerr << j.dump() << "\n";
}

struct EstimateArgs {
    std::string data;
    Eigen::Index L = 0;
    std::string out = ".";
};

int cmd_estimate_innovations(const EstimateArgs& args) {
    auto bundle = ddkf::io::read_trajectory_csv(args.data);
    const ddkf::Trajectory& u = bundle.require('u');
    const ddkf::Trajectory& y = bundle.require('y');
    auto est = ddkf::estimate_innovations(u, y, args.L);
    auto whiteness = ddkf::whiteness_report(est.e_hat);

    fs::create_directories(args.out);
    ddkf::Trajectory e_traj = est.to_trajectory();
    ddkf::io::write_trajectory_csv(fs::path(args.out) / "innovations.csv",
                                   {{'e', &e_traj}});
    json j;
    j["schema_version"] = 1;
    j["kind"] = "ddkf-innovations";
    j["tool_version"] = DDKF_VERSION;
    j["L"] = est.L;
    j["N"] = est.N;
    j["sample_offset"] = est.L;  // e_hat column 0 is sample L of the record
    j["lambda_hat"] = ddkf::io::matrix_to_json(est.lambda_hat);
    j["whiteness"] = {{"band", whiteness.band},
                      {"fraction_within", whiteness.fraction_within},
                      {"pass", whiteness.pass},
                      {"max_lag", whiteness.autocorr.cols()}};
    ddkf::io::write_json_atomic(fs::path(args.out) / "innovations.json", j);
    info("estimated " + std::to_string(est.N) + " innovation samples, whiteness " +
         std::to_string(whiteness.fraction_within));
    return 0;
}

struct BuildArgs {
    std::string data;
    Eigen::Index L = 0, T_p = 0, T_f = 0, n_x_bar = 0;
    std::string out = ".";
};

int cmd_build(const BuildArgs& args) {
    auto bundle = ddkf::io::read_trajectory_csv(args.data);
    const ddkf::Trajectory& u = bundle.require('u');
    const ddkf::Trajectory& y = bundle.require('y');

    auto est = ddkf::estimate_innovations(u, y, args.L);
    ddkf::HorizonSpec spec{.T_p = args.T_p,
                           .T_f = args.T_f,
                           .n_x_bar = args.n_x_bar,
                           .n_u = u.channels(),
                           .n_y = y.channels()};
    spec.validate();
    ddkf::Trajectory u_tail = u.segment(est.L, est.N);
    ddkf::Trajectory y_tail = y.segment(est.L, est.N);
    auto smm = ddkf::reduce(ddkf::build_stacked(u_tail, est.to_trajectory(), y_tail, spec),
                            args.n_x_bar);
    auto ddss = ddkf::build_ddss(smm);
    auto filter = ddkf::make_filter(ddss, est.lambda_hat);
    auto whiteness = ddkf::whiteness_report(est.e_hat);

    ddkf::io::ModelBundle model;
    model.smm = smm;
    model.ddss = ddss;
    model.lambda = est.lambda_hat;
    model.gain = filter.gain();
    model.riccati = filter.riccati_solution();
    model.noise = filter.noise();
    model.diagnostics = {{"cond_L_up", smm.cond_L_up},
                         {"cond_L_uf", smm.cond_L_uf},
                         {"discarded_sv_mass", smm.discarded_sv_mass},
                         {"unexplained_future", smm.unexplained_future},
                         {"stack_columns", smm.M},
                         {"riccati_residual", filter.riccati_residual()},
                         {"closed_loop_radius", filter.closed_loop_radius()},
                         {"dare_iterations", filter.dare_iterations()},
                         {"innovations",
                          {{"L", est.L},
                           {"N", est.N},
                           {"whiteness_fraction", whiteness.fraction_within}}}};

    fs::create_directories(args.out);
    ddkf::io::write_json_atomic(fs::path(args.out) / "model.json",
                                ddkf::io::model_to_json(model, DDKF_VERSION));
    info("model built: state dim " + std::to_string(ddss.state_size()) +
         ", Riccati residual " + std::to_string(filter.riccati_residual()));
    return 0;
}

struct PredictArgs {
    std::string model, past, future;
    std::string out = ".";
};

int cmd_predict(const PredictArgs& args) {
    auto model = ddkf::io::model_from_json(ddkf::io::read_json(args.model));
    auto pm = ddkf::build_prediction_matrices(model.smm);

    auto past = ddkf::io::read_trajectory_csv(args.past);
    const ddkf::Trajectory& u_past = past.require('u');
    const ddkf::Trajectory& y_past = past.require('y');
    ddkf::detail::require(u_past.length() == y_past.length(),
                          ddkf::ErrorCategory::dimension_mismatch,
                          "predict: past u/y lengths differ");
    ddkf::detail::require(u_past.channels() == model.smm.horizon.n_u &&
                              y_past.channels() == model.smm.horizon.n_y,
                          ddkf::ErrorCategory::dimension_mismatch,
                          "predict: past channel counts disagree with the model");

    ddkf::DareSolution dare;
    dare.P = model.riccati;
    dare.K = model.gain;
    ddkf::KalmanPredictor filter(model.ddss, model.noise, std::move(dare));
    for (Eigen::Index t = 0; t < u_past.length(); ++t)
        filter.step(u_past.sample(t), y_past.sample(t));

    auto future = ddkf::io::read_trajectory_csv(args.future);
    const ddkf::Trajectory& u_f = future.require('u');
    ddkf::detail::require(u_f.channels() == model.smm.horizon.n_u &&
                              u_f.length() == model.smm.horizon.T_f,
                          ddkf::ErrorCategory::dimension_mismatch,
                          "predict: future input must be n_u channels x T_f rows");
    Eigen::VectorXd u_f_stacked(u_f.channels() * u_f.length());
    for (Eigen::Index t = 0; t < u_f.length(); ++t)
        u_f_stacked.segment(t * u_f.channels(), u_f.channels()) = u_f.sample(t);

    Eigen::VectorXd y_f = ddkf::predict(pm, filter.state(), u_f_stacked);
    const Eigen::Index ny = model.smm.horizon.n_y;
    Eigen::MatrixXd y_mat(ny, model.smm.horizon.T_f);
    for (Eigen::Index t = 0; t < y_mat.cols(); ++t) y_mat.col(t) = y_f.segment(t * ny, ny);

    fs::create_directories(args.out);
    ddkf::Trajectory y_traj(y_mat);
    ddkf::io::write_trajectory_csv(fs::path(args.out) / "prediction.csv",
                                   {{'y', &y_traj}});
    info("predicted " + std::to_string(y_mat.cols()) + " future steps");
    return 0;
}

struct BenchmarkArgs {
    std::string config;
    std::string out = ".";
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
};

int cmd_benchmark(const BenchmarkArgs& args) {
    json cfg_json = ddkf::io::read_json(args.config);
    auto cfg = ddkf::io::benchmark_config_from_json(cfg_json);
    auto methods = ddkf::io::methods_from_json(cfg_json);
    if (args.seed) cfg.master_seed = *args.seed;
    int threads = cfg_json.value("threads", 1);
    if (args.threads) threads = *args.threads;
    if (threads <= 0)
        threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));

    info("running " + std::to_string(cfg.mc_runs) + " monte-carlo runs on " +
         std::to_string(threads) + " thread(s)");
    auto mc = ddkf::bench::run_monte_carlo(cfg, methods, threads);

    int failures = 0;
    for (const auto& run : mc.runs)
        if (!run.ok) {
            ++failures;
            info("run " + std::to_string(run.run_index) + " failed: " + run.message);
        }

    fs::create_directories(args.out);
    json result = ddkf::io::result_bundle(mc, cfg, DDKF_VERSION);
    ddkf::io::write_json_atomic(fs::path(args.out) / "result.json", result);
    ddkf::io::write_json_atomic(fs::path(args.out) / "boxplots.json", result["summary"]);
    ddkf::io::write_runs_csv(fs::path(args.out) / "runs.csv", mc, cfg);
    info("campaign done: " + std::to_string(mc.runs.size() - failures) + "/" +
         std::to_string(mc.runs.size()) + " runs ok");
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"data-driven Kalman prediction from input-output records"};
    app.set_version_flag("--version", DDKF_VERSION);
    app.require_subcommand(1);

    EstimateArgs est_args;
    auto* est = app.add_subcommand("estimate-innovations",
                                   "estimate the innovations sequence from u/y data");
    est->add_option("--data", est_args.data, "trajectory CSV with u:/y: channels")
        ->required();
    est->add_option("--L", est_args.L, "past-regression horizon")->required();
    est->add_option("--out", est_args.out, "output directory");

    BuildArgs build_args;
    auto* build = app.add_subcommand("build",
                                     "build the SMM, state-space model, and filter");
    build->add_option("--data", build_args.data, "trajectory CSV with u:/y: channels")
        ->required();
    build->add_option("--L", build_args.L, "past-regression horizon")->required();
    build->add_option("--Tp", build_args.T_p, "past horizon")->required();
    build->add_option("--Tf", build_args.T_f, "future horizon")->required();
    build->add_option("--nx", build_args.n_x_bar, "state-order upper bound")->required();
    build->add_option("--out", build_args.out, "output directory");

    PredictArgs pred_args;
    auto* pred = app.add_subcommand("predict", "multi-step prediction from a saved model");
    pred->add_option("--model", pred_args.model, "model JSON file")->required();
    pred->add_option("--past", pred_args.past, "past-window CSV with u:/y: channels")
        ->required();
    pred->add_option("--future", pred_args.future, "future-input CSV with u: channels")
        ->required();
    pred->add_option("--out", pred_args.out, "output directory");

    BenchmarkArgs bench_args;
    std::uint64_t seed_flag = 0;
    int threads_flag = 0;
    auto* bench = app.add_subcommand("benchmark", "run the aircraft benchmark campaign");
    bench->add_option("--config", bench_args.config, "benchmark config JSON")->required();
    bench->add_option("--out", bench_args.out, "output directory");
    auto* seed_opt = bench->add_option("--seed", seed_flag, "override the master seed");
    auto* threads_opt =
        bench->add_option("--threads", threads_flag, "worker threads (0 = all cores)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        emit_error("usage-error", e.what());
        return ddkf::exit_code(ddkf::ErrorCategory::usage);
    }

    try {
        if (est->parsed()) return cmd_estimate_innovations(est_args);
        if (build->parsed()) return cmd_build(build_args);
        if (pred->parsed()) return cmd_predict(pred_args);
        if (bench->parsed()) {
            if (seed_opt->count()) bench_args.seed = seed_flag;
            if (threads_opt->count()) bench_args.threads = threads_flag;
            return cmd_benchmark(bench_args);
        }
        emit_error("usage-error", "no subcommand given");
        return ddkf::exit_code(ddkf::ErrorCategory::usage);
    } catch (const ddkf::Error& e) {
        emit_error(ddkf::to_string(e.category()), e.what());
        return ddkf::exit_code(e.category());
    } catch (const std::exception& e) {
        emit_error("internal", e.what());
        return 1;
    }
}
