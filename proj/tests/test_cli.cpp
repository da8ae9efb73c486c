#include <catch2/catch.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ddkf/innovations.hpp"
#include "ddkf/io/csv.hpp"
#include "ddkf/io/model_json.hpp"
#include "ddkf/io/result_json.hpp"
#include "ddkf/predictor.hpp"
#include "ddkf/rng.hpp"
#include "test_helpers.hpp"

namespace fs = std::filesystem;
using ddkf::GaussianStream;
using ddkf::Trajectory;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

namespace {

struct CliRun {
    int exit_code;
    std::string err;
};

fs::path fresh_dir(const std::string& tag) {
    fs::path dir = fs::temp_directory_path() / ("ddkf_test_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

CliRun run_cli(const std::string& args, const fs::path& dir) {
    const fs::path err_file = dir / "stderr.txt";
    const std::string cmd =
        std::string(DDKF_CLI_BIN) + " " + args + " 2>" + err_file.string();
    const int status = std::system(cmd.c_str());
    CliRun out;
    out.exit_code = WEXITSTATUS(status);
    std::ifstream in(err_file);
    std::stringstream ss;
    ss << in.rdbuf();
    out.err = ss.str();
    return out;
}

std::string error_category(const std::string& stderr_text) {
    // The last stderr line carries the machine-readable error payload.
    std::string last;
    std::stringstream ss(stderr_text);
    std::string line;
    while (std::getline(ss, line))
        if (!line.empty()) last = line;
    json j = json::parse(last, nullptr, false);
    if (j.is_discarded() || !j.contains("error")) return "";
    return j["error"].value("category", "");
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json small_benchmark_config() {
    json cfg;
    cfg["schema_version"] = 1;
    cfg["N"] = 400;
    cfg["L"] = 40;
    cfg["T_p"] = 8;
    cfg["T_f"] = 5;
    cfg["n_x_bar"] = 7;
    cfg["mc_runs"] = 2;
    cfg["master_seed"] = 7;
    cfg["sim_duration"] = 6.0;
    cfg["gust"] = {{"V", 774.0}};
    cfg["methods"] = {"innov-smm-kal", "unfiltered-smm"};
    return cfg;
}

} // namespace

TEST_CASE("trajectory CSV round-trips bit exactly") {
    auto dir = fresh_dir("csv");
    GaussianStream g(1);
    MatrixXd u_m = g.matrix(2, 40);
    u_m(0, 0) = 1.0 / 3.0;
    u_m(1, 1) = 1e-17;
    u_m(0, 2) = -12345.678901234567;
    MatrixXd y_m = g.matrix(1, 40);
    Trajectory u(u_m, {"throttle", "elevator"});
    Trajectory y(y_m, {"speed"});

    const fs::path file = dir / "traj.csv";
    ddkf::io::write_trajectory_csv(file, {{'u', &u}, {'y', &y}});
    auto bundle = ddkf::io::read_trajectory_csv(file);
    REQUIRE(bundle.u.has_value());
    REQUIRE(bundle.y.has_value());
    CHECK(bundle.u->samples() == u_m);
    CHECK(bundle.y->samples() == y_m);
    CHECK(bundle.u->channel_names()[0] == "throttle");
    CHECK_FALSE(bundle.w.has_value());
}

TEST_CASE("model JSON round-trips the pipeline state") {
    MatrixXd A(2, 2), Bu(2, 1), C(2, 2), K(2, 2), Lambda(2, 2);
    A << 0.7, 0.1, -0.2, 0.4;
    Bu << 1.0, -0.5;
    C.setIdentity();
    K << 0.25, 0.0, 0.1, 0.3;
    Lambda << 0.4, 0.1, 0.1, 0.5;
    GaussianStream g(2);
    const Eigen::Index len = 200;
    MatrixXd u = g.matrix(1, len);
    MatrixXd e = ddkf_test::gaussian_with_cov(Lambda, len, g);
    MatrixXd D = MatrixXd::Zero(2, 1);
    MatrixXd y = ddkf_test::simulate_innovations_form(A, Bu, C, D, K, u, e);

    ddkf::HorizonSpec spec{.T_p = 3, .T_f = 2, .n_x_bar = 2, .n_u = 1, .n_y = 2};
    auto smm = ddkf::reduce(
        ddkf::build_stacked(Trajectory(u), Trajectory(e), Trajectory(y), spec), 2);
    auto ddss = ddkf::build_ddss(smm);
    auto filter = ddkf::make_filter(ddss, Lambda);

    ddkf::io::ModelBundle m;
    m.smm = smm;
    m.ddss = ddss;
    m.lambda = Lambda;
    m.gain = filter.gain();
    m.riccati = filter.riccati_solution();
    m.noise = filter.noise();
    m.diagnostics = {{"note", 1}};

    json j = ddkf::io::model_to_json(m, "test");
    auto back = ddkf::io::model_from_json(j);
    CHECK(back.smm.L_up == m.smm.L_up);
    CHECK(back.smm.S_yy == m.smm.S_yy);
    CHECK(back.ddss.A_p == m.ddss.A_p);
    CHECK(back.gain == m.gain);
    CHECK(back.noise.Lambda2 == m.noise.Lambda2);
}

TEST_CASE("cli estimate-innovations emits aligned artifacts") {
    auto dir = fresh_dir("est");
    GaussianStream g(3);
    MatrixXd u_m = g.matrix(1, 160);
    MatrixXd y_m = g.matrix(1, 160);
    Trajectory u(u_m), y(y_m);
    ddkf::io::write_trajectory_csv(dir / "data.csv", {{'u', &u}, {'y', &y}});

    auto run = run_cli("estimate-innovations --data " + (dir / "data.csv").string() +
                           " --L 10 --out " + dir.string(),
                       dir);
    REQUIRE(run.exit_code == 0);

    auto est = ddkf::estimate_innovations(u, y, 10);
    auto bundle = ddkf::io::read_trajectory_csv(dir / "innovations.csv");
    REQUIRE(bundle.e.has_value());
    CHECK(bundle.e->samples() == est.e_hat);

    json meta = json::parse(slurp(dir / "innovations.json"));
    CHECK(meta["kind"] == "ddkf-innovations");
    CHECK(meta["L"] == 10);
    CHECK(meta["N"] == 150);
    CHECK(ddkf::io::matrix_from_json(meta["lambda_hat"]) == est.lambda_hat);
}

TEST_CASE("cli build then predict matches the in-process pipeline") {
    auto dir = fresh_dir("buildpredict");
    MatrixXd A(2, 2), Bu(2, 2), C(2, 2), K(2, 2), Lambda(2, 2);
    A << 0.7, 0.1, -0.2, 0.4;
    Bu << 1.0, 0.2, -0.5, 0.7;
    C.setIdentity();
    K << 0.25, 0.0, 0.1, 0.3;
    Lambda << 0.4, 0.1, 0.1, 0.5;
    GaussianStream g(4);
    const Eigen::Index len = 400, L = 20;
    MatrixXd u = g.matrix(2, len);
    MatrixXd e = ddkf_test::gaussian_with_cov(Lambda, len, g);
    MatrixXd D = MatrixXd::Zero(2, 2);
    MatrixXd y = ddkf_test::simulate_innovations_form(A, Bu, C, D, K, u, e);
    Trajectory u_t(u), y_t(y);
    ddkf::io::write_trajectory_csv(dir / "data.csv", {{'u', &u_t}, {'y', &y_t}});

    auto build = run_cli("build --data " + (dir / "data.csv").string() +
                             " --L 20 --Tp 4 --Tf 3 --nx 2 --out " + dir.string(),
                         dir);
    REQUIRE(build.exit_code == 0);

    // Fresh validation record for the filter warmup and a future input file.
    MatrixXd u2 = g.matrix(2, 30);
    MatrixXd e2 = ddkf_test::gaussian_with_cov(Lambda, 30, g);
    MatrixXd y2 = ddkf_test::simulate_innovations_form(A, Bu, C, D, K, u2, e2);
    Trajectory u2_t(u2), y2_t(y2);
    ddkf::io::write_trajectory_csv(dir / "past.csv", {{'u', &u2_t}, {'y', &y2_t}});
    MatrixXd uf = g.matrix(2, 3);
    Trajectory uf_t(uf);
    ddkf::io::write_trajectory_csv(dir / "future.csv", {{'u', &uf_t}});

    auto predict = run_cli("predict --model " + (dir / "model.json").string() +
                               " --past " + (dir / "past.csv").string() + " --future " +
                               (dir / "future.csv").string() + " --out " + dir.string(),
                           dir);
    REQUIRE(predict.exit_code == 0);

    // In-process reference computation.
    auto est = ddkf::estimate_innovations(u_t, y_t, L);
    ddkf::HorizonSpec spec{.T_p = 4, .T_f = 3, .n_x_bar = 2, .n_u = 2, .n_y = 2};
    auto smm = ddkf::reduce(ddkf::build_stacked(u_t.segment(L, len - L),
                                                est.to_trajectory(),
                                                y_t.segment(L, len - L), spec),
                            2);
    auto filter = ddkf::make_filter(ddkf::build_ddss(smm), est.lambda_hat);
    for (Eigen::Index t = 0; t < u2.cols(); ++t) filter.step(u2.col(t), y2.col(t));
    VectorXd uf_stacked(6);
    for (Eigen::Index t = 0; t < 3; ++t) uf_stacked.segment(t * 2, 2) = uf.col(t);
    VectorXd expected =
        ddkf::predict(ddkf::build_prediction_matrices(smm), filter.state(), uf_stacked);

    auto pred = ddkf::io::read_trajectory_csv(dir / "prediction.csv");
    REQUIRE(pred.y.has_value());
    for (Eigen::Index t = 0; t < 3; ++t)
        CHECK((pred.y->sample(t) - expected.segment(t * 2, 2)).norm() <=
              1e-9 * std::max(1.0, expected.norm()));
}

TEST_CASE("cli build reports insufficient data with the right category") {
    auto dir = fresh_dir("short");
    GaussianStream g(5);
    MatrixXd u_m = g.matrix(1, 12);
    MatrixXd y_m = g.matrix(1, 12);
    Trajectory u(u_m), y(y_m);
    ddkf::io::write_trajectory_csv(dir / "data.csv", {{'u', &u}, {'y', &y}});
    auto run = run_cli("build --data " + (dir / "data.csv").string() +
                           " --L 4 --Tp 3 --Tf 3 --nx 2 --out " + dir.string(),
                       dir);
    CHECK(run.exit_code == 6);
    CHECK(error_category(run.err) == "insufficient-data");
}

TEST_CASE("cli rejects unknown config keys as schema violations") {
    auto dir = fresh_dir("schema");
    json cfg = small_benchmark_config();
    cfg["no_such_option"] = 1;
    std::ofstream(dir / "config.json") << cfg.dump();
    auto run = run_cli("benchmark --config " + (dir / "config.json").string() +
                           " --out " + dir.string(),
                       dir);
    CHECK(run.exit_code == 4);
    CHECK(error_category(run.err) == "schema-violation");

    json no_v = small_benchmark_config();
    no_v["gust"] = json::object();
    std::ofstream(dir / "config2.json") << no_v.dump();
    auto run2 = run_cli("benchmark --config " + (dir / "config2.json").string() +
                            " --out " + dir.string(),
                        dir);
    CHECK(run2.exit_code == 4);
}

TEST_CASE("cli benchmark is byte-deterministic and schema-valid") {
    auto dir = fresh_dir("bench");
    std::ofstream(dir / "config.json") << small_benchmark_config().dump();

    fs::create_directories(dir / "a");
    fs::create_directories(dir / "b");
    auto r1 = run_cli("benchmark --config " + (dir / "config.json").string() +
                          " --out " + (dir / "a").string() + " --threads 2",
                      dir);
    REQUIRE(r1.exit_code == 0);
    auto r2 = run_cli("benchmark --config " + (dir / "config.json").string() +
                          " --out " + (dir / "b").string() + " --threads 1",
                      dir);
    REQUIRE(r2.exit_code == 0);

    CHECK(slurp(dir / "a/result.json") == slurp(dir / "b/result.json"));
    CHECK(slurp(dir / "a/boxplots.json") == slurp(dir / "b/boxplots.json"));
    CHECK(slurp(dir / "a/runs.csv") == slurp(dir / "b/runs.csv"));

    json result = json::parse(slurp(dir / "a/result.json"));
    ddkf::io::validate_result_bundle(result);
    CHECK(result["runs"].size() == 2);
    CHECK(result["provenance"]["config_hash"].get<std::string>().size() == 16);

    // A different seed changes the payload.
    fs::create_directories(dir / "c");
    auto r3 = run_cli("benchmark --config " + (dir / "config.json").string() +
                          " --out " + (dir / "c").string() + " --seed 99",
                      dir);
    REQUIRE(r3.exit_code == 0);
    CHECK(slurp(dir / "a/result.json") != slurp(dir / "c/result.json"));
}

TEST_CASE("shipped reference configuration is valid") {
    json cfg = json::parse(slurp(fs::path(DDKF_SOURCE_DIR) / "configs" /
                                 "benchmark_reference.json"));
    auto parsed = ddkf::io::benchmark_config_from_json(cfg);
    CHECK(parsed.N == 2500);
    CHECK(parsed.L == 150);
    CHECK(parsed.T_p == 30);
    CHECK(parsed.T_f == 20);
    CHECK(parsed.mc_runs == 100);
    CHECK(parsed.gust.V == 774.0);
    CHECK(parsed.Sigma_v(0, 0) == 0.0625);
}

TEST_CASE("cli usage errors are machine readable") {
    auto dir = fresh_dir("usage");
    auto run = run_cli("predict --model missing.json", dir);
    CHECK(run.exit_code == 2);
    CHECK(error_category(run.err) == "usage-error");

    auto run2 = run_cli("benchmark --config /nonexistent/config.json", dir);
    CHECK(run2.exit_code == 5);
    CHECK(error_category(run2.err) == "io-error");
}
