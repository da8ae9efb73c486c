#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "ddkf/benchmark.hpp"
#include "ddkf/ddss.hpp"
#include "ddkf/errors.hpp"
#include "ddkf/innovations.hpp"
#include "ddkf/kalman.hpp"
#include "ddkf/predictor.hpp"
#include "ddkf/smm.hpp"
#include "ddkf/trajectory.hpp"

namespace ddkf::bench {

/// Full specification of the aircraft benchmark experiment.
struct BenchmarkConfig {
    Eigen::Index N = 2500;        // identification samples after the warmup
    Eigen::Index L = 150;         // innovations-regression horizon
    Eigen::Index T_p = 30;
    Eigen::Index T_f = 20;
    Eigen::Index n_x_bar = 7;
    double dt = 0.1;
    Eigen::MatrixXd Sigma_w = Eigen::MatrixXd::Identity(2, 2);
    Eigen::MatrixXd Sigma_v = 0.0625 * Eigen::MatrixXd::Identity(2, 2);
    int mc_runs = 100;
    std::uint64_t master_seed = 1;
    double step_time = 3.0;       // reference step instant [s]
    double sim_duration = 10.0;   // closed-loop horizon [s]
    Eigen::MatrixXd Q = Eigen::MatrixXd::Identity(2, 2);
    Eigen::MatrixXd R = 0.1 * Eigen::MatrixXd::Identity(2, 2);
    GustParams gust{};            // V is mandatory and has no default
    Eigen::VectorXd reference_step = (Eigen::VectorXd(2) << 1.0, 0.0).finished();
    std::optional<Eigen::VectorXd> u_min, u_max;
    bool keep_records = false;  // retain closed-loop records in the results

    /// Reference configuration of the aircraft study. V = 774 ft/s is a
    /// conventional cruise value chosen here; there is no canonical airspeed
    /// for this model, so set it explicitly for other flight conditions.
    static BenchmarkConfig reference() {
        BenchmarkConfig c;
        c.gust = GustParams{10.0, 10.0, 1750.0, 875.0, 774.0};
        return c;
    }

    Eigen::Index sim_steps() const { return static_cast<Eigen::Index>(std::llround(sim_duration / dt)); }
    Eigen::Index step_index() const { return static_cast<Eigen::Index>(std::llround(step_time / dt)); }

    HorizonSpec horizon() const {
        return HorizonSpec{.T_p = T_p, .T_f = T_f, .n_x_bar = n_x_bar, .n_u = 2, .n_y = 2};
    }

    void validate() const {
        detail::require(N > L && L >= 1, ErrorCategory::config_invalid,
                        "BenchmarkConfig: need N > L >= 1");
        detail::require(dt > 0 && sim_duration > step_time && step_time >= 0,
                        ErrorCategory::config_invalid, "BenchmarkConfig: bad timing");
        detail::require(mc_runs >= 1, ErrorCategory::config_invalid,
                        "BenchmarkConfig: mc_runs must be >= 1");
        detail::require(linalg::min_eigenvalue_sym(Sigma_w) >= -1e-12 &&
                            linalg::min_eigenvalue_sym(Sigma_v) >= -1e-12,
                        ErrorCategory::config_invalid,
                        "BenchmarkConfig: noise covariances must be PSD");
        detail::require(reference_step.size() == 2, ErrorCategory::config_invalid,
                        "BenchmarkConfig: reference step must have two outputs");
        horizon().validate();
        gust.validate();
        detail::require(sim_steps() > step_index() + 2, ErrorCategory::config_invalid,
                        "BenchmarkConfig: simulation too short for the step");
    }
};

struct PerformanceIndices {
    Eigen::VectorXd tracking_rmse;  // per output, post-step window
    double input_energy = 0.0;      // sum ||u||^2 dt
    std::vector<std::pair<Eigen::Index, double>> prediction_rmse;  // (k, rmse)
    Eigen::VectorXd settling_time;  // per output [s], capped at the window end
};

inline std::vector<Eigen::Index> prediction_steps(Eigen::Index T_f) {
    std::vector<Eigen::Index> ks{1, (T_f + 1) / 2, T_f};
    ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
    return ks;
}

inline std::vector<std::string> index_names(const BenchmarkConfig& cfg) {
    std::vector<std::string> names;
    for (Eigen::Index i = 0; i < 2; ++i)
        names.push_back("tracking_rmse_y" + std::to_string(i + 1));
    names.push_back("input_energy");
    for (Eigen::Index k : prediction_steps(cfg.T_f))
        names.push_back("pred_rmse_" + std::to_string(k));
    for (Eigen::Index i = 0; i < 2; ++i)
        names.push_back("settling_y" + std::to_string(i + 1));
    return names;
}

inline Eigen::VectorXd flatten_indices(const PerformanceIndices& p) {
    Eigen::VectorXd v(p.tracking_rmse.size() + 1 +
                      static_cast<Eigen::Index>(p.prediction_rmse.size()) +
                      p.settling_time.size());
    Eigen::Index at = 0;
    for (Eigen::Index i = 0; i < p.tracking_rmse.size(); ++i) v(at++) = p.tracking_rmse(i);
    v(at++) = p.input_energy;
    for (const auto& [k, rmse] : p.prediction_rmse) v(at++) = rmse;
    for (Eigen::Index i = 0; i < p.settling_time.size(); ++i) v(at++) = p.settling_time(i);
    return v;
}

enum class Method { innov_smm_kal, smm_kal, unfiltered_smm, oracle_kf };

inline const char* method_name(Method m) {
    switch (m) {
        case Method::innov_smm_kal: return "innov-smm-kal";
        case Method::smm_kal: return "smm-kal";
        case Method::unfiltered_smm: return "unfiltered-smm";
        case Method::oracle_kf: return "oracle-kf";
    }
    return "unknown";
}

inline std::vector<Method> all_methods() {
    return {Method::innov_smm_kal, Method::smm_kal, Method::unfiltered_smm,
            Method::oracle_kf};
}

/// A receding-horizon policy whose state estimate feeds an affine prediction
/// y_f = O * estimate + M * u_f.
struct LinearPolicy {
    std::function<Eigen::VectorXd()> estimate;
    std::function<void(const Eigen::VectorXd&, const Eigen::VectorXd&)> observe;
    Eigen::MatrixXd O, M;
};

struct ClosedLoopRecord {
    Eigen::MatrixXd u, y, y_clean, r;  // channels x steps
    Eigen::MatrixXd reference_full;    // extends T_f beyond the horizon
    Eigen::MatrixXd estimates;         // estimate after observing step t
};

/// One closed-loop simulation: at step t the policy's estimate (information
/// through t-1) fixes u(t) via the tracking solve, the plant advances under
/// fresh seeded noise, and the policy observes (u(t), y(t)).
inline ClosedLoopRecord run_closed_loop(const DiscretePlant& plant, LinearPolicy& policy,
                                        const BenchmarkConfig& cfg, std::uint64_t seed_w,
                                        std::uint64_t seed_v) {
    const Eigen::Index steps = cfg.sim_steps();
    const Eigen::Index ny = plant.outputs(), nu = plant.inputs();

    ClosedLoopRecord rec;
    rec.reference_full = Eigen::MatrixXd::Zero(ny, steps + cfg.T_f);
    for (Eigen::Index k = cfg.step_index(); k < steps + cfg.T_f; ++k)
        rec.reference_full.col(k) = cfg.reference_step;
    rec.r = rec.reference_full.leftCols(steps);
    rec.u.resize(nu, steps);
    rec.y.resize(ny, steps);
    rec.y_clean.resize(ny, steps);
    rec.estimates.resize(policy.O.cols(), steps);

    GaussianStream stream_w(seed_w), stream_v(seed_v);
    Eigen::MatrixXd w = psd_sqrt(cfg.Sigma_w) * stream_w.matrix(cfg.Sigma_w.rows(), steps);
    Eigen::MatrixXd v = psd_sqrt(cfg.Sigma_v) * stream_v.matrix(cfg.Sigma_v.rows(), steps);

    TrackingProblem prob;
    prob.Q = cfg.Q;
    prob.R = cfg.R;
    prob.u_min = cfg.u_min;
    prob.u_max = cfg.u_max;

    Eigen::VectorXd x_sys = Eigen::VectorXd::Zero(plant.states());
    for (Eigen::Index t = 0; t < steps; ++t) {
        Eigen::VectorXd r_window(ny * cfg.T_f);
        for (Eigen::Index k = 0; k < cfg.T_f; ++k)
            r_window.segment(k * ny, ny) = rec.reference_full.col(t + k);
        prob.r_f = r_window;

        Eigen::VectorXd free_resp = policy.O * policy.estimate();
        Eigen::VectorXd u_t =
            solve_tracking_core(policy.M, free_resp, prob, nu, cfg.T_f).u_f.head(nu);

        rec.u.col(t) = u_t;
        rec.y_clean.col(t) = plant.C * x_sys + plant.D * u_t;
        rec.y.col(t) = rec.y_clean.col(t) + v.col(t);
        policy.observe(u_t, rec.y.col(t));
        rec.estimates.col(t) = policy.estimate();

        x_sys = plant.A * x_sys + plant.B_u * u_t + plant.B_w * w.col(t);
    }
    return rec;
}

struct PredictionsLog {
    std::vector<Eigen::Index> k_values;
    // predicted.at(i).col(t) = prediction of y(t + k_values[i]) from info at t
    std::vector<Eigen::MatrixXd> predicted;
    Eigen::Index t_count = 0;
};

/// Post-pass: multi-step predictions along the realized closed-loop inputs.
inline PredictionsLog log_predictions(const ClosedLoopRecord& rec, const Eigen::MatrixXd& O,
                                      const Eigen::MatrixXd& M, Eigen::Index T_f,
                                      Eigen::Index n_u) {
    const Eigen::Index steps = rec.u.cols();
    const Eigen::Index ny = rec.y.rows();
    PredictionsLog log;
    log.k_values = prediction_steps(T_f);
    log.t_count = steps - T_f;
    for (std::size_t i = 0; i < log.k_values.size(); ++i)
        log.predicted.emplace_back(ny, log.t_count);

    Eigen::VectorXd u_f(n_u * T_f);
    for (Eigen::Index t = 0; t + T_f < steps; ++t) {
        for (Eigen::Index k = 0; k < T_f; ++k) u_f.segment(k * n_u, n_u) = rec.u.col(t + 1 + k);
        Eigen::VectorXd y_f = O * rec.estimates.col(t) + M * u_f;
        for (std::size_t i = 0; i < log.k_values.size(); ++i)
            log.predicted[i].col(t) = y_f.segment((log.k_values[i] - 1) * ny, ny);
    }
    return log;
}

/// Index definitions: output tracking RMSE over the post-step window against
/// the noise-free output, the input energy, k-step prediction RMSE against
/// the realized noise-free output, and a banded settling time.
inline PerformanceIndices performance_indices(const ClosedLoopRecord& rec,
                                              const PredictionsLog& predictions,
                                              const BenchmarkConfig& cfg) {
    const Eigen::Index steps = rec.u.cols();
    const Eigen::Index ny = rec.y.rows();
    detail::require(rec.r.cols() == steps && rec.y_clean.cols() == steps,
                    ErrorCategory::dimension_mismatch,
                    "performance_indices: record lengths differ");
    PerformanceIndices out;

    const Eigen::Index post = cfg.step_index();
    const Eigen::Index post_len = steps - post;
    out.tracking_rmse.resize(ny);
    for (Eigen::Index i = 0; i < ny; ++i) {
        double acc = 0.0;
        for (Eigen::Index k = post; k < steps; ++k)
            acc += std::pow(rec.y_clean(i, k) - rec.r(i, k), 2);
        out.tracking_rmse(i) = std::sqrt(acc / static_cast<double>(post_len));
    }

    out.input_energy = rec.u.squaredNorm() * cfg.dt;

    for (std::size_t i = 0; i < predictions.k_values.size(); ++i) {
        const Eigen::Index k = predictions.k_values[i];
        double acc = 0.0;
        Eigen::Index count = 0;
        for (Eigen::Index t = 0; t < predictions.t_count; ++t) {
            acc += (predictions.predicted[i].col(t) - rec.y_clean.col(t + k)).squaredNorm();
            count += ny;
        }
        out.prediction_rmse.emplace_back(k, std::sqrt(acc / static_cast<double>(count)));
    }

    const double band = 0.05 * rec.reference_full.rightCols(1).cwiseAbs().maxCoeff();
    out.settling_time.resize(ny);
    for (Eigen::Index i = 0; i < ny; ++i) {
        Eigen::Index settle = steps;  // cap: never settles inside the window
        for (Eigen::Index k = steps; k-- > post;) {
            if (std::abs(rec.y_clean(i, k) - rec.r(i, k)) > band) break;
            settle = k;
        }
        out.settling_time(i) = static_cast<double>(settle - post) * cfg.dt;
    }
    return out;
}

struct RunDiagnostics {
    Eigen::VectorXd innovations_correlation;  // per channel, vs oracle innovations
    double innovations_whiteness_fraction = 0.0;
    double riccati_residual_innov = 0.0;
    double riccati_residual_disturbance = 0.0;
};

struct RunResult {
    int run_index = 0;
    bool ok = false;
    std::string message;
    std::map<std::string, PerformanceIndices> indices;
    std::map<std::string, ClosedLoopRecord> records;  // only with keep_records
    RunDiagnostics diagnostics;
};

namespace detail_mc {

/// Ring-buffer window state for the unfiltered baseline: coordinates read
/// directly from the raw past window with the innovations channels at their
/// zero mean, no filtering.
class WindowEstimator {
public:
    WindowEstimator(const ParsimoniousSMM& smm)
        : smm_(smm),
          nb_(smm.n_ubar()),
          up_(Eigen::VectorXd::Zero(smm.r1())),
          yp_(Eigen::VectorXd::Zero(smm.r2())),
          up_pinv_(linalg::pinv_svd(smm.L_up).pinv),
          lyp_qr_(smm.L_yp) {}

    void push(const Eigen::VectorXd& u, const Eigen::VectorXd& y) {
        const Eigen::Index nu = smm_.horizon.n_u, ny = smm_.horizon.n_y;
        roll(up_, nb_);
        up_.tail(nb_).head(nu) = u;
        up_.tail(ny).setZero();  // unknown online innovations at their mean
        roll(yp_, ny);
        yp_.tail(ny) = y;
    }

    Eigen::VectorXd estimate() const {
        Eigen::VectorXd x_u = up_pinv_ * up_;
        Eigen::VectorXd x_y = lyp_qr_.solve(yp_ - smm_.L_yup * x_u);
        Eigen::VectorXd x(x_u.size() + x_y.size());
        x << x_u, x_y;
        return x;
    }

private:
    static void roll(Eigen::VectorXd& buf, Eigen::Index block) {
        buf.head(buf.size() - block) = buf.tail(buf.size() - block).eval();
    }

    ParsimoniousSMM smm_;
    Eigen::Index nb_;
    Eigen::VectorXd up_, yp_;
    Eigen::MatrixXd up_pinv_;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> lyp_qr_;
};

inline Eigen::MatrixXd stack_state_maps(const PredictionMatrices& pm) {
    Eigen::MatrixXd O(pm.output_size(), pm.state_size());
    O << pm.E_xu, pm.E_xy;
    return O;
}

} // namespace detail_mc

/// One complete benchmark run: identification data, the four methods, the
/// closed-loop simulations, and the performance table.
inline RunResult run_single(const BenchmarkConfig& cfg, int run,
                            const std::vector<Method>& methods) {
    RunResult result;
    result.run_index = run;
    try {
        const std::uint64_t run_seed = cfg.master_seed + static_cast<std::uint64_t>(run);
        const HorizonSpec spec = cfg.horizon();

        ContinuousPlant aircraft = dryden_augment(b747_continuous(), cfg.gust);
        DiscretePlant plant = zoh_discretize(aircraft, cfg.dt);

        // Identification record: L + N samples under a persistently exciting
        // Gaussian input.
        const Eigen::Index total = cfg.L + cfg.N;
        GaussianStream id_u_stream(derive_seed(run_seed, 0));
        Eigen::MatrixXd u_id = id_u_stream.matrix(plant.inputs(), total);
        SimRecord id = simulate(plant, u_id, cfg.Sigma_w, cfg.Sigma_v,
                                derive_seed(run_seed, 1), derive_seed(run_seed, 2));

        Trajectory u_all(u_id), y_all(id.y);
        InnovationsEstimate est = estimate_innovations(u_all, y_all, cfg.L);
        Trajectory u_tail = u_all.segment(cfg.L, cfg.N);
        Trajectory y_tail = y_all.segment(cfg.L, cfg.N);
        Trajectory w_tail = Trajectory(id.w).segment(cfg.L, cfg.N);

        // Innovations-route model (methods a and c).
        auto smm_innov = reduce(build_stacked(u_tail, est.to_trajectory(), y_tail, spec),
                                cfg.n_x_bar);
        auto ddss_innov = build_ddss(smm_innov);
        auto pm_innov = build_prediction_matrices(smm_innov);

        // Disturbance-route model (method b) built from the measured w.
        auto smm_w = reduce(build_stacked(u_tail, w_tail, y_tail, spec), cfg.n_x_bar);
        auto ddss_w = build_ddss(smm_w);
        auto pm_w = build_prediction_matrices(smm_w);

        // Ground-truth filter and diagnostics.
        OracleKalman oracle = oracle_kf(plant, cfg.Sigma_w, cfg.Sigma_v);
        Eigen::MatrixXd e_true = oracle.innovations_on(u_id, id.y);
        result.diagnostics.innovations_correlation =
            channel_correlation(est.e_hat, e_true.rightCols(cfg.N));
        result.diagnostics.innovations_whiteness_fraction =
            whiteness_report(est.e_hat).fraction_within;

        const std::uint64_t cl_w = derive_seed(run_seed, 3);
        const std::uint64_t cl_v = derive_seed(run_seed, 4);

        for (Method m : methods) {
            LinearPolicy policy;
            std::shared_ptr<KalmanPredictor> filter;
            std::shared_ptr<detail_mc::WindowEstimator> window;
            std::shared_ptr<Eigen::VectorXd> oracle_state;

            switch (m) {
                case Method::innov_smm_kal: {
                    filter = std::make_shared<KalmanPredictor>(
                        make_filter(ddss_innov, est.lambda_hat));
                    result.diagnostics.riccati_residual_innov = filter->riccati_residual();
                    policy.O = detail_mc::stack_state_maps(pm_innov);
                    policy.M = pm_innov.E_uf;
                    policy.estimate = [filter] { return filter->state(); };
                    policy.observe = [filter](const Eigen::VectorXd& u,
                                              const Eigen::VectorXd& y) {
                        filter->step(u, y);
                    };
                    break;
                }
                case Method::smm_kal: {
                    filter = std::make_shared<KalmanPredictor>(make_filter_with_noise(
                        ddss_w, NoiseModel::from_disturbance(ddss_w, cfg.Sigma_w,
                                                             cfg.Sigma_v)));
                    result.diagnostics.riccati_residual_disturbance =
                        filter->riccati_residual();
                    policy.O = detail_mc::stack_state_maps(pm_w);
                    policy.M = pm_w.E_uf;
                    policy.estimate = [filter] { return filter->state(); };
                    policy.observe = [filter](const Eigen::VectorXd& u,
                                              const Eigen::VectorXd& y) {
                        filter->step(u, y);
                    };
                    break;
                }
                case Method::unfiltered_smm: {
                    window = std::make_shared<detail_mc::WindowEstimator>(smm_innov);
                    policy.O = detail_mc::stack_state_maps(pm_innov);
                    policy.M = pm_innov.E_uf;
                    policy.estimate = [window] { return window->estimate(); };
                    policy.observe = [window](const Eigen::VectorXd& u,
                                              const Eigen::VectorXd& y) {
                        window->push(u, y);
                    };
                    break;
                }
                case Method::oracle_kf: {
                    auto maps = oracle_prediction_maps(plant, cfg.T_f);
                    policy.O = maps.O;
                    policy.M = maps.M;
                    oracle_state =
                        std::make_shared<Eigen::VectorXd>(Eigen::VectorXd::Zero(plant.states()));
                    const DiscretePlant pl = plant;
                    const Eigen::MatrixXd K = oracle.K;
                    policy.estimate = [oracle_state] { return *oracle_state; };
                    policy.observe = [oracle_state, pl, K](const Eigen::VectorXd& u,
                                                           const Eigen::VectorXd& y) {
                        Eigen::VectorXd& x = *oracle_state;
                        x = pl.A * x + pl.B_u * u + K * (y - pl.C * x - pl.D * u);
                    };
                    break;
                }
            }

            ClosedLoopRecord rec = run_closed_loop(plant, policy, cfg, cl_w, cl_v);
            PredictionsLog predictions =
                log_predictions(rec, policy.O, policy.M, cfg.T_f, plant.inputs());
            result.indices[method_name(m)] = performance_indices(rec, predictions, cfg);
            if (cfg.keep_records) result.records[method_name(m)] = std::move(rec);
        }
        result.ok = true;
    } catch (const std::exception& ex) {
        result.ok = false;
        result.message = ex.what();
    }
    return result;
}

struct McResult {
    std::vector<std::string> methods;
    std::vector<RunResult> runs;
};

/// Campaign over independent runs; each run owns its derived seed stream, so
/// the result is identical for any thread count.
inline McResult run_monte_carlo(const BenchmarkConfig& cfg,
                                const std::vector<Method>& methods = all_methods(),
                                int threads = 1) {
    cfg.validate();
    McResult out;
    for (Method m : methods) out.methods.emplace_back(method_name(m));
    out.runs.resize(static_cast<std::size_t>(cfg.mc_runs));

    threads = std::max(1, std::min<int>(threads, cfg.mc_runs));
    std::atomic<int> next{0};
    auto worker = [&] {
        for (;;) {
            const int run = next.fetch_add(1);
            if (run >= cfg.mc_runs) return;
            out.runs[static_cast<std::size_t>(run)] = run_single(cfg, run, methods);
        }
    };
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(threads));
        for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    return out;
}

struct Quartiles {
    double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
};

/// Type-7 (linear interpolation) quantiles of a nonempty sample.
inline Quartiles quartiles(std::vector<double> values) {
    detail::require(!values.empty(), ErrorCategory::insufficient_data,
                    "quartiles: empty sample");
    std::sort(values.begin(), values.end());
    auto at = [&](double p) {
        const double pos = p * static_cast<double>(values.size() - 1);
        const std::size_t lo = static_cast<std::size_t>(pos);
        const std::size_t hi = std::min(lo + 1, values.size() - 1);
        const double frac = pos - static_cast<double>(lo);
        return values[lo] * (1.0 - frac) + values[hi] * frac;
    };
    return Quartiles{values.front(), at(0.25), at(0.5), at(0.75), values.back()};
}

/// Values of one named index across the successful runs of one method.
inline std::vector<double> collect_index(const McResult& mc, const std::string& method,
                                         const BenchmarkConfig& cfg,
                                         const std::string& index) {
    const std::vector<std::string> names = index_names(cfg);
    const auto pos = std::find(names.begin(), names.end(), index);
    detail::require(pos != names.end(), ErrorCategory::usage,
                    "collect_index: unknown index name " + index);
    const Eigen::Index col = pos - names.begin();
    std::vector<double> values;
    for (const RunResult& run : mc.runs) {
        if (!run.ok) continue;
        auto it = run.indices.find(method);
        if (it == run.indices.end()) continue;
        values.push_back(flatten_indices(it->second)(col));
    }
    return values;
}

} // namespace ddkf::bench
