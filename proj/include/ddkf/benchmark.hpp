#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "ddkf/errors.hpp"
#include "ddkf/kalman.hpp"
#include "ddkf/linalg.hpp"
#include "ddkf/rng.hpp"

namespace ddkf::bench {

/// Continuous-time LTI plant with separate control and disturbance inputs.
struct ContinuousPlant {
    Eigen::MatrixXd A, B_u, B_w, C, D;
    std::vector<std::string> state_labels, input_labels, output_labels;

    void validate() const {
        const Eigen::Index n = A.rows();
        detail::require(A.cols() == n && B_u.rows() == n && B_w.rows() == n &&
                            C.cols() == n && D.rows() == C.rows() &&
                            D.cols() == B_u.cols(),
                        ErrorCategory::dimension_mismatch,
                        "ContinuousPlant: inconsistent dimensions");
    }
};

/// Linearized longitudinal dynamics of the Boeing 747: throttle and elevator
/// in, longitudinal velocity and climb rate out. The disturbance matrix
/// routes the two gust velocity components into the velocity states.
inline ContinuousPlant b747_continuous() {
    ContinuousPlant p;
    p.A.resize(4, 4);
    p.A << -0.003, 0.039, 0.0, -0.322,
           -0.065, -0.319, 7.74, 0.0,
            0.02, -0.101, -0.429, 0.0,
            0.0, 0.0, 1.0, 0.0;
    p.B_u.resize(4, 2);
    p.B_u << 0.010, 1.0,
            -0.18, -0.04,
            -1.16, 0.598,
             0.0, 0.0;
    p.B_w.resize(4, 2);
    p.B_w << -1.0, 0.0,
              0.0, -1.0,
              0.0, 0.0,
              0.0, 0.0;
    p.C.resize(2, 4);
    p.C << 1.0, 0.0, 0.0, 0.0,
           0.0, -1.0, 0.0, 7.74;
    p.D = Eigen::MatrixXd::Zero(2, 2);
    p.state_labels = {"long_velocity", "down_velocity", "pitch_rate", "pitch"};
    p.input_labels = {"throttle", "elevator"};
    p.output_labels = {"long_velocity", "climb_rate"};
    return p;
}

/// Dryden turbulence shaping parameters. V (true airspeed) has no published
/// value for this benchmark and must be set explicitly.
struct GustParams {
    double sigma_u = 10.0;  // horizontal intensity [ft/s]
    double sigma_v = 10.0;  // vertical intensity [ft/s]
    double L_u = 1750.0;    // horizontal length scale [ft]
    double L_v = 875.0;     // vertical length scale [ft]
    double V = 0.0;         // true airspeed [ft/s]; mandatory

    void validate() const {
        detail::require(sigma_u > 0 && sigma_v > 0 && L_u > 0 && L_v > 0 && V > 0,
                        ErrorCategory::config_invalid,
                        "GustParams: all parameters must be positive (V has no "
                        "default)");
    }
};

/// Augments the plant with the Dryden shaping filters: a first-order lag for
/// the horizontal gust and a second-order filter for the vertical gust, both
/// driven by white noise. Gust states are appended after the plant states.
inline ContinuousPlant dryden_augment(const ContinuousPlant& plant, const GustParams& gust) {
    plant.validate();
    gust.validate();
    const Eigen::Index n = plant.A.rows();
    const Eigen::Index nw = plant.B_w.cols();
    detail::require(nw == 2, ErrorCategory::dimension_mismatch,
                    "dryden_augment: expects two gust channels");

    // Horizontal: g1 / (1 + (L_u/V) s), pole V/L_u.
    const double tau = gust.L_u / gust.V;
    const double g1 = gust.sigma_u * std::sqrt(2.0 * gust.L_u / (gust.V * M_PI));

    // Vertical: g2 (1 + a s) / (1 + b s)^2, double pole V/(2 L_v).
    const double a = 2.0 * std::sqrt(3.0) * gust.L_v / gust.V;
    const double b = 2.0 * gust.L_v / gust.V;
    const double g2 = gust.sigma_v * std::sqrt(2.0 * gust.L_v / (gust.V * M_PI));

    Eigen::MatrixXd A_g1(1, 1), B_g1(1, 1), C_g1(1, 1);
    A_g1 << -1.0 / tau;
    B_g1 << g1 / tau;
    C_g1 << 1.0;

    Eigen::MatrixXd A_g2(2, 2), B_g2(2, 1), C_g2(1, 2);
    A_g2 << 0.0, 1.0, -1.0 / (b * b), -2.0 / b;
    B_g2 << 0.0, 1.0;
    C_g2 << g2 / (b * b), g2 * a / (b * b);

    ContinuousPlant aug;
    const Eigen::Index na = n + 3;
    aug.A = Eigen::MatrixXd::Zero(na, na);
    aug.A.topLeftCorner(n, n) = plant.A;
    aug.A.block(0, n, n, 1) = plant.B_w.col(0) * C_g1;
    aug.A.block(0, n + 1, n, 2) = plant.B_w.col(1) * C_g2;
    aug.A.block(n, n, 1, 1) = A_g1;
    aug.A.block(n + 1, n + 1, 2, 2) = A_g2;

    aug.B_u = Eigen::MatrixXd::Zero(na, plant.B_u.cols());
    aug.B_u.topRows(n) = plant.B_u;

    aug.B_w = Eigen::MatrixXd::Zero(na, 2);
    aug.B_w.block(n, 0, 1, 1) = B_g1;
    aug.B_w.block(n + 1, 1, 2, 1) = B_g2;

    aug.C = Eigen::MatrixXd::Zero(plant.C.rows(), na);
    aug.C.leftCols(n) = plant.C;
    aug.D = plant.D;

    aug.state_labels = plant.state_labels;
    aug.state_labels.push_back("gust_h");
    aug.state_labels.push_back("gust_v1");
    aug.state_labels.push_back("gust_v2");
    aug.input_labels = plant.input_labels;
    aug.output_labels = plant.output_labels;
    return aug;
}

struct DiscretePlant {
    Eigen::MatrixXd A, B_u, B_w, C, D;
    double dt = 0.0;

    Eigen::Index states() const { return A.rows(); }
    Eigen::Index inputs() const { return B_u.cols(); }
    Eigen::Index outputs() const { return C.rows(); }
};

/// Exact zero-order-hold discretization via the matrix exponential of the
/// standard augmented block; control and disturbance inputs are discretized
/// jointly.
inline DiscretePlant zoh_discretize(const ContinuousPlant& plant, double dt) {
    plant.validate();
    detail::require(dt > 0.0, ErrorCategory::config_invalid,
                    "zoh_discretize: dt must be positive");
    const Eigen::Index n = plant.A.rows();
    const Eigen::Index m = plant.B_u.cols() + plant.B_w.cols();
    Eigen::MatrixXd block = Eigen::MatrixXd::Zero(n + m, n + m);
    block.topLeftCorner(n, n) = plant.A;
    block.block(0, n, n, plant.B_u.cols()) = plant.B_u;
    block.block(0, n + plant.B_u.cols(), n, plant.B_w.cols()) = plant.B_w;
    Eigen::MatrixXd expm = (block * dt).exp();

    DiscretePlant d;
    d.A = expm.topLeftCorner(n, n);
    d.B_u = expm.block(0, n, n, plant.B_u.cols());
    d.B_w = expm.block(0, n + plant.B_u.cols(), n, plant.B_w.cols());
    d.C = plant.C;
    d.D = plant.D;
    d.dt = dt;
    return d;
}

/// Symmetric PSD square root; tolerates exactly singular covariances.
inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& S) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(linalg::symmetrize(S));
    Eigen::VectorXd clipped = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose();
}

struct SimRecord {
    Eigen::MatrixXd u, w, v, y, y_clean, x;  // channels x steps
};

/// Forward simulation with seeded Gaussian disturbance and measurement
/// noise; bit-identical for identical seeds.
inline SimRecord simulate(const DiscretePlant& plant, const Eigen::MatrixXd& u,
                          const Eigen::MatrixXd& Sigma_w, const Eigen::MatrixXd& Sigma_v,
                          std::uint64_t seed_w, std::uint64_t seed_v,
                          Eigen::VectorXd x0 = Eigen::VectorXd()) {
    detail::require(u.rows() == plant.inputs(), ErrorCategory::dimension_mismatch,
                    "simulate: input channel mismatch");
    const Eigen::Index steps = u.cols();
    const Eigen::Index n = plant.states();

    GaussianStream stream_w(seed_w), stream_v(seed_v);
    SimRecord rec;
    rec.u = u;
    rec.w = psd_sqrt(Sigma_w) * stream_w.matrix(Sigma_w.rows(), steps);
    rec.v = psd_sqrt(Sigma_v) * stream_v.matrix(Sigma_v.rows(), steps);
    rec.y.resize(plant.outputs(), steps);
    rec.y_clean.resize(plant.outputs(), steps);
    rec.x.resize(n, steps);

    Eigen::VectorXd x = x0.size() ? x0 : Eigen::VectorXd::Zero(n);
    for (Eigen::Index k = 0; k < steps; ++k) {
        rec.x.col(k) = x;
        rec.y_clean.col(k) = plant.C * x + plant.D * u.col(k);
        rec.y.col(k) = rec.y_clean.col(k) + rec.v.col(k);
        x = plant.A * x + plant.B_u * u.col(k) + plant.B_w * rec.w.col(k);
    }
    return rec;
}

/// Textbook stationary predictor-form Kalman filter on the true plant; the
/// ground-truth reference for the data-driven pipeline.
struct OracleKalman {
    DiscretePlant plant;
    Eigen::MatrixXd P, K;
    double riccati_residual = 0.0;

    /// One-step innovations along a record, from a zero initial estimate.
    Eigen::MatrixXd innovations_on(const Eigen::MatrixXd& u, const Eigen::MatrixXd& y) const {
        detail::require(u.cols() == y.cols(), ErrorCategory::dimension_mismatch,
                        "OracleKalman: record lengths differ");
        Eigen::MatrixXd e(plant.outputs(), y.cols());
        Eigen::VectorXd x = Eigen::VectorXd::Zero(plant.states());
        for (Eigen::Index k = 0; k < y.cols(); ++k) {
            e.col(k) = y.col(k) - plant.C * x - plant.D * u.col(k);
            x = plant.A * x + plant.B_u * u.col(k) + K * e.col(k);
        }
        return e;
    }
};

inline OracleKalman oracle_kf(const DiscretePlant& plant, const Eigen::MatrixXd& Sigma_w,
                              const Eigen::MatrixXd& Sigma_v, const DareOptions& opts = {}) {
    OracleKalman o;
    o.plant = plant;
    Eigen::MatrixXd L1 = linalg::symmetrize(plant.B_w * Sigma_w * plant.B_w.transpose());
    Eigen::MatrixXd L12 = Eigen::MatrixXd::Zero(plant.states(), plant.outputs());
    auto sol = solve_dare_correlated(plant.A, plant.C, L1, linalg::symmetrize(Sigma_v),
                                     L12, opts);
    o.P = std::move(sol.P);
    o.K = std::move(sol.K);
    o.riccati_residual = sol.residual;
    return o;
}

/// Stacked prediction maps for any linear predictor with state estimate x:
/// y_f = O x + M u_f. For the oracle filter, O stacks C A^k and M is the
/// block-Toeplitz map of Markov parameters (zero block diagonal when D = 0).
struct StackedPredictionMaps {
    Eigen::MatrixXd O;
    Eigen::MatrixXd M;
};

inline StackedPredictionMaps oracle_prediction_maps(const DiscretePlant& plant,
                                                    Eigen::Index T_f) {
    const Eigen::Index ny = plant.outputs(), nu = plant.inputs(), n = plant.states();
    StackedPredictionMaps maps;
    maps.O.resize(ny * T_f, n);
    maps.M = Eigen::MatrixXd::Zero(ny * T_f, nu * T_f);
    Eigen::MatrixXd Apow = Eigen::MatrixXd::Identity(n, n);
    for (Eigen::Index k = 0; k < T_f; ++k) {
        maps.O.middleRows(k * ny, ny) = plant.C * Apow;
        Apow = plant.A * Apow;
    }
    for (Eigen::Index k = 0; k < T_f; ++k) {
        maps.M.block(k * ny, k * nu, ny, nu) = plant.D;
        for (Eigen::Index j = k + 1; j < T_f; ++j)
            maps.M.block(j * ny, k * nu, ny, nu) =
                maps.O.middleRows((j - k - 1) * ny, ny) * plant.B_u;
    }
    return maps;
}

} // namespace ddkf::bench
