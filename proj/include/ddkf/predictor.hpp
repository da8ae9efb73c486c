#pragma once

#include <optional>

#include <Eigen/Dense>

#include "ddkf/errors.hpp"
#include "ddkf/linalg.hpp"
#include "ddkf/smm.hpp"

namespace ddkf {

/// Maps the filtered window coordinates and the future control inputs to the
/// stacked future-output prediction. Future innovations enter at their zero
/// conditional mean, so only the u channels of the future extended input
/// remain as free variables.
struct PredictionMatrices {
    Eigen::MatrixXd E_xu;  // (n_y T_f) x (n_ubar T_p)
    Eigen::MatrixXd E_xy;  // (n_y T_f) x n_x_bar
    Eigen::MatrixXd E_uf;  // (n_y T_f) x (n_u T_f)
    HorizonSpec horizon;

    Eigen::Index state_size() const { return E_xu.cols() + E_xy.cols(); }
    Eigen::Index input_size() const { return E_uf.cols(); }
    Eigen::Index output_size() const { return E_xu.rows(); }
};

/// Selection matrix embedding stacked u blocks into the u slots of the
/// stacked extended input (e slots zero).
inline Eigen::MatrixXd u_channel_selector(const HorizonSpec& hz) {
    const Eigen::Index nb = hz.n_u + hz.n_y;
    Eigen::MatrixXd sel = Eigen::MatrixXd::Zero(nb * hz.T_f, hz.n_u * hz.T_f);
    for (Eigen::Index blk = 0; blk < hz.T_f; ++blk)
        sel.block(blk * nb, blk * hz.n_u, hz.n_u, hz.n_u).setIdentity();
    return sel;
}

/// From the last two block rows of the triangular characterization:
/// y_f = S_yu x_u + S_yy x_y + L_yuf L_uf^-1 (ubar_f - S_uu x_u - S_uy x_y),
/// with ubar_f carrying the commanded u and zero-mean future innovations.
inline PredictionMatrices build_prediction_matrices(const ParsimoniousSMM& smm) {
    linalg::PinvResult uf_inv = linalg::pinv_svd(smm.L_uf);
    detail::require(uf_inv.rank >= smm.horizon.n_u * smm.horizon.T_f,
                    ErrorCategory::numerical_failure,
                    "build_prediction_matrices: L_uf is rank deficient beyond the "
                    "innovations channels (singular L_uf)");
    Eigen::MatrixXd G = smm.L_yuf * uf_inv.pinv;

    PredictionMatrices pm;
    pm.horizon = smm.horizon;
    pm.E_xu = smm.S_yu - G * smm.S_uu;
    pm.E_xy = smm.S_yy - G * smm.S_uy;
    pm.E_uf = G * u_channel_selector(smm.horizon);
    return pm;
}

/// y_f_hat = [E_xu E_xy] x_uy + E_uf u_f.
inline Eigen::VectorXd predict(const PredictionMatrices& pm, const Eigen::VectorXd& x_uy,
                               const Eigen::VectorXd& u_f) {
    detail::require(x_uy.size() == pm.state_size(), ErrorCategory::dimension_mismatch,
                    "predict: state dimension mismatch");
    detail::require(u_f.size() == pm.input_size(), ErrorCategory::dimension_mismatch,
                    "predict: future-input dimension mismatch");
    return pm.E_xu * x_uy.head(pm.E_xu.cols()) + pm.E_xy * x_uy.tail(pm.E_xy.cols()) +
           pm.E_uf * u_f;
}

/// Quadratic tracking problem over the prediction horizon: per-step output
/// weight Q (PSD), per-step input weight R (SPD), optional per-channel box
/// bounds on the inputs.
struct TrackingProblem {
    Eigen::VectorXd r_f;  // n_y T_f stacked reference
    Eigen::MatrixXd Q;    // n_y x n_y
    Eigen::MatrixXd R;    // n_u x n_u
    std::optional<Eigen::VectorXd> u_min;  // n_u per-channel lower bound
    std::optional<Eigen::VectorXd> u_max;  // n_u per-channel upper bound

    void validate(const HorizonSpec& hz) const {
        detail::require(r_f.size() == hz.n_y * hz.T_f, ErrorCategory::dimension_mismatch,
                        "TrackingProblem: reference length mismatch");
        detail::require(Q.rows() == hz.n_y && Q.cols() == hz.n_y,
                        ErrorCategory::dimension_mismatch, "TrackingProblem: Q shape");
        detail::require(R.rows() == hz.n_u && R.cols() == hz.n_u,
                        ErrorCategory::dimension_mismatch, "TrackingProblem: R shape");
        detail::require(linalg::min_eigenvalue_sym(Q) >= -1e-12 * std::max(1.0, Q.trace()),
                        ErrorCategory::config_invalid, "TrackingProblem: Q must be PSD");
        detail::require(linalg::min_eigenvalue_sym(R) > 0.0, ErrorCategory::config_invalid,
                        "TrackingProblem: R must be SPD");
        if (u_min && u_max)
            detail::require((u_max->array() >= u_min->array()).all(),
                            ErrorCategory::config_invalid,
                            "TrackingProblem: bounds out of order");
    }
};

struct TrackingOptions {
    double kkt_tol = 1e-8;
    int max_iter = 200000;
};

struct TrackingSolution {
    Eigen::VectorXd u_f;
    double kkt_residual = 0.0;
    int iterations = 0;  // projected-gradient refinements; 0 if unconstrained
};

namespace detail {
inline Eigen::MatrixXd block_diag_repeat(const Eigen::MatrixXd& W, Eigen::Index count) {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(W.rows() * count, W.cols() * count);
    for (Eigen::Index i = 0; i < count; ++i)
        out.block(i * W.rows(), i * W.cols(), W.rows(), W.cols()) = W;
    return out;
}
} // namespace detail

/// Core quadratic tracking solve for any affine predictor
/// y_f = free_response + input_map * u_f. Unconstrained solve via the normal
/// equations; with box bounds, projected-gradient refinement down to the
/// requested KKT residual.
inline TrackingSolution solve_tracking_core(const Eigen::MatrixXd& input_map,
                                            const Eigen::VectorXd& free_response,
                                            const TrackingProblem& problem,
                                            Eigen::Index n_u, Eigen::Index T_f,
                                            const TrackingOptions& opts = {}) {
    const Eigen::MatrixXd Qbar = detail::block_diag_repeat(problem.Q, T_f);
    const Eigen::MatrixXd Rbar = detail::block_diag_repeat(problem.R, T_f);
    const Eigen::MatrixXd H =
        linalg::symmetrize(input_map.transpose() * Qbar * input_map + Rbar);
    const Eigen::VectorXd b =
        input_map.transpose() * (Qbar * (problem.r_f - free_response));

    TrackingSolution sol;
    sol.u_f = H.ldlt().solve(b);
    if (!problem.u_min && !problem.u_max) return sol;

    Eigen::VectorXd lo = Eigen::VectorXd::Constant(
        n_u * T_f, -std::numeric_limits<double>::infinity());
    Eigen::VectorXd hi = Eigen::VectorXd::Constant(
        n_u * T_f, std::numeric_limits<double>::infinity());
    for (Eigen::Index blk = 0; blk < T_f; ++blk) {
        if (problem.u_min) lo.segment(blk * n_u, n_u) = *problem.u_min;
        if (problem.u_max) hi.segment(blk * n_u, n_u) = *problem.u_max;
    }
    auto clamp = [&](const Eigen::VectorXd& v) {
        return v.cwiseMax(lo).cwiseMin(hi);
    };

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
    const double step = 1.0 / es.eigenvalues().maxCoeff();
    Eigen::VectorXd u = clamp(sol.u_f);
    for (int it = 1; it <= opts.max_iter; ++it) {
        Eigen::VectorXd grad = H * u - b;
        Eigen::VectorXd next = clamp(u - step * grad);
        u = next;
        sol.kkt_residual = (u - clamp(u - (H * u - b))).cwiseAbs().maxCoeff();
        sol.iterations = it;
        if (sol.kkt_residual <= opts.kkt_tol) break;
    }
    ddkf::detail::require(sol.kkt_residual <= opts.kkt_tol,
                          ErrorCategory::numerical_failure,
                          "solve_tracking: projected gradient did not reach the KKT "
                          "tolerance");
    sol.u_f = u;
    return sol;
}

/// Minimizes ||y_f_hat - r_f||^2_Q + ||u_f||^2_R for the SMM predictor.
inline TrackingSolution solve_tracking(const PredictionMatrices& pm,
                                       const Eigen::VectorXd& x_uy,
                                       const TrackingProblem& problem,
                                       const TrackingOptions& opts = {}) {
    const HorizonSpec& hz = pm.horizon;
    problem.validate(hz);
    detail::require(x_uy.size() == pm.state_size(), ErrorCategory::dimension_mismatch,
                    "solve_tracking: state dimension mismatch");
    const Eigen::VectorXd free_resp =
        pm.E_xu * x_uy.head(pm.E_xu.cols()) + pm.E_xy * x_uy.tail(pm.E_xy.cols());
    return solve_tracking_core(pm.E_uf, free_resp, problem, hz.n_u, hz.T_f, opts);
}

} // namespace ddkf
