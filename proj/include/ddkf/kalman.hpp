#pragma once

#include <cmath>

#include <Eigen/Dense>

#include "ddkf/ddss.hpp"
#include "ddkf/errors.hpp"
#include "ddkf/linalg.hpp"

namespace ddkf {

/// Noise covariances of the re-indexed data model. The state noise is
/// B_ep e(t) and the measurement noise C_p B_ep e(t), so both are driven by
/// the same innovations sample and carry the cross term Lambda1 C_p'.
struct NoiseModel {
    Eigen::MatrixXd Lambda;    // innovations (or disturbance) covariance
    Eigen::MatrixXd Lambda1;   // state-noise covariance
    Eigen::MatrixXd Lambda2;   // measurement-noise covariance
    Eigen::MatrixXd Lambda12;  // cross-covariance

    static NoiseModel from_innovations(const DataStateSpace& d, const Eigen::MatrixXd& Lambda) {
        detail::require(Lambda.rows() == d.n_y && Lambda.cols() == d.n_y,
                        ErrorCategory::dimension_mismatch,
                        "NoiseModel: Lambda must be n_y x n_y");
        NoiseModel n;
        n.Lambda = linalg::symmetrize(Lambda);
        n.Lambda1 = linalg::symmetrize(d.B_ep * n.Lambda * d.B_ep.transpose());
        n.Lambda2 = linalg::symmetrize(d.C_p * n.Lambda1 * d.C_p.transpose());
        n.Lambda12 = n.Lambda1 * d.C_p.transpose();
        return n;
    }

    /// Disturbance-route variant: the extended input carries a measured
    /// disturbance w instead of innovations, and the output additionally
    /// sees measurement noise with covariance Sigma_v.
    static NoiseModel from_disturbance(const DataStateSpace& d, const Eigen::MatrixXd& Sigma_w,
                                       const Eigen::MatrixXd& Sigma_v) {
        detail::require(Sigma_w.rows() == d.B_ep.cols(), ErrorCategory::dimension_mismatch,
                        "NoiseModel: Sigma_w dimension mismatch");
        detail::require(Sigma_v.rows() == d.n_y, ErrorCategory::dimension_mismatch,
                        "NoiseModel: Sigma_v dimension mismatch");
        NoiseModel n;
        n.Lambda = linalg::symmetrize(Sigma_w);
        n.Lambda1 = linalg::symmetrize(d.B_ep * n.Lambda * d.B_ep.transpose());
        n.Lambda2 =
            linalg::symmetrize(d.C_p * n.Lambda1 * d.C_p.transpose() + Sigma_v);
        n.Lambda12 = n.Lambda1 * d.C_p.transpose();
        return n;
    }

    void validate() const {
        const double scale = std::max({Lambda1.norm(), Lambda2.norm(), 1e-300});
        detail::require((Lambda1 - Lambda1.transpose()).norm() <= 1e-12 * scale &&
                            (Lambda2 - Lambda2.transpose()).norm() <= 1e-12 * scale,
                        ErrorCategory::numerical_failure, "NoiseModel: asymmetric covariance");
        Eigen::MatrixXd joint(Lambda1.rows() + Lambda2.rows(),
                              Lambda1.cols() + Lambda2.cols());
        joint << Lambda1, Lambda12, Lambda12.transpose(), Lambda2;
        const double tol = 1e-10 * std::max(1.0, joint.trace());
        detail::require(linalg::min_eigenvalue_sym(joint) >= -tol,
                        ErrorCategory::numerical_failure,
                        "NoiseModel: joint noise covariance is not PSD");
    }
};

struct DareOptions {
    double tol = 1e-10;
    int max_iter = 200;     // doubling steps; each squares the closed loop
    double ridge = 1e-14;   // absolute floor on the innovation-covariance solve
};

struct DareSolution {
    Eigen::MatrixXd P;
    Eigen::MatrixXd K;
    double residual = 0.0;  // ||P - f(P)||_F at the returned P
    int iterations = 0;
};

/// Stationary Riccati solve for the correlated-noise predictor:
///   P = A P A' + L1 - (A P C' + L12)(C P C' + L2)^-1 (A P C' + L12)'
///   K = (A P C' + L12)(C P C' + L2)^-1
/// The cross term is eliminated first (Abar = A - L12 L2^-1 C), then a
/// structure-preserving doubling iteration drives the covariance recursion
/// to its fixed point. Doubling squares the closed-loop dynamics each step,
/// which keeps the iteration count in the tens even for the near-unit-circle
/// phugoid-type modes where the plain recursion needs millions of steps. The
/// returned residual is always measured against the plain one-step map.
inline DareSolution solve_dare_correlated(const Eigen::MatrixXd& A, const Eigen::MatrixXd& C,
                                          const Eigen::MatrixXd& Lambda1,
                                          const Eigen::MatrixXd& Lambda2,
                                          const Eigen::MatrixXd& Lambda12,
                                          const DareOptions& opts = {}) {
    const Eigen::Index n = A.rows(), m = C.rows();
    detail::require(A.cols() == n && C.cols() == n, ErrorCategory::dimension_mismatch,
                    "solve_dare_correlated: A/C shape mismatch");
    detail::require(Lambda1.rows() == n && Lambda2.rows() == m && Lambda12.rows() == n &&
                        Lambda12.cols() == m,
                    ErrorCategory::dimension_mismatch,
                    "solve_dare_correlated: covariance shape mismatch");

    const Eigen::MatrixXd ridge = opts.ridge * Eigen::MatrixXd::Identity(m, m);
    Eigen::LDLT<Eigen::MatrixXd> l2_ldlt(linalg::symmetrize(Lambda2 + ridge));
    detail::require(l2_ldlt.info() == Eigen::Success && l2_ldlt.isPositive(),
                    ErrorCategory::numerical_failure,
                    "solve_dare_correlated: singular innovation covariance");

    // Decorrelated data: P = Abar P Abar' + Q - Abar P C'(C P C' + L2)^-1 C P Abar'.
    // The innovations-route model has perfectly correlated noises, making Q
    // exactly singular; the same absolute floor that guards the innovation
    // covariance keeps every mode noise-stabilizable, so the stabilizing
    // solution exists even when estimation error pushes a near-unit-circle
    // mode of the decorrelated dynamics marginally outside the disc.
    const Eigen::MatrixXd Abar = A - Lambda12 * l2_ldlt.solve(C);
    const Eigen::MatrixXd Q =
        linalg::symmetrize(Lambda1 - Lambda12 * l2_ldlt.solve(Lambda12.transpose())) +
        opts.ridge * Eigen::MatrixXd::Identity(n, n);

    // Doubling recursion in the control-form variables (A -> Abar', B -> C').
    Eigen::MatrixXd Ak = Abar.transpose();
    Eigen::MatrixXd Gk = linalg::symmetrize(C.transpose() * l2_ldlt.solve(C));
    Eigen::MatrixXd Hk = Q;
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);

    auto one_step_map = [&](const Eigen::MatrixXd& P, Eigen::MatrixXd* K_out) {
        Eigen::MatrixXd S = linalg::symmetrize(C * P * C.transpose() + Lambda2 + ridge);
        Eigen::LDLT<Eigen::MatrixXd> ldlt(S);
        detail::require(ldlt.info() == Eigen::Success && ldlt.isPositive(),
                        ErrorCategory::numerical_failure,
                        "solve_dare_correlated: singular innovation covariance");
        Eigen::MatrixXd G = A * P * C.transpose() + Lambda12;
        Eigen::MatrixXd K = ldlt.solve(G.transpose()).transpose();
        if (K_out) *K_out = K;
        return linalg::symmetrize(A * P * A.transpose() + Lambda1 - K * G.transpose());
    };

    DareSolution sol;
    for (int it = 1; it <= opts.max_iter; ++it) {
        Eigen::PartialPivLU<Eigen::MatrixXd> W(I + Gk * Hk);
        Eigen::MatrixXd WiA = W.solve(Ak);
        Eigen::MatrixXd WiG = W.solve(Gk);
        Eigen::MatrixXd Hnext =
            linalg::symmetrize(Hk + Ak.transpose() * Hk * WiA);
        Eigen::MatrixXd Gnext = linalg::symmetrize(Gk + Ak * WiG * Ak.transpose());
        Eigen::MatrixXd Anext = Ak * WiA;
        // Sup norms here: Frobenius would overflow first on divergent iterates.
        const double step = (Hnext - Hk).cwiseAbs().maxCoeff();
        Ak = std::move(Anext);
        Gk = std::move(Gnext);
        Hk = std::move(Hnext);
        detail::require(Hk.allFinite() && Hk.cwiseAbs().maxCoeff() < 1e150,
                        ErrorCategory::numerical_failure,
                        "solve_dare_correlated: no convergence within max_iter");
        // Floor at the ridge scale, not at 1: solutions that grow from a
        // floored noise term start many orders below unit size.
        const double floor = std::max(opts.ridge, 1e-300);
        if (step <= opts.tol * std::max(Hk.cwiseAbs().maxCoeff(), floor)) {
            sol.iterations = it;
            sol.P = Hk;
            sol.residual = (sol.P - one_step_map(sol.P, &sol.K)).norm();
            detail::require(sol.residual <= 100.0 * opts.tol * std::max(1.0, sol.P.norm()),
                            ErrorCategory::numerical_failure,
                            "solve_dare_correlated: converged iterate fails the "
                            "fixed-point residual check");
            return sol;
        }
    }
    throw Error(ErrorCategory::numerical_failure,
                "solve_dare_correlated: no convergence within max_iter");
}

struct FilterOptions {
    DareOptions dare{};
    /// Design covariances with sup-norm at or below this floor are treated as
    /// the noise-free limit: no correction, pure model propagation.
    double lambda_floor = 1e-10;
};

/// Stationary one-step-ahead predictor for the data-based model. `step`
/// consumes (u(t), y(t)) and returns the new predicted state, which estimates
/// the window coordinates x_uy(t).
class KalmanPredictor {
public:
    KalmanPredictor(DataStateSpace model, NoiseModel noise, DareSolution dare)
        : model_(std::move(model)),
          noise_(std::move(noise)),
          K_(std::move(dare.K)),
          P_(std::move(dare.P)),
          riccati_residual_(dare.residual),
          dare_iterations_(dare.iterations),
          x_hat_(Eigen::VectorXd::Zero(model_.state_size())) {
        closed_loop_radius_ = linalg::spectral_radius(A_closed());
        detail::require(closed_loop_radius_ < 1.0, ErrorCategory::numerical_failure,
                        "KalmanPredictor: closed-loop spectral radius not < 1");
    }

    const DataStateSpace& model() const { return model_; }
    const NoiseModel& noise() const { return noise_; }
    const Eigen::MatrixXd& gain() const { return K_; }
    const Eigen::MatrixXd& riccati_solution() const { return P_; }
    const Eigen::VectorXd& state() const { return x_hat_; }
    double riccati_residual() const { return riccati_residual_; }
    double closed_loop_radius() const { return closed_loop_radius_; }
    int dare_iterations() const { return dare_iterations_; }

    Eigen::MatrixXd A_closed() const {
        return model_.A_p - K_ * model_.C_eff;
    }

    void set_state(const Eigen::VectorXd& x) {
        detail::require(x.size() == x_hat_.size(), ErrorCategory::dimension_mismatch,
                        "KalmanPredictor::set_state: dimension mismatch");
        x_hat_ = x;
    }

    /// Prediction of y(t) given the current state and u(t), before y(t) is
    /// consumed.
    Eigen::VectorXd predicted_output(const Eigen::VectorXd& u_t) const {
        return model_.C_p * (model_.A_p * x_hat_ + model_.B_up * u_t);
    }

    const Eigen::VectorXd& step(const Eigen::VectorXd& u_t, const Eigen::VectorXd& y_t) {
        detail::require(u_t.size() == model_.n_u && y_t.size() == model_.n_y,
                        ErrorCategory::dimension_mismatch,
                        "KalmanPredictor::step: dimension mismatch");
        Eigen::VectorXd propagated = model_.A_p * x_hat_ + model_.B_up * u_t;
        x_hat_ = propagated + K_ * (y_t - model_.C_p * propagated);
        return x_hat_;
    }

private:
    DataStateSpace model_;
    NoiseModel noise_;
    Eigen::MatrixXd K_;
    Eigen::MatrixXd P_;
    double riccati_residual_ = 0.0;
    double closed_loop_radius_ = 0.0;
    int dare_iterations_ = 0;
    Eigen::VectorXd x_hat_;
};

/// Builds the stationary predictor from an explicit noise model. The DARE
/// measurement matrix is the effective output map C_p A_p of the re-indexed
/// model, whose residual y - C_p (A_p x + B_up u) is exactly the filter's
/// correction term.
inline KalmanPredictor make_filter_with_noise(const DataStateSpace& ddss,
                                              const NoiseModel& noise,
                                              const FilterOptions& opts = {}) {
    noise.validate();
    DareSolution dare;
    const double scale = std::max(noise.Lambda1.cwiseAbs().maxCoeff(),
                                  noise.Lambda2.cwiseAbs().maxCoeff());
    if (scale <= opts.lambda_floor) {
        // Noise-free limit: nothing to correct.
        dare.P = Eigen::MatrixXd::Zero(ddss.state_size(), ddss.state_size());
        dare.K = Eigen::MatrixXd::Zero(ddss.state_size(), ddss.n_y);
    } else {
        dare = solve_dare_correlated(ddss.A_p, ddss.C_eff, noise.Lambda1, noise.Lambda2,
                                     noise.Lambda12, opts.dare);
    }
    return KalmanPredictor(ddss, noise, std::move(dare));
}

/// Innovations-route filter: noise model derived from the innovations
/// covariance estimate.
inline KalmanPredictor make_filter(const DataStateSpace& ddss, const Eigen::MatrixXd& Lambda,
                                   const FilterOptions& opts = {}) {
    return make_filter_with_noise(ddss, NoiseModel::from_innovations(ddss, Lambda), opts);
}

} // namespace ddkf
