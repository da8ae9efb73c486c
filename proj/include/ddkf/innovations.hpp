#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ddkf/errors.hpp"
#include "ddkf/linalg.hpp"
#include "ddkf/trajectory.hpp"

namespace ddkf {

/// Estimated innovations sequence for sample indices [L, L+N) of the source
/// record, together with its sample covariance.
struct InnovationsEstimate {
    Eigen::MatrixXd e_hat;       // n_y x N
    Eigen::MatrixXd lambda_hat;  // n_y x n_y, symmetric PSD
    Eigen::Index L = 0;          // past-regression horizon
    Eigen::Index N = 0;          // estimated sample count

    Trajectory to_trajectory(std::optional<double> dt = std::nullopt) const {
        std::vector<std::string> names;
        for (Eigen::Index i = 0; i < e_hat.rows(); ++i)
            names.push_back("e" + std::to_string(i));
        return Trajectory(e_hat, std::move(names), dt);
    }
};

/// Sample covariance (1/N) * e * e'. Innovations are zero-mean by
/// construction, so no mean is subtracted; symmetrized for safety.
inline Eigen::MatrixXd estimate_lambda(const Eigen::MatrixXd& e_hat) {
    detail::require(e_hat.cols() >= 1, ErrorCategory::insufficient_data,
                    "estimate_lambda: at least one sample required");
    const double n = static_cast<double>(e_hat.cols());
    return linalg::symmetrize((e_hat * e_hat.transpose()) / n);
}

/// "Measures" the innovations from input-output data: stacks zeta = (u, y),
/// regresses the one-block-row future-output Hankel onto the L-block-row past
/// Hankel via an LQ factorization of their vertical stack, and returns the
/// residual rows. Rank-deficient regressors fall back to the minimum-norm
/// solution; the residual is unique either way.
inline InnovationsEstimate estimate_innovations(const Trajectory& u, const Trajectory& y,
                                                Eigen::Index L) {
    detail::require(L >= 1, ErrorCategory::config_invalid,
                    "estimate_innovations: L must be >= 1");
    detail::require(u.length() == y.length(), ErrorCategory::dimension_mismatch,
                    "estimate_innovations: input and output lengths differ");
    detail::require(u.length() >= L + 2, ErrorCategory::insufficient_data,
                    "estimate_innovations: record must be at least L + 2 samples long");

    const Eigen::Index total = u.length();
    const Eigen::Index N = total - L;
    const Trajectory zeta = Trajectory::vstack(u, y);

    // H_L(zeta_{0..total-2}): N columns, column j stacks zeta(j..j+L-1).
    HankelMatrix past = build_hankel(zeta, 0, total - 2, L);
    // H_1(y_{L..total-1}): the outputs one step after each past window.
    HankelMatrix future = build_hankel(y, L, total - 1, 1);
    detail::require(past.columns == N && future.columns == N,
                    ErrorCategory::numerical_failure,
                    "estimate_innovations: internal Hankel sizing error");

    InnovationsEstimate out;
    out.L = L;
    out.N = N;
    out.e_hat = linalg::project_out_rows(future.data, past.data);
    out.lambda_hat = estimate_lambda(out.e_hat);
    return out;
}

/// One row of the past-horizon selection score table.
struct AicScore {
    Eigen::Index L = 0;
    double aic = 0.0;
    double logdet_lambda = 0.0;
    Eigen::Index sample_count = 0;
};

struct PastHorizonSelection {
    Eigen::Index chosen_L = 0;
    std::vector<AicScore> scores;
};

/// Akaike-style order selection: AIC(L) = N log det lambda_hat(L)
/// + 2 L n_y (n_u + n_y). Returns the minimizing candidate plus the table.
inline PastHorizonSelection select_past_horizon(const Trajectory& u, const Trajectory& y,
                                                const std::vector<Eigen::Index>& candidates) {
    detail::require(!candidates.empty(), ErrorCategory::config_invalid,
                    "select_past_horizon: candidate list is empty");
    const double n_params_per_L =
        static_cast<double>(y.channels() * (u.channels() + y.channels()));
    PastHorizonSelection sel;
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index L : candidates) {
        InnovationsEstimate est = estimate_innovations(u, y, L);
        AicScore score;
        score.L = L;
        score.sample_count = est.N;
        score.logdet_lambda = linalg::logdet_psd(est.lambda_hat);
        score.aic = static_cast<double>(est.N) * score.logdet_lambda +
                    2.0 * static_cast<double>(L) * n_params_per_L;
        sel.scores.push_back(score);
        if (score.aic < best) {
            best = score.aic;
            sel.chosen_L = L;
        }
    }
    return sel;
}

struct WhitenessReport {
    Eigen::MatrixXd autocorr;    // channels x max_lag, lag l at column l-1
    double band = 0.0;           // +-3/sqrt(N)
    double fraction_within = 0.0;
    bool pass = false;           // >= 95% of lags inside the band
};

/// Sample autocorrelation test on each channel, lags 1..max_lag, against the
/// +-3/sqrt(N) band. Means are not subtracted: the sequence is zero-mean by
/// construction.
inline WhitenessReport whiteness_report(const Eigen::MatrixXd& e, int max_lag = 20) {
    const Eigen::Index n = e.rows(), N = e.cols();
    detail::require(N > max_lag, ErrorCategory::insufficient_data,
                    "whiteness_report: record shorter than max lag");
    WhitenessReport rep;
    rep.autocorr.resize(n, max_lag);
    rep.band = 3.0 / std::sqrt(static_cast<double>(N));
    Eigen::Index within = 0;
    for (Eigen::Index ch = 0; ch < n; ++ch) {
        const double r0 = e.row(ch).squaredNorm() / static_cast<double>(N);
        for (int lag = 1; lag <= max_lag; ++lag) {
            double r = 0.0;
            for (Eigen::Index t = 0; t + lag < N; ++t) r += e(ch, t) * e(ch, t + lag);
            r /= static_cast<double>(N);
            const double rho = r0 > 0.0 ? r / r0 : 0.0;
            rep.autocorr(ch, lag - 1) = rho;
            if (std::abs(rho) <= rep.band) ++within;
        }
    }
    rep.fraction_within =
        static_cast<double>(within) / static_cast<double>(n * max_lag);
    rep.pass = rep.fraction_within >= 0.95;
    return rep;
}

/// Per-channel Pearson correlation between two equally sized sequences.
inline Eigen::VectorXd channel_correlation(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    detail::require(a.rows() == b.rows() && a.cols() == b.cols(),
                    ErrorCategory::dimension_mismatch,
                    "channel_correlation: shape mismatch");
    Eigen::VectorXd corr(a.rows());
    for (Eigen::Index ch = 0; ch < a.rows(); ++ch) {
        Eigen::RowVectorXd x = a.row(ch).array() - a.row(ch).mean();
        Eigen::RowVectorXd y = b.row(ch).array() - b.row(ch).mean();
        const double denom = x.norm() * y.norm();
        corr(ch) = denom > 0.0 ? x.dot(y) / denom : 0.0;
    }
    return corr;
}

} // namespace ddkf
