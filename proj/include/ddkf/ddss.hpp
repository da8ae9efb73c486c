#pragma once

#include <Eigen/Dense>

#include "ddkf/errors.hpp"
#include "ddkf/linalg.hpp"
#include "ddkf/smm.hpp"
#include "ddkf/trajectory.hpp"

namespace ddkf {

/// Shift and selection operators for a T_p-block stack of n-vectors.
struct ShiftSelect {
    Eigen::MatrixXd S;   // (T_p n) x (T_p n): shifts the stack up one block
    Eigen::MatrixXd J;   // (T_p n) x n: places a vector in the newest slot
    Eigen::MatrixXd Pi;  // ((T_p - 1) n) x (T_p n): drops the last block row
};

inline ShiftSelect shift_and_select(Eigen::Index T_p, Eigen::Index n) {
    detail::require(T_p >= 2 && n >= 1, ErrorCategory::config_invalid,
                    "shift_and_select: need T_p >= 2 and n >= 1");
    ShiftSelect out;
    out.S = Eigen::MatrixXd::Zero(T_p * n, T_p * n);
    for (Eigen::Index b = 0; b + 1 < T_p; ++b)
        out.S.block(b * n, (b + 1) * n, n, n).setIdentity();
    out.J = Eigen::MatrixXd::Zero(T_p * n, n);
    out.J.bottomRows(n).setIdentity();
    out.Pi = Eigen::MatrixXd::Zero((T_p - 1) * n, T_p * n);
    out.Pi.leftCols((T_p - 1) * n).setIdentity();
    return out;
}

/// Data-based state-space realization of the parsimonious SMM: a recursion
/// in the window coordinates x_uy = (x_u, x_y) driven by the extended input
/// ubar = (u, e), with y read off the newest block of the past-output window.
struct DataStateSpace {
    // Assembled model.
    Eigen::MatrixXd A_p;    // n_state x n_state, block lower triangular
    Eigen::MatrixXd B_up;   // n_state x n_u
    Eigen::MatrixXd B_ep;   // n_state x n_y
    Eigen::MatrixXd C_p;    // n_y x n_state

    // Component blocks kept for diagnostics.
    Eigen::MatrixXd A_uu, A_yu, A_yy;
    Eigen::MatrixXd B_uu, B_yu;  // columns ordered (u, e)
    Eigen::MatrixXd C_yu, C_yy;

    // Effective output maps of the re-indexed model:
    // y(t) = C_eff x+(t) + D_u_eff u(t) + D_e_eff e(t).
    Eigen::MatrixXd C_eff, D_u_eff, D_e_eff;

    Eigen::Index n_u = 0, n_y = 0, n_x_bar = 0, T_p = 0;
    double phi_condition = 0.0;  // conditioning of Pi * L_yp

    Eigen::Index state_size() const { return A_p.rows(); }
    Eigen::Index x_u_size() const { return (n_u + n_y) * T_p; }
};

/// Builds the recursion matrices from the triangular SMM blocks. L_up and
/// Pi*L_yp are inverted through the shared-threshold pseudo-inverse: equal to
/// the exact (triangular) inverse on full-rank data, and well defined when
/// the innovations channels degenerate on noise-free records.
inline DataStateSpace build_ddss(const ParsimoniousSMM& smm) {
    const HorizonSpec& hz = smm.horizon;
    detail::require(hz.T_p >= 2, ErrorCategory::config_invalid,
                    "build_ddss: T_p must be >= 2 for the shift recursion");
    const Eigen::Index nb = smm.n_ubar();
    const Eigen::Index nx = hz.n_x_bar;

    ShiftSelect su = shift_and_select(hz.T_p, nb);
    ShiftSelect sy = shift_and_select(hz.T_p, hz.n_y);

    DataStateSpace d;
    d.n_u = hz.n_u;
    d.n_y = hz.n_y;
    d.n_x_bar = nx;
    d.T_p = hz.T_p;

    linalg::PinvResult up_inv = linalg::pinv_svd(smm.L_up);
    detail::require(up_inv.rank >= hz.n_u * hz.T_p, ErrorCategory::numerical_failure,
                    "build_ddss: L_up is rank deficient beyond the innovations "
                    "channels (singular L_up)");
    d.A_uu = up_inv.pinv * (su.S * smm.L_up);
    d.B_uu = up_inv.pinv * su.J;

    Eigen::MatrixXd pi_lyp = sy.Pi * smm.L_yp;
    linalg::PinvResult phi = linalg::pinv_svd(pi_lyp);
    detail::require(phi.rank == nx, ErrorCategory::numerical_failure,
                    "build_ddss: Pi * L_yp is rank deficient");
    d.phi_condition = phi.sigma_max / phi.sigma_min_kept;

    Eigen::MatrixXd pi_phi = phi.pinv * sy.Pi;
    d.A_yu = pi_phi * (sy.S * smm.L_yup - smm.L_yup * d.A_uu);
    d.A_yy = pi_phi * (sy.S * smm.L_yp);
    d.B_yu = -pi_phi * (smm.L_yup * d.B_uu);
    d.C_yu = sy.J.transpose() * smm.L_yup;
    d.C_yy = sy.J.transpose() * smm.L_yp;

    const Eigen::Index r1 = smm.r1();
    d.A_p = Eigen::MatrixXd::Zero(r1 + nx, r1 + nx);
    d.A_p.topLeftCorner(r1, r1) = d.A_uu;
    d.A_p.bottomLeftCorner(nx, r1) = d.A_yu;
    d.A_p.bottomRightCorner(nx, nx) = d.A_yy;

    Eigen::MatrixXd B_p(r1 + nx, nb);
    B_p.topRows(r1) = d.B_uu;
    B_p.bottomRows(nx) = d.B_yu;
    d.B_up = B_p.leftCols(hz.n_u);
    d.B_ep = B_p.rightCols(hz.n_y);

    d.C_p.resize(hz.n_y, r1 + nx);
    d.C_p.leftCols(r1) = d.C_yu;
    d.C_p.rightCols(nx) = d.C_yy;

    d.C_eff = d.C_p * d.A_p;
    d.D_u_eff = d.C_p * d.B_up;
    d.D_e_eff = d.C_p * d.B_ep;
    return d;
}

/// Replays the recursion over a training record, starting from the window
/// coordinates of the first full past window, and reports the largest output
/// error relative to the record's output scale.
inline double replay_residual(const DataStateSpace& ddss, const ParsimoniousSMM& smm,
                              const Trajectory& u, const Trajectory& e,
                              const Trajectory& y) {
    const HorizonSpec& hz = smm.horizon;
    detail::require(ddss.n_u == hz.n_u && ddss.n_y == hz.n_y &&
                        ddss.n_x_bar == hz.n_x_bar && ddss.T_p == hz.T_p,
                    ErrorCategory::dimension_mismatch,
                    "replay_residual: model and SMM dimensions disagree");
    detail::require(u.channels() == hz.n_u && y.channels() == hz.n_y &&
                        e.channels() == hz.n_y,
                    ErrorCategory::dimension_mismatch,
                    "replay_residual: record channel counts disagree");
    detail::require(u.length() == e.length() && u.length() == y.length(),
                    ErrorCategory::dimension_mismatch,
                    "replay_residual: record lengths differ");
    detail::require(u.length() > hz.T_p, ErrorCategory::insufficient_data,
                    "replay_residual: record shorter than the past horizon");

    const Trajectory ubar = Trajectory::vstack(u, e);
    const Eigen::Index nb = ubar.channels();
    const Eigen::Index t0 = hz.T_p - 1;

    Eigen::VectorXd ubar_p(nb * hz.T_p), y_p(hz.n_y * hz.T_p);
    for (Eigen::Index i = 0; i < hz.T_p; ++i) {
        ubar_p.segment(i * nb, nb) = ubar.sample(t0 - hz.T_p + 1 + i);
        y_p.segment(i * hz.n_y, hz.n_y) = y.sample(t0 - hz.T_p + 1 + i);
    }
    auto [x_u, x_y] = smm.coordinates_from_past(ubar_p, y_p);
    Eigen::VectorXd x(ddss.state_size());
    x << x_u, x_y;

    const double scale = y.samples().cwiseAbs().maxCoeff();
    double worst = 0.0;
    for (Eigen::Index t = t0 + 1; t < u.length(); ++t) {
        x = ddss.A_p * x + ddss.B_up * u.sample(t) + ddss.B_ep * e.sample(t);
        const double err = (y.sample(t) - ddss.C_p * x).cwiseAbs().maxCoeff();
        worst = std::max(worst, scale > 0.0 ? err / scale : err);
    }
    return worst;
}

} // namespace ddkf
