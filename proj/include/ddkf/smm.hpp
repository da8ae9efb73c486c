#pragma once

#include <cmath>
#include <utility>

#include <Eigen/Dense>

#include "ddkf/errors.hpp"
#include "ddkf/innovations.hpp"
#include "ddkf/linalg.hpp"
#include "ddkf/trajectory.hpp"

namespace ddkf {

/// Four-block Hankel stack over the extended input ubar = (u, e) and the
/// measured output. Row order: past extended inputs, future extended inputs,
/// past outputs, future outputs.
struct StackedSMM {
    Eigen::MatrixXd H_up;  // (n_ubar * T_p) x M
    Eigen::MatrixXd H_uf;  // (n_ubar * T_f) x M
    Eigen::MatrixXd H_yp;  // (n_y * T_p) x M
    Eigen::MatrixXd H_yf;  // (n_y * T_f) x M
    HorizonSpec horizon;
    Eigen::Index M = 0;

    Eigen::Index n_ubar() const { return horizon.n_u + horizon.n_y; }
    Eigen::Index total_rows() const {
        return H_up.rows() + H_uf.rows() + H_yp.rows() + H_yf.rows();
    }

    /// Rows rearranged into the order of the parsimonious characterization:
    /// [ubar_p; y_p; ubar_f; y_f].
    Eigen::MatrixXd reordered() const {
        Eigen::MatrixXd out(total_rows(), M);
        Eigen::Index r = 0;
        out.middleRows(r, H_up.rows()) = H_up;
        r += H_up.rows();
        out.middleRows(r, H_yp.rows()) = H_yp;
        r += H_yp.rows();
        out.middleRows(r, H_uf.rows()) = H_uf;
        r += H_uf.rows();
        out.middleRows(r, H_yf.rows()) = H_yf;
        return out;
    }
};

/// Builds the innovations-based stacked SMM from equally long input,
/// innovations, and measured-output records.
inline StackedSMM build_stacked(const Trajectory& u, const Trajectory& e_hat,
                                const Trajectory& y, const HorizonSpec& spec) {
    spec.validate();
    detail::require(u.channels() == spec.n_u && y.channels() == spec.n_y,
                    ErrorCategory::dimension_mismatch,
                    "build_stacked: channel counts disagree with the horizon spec");
    detail::require(e_hat.channels() == spec.n_y, ErrorCategory::dimension_mismatch,
                    "build_stacked: innovations must have n_y channels");
    detail::require(u.length() == e_hat.length() && u.length() == y.length(),
                    ErrorCategory::dimension_mismatch, "build_stacked: record lengths differ");
    const Eigen::Index T = spec.T_p + spec.T_f;
    detail::require(u.length() >= T, ErrorCategory::insufficient_data,
                    "build_stacked: record shorter than T_p + T_f");

    const Trajectory ubar = Trajectory::vstack(u, e_hat);
    HankelMatrix hu = build_hankel(ubar, T);
    HankelMatrix hy = build_hankel(y, T);

    StackedSMM s;
    s.horizon = spec;
    s.M = hu.columns;
    const Eigen::Index nb = s.n_ubar();
    s.H_up = hu.data.topRows(spec.T_p * nb);
    s.H_uf = hu.data.bottomRows(spec.T_f * nb);
    s.H_yp = hy.data.topRows(spec.T_p * spec.n_y);
    s.H_yf = hy.data.bottomRows(spec.T_f * spec.n_y);
    return s;
}

/// Block lower-triangular equivalent of the stacked SMM. The coordinate
/// vector g = (x_u, x_y, z) separates initial conditions from the free
/// future extended input.
struct ParsimoniousSMM {
    Eigen::MatrixXd L_up;    // r1 x r1, lower triangular
    Eigen::MatrixXd L_yup;   // r2 x r1
    Eigen::MatrixXd L_yp;    // r2 x n_x_bar, full column rank
    Eigen::MatrixXd S_uu;    // r3 x r1
    Eigen::MatrixXd S_uy;    // r3 x n_x_bar
    Eigen::MatrixXd L_uf;    // r3 x r3, lower triangular
    Eigen::MatrixXd S_yu;    // r4 x r1
    Eigen::MatrixXd S_yy;    // r4 x n_x_bar
    Eigen::MatrixXd L_yuf;   // r4 x r3
    HorizonSpec horizon;

    // Diagnostics from the reduction.
    double cond_L_up = 0.0;
    double cond_L_uf = 0.0;
    Eigen::VectorXd output_residual_singvals;  // spectrum of the y_p residual factor
    double discarded_sv_mass = 0.0;            // relative mass beyond n_x_bar
    double unexplained_future = 0.0;           // ||residual factor of y_f||_F, relative
    Eigen::Index M = 0;

    Eigen::Index n_ubar() const { return horizon.n_u + horizon.n_y; }
    Eigen::Index r1() const { return n_ubar() * horizon.T_p; }
    Eigen::Index r2() const { return horizon.n_y * horizon.T_p; }
    Eigen::Index r3() const { return n_ubar() * horizon.T_f; }
    Eigen::Index r4() const { return horizon.n_y * horizon.T_f; }
    Eigen::Index g_size() const { return r1() + horizon.n_x_bar + r3(); }

    /// Full matrix of the block-triangular characterization, rows ordered
    /// [ubar_p; y_p; ubar_f; y_f].
    Eigen::MatrixXd assemble() const {
        const Eigen::Index rows = r1() + r2() + r3() + r4();
        Eigen::MatrixXd m = Eigen::MatrixXd::Zero(rows, g_size());
        const Eigen::Index nx = horizon.n_x_bar;
        Eigen::Index r = 0;
        m.block(r, 0, r1(), r1()) = L_up;
        r += r1();
        m.block(r, 0, r2(), r1()) = L_yup;
        m.block(r, r1(), r2(), nx) = L_yp;
        r += r2();
        m.block(r, 0, r3(), r1()) = S_uu;
        m.block(r, r1(), r3(), nx) = S_uy;
        m.block(r, r1() + nx, r3(), r3()) = L_uf;
        r += r3();
        m.block(r, 0, r4(), r1()) = S_yu;
        m.block(r, r1(), r4(), nx) = S_yy;
        m.block(r, r1() + nx, r4(), r3()) = L_yuf;
        return m;
    }

    /// Initial-condition coordinates of a past window. x_u is the minimum-norm
    /// solution of L_up x_u = ubar_p (the plain triangular solve whenever L_up
    /// has full rank); x_y is the least-squares fit against L_yp.
    std::pair<Eigen::VectorXd, Eigen::VectorXd> coordinates_from_past(
        const Eigen::VectorXd& ubar_p, const Eigen::VectorXd& y_p) const {
        detail::require(ubar_p.size() == r1() && y_p.size() == r2(),
                        ErrorCategory::dimension_mismatch,
                        "coordinates_from_past: window dimensions mismatch");
        Eigen::VectorXd x_u = linalg::pinv_svd(L_up).pinv * ubar_p;
        Eigen::VectorXd x_y =
            L_yp.colPivHouseholderQr().solve(y_p - L_yup * x_u);
        return {x_u, x_y};
    }
};

/// Reduces the stacked SMM to the block-triangular form: one LQ factorization
/// of the reordered stack, then an SVD truncation of the output residual
/// factor to the requested state-order bound.
inline ParsimoniousSMM reduce(const StackedSMM& stack, Eigen::Index n_x_bar) {
    HorizonSpec spec = stack.horizon;
    spec.n_x_bar = n_x_bar;
    spec.validate();

    const Eigen::Index nb = stack.n_ubar();
    const Eigen::Index r1 = nb * spec.T_p;
    const Eigen::Index r2 = spec.n_y * spec.T_p;
    const Eigen::Index r3 = nb * spec.T_f;
    const Eigen::Index r4 = spec.n_y * spec.T_f;
    const Eigen::Index rows = r1 + r2 + r3 + r4;
    detail::require(stack.M >= rows, ErrorCategory::insufficient_data,
                    "reduce: fewer stack columns than rows; record too short");

    Eigen::MatrixXd L = linalg::lq_l_factor(stack.reordered());

    ParsimoniousSMM p;
    p.horizon = spec;
    p.M = stack.M;
    p.L_up = L.topLeftCorner(r1, r1);
    p.L_yup = L.block(r1, 0, r2, r1);
    Eigen::MatrixXd L22 = L.block(r1, r1, r2, r2);
    Eigen::MatrixXd L31 = L.block(r1 + r2, 0, r3, r1);
    Eigen::MatrixXd L32 = L.block(r1 + r2, r1, r3, r2);
    p.L_uf = L.block(r1 + r2, r1 + r2, r3, r3);
    Eigen::MatrixXd L41 = L.block(r1 + r2 + r3, 0, r4, r1);
    Eigen::MatrixXd L42 = L.block(r1 + r2 + r3, r1, r4, r2);
    p.L_yuf = L.block(r1 + r2 + r3, r1 + r2, r4, r3);
    Eigen::MatrixXd L44 = L.block(r1 + r2 + r3, r1 + r2 + r3, r4, r4);

    // Control channels must be excited; the innovations channels may
    // degenerate (noise-free data), which the pseudo-inverse handling of
    // L_up downstream tolerates.
    Eigen::MatrixXd u_rows(spec.n_u * spec.T_p, stack.M);
    for (Eigen::Index blk = 0; blk < spec.T_p; ++blk)
        u_rows.middleRows(blk * spec.n_u, spec.n_u) =
            stack.H_up.middleRows(blk * nb, spec.n_u);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd_u(u_rows);
    const int u_rank =
        linalg::numerical_rank(svd_u.singularValues(), u_rows.rows(), u_rows.cols());
    detail::require(u_rank == spec.n_u * spec.T_p, ErrorCategory::numerical_failure,
                    "reduce: control input not persistently exciting over the past "
                    "horizon (insufficient excitation)");

    Eigen::JacobiSVD<Eigen::MatrixXd> svd22(L22,
                                            Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd& sv = svd22.singularValues();
    p.output_residual_singvals = sv;
    detail::require(
        linalg::numerical_rank(sv, r2, r2) >= n_x_bar, ErrorCategory::numerical_failure,
        "reduce: n_x_bar exceeds the numerical rank of the output residual factor");

    Eigen::MatrixXd U_k = svd22.matrixU().leftCols(n_x_bar);
    Eigen::MatrixXd V_k = svd22.matrixV().leftCols(n_x_bar);
    p.L_yp = U_k * sv.head(n_x_bar).asDiagonal();
    p.S_uu = L31;
    p.S_uy = L32 * V_k;
    p.S_yu = L41;
    p.S_yy = L42 * V_k;

    const double total_mass = sv.norm();
    p.discarded_sv_mass =
        total_mass > 0.0 ? sv.tail(sv.size() - n_x_bar).norm() / total_mass : 0.0;
    const double yf_scale = L.bottomRows(r4).norm();
    p.unexplained_future = yf_scale > 0.0 ? L44.norm() / yf_scale : 0.0;
    p.cond_L_up = linalg::condition_number(p.L_up);
    p.cond_L_uf = linalg::condition_number(p.L_uf);
    return p;
}

/// Relative distance from a stacked window (ordered [ubar_p; y_p; ubar_f;
/// y_f]) to the column space of the parsimonious characterization.
inline double range_residual(const ParsimoniousSMM& smm, const Eigen::VectorXd& window) {
    detail::require(window.size() == smm.r1() + smm.r2() + smm.r3() + smm.r4(),
                    ErrorCategory::dimension_mismatch,
                    "range_residual: window length mismatch");
    return linalg::relative_range_distance(smm.assemble(), window);
}

} // namespace ddkf
