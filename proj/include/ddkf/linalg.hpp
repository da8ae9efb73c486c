#pragma once

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "ddkf/errors.hpp"

namespace ddkf::linalg {

/// Numerical-rank convention used throughout: a singular value counts iff
/// sigma_i > max(rows, cols) * sigma_max * 1e-10.
inline constexpr double kRankRelTol = 1e-10;

inline double rank_threshold(Eigen::Index rows, Eigen::Index cols, double sigma_max) {
    return static_cast<double>(std::max(rows, cols)) * sigma_max * kRankRelTol;
}

inline int numerical_rank(const Eigen::VectorXd& singular_values, Eigen::Index rows,
                          Eigen::Index cols) {
    if (singular_values.size() == 0) return 0;
    const double thresh = rank_threshold(rows, cols, singular_values(0));
    int rank = 0;
    for (Eigen::Index i = 0; i < singular_values.size(); ++i)
        if (singular_values(i) > thresh) ++rank;
    return rank;
}

struct LqFactors {
    Eigen::MatrixXd L;   // rows x rows, lower triangular
    Eigen::MatrixXd Qt;  // rows x cols, orthonormal rows
};

/// LQ factorization A = L * Qt via Householder QR of the transpose.
/// Requires rows(A) <= cols(A).
inline LqFactors lq(const Eigen::MatrixXd& A) {
    const Eigen::Index m = A.rows(), n = A.cols();
    detail::require(m <= n, ErrorCategory::dimension_mismatch,
                    "lq: matrix must have at least as many columns as rows");
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(A.transpose());
    LqFactors out;
    out.L = qr.matrixQR().topRows(m).triangularView<Eigen::Upper>().transpose();
    Eigen::MatrixXd thin_q = qr.householderQ() * Eigen::MatrixXd::Identity(n, m);
    out.Qt = thin_q.transpose();
    return out;
}

/// L factor only; avoids forming Q when the coordinates are not needed.
inline Eigen::MatrixXd lq_l_factor(const Eigen::MatrixXd& A) {
    const Eigen::Index m = A.rows(), n = A.cols();
    detail::require(m <= n, ErrorCategory::dimension_mismatch,
                    "lq: matrix must have at least as many columns as rows");
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(A.transpose());
    return qr.matrixQR().topRows(m).triangularView<Eigen::Upper>().transpose();
}

/// Residual of the least-squares regression of Y's rows onto Z's rows,
/// i.e. the L22*Q2' block of the LQ factorization of [Z; Y]. A rank-revealing
/// QR of Z' keeps the projector confined to Z's actual row space, which makes
/// the minimum-norm convention exact for degenerate regressors.
inline Eigen::MatrixXd project_out_rows(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& Z) {
    detail::require(Y.cols() == Z.cols(), ErrorCategory::dimension_mismatch,
                    "project_out_rows: column counts differ");
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Z.transpose());
    const Eigen::Index rank = qr.rank();
    if (rank == 0) return Y;
    Eigen::MatrixXd q1 =
        qr.householderQ() * Eigen::MatrixXd::Identity(Z.cols(), rank);
    return Y - (Y * q1) * q1.transpose();
}

struct PinvResult {
    Eigen::MatrixXd pinv;
    int rank = 0;
    double sigma_max = 0.0;
    double sigma_min_kept = 0.0;
};

/// Moore-Penrose pseudo-inverse via SVD with the shared rank threshold.
inline PinvResult pinv_svd(const Eigen::MatrixXd& A) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd& sv = svd.singularValues();
    PinvResult out;
    out.pinv = Eigen::MatrixXd::Zero(A.cols(), A.rows());
    if (sv.size() == 0) return out;
    out.sigma_max = sv(0);
    const double thresh = rank_threshold(A.rows(), A.cols(), sv(0));
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(sv.size());
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
        if (sv(i) > thresh) {
            inv(i) = 1.0 / sv(i);
            out.rank++;
            out.sigma_min_kept = sv(i);
        }
    }
    out.pinv = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
    return out;
}

inline Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& M) {
    return 0.5 * (M + M.transpose());
}

inline double spectral_radius(const Eigen::MatrixXd& A) {
    Eigen::EigenSolver<Eigen::MatrixXd> es(A, /*computeEigenvectors=*/false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// 2-norm condition number; infinite is reported as a large finite sentinel.
inline double condition_number(const Eigen::MatrixXd& A) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A);
    const Eigen::VectorXd& sv = svd.singularValues();
    if (sv.size() == 0 || sv(sv.size() - 1) <= 0.0) return std::numeric_limits<double>::infinity();
    return sv(0) / sv(sv.size() - 1);
}

/// log det of a symmetric PSD matrix; eigenvalues below floor are clamped so
/// singular sample covariances produce a large-negative score, not -inf/NaN.
inline double logdet_psd(const Eigen::MatrixXd& S, double floor = 1e-300) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(S));
    double sum = 0.0;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
        sum += std::log(std::max(es.eigenvalues()(i), floor));
    return sum;
}

inline double min_eigenvalue_sym(const Eigen::MatrixXd& S) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(symmetrize(S));
    return es.eigenvalues().minCoeff();
}

/// Distance from v to the column space of A, relative to ||v||.
inline double relative_range_distance(const Eigen::MatrixXd& A, const Eigen::VectorXd& v) {
    detail::require(A.rows() == v.size(), ErrorCategory::dimension_mismatch,
                    "relative_range_distance: dimension mismatch");
    const double vnorm = v.norm();
    if (vnorm == 0.0) return 0.0;
    Eigen::VectorXd coeffs = A.completeOrthogonalDecomposition().solve(v);
    return (v - A * coeffs).norm() / vnorm;
}

} // namespace ddkf::linalg
