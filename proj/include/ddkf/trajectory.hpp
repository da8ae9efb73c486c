#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ddkf/errors.hpp"
#include "ddkf/linalg.hpp"

namespace ddkf {

/// A finite multichannel sampled signal record. Samples are stored one column
/// per time step with channels contiguous within a step, matching the block
/// stacking used by every Hankel construction here. Immutable after
/// construction; all operations on it are pure.
class Trajectory {
public:
    Trajectory(Eigen::MatrixXd samples, std::vector<std::string> channel_names = {},
               std::optional<double> dt = std::nullopt)
        : samples_(std::move(samples)), names_(std::move(channel_names)), dt_(dt) {
        detail::require(samples_.rows() >= 1, ErrorCategory::dimension_mismatch,
                        "Trajectory: channel count must be positive");
        detail::require(samples_.cols() >= 1, ErrorCategory::insufficient_data,
                        "Trajectory: length must be >= 1");
        detail::require(samples_.allFinite(), ErrorCategory::numerical_failure,
                        "Trajectory: samples must be finite");
        if (names_.empty()) {
            names_.reserve(static_cast<std::size_t>(samples_.rows()));
            for (Eigen::Index i = 0; i < samples_.rows(); ++i)
                names_.push_back("ch" + std::to_string(i));
        }
        detail::require(static_cast<Eigen::Index>(names_.size()) == samples_.rows(),
                        ErrorCategory::dimension_mismatch,
                        "Trajectory: channel_names length must equal channel count");
        if (dt_) detail::require(*dt_ > 0.0, ErrorCategory::config_invalid,
                                 "Trajectory: dt must be positive");
    }

    Eigen::Index channels() const { return samples_.rows(); }
    Eigen::Index length() const { return samples_.cols(); }
    const Eigen::MatrixXd& samples() const { return samples_; }
    const std::vector<std::string>& channel_names() const { return names_; }
    std::optional<double> dt() const { return dt_; }

    Eigen::VectorXd sample(Eigen::Index t) const {
        detail::require(t >= 0 && t < length(), ErrorCategory::dimension_mismatch,
                        "Trajectory::sample: index out of range");
        return samples_.col(t);
    }

    /// Sub-record covering sample indices [first, first + count).
    Trajectory segment(Eigen::Index first, Eigen::Index count) const {
        detail::require(first >= 0 && count >= 1 && first + count <= length(),
                        ErrorCategory::insufficient_data,
                        "Trajectory::segment: window out of range");
        return Trajectory(samples_.middleCols(first, count), names_, dt_);
    }

    /// Channel-wise concatenation of two equally long records.
    static Trajectory vstack(const Trajectory& a, const Trajectory& b) {
        detail::require(a.length() == b.length(), ErrorCategory::dimension_mismatch,
                        "Trajectory::vstack: lengths differ");
        Eigen::MatrixXd s(a.channels() + b.channels(), a.length());
        s.topRows(a.channels()) = a.samples();
        s.bottomRows(b.channels()) = b.samples();
        std::vector<std::string> names = a.channel_names();
        names.insert(names.end(), b.channel_names().begin(), b.channel_names().end());
        return Trajectory(std::move(s), std::move(names),
                          a.dt() ? a.dt() : b.dt());
    }

private:
    Eigen::MatrixXd samples_;
    std::vector<std::string> names_;
    std::optional<double> dt_;
};

/// Block Hankel matrix of a trajectory window. Block (i, j) holds the sample
/// vector at time first + i + j, so block (i, j) == block (i-1, j+1).
struct HankelMatrix {
    Eigen::Index block_rows = 0;  // T
    Eigen::Index block_size = 0;  // channels per block
    Eigen::Index columns = 0;     // M
    Eigen::MatrixXd data;         // (T * block_size) x M

    Eigen::Block<const Eigen::MatrixXd> block(Eigen::Index i, Eigen::Index j) const {
        return data.block(i * block_size, j, block_size, 1);
    }
};

/// Past/future horizon bundle for the recursive prediction problem.
struct HorizonSpec {
    Eigen::Index T_p = 1;
    Eigen::Index T_f = 1;
    Eigen::Index n_x_bar = 1;
    Eigen::Index n_u = 1;
    Eigen::Index n_y = 1;

    void validate() const {
        detail::require(T_p >= 1 && T_f >= 1, ErrorCategory::config_invalid,
                        "HorizonSpec: horizons must be >= 1");
        detail::require(n_u >= 1 && n_y >= 1, ErrorCategory::config_invalid,
                        "HorizonSpec: channel counts must be >= 1");
        detail::require(n_x_bar >= 1, ErrorCategory::config_invalid,
                        "HorizonSpec: state-order bound must be >= 1");
        detail::require(T_p * n_y >= n_x_bar, ErrorCategory::config_invalid,
                        "HorizonSpec: T_p * n_y must be >= n_x_bar");
    }
};

/// Hankel matrix with T block rows over samples [first, last] (inclusive,
/// 0-based). Column count is maximal: M = last - first - T + 2.
inline HankelMatrix build_hankel(const Trajectory& traj, Eigen::Index first, Eigen::Index last,
                                 Eigen::Index T) {
    detail::require(T >= 1, ErrorCategory::dimension_mismatch,
                    "build_hankel: block row count must be >= 1");
    detail::require(first >= 0 && last < traj.length() && first <= last,
                    ErrorCategory::dimension_mismatch, "build_hankel: bad sample window");
    detail::require(last - first + 1 >= T, ErrorCategory::insufficient_data,
                    "build_hankel: window too short for requested block rows");
    const Eigen::Index n = traj.channels();
    const Eigen::Index M = last - first - T + 2;
    HankelMatrix h;
    h.block_rows = T;
    h.block_size = n;
    h.columns = M;
    h.data.resize(T * n, M);
    for (Eigen::Index i = 0; i < T; ++i)
        h.data.middleRows(i * n, n) = traj.samples().middleCols(first + i, M);
    return h;
}

inline HankelMatrix build_hankel(const Trajectory& traj, Eigen::Index T) {
    return build_hankel(traj, 0, traj.length() - 1, T);
}

struct PersistencyReport {
    bool persistently_exciting = false;
    Eigen::Index required_rank = 0;
    int numerical_rank = 0;
    double sigma_max = 0.0;
    double sigma_min = 0.0;
    double threshold = 0.0;
};

/// Full-row-rank test of the order-block-row Hankel matrix, with the shared
/// relative singular-value threshold.
inline PersistencyReport is_persistently_exciting(const Trajectory& traj, Eigen::Index order) {
    HankelMatrix h = build_hankel(traj, order);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(h.data);
    const Eigen::VectorXd& sv = svd.singularValues();
    PersistencyReport report;
    report.required_rank = h.data.rows();
    report.sigma_max = sv.size() ? sv(0) : 0.0;
    report.sigma_min = sv.size() ? sv(sv.size() - 1) : 0.0;
    report.threshold = linalg::rank_threshold(h.data.rows(), h.data.cols(), report.sigma_max);
    report.numerical_rank = linalg::numerical_rank(sv, h.data.rows(), h.data.cols());
    report.persistently_exciting = report.numerical_rank == report.required_rank;
    return report;
}

/// Past window: T_p consecutive samples ending at t, stacked as one column.
/// Future window: T_f consecutive samples starting at t+1. Indices 0-based.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> window(const Trajectory& traj, Eigen::Index t,
                                                          const HorizonSpec& spec) {
    spec.validate();
    detail::require(t + 1 >= spec.T_p, ErrorCategory::dimension_mismatch,
                    "window: not enough past samples before t");
    detail::require(t + spec.T_f < traj.length(), ErrorCategory::dimension_mismatch,
                    "window: not enough future samples after t");
    const Eigen::Index n = traj.channels();
    Eigen::VectorXd past(spec.T_p * n);
    Eigen::VectorXd future(spec.T_f * n);
    for (Eigen::Index i = 0; i < spec.T_p; ++i)
        past.segment(i * n, n) = traj.samples().col(t - spec.T_p + 1 + i);
    for (Eigen::Index i = 0; i < spec.T_f; ++i)
        future.segment(i * n, n) = traj.samples().col(t + 1 + i);
    return {past, future};
}

} // namespace ddkf
