#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace ddkf {

/// Derives independent stream seeds from a master seed. SplitMix64 keeps the
/// mapping stable across platforms so result files are reproducible.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Deterministic standard-normal stream: mt19937_64 uniforms through a
/// Box-Muller transform. std::normal_distribution is implementation-defined,
/// which would break the bit-identical reproducibility contract.
class GaussianStream {
public:
    explicit GaussianStream(std::uint64_t seed) : engine_(seed) {}

    double next() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        // Map to (0,1]; u1 must stay away from zero for the log.
        const double u1 = (static_cast<double>(engine_() >> 11) + 1.0) * 0x1p-53;
        const double u2 = static_cast<double>(engine_() >> 11) * 0x1p-53;
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * M_PI * u2;
        spare_ = radius * std::sin(angle);
        have_spare_ = true;
        return radius * std::cos(angle);
    }

    Eigen::MatrixXd matrix(Eigen::Index rows, Eigen::Index cols) {
        Eigen::MatrixXd out(rows, cols);
        for (Eigen::Index j = 0; j < cols; ++j)
            for (Eigen::Index i = 0; i < rows; ++i) out(i, j) = next();
        return out;
    }

    Eigen::VectorXd vector(Eigen::Index size) { return matrix(size, 1); }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace ddkf
