#include <catch2/catch.hpp>

#include <Eigen/Dense>

#include "ddkf/ddss.hpp"
#include "ddkf/rng.hpp"
#include "ddkf/smm.hpp"
#include "test_helpers.hpp"

using ddkf::build_ddss;
using ddkf::build_stacked;
using ddkf::DataStateSpace;
using ddkf::GaussianStream;
using ddkf::HorizonSpec;
using ddkf::reduce;
using ddkf::shift_and_select;
using ddkf::Trajectory;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct ExactRecord {
    Trajectory u, e, y;
};

// Exact trajectories of a known innovations-form model; e is an active,
// recorded input so every extended-input channel is excited.
ExactRecord exact_record(const MatrixXd& A, const MatrixXd& Bu, const MatrixXd& C,
                         const MatrixXd& K, const MatrixXd& Lambda, Eigen::Index len,
                         std::uint64_t seed) {
    GaussianStream g(seed);
    MatrixXd u = g.matrix(Bu.cols(), len);
    MatrixXd e = ddkf_test::gaussian_with_cov(Lambda, len, g);
    MatrixXd D = MatrixXd::Zero(C.rows(), Bu.cols());
    MatrixXd y = ddkf_test::simulate_innovations_form(A, Bu, C, D, K, u, e);
    return {Trajectory(u), Trajectory(e), Trajectory(y)};
}

ExactRecord two_state_record(Eigen::Index len, std::uint64_t seed) {
    MatrixXd A(2, 2), Bu(2, 1), C(2, 2), K(2, 2), Lambda(2, 2);
    A << 0.7, 0.1, -0.2, 0.4;
    Bu << 1.0, -0.5;
    C.setIdentity();
    K << 0.25, 0.0, 0.1, 0.3;
    Lambda << 0.4, 0.1, 0.1, 0.5;
    return exact_record(A, Bu, C, K, Lambda, len, seed);
}

} // namespace

TEST_CASE("shift and selection matrices match their definitions") {
    auto ops = shift_and_select(2, 1);
    MatrixXd S(2, 2), J(2, 1), Pi(1, 2);
    S << 0, 1, 0, 0;
    J << 0, 1;
    Pi << 1, 0;
    CHECK(ops.S.isApprox(S));
    CHECK(ops.J.isApprox(J));
    CHECK(ops.Pi.isApprox(Pi));

    auto ops3 = shift_and_select(3, 1);
    Eigen::Vector3d abc(1.0, 2.0, 3.0);
    Eigen::Vector3d shifted = ops3.S * abc;
    CHECK(shifted(0) == 2.0);
    CHECK(shifted(1) == 3.0);
    CHECK(shifted(2) == 0.0);
    CHECK((ops3.J.transpose() * abc)(0) == 3.0);
    CHECK_THROWS_AS(shift_and_select(1, 1), ddkf::Error);
}

TEST_CASE("recursion replays exact training data") {
    auto rec = two_state_record(160, 11);
    HorizonSpec spec{.T_p = 3, .T_f = 2, .n_x_bar = 2, .n_u = 1, .n_y = 2};
    auto smm = reduce(build_stacked(rec.u, rec.e, rec.y, spec), 2);
    auto ddss = build_ddss(smm);

    CHECK(ddkf::replay_residual(ddss, smm, rec.u, rec.e, rec.y) <= 1e-7);
}

TEST_CASE("recursion state tracks the window coordinates") {
    // Oracle: coordinates recovered window by window from the triangular
    // characterization, independent of the recursion matrices.
    auto rec = two_state_record(120, 13);
    HorizonSpec spec{.T_p = 3, .T_f = 2, .n_x_bar = 2, .n_u = 1, .n_y = 2};
    auto smm = reduce(build_stacked(rec.u, rec.e, rec.y, spec), 2);
    auto ddss = build_ddss(smm);

    const Trajectory ubar = Trajectory::vstack(rec.u, rec.e);
    const Eigen::Index nb = ubar.channels(), ny = 2, Tp = spec.T_p;
    auto window_coords = [&](Eigen::Index t) {
        VectorXd up(nb * Tp), yp(ny * Tp);
        for (Eigen::Index i = 0; i < Tp; ++i) {
            up.segment(i * nb, nb) = ubar.sample(t - Tp + 1 + i);
            yp.segment(i * ny, ny) = rec.y.sample(t - Tp + 1 + i);
        }
        auto [xu, xy] = smm.coordinates_from_past(up, yp);
        VectorXd x(xu.size() + xy.size());
        x << xu, xy;
        return x;
    };

    VectorXd x = window_coords(Tp - 1);
    double scale = x.norm();
    for (Eigen::Index t = Tp; t < rec.u.length(); ++t) {
        x = ddss.A_p * x + ddss.B_up * rec.u.sample(t) + ddss.B_ep * rec.e.sample(t);
        VectorXd direct = window_coords(t);
        scale = std::max(scale, direct.norm());
        CHECK((x - direct).norm() <= 1e-8 * scale);

        // The output map reads the newest block of the past-output window.
        CHECK((ddss.C_p * direct - rec.y.sample(t)).norm() <= 1e-8 * scale);
    }
}

TEST_CASE("pole of the generating system appears in A_yy") {
    MatrixXd A(1, 1), Bu(1, 1), C(1, 1), K(1, 1), Lambda(1, 1);
    A << 0.5;
    Bu << 1.0;
    C << 1.0;
    K << 0.3;
    Lambda << 0.1;
    auto rec = exact_record(A, Bu, C, K, Lambda, 200, 17);
    HorizonSpec spec{.T_p = 4, .T_f = 2, .n_x_bar = 1, .n_u = 1, .n_y = 1};
    auto smm = reduce(build_stacked(rec.u, rec.e, rec.y, spec), 1);
    auto ddss = build_ddss(smm);

    REQUIRE(ddss.A_yy.rows() == 1);
    CHECK(ddss.A_yy(0, 0) == Approx(0.5).margin(1e-6));
}

TEST_CASE("free response decays for a stable generating system") {
    auto rec = two_state_record(160, 19);
    HorizonSpec spec{.T_p = 3, .T_f = 2, .n_x_bar = 2, .n_u = 1, .n_y = 2};
    auto smm = reduce(build_stacked(rec.u, rec.e, rec.y, spec), 2);
    auto ddss = build_ddss(smm);

    GaussianStream g(20);
    VectorXd x = g.vector(ddss.state_size());
    const double x0_norm = x.norm();
    for (int t = 0; t < 60; ++t) x = ddss.A_p * x;
    CHECK(x.norm() <= 1e-6 * x0_norm);
}

TEST_CASE("A_p keeps the structural zero block") {
    auto rec = two_state_record(120, 23);
    HorizonSpec spec{.T_p = 3, .T_f = 2, .n_x_bar = 2, .n_u = 1, .n_y = 2};
    auto smm = reduce(build_stacked(rec.u, rec.e, rec.y, spec), 2);
    auto ddss = build_ddss(smm);

    const Eigen::Index r1 = ddss.x_u_size();
    CHECK(ddss.A_p.topRightCorner(r1, ddss.n_x_bar).cwiseAbs().maxCoeff() == 0.0);
    // Effective output maps are consistent with the assembled model.
    CHECK(ddss.C_eff.isApprox(ddss.C_p * ddss.A_p));
    CHECK(ddss.D_e_eff.isApprox(ddss.C_p * ddss.B_ep));
}

TEST_CASE("replay residual stays finite on noisy data and validates shapes") {
    auto rec = two_state_record(140, 29);
    HorizonSpec spec{.T_p = 3, .T_f = 2, .n_x_bar = 2, .n_u = 1, .n_y = 2};
    auto smm = reduce(build_stacked(rec.u, rec.e, rec.y, spec), 2);
    auto ddss = build_ddss(smm);

    GaussianStream g(30);
    Trajectory noisy_y(rec.y.samples() + 0.05 * g.matrix(2, rec.y.length()));
    const double resid = ddkf::replay_residual(ddss, smm, rec.u, rec.e, noisy_y);
    CHECK(std::isfinite(resid));
    CHECK(resid > 0.0);

    Trajectory wrong_u(g.matrix(2, rec.u.length()));
    CHECK_THROWS_AS(ddkf::replay_residual(ddss, smm, wrong_u, rec.e, rec.y), ddkf::Error);
}
