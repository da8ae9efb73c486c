#include <catch2/catch.hpp>

#include <Eigen/Dense>

#include "ddkf/ddss.hpp"
#include "ddkf/predictor.hpp"
#include "ddkf/rng.hpp"
#include "ddkf/smm.hpp"
#include "test_helpers.hpp"

using ddkf::build_ddss;
using ddkf::build_prediction_matrices;
using ddkf::build_stacked;
using ddkf::GaussianStream;
using ddkf::HorizonSpec;
using ddkf::predict;
using ddkf::reduce;
using ddkf::solve_tracking;
using ddkf::TrackingProblem;
using ddkf::Trajectory;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

struct TestSystem {
    MatrixXd A, Bu, C, D, K, Lambda;
};

TestSystem two_state() {
    TestSystem s;
    s.A.resize(2, 2);
    s.A << 0.7, 0.1, -0.2, 0.4;
    s.Bu.resize(2, 1);
    s.Bu << 1.0, -0.5;
    s.C = MatrixXd::Identity(2, 2);
    s.D = MatrixXd::Zero(2, 1);
    s.K.resize(2, 2);
    s.K << 0.25, 0.0, 0.1, 0.3;
    s.Lambda.resize(2, 2);
    s.Lambda << 0.4, 0.1, 0.1, 0.5;
    return s;
}

struct BuiltModel {
    ddkf::StackedSMM stack;
    ddkf::ParsimoniousSMM smm;
    ddkf::PredictionMatrices pm;
};

BuiltModel build_model(const TestSystem& s, const HorizonSpec& spec, Eigen::Index len,
                       std::uint64_t seed) {
    GaussianStream g(seed);
    MatrixXd u = g.matrix(s.Bu.cols(), len);
    MatrixXd e = ddkf_test::gaussian_with_cov(s.Lambda, len, g);
    MatrixXd y = ddkf_test::simulate_innovations_form(s.A, s.Bu, s.C, s.D, s.K, u, e);
    BuiltModel m{build_stacked(Trajectory(u), Trajectory(e), Trajectory(y), spec), {}, {}};
    m.smm = reduce(m.stack, spec.n_x_bar);
    m.pm = build_prediction_matrices(m.smm);
    return m;
}

} // namespace

TEST_CASE("zero state and zero future input predict zero") {
    auto s = two_state();
    HorizonSpec spec{.T_p = 3, .T_f = 4, .n_x_bar = 2, .n_u = 1, .n_y = 2};
    auto m = build_model(s, spec, 200, 600);
    VectorXd yf = predict(m.pm, VectorXd::Zero(m.pm.state_size()),
                          VectorXd::Zero(m.pm.input_size()));
    CHECK(yf.norm() == 0.0);
}

TEST_CASE("prediction matches the direct data-driven simulation") {
    // Oracle: Prop.-1-style least-squares fit of the coordinate vector on the
    // raw stacked blocks, with future innovations pinned to zero.
    auto s = two_state();
    HorizonSpec spec{.T_p = 3, .T_f = 4, .n_x_bar = 2, .n_u = 1, .n_y = 2};
    auto m = build_model(s, spec, 220, 601);

    GaussianStream g(602);
    const Eigen::Index nb = 3;
    // A fresh deterministic trajectory of the same system provides the past
    // window; future inputs are arbitrary.
    MatrixXd u2 = g.matrix(1, 60);
    MatrixXd e2 = MatrixXd::Zero(2, 60);
    MatrixXd y2 = ddkf_test::simulate_innovations_form(s.A, s.Bu, s.C, s.D, s.K, u2, e2);

    const Eigen::Index t = 30;
    VectorXd ubar_p(nb * spec.T_p), y_p(2 * spec.T_p);
    for (Eigen::Index i = 0; i < spec.T_p; ++i) {
        ubar_p.segment(i * nb, 1) = u2.col(t - spec.T_p + 1 + i);
        ubar_p.segment(i * nb + 1, 2) = e2.col(t - spec.T_p + 1 + i);
        y_p.segment(i * 2, 2) = y2.col(t - spec.T_p + 1 + i);
    }
    VectorXd u_f = g.vector(spec.T_f);

    auto [x_u, x_y] = m.smm.coordinates_from_past(ubar_p, y_p);
    VectorXd x(x_u.size() + x_y.size());
    x << x_u, x_y;
    VectorXd yf_pred = predict(m.pm, x, u_f);

    // Independent oracle on the raw stack.
    VectorXd ubar_f = ddkf::u_channel_selector(spec) * u_f;
    MatrixXd lhs(m.stack.H_up.rows() + m.stack.H_yp.rows() + m.stack.H_uf.rows(),
                 m.stack.M);
    lhs << m.stack.H_up, m.stack.H_yp, m.stack.H_uf;
    VectorXd rhs(lhs.rows());
    rhs << ubar_p, y_p, ubar_f;
    VectorXd gfit = lhs.completeOrthogonalDecomposition().solve(rhs);
    VectorXd yf_oracle = m.stack.H_yf * gfit;

    CHECK((yf_pred - yf_oracle).norm() <= 1e-6 * yf_oracle.norm());
}

TEST_CASE("impulse in the first future input reproduces the impulse response") {
    auto s = two_state();
    HorizonSpec spec{.T_p = 3, .T_f = 5, .n_x_bar = 2, .n_u = 1, .n_y = 2};
    auto m = build_model(s, spec, 240, 603);

    VectorXd u_f = VectorXd::Zero(spec.T_f);
    u_f(0) = 1.0;
    VectorXd yf = predict(m.pm, VectorXd::Zero(m.pm.state_size()), u_f);

    // True impulse response: y(t+1) = D = 0, y(t+k) = C A^{k-2} B_u.
    MatrixXd u_imp = MatrixXd::Zero(1, spec.T_f + 1);
    u_imp(0, 1) = 1.0;
    ddkf_test::LtiModel lti{s.A, s.Bu, s.C, s.D};
    MatrixXd resp = ddkf_test::simulate_lti(lti, u_imp);
    VectorXd expected(2 * spec.T_f);
    for (Eigen::Index k = 0; k < spec.T_f; ++k) expected.segment(2 * k, 2) = resp.col(k + 1);

    CHECK((yf - expected).norm() <= 1e-6 * std::max(1.0, expected.norm()));
}

TEST_CASE("prediction is linear in state and input") {
    auto s = two_state();
    HorizonSpec spec{.T_p = 3, .T_f = 3, .n_x_bar = 2, .n_u = 1, .n_y = 2};
    auto m = build_model(s, spec, 200, 604);

    GaussianStream g(605);
    VectorXd x = g.vector(m.pm.state_size());
    VectorXd u1 = g.vector(m.pm.input_size());
    VectorXd u2 = g.vector(m.pm.input_size());
    VectorXd lhs = predict(m.pm, x, u1 + u2);
    VectorXd rhs = predict(m.pm, x, u1) + predict(m.pm, VectorXd::Zero(x.size()), u2);
    CHECK((lhs - rhs).norm() <= 1e-10 * rhs.norm());
}

TEST_CASE("single-step horizon agrees with the recursion's output map") {
    auto s = two_state();
    HorizonSpec spec{.T_p = 4, .T_f = 1, .n_x_bar = 2, .n_u = 1, .n_y = 2};
    auto m = build_model(s, spec, 260, 606);
    auto ddss = build_ddss(m.smm);

    GaussianStream g(607);
    for (int trial = 0; trial < 5; ++trial) {
        VectorXd x = g.vector(m.pm.state_size());
        VectorXd u_next = g.vector(1);
        VectorXd via_pm = predict(m.pm, x, u_next);
        VectorXd via_ddss = ddss.C_p * (ddss.A_p * x + ddss.B_up * u_next);
        CHECK((via_pm - via_ddss).norm() <= 1e-8 * std::max(1.0, via_ddss.norm()));
    }
}

TEST_CASE("future map coheres with the triangular characterization") {
    auto s = two_state();
    HorizonSpec spec{.T_p = 3, .T_f = 3, .n_x_bar = 2, .n_u = 1, .n_y = 2};
    auto m = build_model(s, spec, 200, 608);

    GaussianStream g(609);
    for (int trial = 0; trial < 5; ++trial) {
        VectorXd x_u = g.vector(m.smm.r1());
        VectorXd x_y = g.vector(2);
        VectorXd u_f = g.vector(m.pm.input_size());

        // Choose z so the future extended input carries exactly (u_f, 0).
        VectorXd ubar_f = ddkf::u_channel_selector(spec) * u_f;
        VectorXd z = ddkf::linalg::pinv_svd(m.smm.L_uf).pinv *
                     (ubar_f - m.smm.S_uu * x_u - m.smm.S_uy * x_y);
        VectorXd gvec(m.smm.g_size());
        gvec << x_u, x_y, z;
        VectorXd image = m.smm.assemble() * gvec;

        VectorXd x(x_u.size() + x_y.size());
        x << x_u, x_y;
        VectorXd yf = predict(m.pm, x, u_f);
        VectorXd yf_block = image.tail(m.pm.output_size());
        CHECK((yf - yf_block).norm() <= 1e-10 * std::max(1.0, yf_block.norm()));
    }
}

TEST_CASE("heavy input penalty drives the tracking solution to zero") {
    auto s = two_state();
    HorizonSpec spec{.T_p = 3, .T_f = 3, .n_x_bar = 2, .n_u = 1, .n_y = 2};
    auto m = build_model(s, spec, 200, 610);

    GaussianStream g(611);
    TrackingProblem prob;
    prob.r_f = g.vector(m.pm.output_size());
    prob.Q = MatrixXd::Identity(2, 2);
    prob.R = 1e9 * MatrixXd::Identity(1, 1);
    auto sol = solve_tracking(m.pm, VectorXd::Zero(m.pm.state_size()), prob);
    CHECK(sol.u_f.cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("vanishing input penalty reaches the reference exactly") {
    // SISO with direct feed-through gives a square invertible
    // input-to-output map over the horizon.
    MatrixXd A(1, 1), Bu(1, 1), C(1, 1), D(1, 1), K(1, 1), Lambda(1, 1);
    A << 0.5;
    Bu << 1.0;
    C << 1.0;
    D << 0.5;
    K << 0.3;
    Lambda << 0.1;
    GaussianStream g(612);
    const Eigen::Index len = 200;
    MatrixXd u = g.matrix(1, len);
    MatrixXd e = ddkf_test::gaussian_with_cov(Lambda, len, g);
    MatrixXd y = ddkf_test::simulate_innovations_form(A, Bu, C, D, K, u, e);
    HorizonSpec spec{.T_p = 3, .T_f = 3, .n_x_bar = 1, .n_u = 1, .n_y = 1};
    auto smm = reduce(build_stacked(Trajectory(u), Trajectory(e), Trajectory(y), spec), 1);
    auto pm = build_prediction_matrices(smm);

    TrackingProblem prob;
    prob.r_f = g.vector(pm.output_size());
    prob.Q = MatrixXd::Identity(1, 1);
    prob.R = 1e-12 * MatrixXd::Identity(1, 1);
    VectorXd x = g.vector(pm.state_size());
    auto sol = solve_tracking(pm, x, prob);
    VectorXd yf = predict(pm, x, sol.u_f);
    CHECK((yf - prob.r_f).norm() <= 1e-5 * prob.r_f.norm());
}

TEST_CASE("unconstrained solution matches an independent factorization") {
    auto s = two_state();
    HorizonSpec spec{.T_p = 3, .T_f = 4, .n_x_bar = 2, .n_u = 1, .n_y = 2};
    auto m = build_model(s, spec, 220, 613);

    GaussianStream g(614);
    TrackingProblem prob;
    prob.r_f = g.vector(m.pm.output_size());
    prob.Q = MatrixXd::Identity(2, 2);
    prob.R = 0.1 * MatrixXd::Identity(1, 1);
    VectorXd x = g.vector(m.pm.state_size());
    auto sol = solve_tracking(m.pm, x, prob);

    // Oracle: stacked least-squares form solved by a rank-revealing QR.
    VectorXd free_resp = m.pm.E_xu * x.head(m.smm.r1()) + m.pm.E_xy * x.tail(2);
    MatrixXd stacked(m.pm.output_size() + m.pm.input_size(), m.pm.input_size());
    stacked.topRows(m.pm.output_size()) = m.pm.E_uf;
    stacked.bottomRows(m.pm.input_size()) =
        std::sqrt(0.1) * MatrixXd::Identity(m.pm.input_size(), m.pm.input_size());
    VectorXd rhs(stacked.rows());
    rhs.head(m.pm.output_size()) = prob.r_f - free_resp;
    rhs.tail(m.pm.input_size()).setZero();
    VectorXd oracle = stacked.completeOrthogonalDecomposition().solve(rhs);
    CHECK((sol.u_f - oracle).norm() <= 1e-9 * std::max(1.0, oracle.norm()));
}

TEST_CASE("box bounds are honored with a certified KKT residual") {
    auto s = two_state();
    HorizonSpec spec{.T_p = 3, .T_f = 4, .n_x_bar = 2, .n_u = 1, .n_y = 2};
    auto m = build_model(s, spec, 220, 615);

    GaussianStream g(616);
    TrackingProblem prob;
    prob.r_f = 5.0 * VectorXd::Ones(m.pm.output_size());
    prob.Q = MatrixXd::Identity(2, 2);
    prob.R = 0.01 * MatrixXd::Identity(1, 1);
    prob.u_min = VectorXd::Constant(1, -0.4);
    prob.u_max = VectorXd::Constant(1, 0.4);
    VectorXd x = g.vector(m.pm.state_size());
    auto sol = solve_tracking(m.pm, x, prob);

    CHECK((sol.u_f.array() >= -0.4 - 1e-12).all());
    CHECK((sol.u_f.array() <= 0.4 + 1e-12).all());
    CHECK(sol.kkt_residual <= 1e-8);
    CHECK(sol.iterations > 0);
}

TEST_CASE("re-solving after one applied input cannot beat the planned tail") {
    auto s = two_state();
    const Eigen::Index Tf = 4;
    HorizonSpec spec{.T_p = 3, .T_f = Tf, .n_x_bar = 2, .n_u = 1, .n_y = 2};
    HorizonSpec spec_tail{.T_p = 3, .T_f = Tf - 1, .n_x_bar = 2, .n_u = 1, .n_y = 2};
    auto m = build_model(s, spec, 240, 617);
    auto m_tail = build_model(s, spec_tail, 240, 617);

    // Deterministic plant warmup so a full past window exists.
    GaussianStream g(618);
    const Eigen::Index warm = 12;
    MatrixXd u_hist = g.matrix(1, warm);
    MatrixXd e_hist = MatrixXd::Zero(2, warm);
    MatrixXd y_hist =
        ddkf_test::simulate_innovations_form(s.A, s.Bu, s.C, s.D, s.K, u_hist, e_hist);

    auto coords = [&](const ddkf::ParsimoniousSMM& smm, Eigen::Index t,
                      const MatrixXd& u_rec, const MatrixXd& y_rec) {
        VectorXd up(3 * spec.T_p), yp(2 * spec.T_p);
        for (Eigen::Index i = 0; i < spec.T_p; ++i) {
            up.segment(i * 3, 1) = u_rec.col(t - spec.T_p + 1 + i);
            up.segment(i * 3 + 1, 2).setZero();
            yp.segment(i * 2, 2) = y_rec.col(t - spec.T_p + 1 + i);
        }
        auto [xu, xy] = smm.coordinates_from_past(up, yp);
        VectorXd x(xu.size() + xy.size());
        x << xu, xy;
        return x;
    };

    TrackingProblem prob;
    prob.Q = MatrixXd::Identity(2, 2);
    prob.R = 0.1 * MatrixXd::Identity(1, 1);
    VectorXd full_ref = g.vector(2 * Tf);
    prob.r_f = full_ref;

    const Eigen::Index t0 = warm - 1;
    VectorXd x0 = coords(m.smm, t0, u_hist, y_hist);
    auto sol = solve_tracking(m.pm, x0, prob);
    VectorXd yf = predict(m.pm, x0, sol.u_f);

    double tail_cost = 0.0;
    for (Eigen::Index k = 1; k < Tf; ++k) {
        VectorXd err = yf.segment(2 * k, 2) - full_ref.segment(2 * k, 2);
        tail_cost += err.squaredNorm() + 0.1 * sol.u_f.segment(k, 1).squaredNorm();
    }

    // Apply the first planned input to the exact system.
    MatrixXd u_ext(1, warm + 1), e_ext = MatrixXd::Zero(2, warm + 1);
    u_ext.leftCols(warm) = u_hist;
    u_ext(0, warm) = sol.u_f(0);
    MatrixXd y_ext =
        ddkf_test::simulate_innovations_form(s.A, s.Bu, s.C, s.D, s.K, u_ext, e_ext);

    TrackingProblem tail_prob;
    tail_prob.Q = prob.Q;
    tail_prob.R = prob.R;
    tail_prob.r_f = full_ref.tail(2 * (Tf - 1));
    VectorXd x1 = coords(m_tail.smm, t0 + 1, u_ext, y_ext);
    auto resolved = solve_tracking(m_tail.pm, x1, tail_prob);
    VectorXd yf1 = predict(m_tail.pm, x1, resolved.u_f);
    double resolved_cost = 0.0;
    for (Eigen::Index k = 0; k < Tf - 1; ++k) {
        VectorXd err = yf1.segment(2 * k, 2) - tail_prob.r_f.segment(2 * k, 2);
        resolved_cost += err.squaredNorm() + 0.1 * resolved.u_f.segment(k, 1).squaredNorm();
    }
    CHECK(resolved_cost <= tail_cost + 1e-9 * std::max(1.0, tail_cost));
}
