#include "idapbc/control_sim.hpp"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "idapbc/errors.hpp"
#include "idapbc/stability.hpp"

namespace idapbc {
namespace {

class PendulumControl : public ::testing::Test {
 protected:
  SystemBundle bundle_ = builtin("pendulum_cart");
  Controller ctrl_{bundle_.system, *bundle_.design};

  Eigen::Vector4d random_state(std::mt19937_64& rng) const {
    std::uniform_real_distribution<double> q1(-0.7, 0.7), q2(-1, 1), p(-1, 1);
    return {q1(rng), q2(rng), p(rng), p(rng)};
  }
};

TEST_F(PendulumControl, FeedbackAtRest) {
  const Eigen::Vector2d zero(0, 0);
  EXPECT_LE(feedback(ctrl_, zero, zero).u.norm(), 1e-15);
  const FeedbackResult f = feedback(ctrl_, zero, Eigen::Vector2d(0, 1));
  ASSERT_EQ(f.u.size(), 1);
  EXPECT_NEAR(f.u(0), -1.0, 1e-12);
  EXPECT_FALSE(f.residual.has_value());
}

TEST_F(PendulumControl, ClosedLoopEquivalence) {
  std::mt19937_64 rng(0);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Vector4d x = random_state(rng);
    const Eigen::Vector2d q = x.head(2), p = x.tail(2);
    const FeedbackResult f = feedback(ctrl_, q, p);
    const PhaseVelocity open = open_loop_field(bundle_.system, q, p, f.u);
    const PhaseVelocity closed = closed_loop_field(ctrl_, q, p);
    EXPECT_LE((open.qdot - closed.qdot).lpNorm<Eigen::Infinity>(), 1e-9);
    EXPECT_LE((open.pdot - closed.pdot).lpNorm<Eigen::Infinity>(), 1e-9);
    EXPECT_LE((closed.qdot - bundle_.system.mass(q).inverse() * p).norm(), 1e-12);
  }
}

TEST_F(PendulumControl, EnergyRate) {
  std::mt19937_64 rng(1);
  const Eigen::Vector2d g(0, 1);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Vector4d x = random_state(rng);
    const Eigen::Vector2d q = x.head(2), p = x.tail(2);
    const Eigen::Vector2d v = bundle_.design->mhat(q).inverse() * p;
    const double expected = -std::pow(g.dot(v), 2);  // Kv = 1
    const double rate = energy_rate(ctrl_, q, p);
    EXPECT_NEAR(rate, expected, 1e-9 * std::max(1.0, std::abs(expected)));
    EXPECT_LE(rate, 1e-12);
    // The gyroscopic term only adds roundoff.
    EXPECT_NEAR(energy_rate(ctrl_, q, p, false), rate, 1e-10 * std::max(1.0, std::abs(rate)));
  }
}

TEST_F(PendulumControl, JFormGivesSameForce) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Vector4d x = random_state(rng);
    const Eigen::Vector2d q = x.head(2), p = x.tail(2);
    const Eigen::MatrixXd mhat = bundle_.design->mhat(q);
    const GyroTensor c = ctrl_.gyro(q);
    const Interconnection j = b_to_j(psi_preimage(c), mhat);
    EXPECT_LE((force_from_j(j, mhat, p) - ctrl_.gyro_force(q, p)).lpNorm<Eigen::Infinity>(), 1e-10);
  }
}

TEST_F(PendulumControl, LinearizationMatchesJacobian) {
  const auto field = closed_loop_vector_field(ctrl_);
  const Eigen::MatrixXd analytic = closed_loop_linearization(bundle_.system, *bundle_.design);
  const double h = 1e-6;
  Eigen::MatrixXd fd(4, 4);
  for (int i = 0; i < 4; ++i) {
    Eigen::Vector4d e = Eigen::Vector4d::Zero();
    e(i) = h;
    fd.col(i) = (field(e) - field(-e)) / (2 * h);
  }
  EXPECT_LE((fd - analytic).cwiseAbs().maxCoeff(), 1e-5);
}

TEST_F(PendulumControl, KvMustBePositive) {
  const ShapedDesign zero_gain = bundle_.design->with_kv(Eigen::MatrixXd::Zero(1, 1));
  EXPECT_THROW(Controller(bundle_.system, zero_gain), ConfigError);
  const ShapedDesign wrong_size = bundle_.design->with_kv(Eigen::MatrixXd::Identity(2, 2));
  EXPECT_THROW(Controller(bundle_.system, wrong_size), ConfigError);
}

TEST_F(PendulumControl, FeedbackWarnsOffDesign) {
  const ShapedDesign bad = bundle_.design->with_vhat(bundle_.design->vhat_expr() + 0.1 * Expr::variable(0));
  const Controller ctrl(bundle_.system, bad);
  const FeedbackResult f = feedback(ctrl, Eigen::Vector2d(0.1, 0), Eigen::Vector2d(0, 0));
  ASSERT_TRUE(f.residual.has_value());
  EXPECT_NEAR(*f.residual, 0.1, 1e-12);
  EXPECT_FALSE(f.warning.empty());
}

TEST_F(PendulumControl, SimulationDissipates) {
  SimConfig cfg;
  cfg.t_end = 10.0;
  cfg.dt = 1e-3;
  cfg.x0 = Eigen::Vector4d(0.3, 0, 0, 0);
  const StateTrajectory traj = simulate(closed_loop_vector_field(ctrl_), closed_loop_energy(ctrl_), cfg);
  ASSERT_FALSE(traj.stopped_at.has_value()) << traj.stop_reason;
  EXPECT_EQ(traj.size(), 10001u);
  const DecayMetrics dm = decay_metrics(traj, bundle_.design->vhat(Eigen::Vector2d(0, 0)));
  EXPECT_LE(dm.max_energy_increase, 1e-8);
  EXPECT_LT(dm.fitted_rate, 0.0);
  EXPECT_LT(traj.states.back().norm(), traj.states.front().norm());
}

TEST_F(PendulumControl, FourthOrderConvergence) {
  SimConfig cfg;
  cfg.t_end = 2.0;
  cfg.x0 = Eigen::Vector4d(0.3, 0, 0, 0);
  const auto field = closed_loop_vector_field(ctrl_);
  const auto energy = closed_loop_energy(ctrl_);
  cfg.dt = 0.04;
  const Eigen::VectorXd coarse = simulate(field, energy, cfg).states.back();
  cfg.dt = 0.02;
  const Eigen::VectorXd mid = simulate(field, energy, cfg).states.back();
  cfg.dt = 0.01;
  const Eigen::VectorXd fine = simulate(field, energy, cfg).states.back();
  const double ratio = (coarse - mid).norm() / (mid - fine).norm();
  EXPECT_GT(ratio, 12.0);
  EXPECT_LT(ratio, 20.0);
  // Richardson estimate of the error in `mid` bounds the actual halving gap.
  EXPECT_LE((mid - fine).norm(), 16.0 * (coarse - mid).norm() / 15.0);
}

TEST_F(PendulumControl, DivergenceAndFailures) {
  SimConfig cfg;
  cfg.t_end = 1.0;
  cfg.dt = 1e-2;
  cfg.x0 = Eigen::Vector4d(1.5, 0, 0, 0);
  const StateTrajectory outside = simulate(closed_loop_vector_field(ctrl_), closed_loop_energy(ctrl_), cfg);
  ASSERT_TRUE(outside.stopped_at.has_value());
  EXPECT_TRUE(outside.energies.empty());

  const VectorField blowup = [](const Eigen::VectorXd& x) -> Eigen::VectorXd { return 10.0 * x; };
  const EnergyFn norm = [](const Eigen::VectorXd& x) { return x.norm(); };
  cfg.t_end = 5.0;
  cfg.x0 = Eigen::Vector4d(1, 0, 0, 0);
  const StateTrajectory d = simulate(blowup, norm, cfg);
  ASSERT_TRUE(d.stopped_at.has_value());
  EXPECT_NEAR(*d.stopped_at, std::log(1e6) / 10.0, 0.05);
  EXPECT_LE(d.states.back().norm(), 1e6);

  cfg.dt = 0.0;
  EXPECT_THROW(simulate(blowup, norm, cfg), ConfigError);
}

GTEST_TEST(OpenLoop, ConservesEnergy) {
  const SystemBundle b = builtin("pendulum_cart");
  SimConfig cfg;
  cfg.t_end = 10.0;
  cfg.dt = 1e-3;
  cfg.x0 = Eigen::Vector4d(0.3, 0, 0, 0);
  const StateTrajectory traj = simulate(open_loop_vector_field(b.system), open_loop_energy(b.system), cfg);
  ASSERT_FALSE(traj.stopped_at.has_value());
  for (double e : traj.energies) EXPECT_NEAR(e, traj.energies.front(), 1e-6);
}

GTEST_TEST(DecayMetrics, SyntheticExponential) {
  StateTrajectory traj;
  for (int k = 0; k <= 100; ++k) {
    traj.times.push_back(0.1 * k);
    traj.states.push_back(Eigen::VectorXd::Zero(2));
    traj.energies.push_back(-1.0 + 2.0 * std::exp(-0.5 * 0.1 * k));
  }
  const DecayMetrics dm = decay_metrics(traj, -1.0);
  EXPECT_NEAR(dm.fitted_rate, -0.5, 1e-9);
  EXPECT_LT(dm.max_energy_increase, 0.0);
  EXPECT_FALSE(dm.clamped);
  traj.energies.back() = -2.0;
  EXPECT_TRUE(decay_metrics(traj, -1.0).clamped);
  EXPECT_THROW(decay_metrics(StateTrajectory{}, 0.0), Error);
}

GTEST_TEST(TrajectoryCsv, Header) {
  StateTrajectory traj;
  traj.times = {0.0};
  traj.states = {Eigen::Vector4d(1, 2, 3, 4)};
  traj.energies = {5.0};
  EXPECT_EQ(trajectory_csv(traj, {"q1", "q2"}), "t,q1,q2,p1,p2,energy\n0,1,2,3,4,5\n");
}

}  // namespace
}  // namespace idapbc
