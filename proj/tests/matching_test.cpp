#include "idapbc/matching.hpp"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "idapbc/errors.hpp"
#include "idapbc/selftest.hpp"
#include "pendulum_oracle.hpp"

namespace idapbc {
namespace {

SystemBundle constant_metric(int n, int m) {
  // Diagonal constant M, zero potential, G = last m coordinate directions.
  std::string mass = "[", input = "[";
  for (int i = 0; i < n; ++i) {
    mass += "[";
    input += "[";
    for (int j = 0; j < n; ++j) mass += std::string(i == j ? "\"" + std::to_string(i + 2) + "\"" : "\"0\"") + (j + 1 < n ? "," : "");
    for (int j = 0; j < m; ++j) input += std::string(i == n - m + j ? "\"1\"" : "\"0\"") + (j + 1 < m ? "," : "");
    mass += i + 1 < n ? "]," : "]";
    input += i + 1 < n ? "]," : "]";
  }
  mass += "]";
  input += "]";
  std::string mhat = "[";
  for (int i = 0; i < n; ++i) {
    mhat += "[";
    for (int j = 0; j < n; ++j) mhat += std::string(i == j ? "\"1\"" : "\"0.1\"") + (j + 1 < n ? "," : "");
    mhat += i + 1 < n ? "]," : "]";
  }
  mhat += "]";
  const std::string text = R"({"n":)" + std::to_string(n) + R"(,"m":)" + std::to_string(m) + R"(,"M":)" + mass +
                           R"(,"V":"0","G":)" + input + R"(,"shaped":{"Mhat":)" + mhat + R"(,"Vhat":"0"}})";
  return load_system_json(text);
}

GTEST_TEST(ATensor, VanishesAtOriginAndSymmetric) {
  const SystemBundle b = builtin("pendulum_cart");
  EXPECT_LE(a_tensor(b.system, *b.design, Eigen::Vector2d(0, 0)).max_abs(), 1e-14);
  const SystemBundle c = constant_metric(3, 1);
  EXPECT_EQ(a_tensor(c.system, *c.design, Eigen::Vector3d(0.2, 0.1, 0.3)).max_abs(), 0.0);

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-0.7, 0.7);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Vector2d q(u(rng), u(rng));
    const Tensor3 a = a_tensor(b.system, *b.design, q);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        for (int k = 0; k < 2; ++k) EXPECT_NEAR(a(i, j, k), a(j, i, k), 1e-14 * std::max(1.0, a.max_abs()));
  }
}

GTEST_TEST(TTensor, TwoRoutesAgree) {
  const SystemBundle b = builtin("pendulum_cart");
  for (double q1 : {0.3, -0.5, 0.1}) {
    const Eigen::Vector2d q(q1, 0.2);
    const Tensor3 direct = t_tensor(b.system, *b.design, q);
    const Tensor3 via_a = t_tensor_from_a(a_tensor(b.system, *b.design, q), b.design->mhat(q));
    EXPECT_LE((direct - via_a).max_abs(), 1e-10);
    EXPECT_LE(first_pair_asymmetry(direct), 1e-13);
  }
  const SystemBundle c = constant_metric(2, 1);
  EXPECT_EQ(t_tensor(c.system, *c.design, Eigen::Vector2d(0.4, 0.1)).max_abs(), 0.0);
}

GTEST_TEST(TTensor, MatchesHandFormulas) {
  const SystemBundle b = builtin("pendulum_cart");
  const oracle::Pendulum p;
  for (double q1 : {-0.6, 0.05, 0.5}) {
    const Tensor3 t = t_tensor(b.system, *b.design, Eigen::Vector2d(q1, 0));
    EXPECT_NEAR(t(0, 1, 0), p.s121(q1), 1e-12);
    EXPECT_NEAR(t(1, 1, 0), p.s221(q1), 1e-11);
  }
}

GTEST_TEST(PotentialResidual, Pendulum) {
  const SystemBundle b = builtin("pendulum_cart");
  const oracle::Pendulum p;
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 5; ++j) {
      const double q1 = -0.95 + 0.2 * i, q2 = -0.8 + 0.4 * j;
      const Eigen::VectorXd r = potential_residual(b.system, *b.design, Eigen::Vector2d(q1, q2));
      ASSERT_EQ(r.size(), 1);
      EXPECT_LE(std::abs(r(0)), 1e-9);
      // Row one of Mhat M^{-1} is (-eps, 2c).
      const Eigen::Vector2d g = p.vhat_gradient(q1, q2);
      EXPECT_NEAR(-p.eps * g(0) + 2 * std::cos(q1) * g(1), -10 * std::sin(q1), 1e-12);
    }
}

GTEST_TEST(PotentialResidual, IdentityShapingAndPerturbation) {
  const SystemBundle b = builtin("pendulum_cart");
  const ShapedDesign identity(2, b.system.mass_expr(), b.system.potential_expr(), Eigen::MatrixXd::Identity(1, 1));
  EXPECT_LE(potential_residual(b.system, identity, Eigen::Vector2d(0.3, -0.4)).norm(), 1e-15);
  EXPECT_LE(kinetic_residual(b.system, identity, Eigen::Vector2d(0.3, -0.4)).norm(), 1e-15);

  const Expr perturbed = b.design->vhat_expr() + 0.1 * Expr::variable(0);
  const ShapedDesign bad = b.design->with_vhat(perturbed);
  // 0.1 * (Mhat M^{-1})_11 = 0.1 * (-eps).
  EXPECT_NEAR(potential_residual(b.system, bad, Eigen::Vector2d(0, 0))(0), 0.1, 1e-14);
}

GTEST_TEST(KineticResidual, PendulumAndCounts) {
  const SystemBundle b = builtin("pendulum_cart");
  for (double q1 = -1.0; q1 <= 1.0; q1 += 0.05) {
    const Eigen::VectorXd r = kinetic_residual(b.system, *b.design, Eigen::Vector2d(q1, 0));
    ASSERT_EQ(r.size(), 1);
    EXPECT_LE(std::abs(r(0)), 1e-9) << q1;
  }
  const SystemBundle c = constant_metric(5, 2);
  const Eigen::VectorXd r = kinetic_residual(c.system, *c.design, Eigen::VectorXd::Zero(5));
  EXPECT_EQ(r.size(), 10);
  EXPECT_EQ(r.norm(), 0.0);
}

GTEST_TEST(PdeCounts, Values) {
  EXPECT_EQ(pde_counts(2, 1).naive, 3);
  EXPECT_EQ(pde_counts(2, 1).reduced, 1);
  EXPECT_EQ(pde_counts(5, 2).naive, 45);
  EXPECT_EQ(pde_counts(5, 2).reduced, 10);
  EXPECT_EQ(pde_counts(4, 4).naive, 0);
  EXPECT_EQ(pde_counts(4, 4).reduced, 0);
  EXPECT_THROW(pde_counts(2, 3), Error);
}

GTEST_TEST(DeriveGyro, PendulumClosedForms) {
  const SystemBundle b = builtin("pendulum_cart");
  const oracle::Pendulum p;
  for (double q1 : {-0.7, -0.2, 0.0, 0.35, 0.7}) {
    const GyroTensor c = derive_gyro_at(b.system, *b.design, Eigen::Vector2d(q1, 0.5));
    const double s121 = p.s121(q1), s221 = p.s221(q1);
    EXPECT_NEAR(c(0, 1, 0), s121, 1e-10);
    EXPECT_NEAR(c(1, 0, 0), s121, 1e-10);
    EXPECT_NEAR(c(1, 1, 0), s221, 1e-10);
    EXPECT_NEAR(c(0, 0, 1), -2 * s121, 1e-10);
    EXPECT_NEAR(c(0, 1, 1), -0.5 * s221, 1e-10);
    EXPECT_NEAR(c(1, 0, 1), -0.5 * s221, 1e-10);
    EXPECT_NEAR(c(0, 0, 0), 0.0, 1e-10);
    EXPECT_NEAR(c(1, 1, 1), 0.0, 1e-10);
  }
}

GTEST_TEST(DeriveGyro, ConstantMetricAndGyroProperty) {
  const SystemBundle c = constant_metric(3, 2);
  EXPECT_EQ(derive_gyro_at(c.system, *c.design, Eigen::Vector3d(0.1, 0.2, 0.3)).tensor().max_abs(), 0.0);
  const SystemBundle full = constant_metric(3, 3);
  EXPECT_EQ(derive_gyro_at(full.system, *full.design, Eigen::Vector3d(0.1, 0.2, 0.3)).tensor().max_abs(), 0.0);

  const SystemBundle b = builtin("pendulum_cart");
  std::mt19937_64 rng(4);
  const GyroTensor g = derive_gyro_at(b.system, *b.design, Eigen::Vector2d(0.4, 0));
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::VectorXd v = draw::vector(2, rng);
    EXPECT_NEAR(g.tensor().contract(v, v, v), 0.0, 1e-12);
  }
}

GTEST_TEST(DeriveGyro, ThreeDofConstantShaping) {
  // M(q) varies while Mhat is constant, so the reduced condition fails away
  // from the origin and the checked derivation refuses.
  const SystemBundle b = builtin("three_dof");
  ExprMatrix mhat(3, 3);
  for (int i = 0; i < 3; ++i) mhat(i, i) = Expr(6.0);
  const ShapedDesign d(3, mhat, Expr(), Eigen::MatrixXd::Identity(2, 2));
  const Eigen::Vector3d q(0.3, -0.2, 0.4);
  const double r = kinetic_residual(b.system, d, q).norm();
  EXPECT_GT(r, 1e-9);
  EXPECT_THROW(derive_gyro_at(b.system, d, q), InvariantViolation);
  EXPECT_NO_THROW(GyroField(b.system, d).unchecked(q));
}

GTEST_TEST(Grid, ParseAndPoints) {
  const std::vector<std::string> vars{"q1", "q2"};
  const Grid g = Grid::parse("q1=-1:1:41,q2=-1:1:11", vars);
  EXPECT_EQ(g.size(), 451u);
  const auto pts = g.points();
  EXPECT_DOUBLE_EQ(pts.front()(0), -1.0);
  EXPECT_DOUBLE_EQ(pts.back()(1), 1.0);
  EXPECT_EQ(Grid::parse("q2=0:0:1", vars).size(), 11u);
  EXPECT_THROW(Grid::parse("q3=0:1:2", vars), ConfigError);
  EXPECT_THROW(Grid::parse("q1=0:1", vars), ConfigError);
  EXPECT_THROW(Grid::parse("q1=0:1:0", vars), ConfigError);
  EXPECT_EQ(Grid::parse(g.to_string(vars), vars).size(), g.size());
}

GTEST_TEST(PdDomain, ShrinksWithEps) {
  const std::vector<std::string> vars{"q1", "q2"};
  const Grid g = Grid::parse("q1=-1:1:41,q2=-1:1:11", vars);
  const PdDomain d1 = pd_domain(*builtin("pendulum_cart").design, g);
  EXPECT_FALSE(d1.full);
  EXPECT_NEAR(d1.box[0].second, 0.8, 1e-12);  // arccos(sqrt(1/2)) = 0.785
  EXPECT_DOUBLE_EQ(d1.box[1].second, 1.0);
  const PdDomain d2 = pd_domain(*builtin("pendulum_cart", {{"eps", 1.9}}).design, g);
  EXPECT_NEAR(d2.box[0].second, 0.25, 1e-12);  // arccos(sqrt(0.95)) = 0.2255
  const Grid inside = restrict_to(g, d2);
  EXPECT_EQ(inside.axes[0].count, 9);
  EXPECT_NEAR(inside.axes[0].hi, 0.2, 1e-12);
  EXPECT_EQ(inside.axes[1].count, 11);
}

GTEST_TEST(ResidualReport, LocatesPerturbation) {
  const SystemBundle b = builtin("pendulum_cart");
  const Grid g = Grid::parse("q1=-0.7:0.7:15,q2=-1:1:5", b.system.vars());
  const ResidualReport ok = residual_report(b.system, *b.design, g);
  EXPECT_LE(ok.potential_max_abs, 1e-9);
  EXPECT_LE(ok.kinetic_max_abs, 1e-9);
  EXPECT_EQ(ok.failed_points, 0u);

  const ShapedDesign bad = b.design->with_vhat(b.design->vhat_expr() + 0.1 * pow(Expr::variable(0), 2));
  const ResidualReport r = residual_report(b.system, bad, g);
  EXPECT_GT(r.potential_max_abs, 1e-3);
  EXPECT_NEAR(std::abs(r.potential_argmax(0)), 0.7, 1e-12);
  const std::string csv = residual_csv(r, b.system.vars());
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "q1,q2,pot_1,kin_1,error");
}

GTEST_TEST(LinearMatching, Pendulum) {
  const SystemBundle b = builtin("pendulum_cart");
  const Linearization lin = linearize(b.system);
  const Eigen::MatrixXd w = annihilator(b.system, Eigen::Vector2d(0, 0));
  const LinearMatch found = solve_linear_matching(b.system);
  EXPECT_LE(linear_match_residual(lin, w, found.mbar, found.sbar), 1e-9);

  // The nonlinear design at the origin is one admissible certificate.
  Eigen::Matrix2d mbar, sbar;
  mbar << 1, 3, 3, 10;
  sbar << 18, 4, 4, 2;
  EXPECT_NO_THROW(make_linear_match(lin, w, mbar, sbar));
  // Row one of Mbar M^{-1}(0) Sbar equals D^2V(0) row one.
  const Eigen::RowVector2d row = mbar.row(0) * lin.mass.inverse() * sbar;
  EXPECT_LE((row - Eigen::RowVector2d(-10, 0)).norm(), 1e-12);
  EXPECT_THROW(make_linear_match(lin, w, Eigen::Matrix2d::Identity(), Eigen::Matrix2d::Identity()), InvariantViolation);
}

GTEST_TEST(LinearMatching, ThreeDofAndFullyActuated) {
  EXPECT_NO_THROW(solve_linear_matching(builtin("three_dof").system));
  const SystemBundle full = constant_metric(3, 3);
  const LinearMatch lm = solve_linear_matching(full.system);
  EXPECT_EQ(lm.mbar, Eigen::MatrixXd::Identity(3, 3));
  EXPECT_EQ(lm.sbar, Eigen::MatrixXd::Identity(3, 3));
}

GTEST_TEST(LinearMatching, RejectsUnstableUncontrollable) {
  // q1 decoupled with negative stiffness and no actuation.
  Eigen::Matrix2d mass = Eigen::Matrix2d::Identity(), hess;
  hess << -1, 0, 0, 1;
  const Linearization lin = linearize(mass, hess, Eigen::Vector2d(0, 1));
  EXPECT_THROW(solve_linear_matching(lin, Eigen::RowVector2d(1, 0)), Error);
}

GTEST_TEST(LinearMatching, RandomControllableCertificates) {
  std::mt19937_64 rng(8);
  int built = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + trial % 3;
    const Eigen::MatrixXd mass = draw::spd(n, rng);
    Eigen::MatrixXd hess = draw::spd(n, rng) - 1.5 * Eigen::MatrixXd::Identity(n, n);
    hess = 0.5 * (hess + hess.transpose()).eval();
    Eigen::MatrixXd g(n, n - 1);
    for (int c = 0; c < n - 1; ++c) g.col(c) = draw::vector(n, rng);
    const Linearization lin = linearize(mass, hess, g);
    const Eigen::MatrixXd w = annihilator_of(g);
    if (verdict(lin, 1).verdict == Verdict::NotStabilizable) continue;
    const LinearMatch lm = solve_linear_matching(lin, w);
    EXPECT_LE(linear_match_residual(lin, w, lm.mbar, lm.sbar), 1e-9);
    ++built;
  }
  EXPECT_GT(built, 100);
}

GTEST_TEST(Characteristics, RecoversPendulum) {
  const SystemBundle b = builtin("pendulum_cart");
  const std::vector<std::string> vars{"q1", "q2", "m11"};
  const std::vector<Expr> ansatz{parse("(4 - eps)*cos(q1)", vars, b.params)};
  LinearMatch init{Eigen::Matrix2d::Identity(), Eigen::Matrix2d::Identity()};
  init.mbar(0, 0) = 2 - 1.0;
  const CharacteristicsResult r = solve_kinetic_characteristics(b.system, ansatz, init);
  ASSERT_EQ(r.q1.size(), 201u);
  EXPECT_EQ(r.integrated_lo, -1.0);
  EXPECT_EQ(r.integrated_hi, 1.0);
  // 2 cos^2 q1 - 1 vanishes at pi/4; the positive interval is reported.
  EXPECT_TRUE(r.truncated);
  EXPECT_NEAR(r.hi, M_PI / 4, 1e-8);
  EXPECT_NEAR(r.lo, -M_PI / 4, 1e-8);
  for (std::size_t i = 0; i < r.q1.size(); ++i) {
    EXPECT_NEAR(r.mhat11[i], 2 * std::cos(r.q1[i]) * std::cos(r.q1[i]) - 1.0, 1e-6);
  }
}

GTEST_TEST(Characteristics, TruncatesNearEpsTwo) {
  const SystemBundle b = builtin("pendulum_cart", {{"eps", 1.99}});
  const std::vector<std::string> vars{"q1", "q2", "m11"};
  const std::vector<Expr> ansatz{parse("(4 - eps)*cos(q1)", vars, b.params)};
  LinearMatch init{Eigen::Matrix2d::Identity(), Eigen::Matrix2d::Identity()};
  init.mbar(0, 0) = 2 - 1.99;
  const CharacteristicsResult r = solve_kinetic_characteristics(b.system, ansatz, init);
  EXPECT_TRUE(r.truncated);
  // 2 cos^2 q1 = 1.99 at q1 = 0.0708.
  EXPECT_LT(r.hi, 0.0709);
  EXPECT_GT(r.hi, 0.06);
  EXPECT_GT(r.lo, -0.0709);
  for (std::size_t i = 0; i < r.q1.size(); ++i) {
    if (r.q1[i] > r.lo && r.q1[i] < r.hi) EXPECT_GT(r.mhat11[i], 0.0);
    const double c = std::cos(r.q1[i]);
    EXPECT_NEAR(r.mhat11[i], 2 * c * c - 1.99, 1e-6);
  }
}

GTEST_TEST(Characteristics, ConstantMetric) {
  const SystemBundle c = constant_metric(2, 1);
  const std::vector<std::string> vars{"q1", "q2", "m11"};
  const std::vector<Expr> ansatz{parse("0.3", vars)};
  LinearMatch init{Eigen::Matrix2d::Identity() * 1.7, Eigen::Matrix2d::Identity()};
  const CharacteristicsResult r = solve_kinetic_characteristics(c.system, ansatz, init);
  EXPECT_FALSE(r.truncated) << r.reason;
  EXPECT_EQ(r.hi, 1.0);
  for (double m : r.mhat11) EXPECT_NEAR(m, 1.7, 1e-12);
}

}  // namespace
}  // namespace idapbc
