#include "idapbc/expr.hpp"

#include <cmath>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "idapbc/errors.hpp"

namespace idapbc {
namespace {

const std::vector<std::string> kVars2{"q1", "q2"};
const std::vector<std::string> kVars3{"q1", "q2", "q3"};

double at(const Expr& e, std::vector<double> point) { return e.eval(std::span<const double>(point)); }

GTEST_TEST(ExprParse, Evaluates) {
  EXPECT_DOUBLE_EQ(at(parse("10*cos(q1)", kVars2), {0.0, 0.0}), 10.0);
  EXPECT_DOUBLE_EQ(at(parse("5+cos(q3)", kVars3), {0.0, 0.0, 0.0}), 6.0);
  EXPECT_DOUBLE_EQ(at(parse("sin(q1)", kVars2), {0.0, 0.0}), 0.0);
  EXPECT_DOUBLE_EQ(at(parse("q1+q2", kVars2), {1.0, 2.0}), 3.0);
  // det M(0) of the pendulum, [[1,1],[1,2]].
  EXPECT_DOUBLE_EQ(at(parse("2-cos(q1)^2", kVars2), {0.0, 0.0}), 2.0 - 1.0 * 1.0);
}

GTEST_TEST(ExprParse, Precedence) {
  EXPECT_DOUBLE_EQ(at(parse("-q1^2", kVars2), {3.0, 0.0}), -9.0);
  EXPECT_DOUBLE_EQ(at(parse("2*3^2", kVars2), {0.0, 0.0}), 18.0);
  EXPECT_DOUBLE_EQ(at(parse("q1^-1", kVars2), {4.0, 0.0}), 0.25);
  EXPECT_DOUBLE_EQ(at(parse("q1^(-2)", kVars2), {2.0, 0.0}), 0.25);
  EXPECT_DOUBLE_EQ(at(parse("8/2/2", kVars2), {0.0, 0.0}), 2.0);
  EXPECT_DOUBLE_EQ(at(parse("1 - 2 - 3", kVars2), {0.0, 0.0}), -4.0);
  EXPECT_DOUBLE_EQ(at(parse("1.5e1", kVars2), {0.0, 0.0}), 15.0);
}

GTEST_TEST(ExprParse, Params) {
  const ParamMap params{{"eps", 0.5}, {"K", 2.0}};
  EXPECT_DOUBLE_EQ(at(parse("2*cos(q1)^2 - eps + K", kVars2, params), {0.0, 0.0}), 3.5);
  // Variables shadow parameters of the same name.
  EXPECT_DOUBLE_EQ(at(parse("q1", kVars2, {{"q1", 7.0}}), {1.0, 0.0}), 1.0);
}

GTEST_TEST(ExprParse, Errors) {
  EXPECT_THROW(parse("", kVars2), ParseError);
  EXPECT_THROW(parse("q1 +", kVars2), ParseError);
  EXPECT_THROW(parse("cos(q1", kVars2), ParseError);
  EXPECT_THROW(parse("q4", kVars2), ParseError);
  EXPECT_THROW(parse("q1^1.5", kVars2), ParseError);
  EXPECT_THROW(parse("tan(q1)", kVars2), ParseError);
  try {
    parse("q1 + $", kVars2);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.position(), 5u);
  }
}

GTEST_TEST(ExprEval, DivisionByZero) {
  const Expr e = parse("q1^2/(q1-q1)", kVars2);
  EXPECT_THROW(at(e, {0.3, 0.0}), EvalError);
  EXPECT_THROW(at(e, {-2.0, 1.0}), EvalError);
  EXPECT_THROW(at(parse("q1^-1", kVars2), {0.0, 0.0}), EvalError);
}

GTEST_TEST(ExprDiff, Derivatives) {
  const Expr d = parse("10*cos(q1)", kVars2).differentiate(0);
  for (double x : {-1.0, 0.2, 0.9}) EXPECT_NEAR(at(d, {x, 0.0}), -10.0 * std::sin(x), 1e-14);

  const Expr m11 = parse("2*cos(q1)^2 - 0.5", kVars2);
  const Expr dm = m11.differentiate(0);
  for (double x : {-0.7, 0.1, 0.4}) {
    EXPECT_NEAR(at(dm, {x, 0.0}), -4.0 * std::cos(x) * std::sin(x), 1e-14);
    const double h = 1e-6;
    const double fd = (at(m11, {x + h, 0.0}) - at(m11, {x - h, 0.0})) / (2 * h);
    EXPECT_NEAR(at(dm, {x, 0.0}), fd, 1e-6);
  }

  const Expr zero = parse("cos(q1)", kVars2).differentiate(1);
  EXPECT_TRUE(zero.is_zero());
}

GTEST_TEST(ExprDiff, QuotientAndPower) {
  const Expr e = parse("(q1^3 + q2)/(2 + sin(q1))", kVars2);
  const std::vector<double> p{0.4, -0.3};
  const double h = 1e-6;
  for (int v = 0; v < 2; ++v) {
    auto plus = p, minus = p;
    plus[static_cast<std::size_t>(v)] += h;
    minus[static_cast<std::size_t>(v)] -= h;
    EXPECT_NEAR(at(e.differentiate(v), p), (at(e, plus) - at(e, minus)) / (2 * h), 1e-8);
  }
}

GTEST_TEST(ExprPrint, RoundTrip) {
  for (const char* text : {"10*cos(q1)", "-(q1 - q2)^3/(1 + q2^2)", "sin(q1)*cos(q2)^-2 - 0.1"}) {
    const Expr e = parse(text, kVars2);
    const Expr back = parse(to_string(e, kVars2), kVars2);
    for (double x : {-0.5, 0.25}) EXPECT_DOUBLE_EQ(at(back, {x, 0.7}), at(e, {x, 0.7})) << text;
  }
}

GTEST_TEST(ExprMatrix, SymmetryAndEval) {
  ExprMatrix m(2, 2);
  m(0, 0) = parse("1", kVars2);
  m(0, 1) = parse("cos(q1)", kVars2);
  m(1, 0) = parse("cos(q1)", kVars2);
  m(1, 1) = parse("2", kVars2);
  EXPECT_TRUE(m.is_structurally_symmetric());
  const Eigen::MatrixXd at0 = m.eval(Eigen::Vector2d(0.0, 0.0));
  EXPECT_DOUBLE_EQ(at0(0, 1), 1.0);
  const Eigen::MatrixXd d = m.differentiate(0).eval(Eigen::Vector2d(0.5, 0.0));
  EXPECT_NEAR(d(1, 0), -std::sin(0.5), 1e-15);
  m(1, 0) = parse("cos(q2)", kVars2);
  EXPECT_FALSE(m.is_structurally_symmetric());
}

}  // namespace
}  // namespace idapbc
