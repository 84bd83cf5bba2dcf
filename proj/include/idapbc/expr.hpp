#pragma once

#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace idapbc {

/// Immutable scalar expression over configuration variables q_0..q_{n-1}.
///
/// Supported forms: real constants, variables, + - * /, integer powers,
/// sin, cos and negation. The set is closed under differentiation. Only
/// constant folding is performed; two expressions are compared by value.
class Expr {
 public:
  enum class Kind { Const, Var, Add, Sub, Mul, Div, Pow, Neg, Sin, Cos };

  Expr();  // constant zero
  Expr(double value);  // NOLINT(google-explicit-constructor)

  static Expr constant(double value);
  static Expr variable(int index);

  Kind kind() const;
  double value() const;   // Const only
  int var_index() const;  // Var only
  int exponent() const;   // Pow only
  const Expr& lhs() const;
  const Expr& rhs() const;

  bool is_constant() const { return kind() == Kind::Const; }
  bool is_zero() const { return is_constant() && value() == 0.0; }

  /// Throws EvalError on division by zero. `point` must cover every
  /// variable index referenced by the expression.
  double eval(std::span<const double> point) const;
  double eval(const Eigen::VectorXd& point) const;

  Expr differentiate(int var) const;

  /// Highest variable index referenced, or -1 for a constant.
  int max_var_index() const;

  /// Structural equality (same tree, same constants).
  bool same_as(const Expr& other) const;

  struct Node;

 private:
  explicit Expr(std::shared_ptr<const Node> node);
  std::shared_ptr<const Node> node_;

  friend Expr operator+(const Expr&, const Expr&);
  friend Expr operator-(const Expr&, const Expr&);
  friend Expr operator*(const Expr&, const Expr&);
  friend Expr operator/(const Expr&, const Expr&);
  friend Expr operator-(const Expr&);
  friend Expr pow(const Expr&, int);
  friend Expr sin(const Expr&);
  friend Expr cos(const Expr&);
};

Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator*(const Expr& a, const Expr& b);
Expr operator/(const Expr& a, const Expr& b);
Expr operator-(const Expr& a);
Expr pow(const Expr& base, int exponent);
Expr sin(const Expr& a);
Expr cos(const Expr& a);

/// Named constants substituted while parsing (e.g. design parameters).
using ParamMap = std::map<std::string, double>;

/// Parses `text` in the grammar
///   expr   := term (('+'|'-') term)*
///   term   := unary (('*'|'/') unary)*
///   unary  := '-' unary | power
///   power  := atom ('^' ['-'] integer | '^' '(' ['-'] integer ')')?
///   atom   := number | name | ('sin'|'cos') '(' expr ')' | '(' expr ')'
/// Names resolve first against `vars` (variable index = position), then
/// against `params`. Throws ParseError carrying the offending position.
Expr parse(const std::string& text, std::span<const std::string> vars,
           const ParamMap& params = {});

/// Fully parenthesised text that parses back to an equal-valued expression.
std::string to_string(const Expr& e, std::span<const std::string> vars);

/// Rectangular grid of expressions.
class ExprMatrix {
 public:
  ExprMatrix() = default;
  ExprMatrix(int rows, int cols);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  const Expr& operator()(int i, int j) const { return entries_[index(i, j)]; }
  Expr& operator()(int i, int j) { return entries_[index(i, j)]; }

  Eigen::MatrixXd eval(const Eigen::VectorXd& point) const;
  ExprMatrix differentiate(int var) const;

  /// entry(i,j) and entry(j,i) are the same tree for all i, j.
  bool is_structurally_symmetric() const;

 private:
  std::size_t index(int i, int j) const { return static_cast<std::size_t>(i * cols_ + j); }
  int rows_ = 0;
  int cols_ = 0;
  std::vector<Expr> entries_;
};

}  // namespace idapbc
