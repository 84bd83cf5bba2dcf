#include "idapbc/expr.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "idapbc/errors.hpp"

namespace idapbc {

struct Expr::Node {
  Kind kind = Kind::Const;
  double value = 0.0;
  int var = -1;
  int exponent = 0;
  Expr a;
  Expr b;
};

// A null node stands for the constant zero.
Expr::Expr() = default;

Expr::Expr(double value) : Expr(constant(value)) {}

Expr::Expr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}

Expr Expr::constant(double value) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::Const;
  n->value = value;
  return Expr(std::move(n));
}

Expr Expr::variable(int index) {
  auto n = std::make_shared<Node>();
  n->kind = Kind::Var;
  n->var = index;
  return Expr(std::move(n));
}

Expr::Kind Expr::kind() const { return node_ ? node_->kind : Kind::Const; }
double Expr::value() const { return node_ ? node_->value : 0.0; }
int Expr::var_index() const { return node_ ? node_->var : -1; }
int Expr::exponent() const { return node_ ? node_->exponent : 0; }
const Expr& Expr::lhs() const { return node_->a; }
const Expr& Expr::rhs() const { return node_->b; }

// Smart constructors fold constants and drop additive/multiplicative
// identities; nothing beyond that.
Expr operator+(const Expr& a, const Expr& b) {
  if (a.is_constant() && b.is_constant()) return Expr::constant(a.value() + b.value());
  if (a.is_zero()) return b;
  if (b.is_zero()) return a;
  auto n = std::make_shared<Expr::Node>();
  n->kind = Expr::Kind::Add;
  n->a = a;
  n->b = b;
  return Expr(std::move(n));
}

Expr operator-(const Expr& a, const Expr& b) {
  if (a.is_constant() && b.is_constant()) return Expr::constant(a.value() - b.value());
  if (b.is_zero()) return a;
  if (a.is_zero()) return -b;
  auto n = std::make_shared<Expr::Node>();
  n->kind = Expr::Kind::Sub;
  n->a = a;
  n->b = b;
  return Expr(std::move(n));
}

Expr operator*(const Expr& a, const Expr& b) {
  if (a.is_constant() && b.is_constant()) return Expr::constant(a.value() * b.value());
  if (a.is_zero() || b.is_zero()) return Expr::constant(0.0);
  if (a.is_constant() && a.value() == 1.0) return b;
  if (b.is_constant() && b.value() == 1.0) return a;
  if (a.is_constant() && a.value() == -1.0) return -b;
  if (b.is_constant() && b.value() == -1.0) return -a;
  auto n = std::make_shared<Expr::Node>();
  n->kind = Expr::Kind::Mul;
  n->a = a;
  n->b = b;
  return Expr(std::move(n));
}

Expr operator/(const Expr& a, const Expr& b) {
  if (a.is_constant() && b.is_constant() && b.value() != 0.0) {
    return Expr::constant(a.value() / b.value());
  }
  if (b.is_constant() && b.value() == 1.0) return a;
  auto n = std::make_shared<Expr::Node>();
  n->kind = Expr::Kind::Div;
  n->a = a;
  n->b = b;
  return Expr(std::move(n));
}

Expr operator-(const Expr& a) {
  if (a.is_constant()) return Expr::constant(-a.value());
  if (a.kind() == Expr::Kind::Neg) return a.lhs();
  auto n = std::make_shared<Expr::Node>();
  n->kind = Expr::Kind::Neg;
  n->a = a;
  return Expr(std::move(n));
}

Expr pow(const Expr& base, int exponent) {
  if (exponent == 0) return Expr::constant(1.0);
  if (exponent == 1) return base;
  if (base.is_constant() && (base.value() != 0.0 || exponent > 0)) {
    return Expr::constant(std::pow(base.value(), exponent));
  }
  auto n = std::make_shared<Expr::Node>();
  n->kind = Expr::Kind::Pow;
  n->a = base;
  n->exponent = exponent;
  return Expr(std::move(n));
}

Expr sin(const Expr& a) {
  if (a.is_constant()) return Expr::constant(std::sin(a.value()));
  auto n = std::make_shared<Expr::Node>();
  n->kind = Expr::Kind::Sin;
  n->a = a;
  return Expr(std::move(n));
}

Expr cos(const Expr& a) {
  if (a.is_constant()) return Expr::constant(std::cos(a.value()));
  auto n = std::make_shared<Expr::Node>();
  n->kind = Expr::Kind::Cos;
  n->a = a;
  return Expr(std::move(n));
}

double Expr::eval(std::span<const double> point) const {
  switch (kind()) {
    case Kind::Const:
      return value();
    case Kind::Var:
      if (var_index() < 0 || static_cast<std::size_t>(var_index()) >= point.size()) {
        throw EvalError("variable index " + std::to_string(var_index()) +
                        " outside evaluation point of size " + std::to_string(point.size()));
      }
      return point[static_cast<std::size_t>(var_index())];
    case Kind::Add:
      return lhs().eval(point) + rhs().eval(point);
    case Kind::Sub:
      return lhs().eval(point) - rhs().eval(point);
    case Kind::Mul:
      return lhs().eval(point) * rhs().eval(point);
    case Kind::Div: {
      const double den = rhs().eval(point);
      if (den == 0.0) throw EvalError("division by zero");
      return lhs().eval(point) / den;
    }
    case Kind::Pow: {
      const double base = lhs().eval(point);
      if (base == 0.0 && exponent() < 0) throw EvalError("division by zero (0 to a negative power)");
      return std::pow(base, exponent());
    }
    case Kind::Neg:
      return -lhs().eval(point);
    case Kind::Sin:
      return std::sin(lhs().eval(point));
    case Kind::Cos:
      return std::cos(lhs().eval(point));
  }
  return 0.0;
}

double Expr::eval(const Eigen::VectorXd& point) const {
  return eval(std::span<const double>(point.data(), static_cast<std::size_t>(point.size())));
}

Expr Expr::differentiate(int var) const {
  switch (kind()) {
    case Kind::Const:
      return Expr::constant(0.0);
    case Kind::Var:
      return Expr::constant(var_index() == var ? 1.0 : 0.0);
    case Kind::Add:
      return lhs().differentiate(var) + rhs().differentiate(var);
    case Kind::Sub:
      return lhs().differentiate(var) - rhs().differentiate(var);
    case Kind::Mul:
      return lhs().differentiate(var) * rhs() + lhs() * rhs().differentiate(var);
    case Kind::Div: {
      const Expr& u = lhs();
      const Expr& v = rhs();
      return (u.differentiate(var) * v - u * v.differentiate(var)) / pow(v, 2);
    }
    case Kind::Pow:
      return Expr::constant(exponent()) * pow(lhs(), exponent() - 1) * lhs().differentiate(var);
    case Kind::Neg:
      return -lhs().differentiate(var);
    case Kind::Sin:
      return cos(lhs()) * lhs().differentiate(var);
    case Kind::Cos:
      return -(sin(lhs()) * lhs().differentiate(var));
  }
  return Expr::constant(0.0);
}

int Expr::max_var_index() const {
  switch (kind()) {
    case Kind::Const:
      return -1;
    case Kind::Var:
      return var_index();
    case Kind::Add:
    case Kind::Sub:
    case Kind::Mul:
    case Kind::Div:
      return std::max(lhs().max_var_index(), rhs().max_var_index());
    default:
      return lhs().max_var_index();
  }
}

bool Expr::same_as(const Expr& other) const {
  if (node_ == other.node_) return true;
  if (kind() != other.kind()) return false;
  switch (kind()) {
    case Kind::Const:
      return value() == other.value();
    case Kind::Var:
      return var_index() == other.var_index();
    case Kind::Pow:
      return exponent() == other.exponent() && lhs().same_as(other.lhs());
    case Kind::Neg:
    case Kind::Sin:
    case Kind::Cos:
      return lhs().same_as(other.lhs());
    default:
      return lhs().same_as(other.lhs()) && rhs().same_as(other.rhs());
  }
}

// ---------------------------------------------------------------------------
// Parser

namespace {

class Parser {
 public:
  Parser(const std::string& text, std::span<const std::string> vars, const ParamMap& params)
      : text_(text), vars_(vars), params_(params) {}

  Expr run() {
    Expr e = expression();
    skip_space();
    if (pos_ != text_.size()) fail("unexpected '" + std::string(1, text_[pos_]) + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const { throw ParseError(what, pos_); }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) fail(std::string("expected '") + c + "'");
  }

  Expr expression() {
    Expr e = term();
    for (;;) {
      if (accept('+')) {
        e = e + term();
      } else if (accept('-')) {
        e = e - term();
      } else {
        return e;
      }
    }
  }

  Expr term() {
    Expr e = unary();
    for (;;) {
      if (accept('*')) {
        e = e * unary();
      } else if (accept('/')) {
        e = e / unary();
      } else {
        return e;
      }
    }
  }

  Expr unary() {
    if (accept('-')) return -unary();
    if (accept('+')) return unary();
    return power();
  }

  Expr power() {
    Expr base = atom();
    if (!accept('^')) return base;
    const bool paren = accept('(');
    const bool negative = accept('-');
    skip_space();
    const std::size_t start = pos_;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    if (start == pos_) fail("exponent must be an integer constant");
    int exponent = 0;
    const auto [ptr, ec] = std::from_chars(text_.data() + start, text_.data() + pos_, exponent);
    if (ec != std::errc()) fail("exponent out of range");
    if (paren) expect(')');
    return pow(base, negative ? -exponent : exponent);
  }

  Expr atom() {
    skip_space();
    if (pos_ >= text_.size()) fail("unexpected end of input");
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      Expr e = expression();
      expect(')');
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      const std::size_t start = pos_;
      while (pos_ < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
        ++pos_;
      }
      const std::string name = text_.substr(start, pos_ - start);
      if (name == "sin" || name == "cos") {
        expect('(');
        Expr arg = expression();
        expect(')');
        return name == "sin" ? sin(arg) : cos(arg);
      }
      for (std::size_t i = 0; i < vars_.size(); ++i) {
        if (vars_[i] == name) return Expr::variable(static_cast<int>(i));
      }
      if (auto it = params_.find(name); it != params_.end()) return Expr::constant(it->second);
      pos_ = start;
      fail("undeclared identifier '" + name + "'");
    }
    fail("unexpected '" + std::string(1, c) + "'");
  }

  Expr number() {
    const char* begin = text_.c_str() + pos_;
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin) fail("malformed number");
    pos_ += static_cast<std::size_t>(end - begin);
    return Expr::constant(v);
  }

  const std::string& text_;
  std::span<const std::string> vars_;
  const ParamMap& params_;
  std::size_t pos_ = 0;
};

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Expr parse(const std::string& text, std::span<const std::string> vars, const ParamMap& params) {
  return Parser(text, vars, params).run();
}

std::string to_string(const Expr& e, std::span<const std::string> vars) {
  using K = Expr::Kind;
  auto name = [&](int i) {
    return (i >= 0 && static_cast<std::size_t>(i) < vars.size()) ? vars[static_cast<std::size_t>(i)]
                                                                  : "q" + std::to_string(i + 1);
  };
  switch (e.kind()) {
    case K::Const:
      return e.value() < 0 ? "(" + format_number(e.value()) + ")" : format_number(e.value());
    case K::Var:
      return name(e.var_index());
    case K::Add:
      return "(" + to_string(e.lhs(), vars) + " + " + to_string(e.rhs(), vars) + ")";
    case K::Sub:
      return "(" + to_string(e.lhs(), vars) + " - " + to_string(e.rhs(), vars) + ")";
    case K::Mul:
      return "(" + to_string(e.lhs(), vars) + "*" + to_string(e.rhs(), vars) + ")";
    case K::Div:
      return "(" + to_string(e.lhs(), vars) + "/" + to_string(e.rhs(), vars) + ")";
    case K::Pow:
      return "(" + to_string(e.lhs(), vars) + "^(" + std::to_string(e.exponent()) + "))";
    case K::Neg:
      return "(-" + to_string(e.lhs(), vars) + ")";
    case K::Sin:
      return "sin(" + to_string(e.lhs(), vars) + ")";
    case K::Cos:
      return "cos(" + to_string(e.lhs(), vars) + ")";
  }
  return "0";
}

// ---------------------------------------------------------------------------

ExprMatrix::ExprMatrix(int rows, int cols)
    : rows_(rows), cols_(cols), entries_(static_cast<std::size_t>(rows * cols)) {}

Eigen::MatrixXd ExprMatrix::eval(const Eigen::VectorXd& point) const {
  Eigen::MatrixXd out(rows_, cols_);
  for (int i = 0; i < rows_; ++i) {
    for (int j = 0; j < cols_; ++j) out(i, j) = (*this)(i, j).eval(point);
  }
  return out;
}

ExprMatrix ExprMatrix::differentiate(int var) const {
  ExprMatrix out(rows_, cols_);
  for (std::size_t k = 0; k < entries_.size(); ++k) out.entries_[k] = entries_[k].differentiate(var);
  return out;
}

bool ExprMatrix::is_structurally_symmetric() const {
  if (rows_ != cols_) return false;
  for (int i = 0; i < rows_; ++i) {
    for (int j = i + 1; j < cols_; ++j) {
      if (!(*this)(i, j).same_as((*this)(j, i))) return false;
    }
  }
  return true;
}

}  // namespace idapbc
