#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "idapbc/expr.hpp"
#include "idapbc/tensor.hpp"

namespace idapbc {

/// Controlled Hamiltonian system
///   qdot = dH/dp,  pdot = -dH/dq + G(q) u,   H = 1/2 p^T M^{-1}(q) p + V(q)
/// with (q, p) = (0, 0) an equilibrium. Symbolic first derivatives of M and
/// first/second derivatives of V are prepared once at construction.
class MechSystem {
 public:
  /// Throws ConfigError for inconsistent shapes, a structurally asymmetric M,
  /// or dV/dq(0) != 0 beyond `equilibrium_tol`.
  MechSystem(std::string name, std::vector<std::string> vars, ExprMatrix mass, Expr potential,
             ExprMatrix input, double equilibrium_tol = 1e-10);

  const std::string& name() const { return name_; }
  int dof() const { return n_; }
  int inputs() const { return m_; }
  int underactuation() const { return n_ - m_; }
  const std::vector<std::string>& vars() const { return vars_; }

  const ExprMatrix& mass_expr() const { return mass_; }
  const Expr& potential_expr() const { return potential_; }
  const ExprMatrix& input_expr() const { return input_; }

  /// M(q); throws NotPositiveDefinite with the offending eigenvalue.
  Eigen::MatrixXd mass(const Eigen::VectorXd& q) const;
  /// M(q) without the positive-definiteness check.
  Eigen::MatrixXd mass_unchecked(const Eigen::VectorXd& q) const;
  /// dM/dq^k at q.
  Eigen::MatrixXd mass_derivative(int k, const Eigen::VectorXd& q) const;
  double potential(const Eigen::VectorXd& q) const;
  Eigen::VectorXd potential_gradient(const Eigen::VectorXd& q) const;
  Eigen::MatrixXd potential_hessian(const Eigen::VectorXd& q) const;
  /// G(q); throws RankDeficient if rank G(q) < m.
  Eigen::MatrixXd input(const Eigen::VectorXd& q) const;

 private:
  std::string name_;
  std::vector<std::string> vars_;
  int n_ = 0;
  int m_ = 0;
  ExprMatrix mass_;
  Expr potential_;
  ExprMatrix input_;
  std::vector<ExprMatrix> mass_d_;
  std::vector<Expr> potential_d_;
  std::vector<std::vector<Expr>> potential_dd_;
};

/// Candidate target closed loop: shaped mass matrix, shaped potential,
/// damping injection gain and an optional explicit gyroscopic tensor.
/// Positive definiteness and the minimum of Vhat are not enforced here;
/// they are reported by minimum_check().
class ShapedDesign {
 public:
  ShapedDesign(int n, ExprMatrix mhat, Expr vhat, Eigen::MatrixXd kv,
               std::optional<std::vector<Expr>> gyro = std::nullopt);

  int dof() const { return n_; }
  const ExprMatrix& mhat_expr() const { return mhat_; }
  const Expr& vhat_expr() const { return vhat_; }
  const Eigen::MatrixXd& kv() const { return kv_; }
  bool has_explicit_gyro() const { return gyro_.has_value(); }

  Eigen::MatrixXd mhat(const Eigen::VectorXd& q) const;
  Eigen::MatrixXd mhat_derivative(int k, const Eigen::VectorXd& q) const;
  double vhat(const Eigen::VectorXd& q) const;
  Eigen::VectorXd vhat_gradient(const Eigen::VectorXd& q) const;
  Eigen::MatrixXd vhat_hessian(const Eigen::VectorXd& q) const;
  /// Explicit C(q) when supplied (checked for the gyroscopic invariants).
  GyroTensor explicit_gyro(const Eigen::VectorXd& q) const;

  ShapedDesign with_kv(Eigen::MatrixXd kv) const;
  ShapedDesign with_vhat(Expr vhat) const;

 private:
  int n_ = 0;
  ExprMatrix mhat_;
  Expr vhat_;
  Eigen::MatrixXd kv_;
  std::optional<std::vector<Expr>> gyro_;
  std::vector<ExprMatrix> mhat_d_;
  std::vector<Expr> vhat_d_;
  std::vector<std::vector<Expr>> vhat_dd_;
};

/// Samples of a simulated or recorded run.
struct StateTrajectory {
  std::vector<double> times;
  std::vector<Eigen::VectorXd> states;  // (q, p) stacked, length 2n
  std::vector<double> energies;
  /// Set when the run stopped early (divergence or a failed evaluation).
  std::optional<double> stopped_at;
  std::string stop_reason;

  std::size_t size() const { return times.size(); }
};

/// Orthonormal rows spanning the left annihilator of G(q): W G(q) = 0,
/// W W^T = I. Each row's largest-magnitude entry is made positive.
Eigen::MatrixXd annihilator(const MechSystem& sys, const Eigen::VectorXd& q);
Eigen::MatrixXd annihilator_of(const Eigen::MatrixXd& g);

/// H(q, p) = 1/2 p^T M^{-1}(q) p + V(q).
double hamiltonian(const MechSystem& sys, const Eigen::VectorXd& q, const Eigen::VectorXd& p);

/// dH/dq at (q, p).
Eigen::VectorXd hamiltonian_q_gradient(const MechSystem& sys, const Eigen::VectorXd& q,
                                       const Eigen::VectorXd& p);

struct PhaseVelocity {
  Eigen::VectorXd qdot;
  Eigen::VectorXd pdot;
};

PhaseVelocity open_loop_field(const MechSystem& sys, const Eigen::VectorXd& q,
                              const Eigen::VectorXd& p, const Eigen::VectorXd& u);

/// A loaded system with its optional shaped design.
struct SystemBundle {
  MechSystem system;
  std::optional<ShapedDesign> design;
  ParamMap params;
};

/// Loads the JSON system description
///   { "name", "n", "m", "vars", "M", "V", "G",
///     "params": {...}, "shaped": { "Mhat", "Vhat", "Kv", "C", "params" } }
/// Expressions may be strings or numbers. `overrides` replaces parameters.
SystemBundle load_system_json(const std::string& json_text, const ParamMap& overrides = {});

/// Names accepted by builtin(): "pendulum_cart", "three_dof".
const std::vector<std::string>& builtin_names();
/// JSON text of a built-in system (same schema as load_system_json).
std::string builtin_json(const std::string& name);
SystemBundle builtin(const std::string& name, const ParamMap& overrides = {});

}  // namespace idapbc
