#pragma once

#include <functional>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "idapbc/matching.hpp"
#include "idapbc/system.hpp"
#include "idapbc/tensor.hpp"

namespace idapbc {

/// IDA-PBC controller for a system and a shaped design. Holds references to
/// both; they must outlive the controller.
class Controller {
 public:
  /// Throws ConfigError unless Kv is symmetric with positive eigenvalues.
  Controller(const MechSystem& sys, const ShapedDesign& design, double gyro_tol = 1e-9);

  const MechSystem& system() const { return *sys_; }
  const ShapedDesign& design() const { return *design_; }
  const Eigen::MatrixXd& kv() const { return design_->kv(); }

  /// C(q): explicit table or pointwise derivation.
  GyroTensor gyro(const Eigen::VectorXd& q) const;
  /// C_ijk Mhat^{il} Mhat^{jr} p_l p_r e^k at q.
  Eigen::VectorXd gyro_force(const Eigen::VectorXd& q, const Eigen::VectorXd& p) const;

  /// Hhat = 1/2 p^T Mhat^{-1} p + Vhat.
  double energy(const Eigen::VectorXd& q, const Eigen::VectorXd& p) const;
  Eigen::VectorXd energy_q_gradient(const Eigen::VectorXd& q, const Eigen::VectorXd& p) const;

 private:
  const MechSystem* sys_;
  const ShapedDesign* design_;
  GyroField field_;
};

struct FeedbackResult {
  Eigen::VectorXd u;
  /// Max-norm of the matching residuals at q; set when they exceed the
  /// tolerance or could not be evaluated.
  std::optional<double> residual;
  std::string warning;
};

/// u = (G^T G)^{-1} G^T (dH/dq - Mhat M^{-1} dHhat/dq - G Kv G^T dHhat/dp + gyro).
FeedbackResult feedback(const Controller& ctrl, const Eigen::VectorXd& q, const Eigen::VectorXd& p,
                        double tol = 1e-8);

/// qdot = M^{-1} p, pdot = -Mhat M^{-1} dHhat/dq - G Kv G^T Mhat^{-1} p + gyro.
PhaseVelocity closed_loop_field(const Controller& ctrl, const Eigen::VectorXd& q, const Eigen::VectorXd& p);

/// dHhat/dt along the closed loop, optionally without the gyroscopic term.
double energy_rate(const Controller& ctrl, const Eigen::VectorXd& q, const Eigen::VectorXd& p,
                   bool include_gyro = true);

struct SimConfig {
  double t_end = 10.0;
  double dt = 1e-3;
  Eigen::VectorXd x0;  // (q, p)
  double divergence_norm = 1e6;
};

/// x -> xdot for the stacked state (q, p).
using VectorField = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
/// x -> recorded energy.
using EnergyFn = std::function<double(const Eigen::VectorXd&)>;

/// Fixed-step classical Runge-Kutta. Stops early, recording time and reason,
/// when the state norm exceeds `divergence_norm` or an evaluation throws.
StateTrajectory simulate(const VectorField& field, const EnergyFn& energy, const SimConfig& cfg);

VectorField closed_loop_vector_field(const Controller& ctrl);
EnergyFn closed_loop_energy(const Controller& ctrl);
VectorField open_loop_vector_field(const MechSystem& sys);
EnergyFn open_loop_energy(const MechSystem& sys);

struct DecayMetrics {
  double max_energy_increase = 0.0;
  double fitted_rate = 0.0;
  bool clamped = false;
  std::string warning;
};

/// Largest per-step energy increase and the least-squares slope of
/// log(E - e_min) over the second half of the run.
DecayMetrics decay_metrics(const StateTrajectory& traj, double e_min);

/// Columns t, q1..qn, p1..pn, energy.
std::string trajectory_csv(const StateTrajectory& traj, const std::vector<std::string>& vars);

}  // namespace idapbc
