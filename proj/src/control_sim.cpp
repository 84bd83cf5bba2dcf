#include "idapbc/control_sim.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "idapbc/errors.hpp"

namespace idapbc {

Controller::Controller(const MechSystem& sys, const ShapedDesign& design, double gyro_tol)
    : sys_(&sys), design_(&design), field_(sys, design, gyro_tol) {
  if (design.dof() != sys.dof()) throw ConfigError("design and system dimensions differ");
  const Eigen::MatrixXd& kv = design.kv();
  if (kv.rows() != sys.inputs() || kv.cols() != sys.inputs()) throw ConfigError("Kv must be m x m");
  if ((kv - kv.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, kv.cwiseAbs().maxCoeff())) {
    throw ConfigError("Kv must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(kv, Eigen::EigenvaluesOnly);
  if (!(es.eigenvalues().minCoeff() > 0.0)) {
    std::ostringstream os;
    os << "Kv must be positive definite (smallest eigenvalue " << es.eigenvalues().minCoeff() << ")";
    throw ConfigError(os.str());
  }
}

GyroTensor Controller::gyro(const Eigen::VectorXd& q) const { return field_(q); }

Eigen::VectorXd Controller::gyro_force(const Eigen::VectorXd& q, const Eigen::VectorXd& p) const {
  return idapbc::gyro_force(field_(q), design_->mhat(q), p);
}

double Controller::energy(const Eigen::VectorXd& q, const Eigen::VectorXd& p) const {
  const Eigen::MatrixXd mhat = design_->mhat(q);
  require_spd(mhat, "Mhat(q)");
  return 0.5 * p.dot(mhat.llt().solve(p)) + design_->vhat(q);
}

Eigen::VectorXd Controller::energy_q_gradient(const Eigen::VectorXd& q, const Eigen::VectorXd& p) const {
  const Eigen::MatrixXd mhat = design_->mhat(q);
  require_spd(mhat, "Mhat(q)");
  const Eigen::VectorXd v = mhat.llt().solve(p);
  Eigen::VectorXd grad = design_->vhat_gradient(q);
  for (int k = 0; k < sys_->dof(); ++k) grad(k) -= 0.5 * v.dot(design_->mhat_derivative(k, q) * v);
  return grad;
}

namespace {

// Everything on the right of pdot except -dH/dq and the input term.
Eigen::VectorXd desired_momentum_rate(const Controller& ctrl, const Eigen::VectorXd& q, const Eigen::VectorXd& p,
                                      const Eigen::VectorXd& gyro) {
  const MechSystem& sys = ctrl.system();
  const Eigen::MatrixXd mhat = ctrl.design().mhat(q);
  require_spd(mhat, "Mhat(q)");
  const Eigen::MatrixXd g = sys.input(q);
  const Eigen::VectorXd shaped = mhat * sys.mass(q).llt().solve(ctrl.energy_q_gradient(q, p));
  const Eigen::VectorXd damping = g * ctrl.kv() * g.transpose() * mhat.llt().solve(p);
  return -shaped - damping + gyro;
}

}  // namespace

FeedbackResult feedback(const Controller& ctrl, const Eigen::VectorXd& q, const Eigen::VectorXd& p, double tol) {
  const MechSystem& sys = ctrl.system();
  FeedbackResult out;
  try {
    const double pot = potential_residual(sys, ctrl.design(), q).lpNorm<Eigen::Infinity>();
    const double kin = kinetic_residual(sys, ctrl.design(), q).lpNorm<Eigen::Infinity>();
    if (std::max(pot, kin) > tol) {
      out.residual = std::max(pot, kin);
      std::ostringstream os;
      os << "matching residual " << *out.residual << " exceeds " << tol << " at this state";
      out.warning = os.str();
    }
  } catch (const Error& e) {
    out.residual = INFINITY;
    out.warning = std::string("matching residual unavailable: ") + e.what();
  }

  Eigen::VectorXd gyro;
  try {
    gyro = ctrl.gyro_force(q, p);
  } catch (const InvariantViolation&) {
    GyroField field(sys, ctrl.design());
    gyro = gyro_force(field.unchecked(q), ctrl.design().mhat(q), p);
  }
  const Eigen::MatrixXd g = sys.input(q);
  const Eigen::VectorXd rhs = hamiltonian_q_gradient(sys, q, p) + desired_momentum_rate(ctrl, q, p, gyro);
  out.u = (g.transpose() * g).ldlt().solve(g.transpose() * rhs);
  return out;
}

PhaseVelocity closed_loop_field(const Controller& ctrl, const Eigen::VectorXd& q, const Eigen::VectorXd& p) {
  PhaseVelocity out;
  out.qdot = ctrl.system().mass(q).llt().solve(p);
  out.pdot = desired_momentum_rate(ctrl, q, p, ctrl.gyro_force(q, p));
  return out;
}

double energy_rate(const Controller& ctrl, const Eigen::VectorXd& q, const Eigen::VectorXd& p, bool include_gyro) {
  const int n = ctrl.system().dof();
  const Eigen::VectorXd gyro = include_gyro ? ctrl.gyro_force(q, p) : Eigen::VectorXd::Zero(n);
  const Eigen::VectorXd qdot = ctrl.system().mass(q).llt().solve(p);
  const Eigen::VectorXd pdot = desired_momentum_rate(ctrl, q, p, gyro);
  const Eigen::VectorXd v = ctrl.design().mhat(q).llt().solve(p);
  return ctrl.energy_q_gradient(q, p).dot(qdot) + v.dot(pdot);
}

StateTrajectory simulate(const VectorField& field, const EnergyFn& energy, const SimConfig& cfg) {
  if (!(cfg.dt > 0.0) || !(cfg.t_end >= cfg.dt)) throw ConfigError("simulation needs dt > 0 and t_end >= dt");
  if (cfg.x0.size() == 0) throw ConfigError("simulation needs an initial state");
  const auto steps = static_cast<long>(std::llround(cfg.t_end / cfg.dt));
  StateTrajectory traj;
  traj.times.reserve(static_cast<std::size_t>(steps + 1));
  traj.states.reserve(static_cast<std::size_t>(steps + 1));
  traj.energies.reserve(static_cast<std::size_t>(steps + 1));

  Eigen::VectorXd x = cfg.x0;
  const double h = cfg.dt;
  try {
    const double e0 = energy(x);
    traj.times.push_back(0.0);
    traj.states.push_back(x);
    traj.energies.push_back(e0);
    for (long k = 1; k <= steps; ++k) {
      const Eigen::VectorXd k1 = field(x);
      const Eigen::VectorXd k2 = field(x + 0.5 * h * k1);
      const Eigen::VectorXd k3 = field(x + 0.5 * h * k2);
      const Eigen::VectorXd k4 = field(x + h * k3);
      x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      const double t = static_cast<double>(k) * h;
      if (!x.allFinite() || x.norm() > cfg.divergence_norm) {
        traj.stopped_at = t;
        std::ostringstream os;
        os << "state norm exceeded " << cfg.divergence_norm;
        traj.stop_reason = os.str();
        break;
      }
      const double e = energy(x);
      traj.times.push_back(t);
      traj.states.push_back(x);
      traj.energies.push_back(e);
    }
  } catch (const Error& e) {
    traj.stopped_at = traj.times.empty() ? 0.0 : traj.times.back() + h;
    traj.stop_reason = e.what();
  }
  return traj;
}

VectorField closed_loop_vector_field(const Controller& ctrl) {
  const int n = ctrl.system().dof();
  return [&ctrl, n](const Eigen::VectorXd& x) {
    const auto v = closed_loop_field(ctrl, x.head(n), x.tail(n));
    Eigen::VectorXd out(2 * n);
    out << v.qdot, v.pdot;
    return out;
  };
}

EnergyFn closed_loop_energy(const Controller& ctrl) {
  const int n = ctrl.system().dof();
  return [&ctrl, n](const Eigen::VectorXd& x) { return ctrl.energy(x.head(n), x.tail(n)); };
}

VectorField open_loop_vector_field(const MechSystem& sys) {
  const int n = sys.dof();
  return [&sys, n](const Eigen::VectorXd& x) {
    const auto v = open_loop_field(sys, x.head(n), x.tail(n), Eigen::VectorXd::Zero(sys.inputs()));
    Eigen::VectorXd out(2 * n);
    out << v.qdot, v.pdot;
    return out;
  };
}

EnergyFn open_loop_energy(const MechSystem& sys) {
  const int n = sys.dof();
  return [&sys, n](const Eigen::VectorXd& x) { return hamiltonian(sys, x.head(n), x.tail(n)); };
}

DecayMetrics decay_metrics(const StateTrajectory& traj, double e_min) {
  if (traj.energies.empty()) throw Error("decay_metrics needs a nonempty trajectory");
  DecayMetrics out;
  const auto& e = traj.energies;
  out.max_energy_increase = -INFINITY;
  for (std::size_t k = 0; k + 1 < e.size(); ++k) out.max_energy_increase = std::max(out.max_energy_increase, e[k + 1] - e[k]);
  if (e.size() < 2) out.max_energy_increase = 0.0;

  const std::size_t start = e.size() / 2;
  constexpr double kFloor = 1e-300;
  double st = 0, sy = 0, stt = 0, sty = 0;
  std::size_t count = 0;
  for (std::size_t k = start; k < e.size(); ++k) {
    double excess = e[k] - e_min;
    if (excess <= kFloor) {
      excess = kFloor;
      out.clamped = true;
    }
    const double t = traj.times[k];
    const double y = std::log(excess);
    st += t;
    sy += y;
    stt += t * t;
    sty += t * y;
    ++count;
  }
  if (out.clamped) out.warning = "energy fell to or below its minimum; clamped before taking logarithms";
  const double denom = static_cast<double>(count) * stt - st * st;
  out.fitted_rate = count >= 2 && denom > 0.0 ? (static_cast<double>(count) * sty - st * sy) / denom : 0.0;
  return out;
}

std::string trajectory_csv(const StateTrajectory& traj, const std::vector<std::string>& vars) {
  std::ostringstream os;
  os.precision(17);
  os << 't';
  for (const auto& v : vars) os << ',' << v;
  for (std::size_t i = 0; i < vars.size(); ++i) os << ",p" << i + 1;
  os << ",energy\n";
  for (std::size_t k = 0; k < traj.size(); ++k) {
    os << traj.times[k];
    for (Eigen::Index i = 0; i < traj.states[k].size(); ++i) os << ',' << traj.states[k](i);
    os << ',' << traj.energies[k] << '\n';
  }
  return os.str();
}

}  // namespace idapbc
