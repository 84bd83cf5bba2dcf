#include "idapbc/stability.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "idapbc/errors.hpp"

namespace idapbc {

Linearization linearize(const Eigen::MatrixXd& mass, const Eigen::MatrixXd& hessian,
                        const Eigen::MatrixXd& input) {
  const auto n = mass.rows();
  if (mass.cols() != n || hessian.rows() != n || hessian.cols() != n || input.rows() != n) {
    throw Error("linearize: inconsistent shapes");
  }
  require_spd(mass, "M(0)");
  const Eigen::MatrixXd minv = mass.llt().solve(Eigen::MatrixXd::Identity(n, n));
  Linearization lin;
  lin.a = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  lin.a.topRightCorner(n, n) = minv;
  lin.a.bottomLeftCorner(n, n) = -hessian;
  lin.b = Eigen::MatrixXd::Zero(2 * n, input.cols());
  lin.b.bottomRows(n) = input;
  lin.mass = mass;
  lin.hessian = hessian;
  lin.input = input;
  return lin;
}

Linearization linearize(const MechSystem& sys) {
  const Eigen::VectorXd origin = Eigen::VectorXd::Zero(sys.dof());
  return linearize(sys.mass(origin), sys.potential_hessian(origin), sys.input_expr().eval(origin));
}

namespace {

Eigen::MatrixXd kalman_matrix(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const auto n = a.rows();
  const auto m = b.cols();
  Eigen::MatrixXd k(n, n * m);
  Eigen::MatrixXd block = b;
  for (Eigen::Index i = 0; i < n; ++i) {
    k.middleCols(i * m, m) = block;
    block = a * block;
  }
  return k;
}

int numerical_rank(const Eigen::VectorXd& sv, double rel_threshold) {
  if (sv.size() == 0 || sv(0) == 0.0) return 0;
  int r = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > rel_threshold * sv(0)) ++r;
  }
  return r;
}

}  // namespace

ControllabilityResult controllability(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                      double rel_threshold) {
  if (b.cols() == 0) return {0, a.rows() == 0};
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(kalman_matrix(a, b));
  const int r = numerical_rank(svd.singularValues(), rel_threshold);
  return {r, r == a.rows()};
}

ControllabilityResult controllability(const Linearization& lin, double rel_threshold) {
  return controllability(lin.a, lin.b, rel_threshold);
}

UncontrollableModes uncontrollable_modes(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                         const ModeTolerances& tol) {
  const auto n = a.rows();
  UncontrollableModes out;
  Eigen::MatrixXd complement;
  if (b.cols() == 0) {
    complement = Eigen::MatrixXd::Identity(n, n);
  } else {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(kalman_matrix(a, b), Eigen::ComputeFullU);
    const int r = numerical_rank(svd.singularValues(), tol.rank_threshold);
    if (r == n) return out;
    complement = svd.matrixU().rightCols(n - r);
  }
  const Eigen::MatrixXd block = complement.transpose() * a * complement;
  Eigen::EigenSolver<Eigen::MatrixXd> es(block, true);
  if (es.info() != Eigen::Success) throw Error("eigenvalue computation failed");
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) out.eigenvalues.push_back(es.eigenvalues()(i));
  std::sort(out.eigenvalues.begin(), out.eigenvalues.end(),
            [](auto x, auto y) { return x.real() != y.real() ? x.real() < y.real() : x.imag() < y.imag(); });

  Eigen::JacobiSVD<Eigen::MatrixXcd> vsvd(es.eigenvectors());
  const auto& sv = vsvd.singularValues();
  const double smin = sv(sv.size() - 1);
  out.eigenvector_condition = smin > 0.0 ? sv(0) / smin : INFINITY;
  out.diagonalizable = out.eigenvector_condition <= tol.condition_max;
  out.oscillatory = out.diagonalizable;
  for (const auto& e : out.eigenvalues) {
    if (std::abs(e.real()) > tol.real_part || std::abs(e.imag()) < tol.imag_floor) out.oscillatory = false;
  }
  return out;
}

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::ExponentiallyStabilizable:
      return "ExponentiallyStabilizable";
    case Verdict::LyapunovStabilizableOnly:
      return "LyapunovStabilizableOnly";
    case Verdict::NotStabilizable:
      return "NotStabilizable";
  }
  return "?";
}

StabilizabilityReport verdict(const Linearization& lin, int underactuation, const ModeTolerances& tol) {
  StabilizabilityReport rep;
  rep.lin = lin;
  const auto ctrb = controllability(lin, tol.rank_threshold);
  rep.kalman_rank = ctrb.rank;
  rep.controllable = ctrb.controllable;
  const auto modes = uncontrollable_modes(lin.a, lin.b, tol);
  rep.uncontrollable_eigs = modes.eigenvalues;
  rep.oscillatory = modes.oscillatory;
  if (rep.controllable) {
    rep.verdict = Verdict::ExponentiallyStabilizable;
  } else if (rep.oscillatory) {
    rep.verdict = Verdict::LyapunovStabilizableOnly;
  } else {
    rep.verdict = Verdict::NotStabilizable;
  }
  std::ostringstream os;
  if (underactuation <= 1) {
    os << "linearisation criterion for underactuation degree " << underactuation
       << "; the nonlinear statement is established for integrable input directions";
  } else {
    os << "linear classification only; underactuation degree " << underactuation
       << " has no nonlinear criterion";
  }
  rep.basis = os.str();
  return rep;
}

StabilizabilityReport verdict(const MechSystem& sys, const ModeTolerances& tol) {
  return verdict(linearize(sys), sys.underactuation(), tol);
}

MinimumCheck minimum_check(const ShapedDesign& design) {
  MinimumCheck out;
  const Eigen::VectorXd origin = Eigen::VectorXd::Zero(design.dof());
  std::ostringstream msg;
  try {
    out.gradient_norm = design.vhat_gradient(origin).norm();
    out.gradient_ok = out.gradient_norm <= 1e-10;
    if (!out.gradient_ok) msg << "gradient of Vhat at 0 has norm " << out.gradient_norm << "; ";
  } catch (const Error& e) {
    msg << "gradient of Vhat at 0: " << e.what() << "; ";
  }
  try {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(design.vhat_hessian(origin), Eigen::EigenvaluesOnly);
    out.hessian_eigenvalues = es.eigenvalues();
    out.hessian_ok = out.hessian_eigenvalues.minCoeff() >= 1e-9;
    if (!out.hessian_ok) msg << "Hessian of Vhat at 0 has eigenvalue " << out.hessian_eigenvalues.minCoeff() << "; ";
  } catch (const Error& e) {
    msg << "Hessian of Vhat at 0: " << e.what() << "; ";
  }
  try {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(design.mhat(origin), Eigen::EigenvaluesOnly);
    out.mhat_eigenvalues = es.eigenvalues();
    out.mhat_ok = out.mhat_eigenvalues.minCoeff() >= 1e-9;
    if (!out.mhat_ok) msg << "Mhat(0) has eigenvalue " << out.mhat_eigenvalues.minCoeff() << "; ";
  } catch (const Error& e) {
    msg << "Mhat(0): " << e.what() << "; ";
  }
  out.pass = out.gradient_ok && out.hessian_ok && out.mhat_ok;
  out.message = out.pass ? "ok" : msg.str();
  if (!out.pass && out.message.size() >= 2) out.message.resize(out.message.size() - 2);
  return out;
}

Eigen::MatrixXd closed_loop_linearization(const MechSystem& sys, const ShapedDesign& design) {
  const int n = sys.dof();
  const Eigen::VectorXd origin = Eigen::VectorXd::Zero(n);
  const Eigen::MatrixXd mass = sys.mass(origin);
  const Eigen::MatrixXd mhat = design.mhat(origin);
  require_spd(mhat, "Mhat(0)");
  const Eigen::MatrixXd minv = mass.llt().solve(Eigen::MatrixXd::Identity(n, n));
  const Eigen::MatrixXd mhat_inv = mhat.llt().solve(Eigen::MatrixXd::Identity(n, n));
  const Eigen::MatrixXd g = sys.input(origin);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  a.topRightCorner(n, n) = minv;
  a.bottomLeftCorner(n, n) = -mhat * minv * design.vhat_hessian(origin);
  a.bottomRightCorner(n, n) = -g * design.kv() * g.transpose() * mhat_inv;
  return a;
}

}  // namespace idapbc
