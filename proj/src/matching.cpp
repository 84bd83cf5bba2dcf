#include "idapbc/matching.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "idapbc/errors.hpp"

namespace idapbc {

namespace {

Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& m, const char* what) {
  require_spd(m, what);
  return m.llt().solve(Eigen::MatrixXd::Identity(m.rows(), m.cols()));
}

}  // namespace

Tensor3 a_tensor(const MechSystem& sys, const ShapedDesign& design, const Eigen::VectorXd& q) {
  const int n = sys.dof();
  const Eigen::MatrixXd minv = spd_inverse(sys.mass(q), "M(q)");
  const Eigen::MatrixXd mhat = design.mhat(q);
  const Eigen::MatrixXd mhat_inv = spd_inverse(mhat, "Mhat(q)");
  const Eigen::MatrixXd flow = mhat * minv;  // Mhat_kl M^{lr}

  std::vector<Eigen::MatrixXd> d_mhat_inv;
  for (int r = 0; r < n; ++r) d_mhat_inv.push_back(-mhat_inv * design.mhat_derivative(r, q) * mhat_inv);

  Tensor3 a(n);
  for (int k = 0; k < n; ++k) {
    const Eigen::MatrixXd d_minv = -minv * sys.mass_derivative(k, q) * minv;
    Eigen::MatrixXd transported = Eigen::MatrixXd::Zero(n, n);
    for (int r = 0; r < n; ++r) transported += flow(k, r) * d_mhat_inv[static_cast<std::size_t>(r)];
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) a(i, j, k) = 0.5 * transported(i, j) - 0.5 * d_minv(i, j);
  }
  return a;
}

Tensor3 t_tensor(const MechSystem& sys, const ShapedDesign& design, const Eigen::VectorXd& q) {
  const int n = sys.dof();
  const Eigen::MatrixXd minv = spd_inverse(sys.mass(q), "M(q)");
  const Eigen::MatrixXd mhat = design.mhat(q);
  const Eigen::MatrixXd flow = mhat * minv;

  std::vector<Eigen::MatrixXd> d_mhat;
  for (int t = 0; t < n; ++t) d_mhat.push_back(design.mhat_derivative(t, q));

  Tensor3 out(n);
  for (int k = 0; k < n; ++k) {
    const Eigen::MatrixXd d_minv = -minv * sys.mass_derivative(k, q) * minv;
    const Eigen::MatrixXd pulled = mhat.transpose() * d_minv * mhat;
    Eigen::MatrixXd transported = Eigen::MatrixXd::Zero(n, n);
    for (int t = 0; t < n; ++t) transported += flow(k, t) * d_mhat[static_cast<std::size_t>(t)];
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) out(i, j, k) = -0.5 * transported(i, j) - 0.5 * pulled(i, j);
  }
  return out;
}

Tensor3 t_tensor_from_a(const Tensor3& a, const Eigen::MatrixXd& mhat) {
  const int n = a.dim();
  Tensor3 out(n);
  for (int k = 0; k < n; ++k) {
    Eigen::MatrixXd slice(n, n);
    for (int r = 0; r < n; ++r)
      for (int s = 0; s < n; ++s) slice(r, s) = a(r, s, k);
    const Eigen::MatrixXd pulled = mhat.transpose() * slice * mhat;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) out(i, j, k) = pulled(i, j);
  }
  return out;
}

Eigen::VectorXd potential_residual(const MechSystem& sys, const ShapedDesign& design,
                                   const Eigen::VectorXd& q) {
  const Eigen::MatrixXd w = annihilator(sys, q);
  const Eigen::MatrixXd m = sys.mass(q);
  const Eigen::VectorXd shaped = design.mhat(q) * m.llt().solve(design.vhat_gradient(q));
  return w * (sys.potential_gradient(q) - shaped);
}

Eigen::VectorXd kinetic_residual(const Tensor3& t, const Eigen::MatrixXd& w) {
  const int d = static_cast<int>(w.rows());
  std::vector<double> out;
  for (int a = 0; a < d; ++a)
    for (int b = a; b < d; ++b)
      for (int c = b; c < d; ++c) {
        const Eigen::VectorXd wa = w.row(a).transpose();
        const Eigen::VectorXd wb = w.row(b).transpose();
        const Eigen::VectorXd wc = w.row(c).transpose();
        out.push_back(t.contract(wa, wb, wc) + t.contract(wb, wc, wa) + t.contract(wc, wa, wb));
      }
  return Eigen::Map<Eigen::VectorXd>(out.data(), static_cast<Eigen::Index>(out.size()));
}

Eigen::VectorXd kinetic_residual(const MechSystem& sys, const ShapedDesign& design,
                                 const Eigen::VectorXd& q) {
  return kinetic_residual(t_tensor(sys, design, q), annihilator(sys, q));
}

PdeCounts pde_counts(int n, int m) {
  if (m < 1 || m > n) throw Error("pde_counts requires 1 <= m <= n");
  const long nn = n;
  const long d = n - m;
  return {nn * (nn + 1) * d / 2, (d + 2) * (d + 1) * d / 6};
}

Eigen::MatrixXd adapted_basis(const MechSystem& sys, const Eigen::VectorXd& q) {
  const int n = sys.dof();
  const Eigen::MatrixXd g = sys.input(q);
  const Eigen::MatrixXd w = annihilator_of(g);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  const Eigen::MatrixXd range = qr.householderQ() * Eigen::MatrixXd::Identity(n, g.cols());
  Eigen::MatrixXd basis(n, n);
  basis << w.transpose(), range;
  return basis;
}

GyroTensor derive_gyro_at(const MechSystem& sys, const ShapedDesign& design,
                          const Eigen::VectorXd& q, double rel_tol) {
  const Eigen::MatrixXd basis = adapted_basis(sys, q);
  const Tensor3 t_adapted = t_tensor(sys, design, q).change_basis(basis);
  const GyroTensor c_adapted = extend_to_gyro(t_adapted, sys.underactuation(), rel_tol);
  return GyroTensor(c_adapted.tensor().change_basis(basis.transpose()), std::max(rel_tol, 1e-10));
}

GyroField::GyroField(const MechSystem& sys, const ShapedDesign& design, double rel_tol)
    : sys_(&sys), design_(&design), rel_tol_(rel_tol) {}

GyroTensor GyroField::operator()(const Eigen::VectorXd& q) const {
  if (design_->has_explicit_gyro()) return design_->explicit_gyro(q);
  return derive_gyro_at(*sys_, *design_, q, rel_tol_);
}

GyroTensor GyroField::unchecked(const Eigen::VectorXd& q) const {
  if (design_->has_explicit_gyro()) return design_->explicit_gyro(q);
  // An infinite tolerance skips the existence check; the returned tensor
  // then still agrees with T on the annihilator directions except for the
  // unactuated block.
  const Eigen::MatrixXd basis = adapted_basis(*sys_, q);
  Tensor3 t_adapted = t_tensor(*sys_, *design_, q).change_basis(basis);
  const int u = sys_->underactuation();
  const Tensor3 block_sym = sym(t_adapted);
  for (int i = 0; i < u; ++i)
    for (int j = 0; j < u; ++j)
      for (int k = 0; k < u; ++k) t_adapted(i, j, k) -= block_sym(i, j, k);
  const GyroTensor c_adapted = extend_to_gyro(t_adapted, u, 1e-6);
  return GyroTensor(c_adapted.tensor().change_basis(basis.transpose()), 1e-6);
}

// ---------------------------------------------------------------------------
// Grids and reports

std::size_t Grid::size() const {
  std::size_t s = 1;
  for (const auto& a : axes) s *= static_cast<std::size_t>(std::max(a.count, 0));
  return s;
}

std::vector<Eigen::VectorXd> Grid::points() const {
  const int n = static_cast<int>(axes.size());
  std::vector<Eigen::VectorXd> out;
  out.reserve(size());
  std::vector<int> idx(static_cast<std::size_t>(n), 0);
  for (std::size_t flat = 0; flat < size(); ++flat) {
    Eigen::VectorXd q(n);
    for (int d = 0; d < n; ++d) {
      const auto& ax = axes[static_cast<std::size_t>(d)];
      const int i = idx[static_cast<std::size_t>(d)];
      q(d) = ax.count <= 1 ? ax.lo : ax.lo + (ax.hi - ax.lo) * i / (ax.count - 1);
    }
    out.push_back(q);
    for (int d = n - 1; d >= 0; --d) {
      if (++idx[static_cast<std::size_t>(d)] < axes[static_cast<std::size_t>(d)].count) break;
      idx[static_cast<std::size_t>(d)] = 0;
    }
  }
  return out;
}

Grid Grid::parse(const std::string& text, const std::vector<std::string>& vars, GridAxis fallback) {
  Grid g;
  g.axes.assign(vars.size(), fallback);
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("grid entry '" + item + "' lacks '='");
    const std::string name = item.substr(0, eq);
    const auto it = std::find(vars.begin(), vars.end(), name);
    if (it == vars.end()) throw ConfigError("grid names unknown variable '" + name + "'");
    GridAxis ax;
    char extra = 0;
    if (std::sscanf(item.c_str() + eq + 1, "%lf:%lf:%d%c", &ax.lo, &ax.hi, &ax.count, &extra) != 3) {
      throw ConfigError("grid entry '" + item + "' must be name=lo:hi:count");
    }
    if (ax.count < 1) throw ConfigError("grid counts must be at least 1");
    g.axes[static_cast<std::size_t>(it - vars.begin())] = ax;
  }
  return g;
}

std::string Grid::to_string(const std::vector<std::string>& vars) const {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < axes.size(); ++i) {
    if (i) os << ',';
    os << vars[i] << '=' << axes[i].lo << ':' << axes[i].hi << ':' << axes[i].count;
  }
  return os.str();
}

ResidualReport residual_report(const MechSystem& sys, const ShapedDesign& design, const Grid& grid) {
  ResidualReport rep;
  rep.grid = grid;
  rep.points = grid.points();
  const int n = sys.dof();
  const auto counts = pde_counts(n, sys.inputs());
  rep.potential_argmax = Eigen::VectorXd::Zero(n);
  rep.kinetic_argmax = Eigen::VectorXd::Zero(n);
  for (const auto& q : rep.points) {
    try {
      Eigen::VectorXd pot = potential_residual(sys, design, q);
      Eigen::VectorXd kin = kinetic_residual(sys, design, q);
      if (pot.size() > 0 && pot.cwiseAbs().maxCoeff() > rep.potential_max_abs) {
        rep.potential_max_abs = pot.cwiseAbs().maxCoeff();
        rep.potential_argmax = q;
      }
      if (kin.size() > 0 && kin.cwiseAbs().maxCoeff() > rep.kinetic_max_abs) {
        rep.kinetic_max_abs = kin.cwiseAbs().maxCoeff();
        rep.kinetic_argmax = q;
      }
      rep.potential_res.push_back(std::move(pot));
      rep.kinetic_res.push_back(std::move(kin));
      rep.errors.emplace_back();
    } catch (const Error& e) {
      rep.potential_res.push_back(Eigen::VectorXd::Constant(sys.underactuation(), NAN));
      rep.kinetic_res.push_back(Eigen::VectorXd::Constant(counts.reduced, NAN));
      rep.errors.emplace_back(e.what());
      ++rep.failed_points;
    }
  }
  return rep;
}

std::string residual_csv(const ResidualReport& report, const std::vector<std::string>& vars) {
  std::ostringstream os;
  os.precision(17);
  for (const auto& v : vars) os << v << ',';
  const auto npot = report.potential_res.empty() ? 0 : report.potential_res.front().size();
  const auto nkin = report.kinetic_res.empty() ? 0 : report.kinetic_res.front().size();
  for (Eigen::Index i = 0; i < npot; ++i) os << "pot_" << i + 1 << ',';
  for (Eigen::Index i = 0; i < nkin; ++i) os << "kin_" << i + 1 << ',';
  os << "error\n";
  for (std::size_t r = 0; r < report.points.size(); ++r) {
    for (Eigen::Index i = 0; i < report.points[r].size(); ++i) os << report.points[r](i) << ',';
    for (Eigen::Index i = 0; i < npot; ++i) os << report.potential_res[r](i) << ',';
    for (Eigen::Index i = 0; i < nkin; ++i) os << report.kinetic_res[r](i) << ',';
    std::string err = report.errors[r];
    std::replace(err.begin(), err.end(), ',', ';');
    os << err << '\n';
  }
  return os.str();
}

PdDomain pd_domain(const ShapedDesign& design, const Grid& grid) {
  const std::size_t dims = grid.axes.size();
  std::vector<double> half;
  for (const auto& ax : grid.axes) half.push_back(std::max(std::abs(ax.lo), std::abs(ax.hi)));

  // Failing points ordered by their normalised distance from the origin.
  std::vector<std::pair<double, Eigen::VectorXd>> failing;
  for (const auto& q : grid.points()) {
    bool pd = false;
    try {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(design.mhat(q), Eigen::EigenvaluesOnly);
      pd = es.eigenvalues().minCoeff() > 0.0;
    } catch (const Error&) {
      pd = false;
    }
    if (pd) continue;
    double r = 0.0;
    for (std::size_t i = 0; i < dims; ++i) {
      if (half[i] > 0) r = std::max(r, std::abs(q(static_cast<Eigen::Index>(i))) / half[i]);
    }
    failing.emplace_back(r, q);
  }
  std::stable_sort(failing.begin(), failing.end(), [](const auto& x, const auto& y) { return x.first < y.first; });

  PdDomain dom;
  dom.full = failing.empty();
  dom.bound.assign(dims, INFINITY);
  for (const auto& [r, q] : failing) {
    bool inside = true;
    for (std::size_t i = 0; i < dims; ++i) inside = inside && std::abs(q(static_cast<Eigen::Index>(i))) < dom.bound[i];
    if (!inside) continue;
    // Cut along the axis on which the point lies farthest out.
    std::size_t axis = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < dims; ++i) {
      const double ratio = half[i] > 0 ? std::abs(q(static_cast<Eigen::Index>(i))) / half[i] : 0.0;
      if (ratio > best) {
        best = ratio;
        axis = i;
      }
    }
    dom.bound[axis] = std::abs(q(static_cast<Eigen::Index>(axis)));
  }
  dom.scale = 1.0;
  for (std::size_t i = 0; i < dims; ++i) {
    const double b = std::min(dom.bound[i], half[i]);
    dom.box.emplace_back(-b, b);
    if (half[i] > 0) dom.scale = std::min(dom.scale, b / half[i]);
    if (half[i] == 0 && dom.bound[i] == 0) dom.scale = 0.0;
  }
  return dom;
}

Grid restrict_to(const Grid& grid, const PdDomain& domain) {
  Grid out;
  for (std::size_t d = 0; d < grid.axes.size(); ++d) {
    const GridAxis& ax = grid.axes[d];
    GridAxis kept{0.0, 0.0, 0};
    for (int i = 0; i < ax.count; ++i) {
      const double x = ax.count == 1 ? ax.lo : ax.lo + (ax.hi - ax.lo) * i / (ax.count - 1);
      if (!(std::abs(x) < domain.bound[d])) continue;
      if (kept.count == 0) kept.lo = x;
      kept.hi = x;
      ++kept.count;
    }
    out.axes.push_back(kept);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear matching certificates

double linear_match_residual(const Linearization& lin, const Eigen::MatrixXd& w,
                             const Eigen::MatrixXd& mbar, const Eigen::MatrixXd& sbar) {
  if (w.rows() == 0) return 0.0;
  const Eigen::MatrixXd minv = lin.mass.llt().solve(Eigen::MatrixXd::Identity(lin.mass.rows(), lin.mass.cols()));
  return (w * (lin.hessian - mbar * minv * sbar)).cwiseAbs().maxCoeff();
}

LinearMatch make_linear_match(const Linearization& lin, const Eigen::MatrixXd& w,
                              Eigen::MatrixXd mbar, Eigen::MatrixXd sbar) {
  const double res = linear_match_residual(lin, w, mbar, sbar);
  if (res > 1e-9) throw InvariantViolation("linear matching residual too large", res);
  for (const auto* m : {&mbar, &sbar}) {
    if ((*m - m->transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, m->cwiseAbs().maxCoeff())) {
      throw Error("linear matching certificate must be symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(*m, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < 1e-6) {
      throw NotPositiveDefinite("linear matching certificate", es.eigenvalues().minCoeff());
    }
  }
  return LinearMatch{std::move(mbar), std::move(sbar)};
}

LinearMatch solve_linear_matching(const Linearization& lin, const Eigen::MatrixXd& w) {
  const auto n = lin.mass.rows();
  const auto degree = w.rows();
  if (degree == 0) {
    return make_linear_match(lin, w, Eigen::MatrixXd::Identity(n, n), Eigen::MatrixXd::Identity(n, n));
  }
  if (degree > 1) throw Error("linear matching is only constructed for underactuation degree one");

  const auto report = verdict(lin, static_cast<int>(degree));
  if (report.verdict == Verdict::NotStabilizable) {
    throw Error(std::string("no linear matching certificate exists: verdict ") +
                to_string(report.verdict));
  }

  // With y = M^{-1} Mbar w^T and h = D^2V w^T the constraint reads Sbar y = h,
  // which has a positive definite solution iff h^T y > 0, i.e. a^T Mbar b > 0
  // for a = M^{-1} h, b = w^T.
  const Eigen::MatrixXd minv = lin.mass.llt().solve(Eigen::MatrixXd::Identity(n, n));
  const Eigen::VectorXd b = w.row(0).transpose().normalized();
  const Eigen::VectorXd h = lin.hessian * w.row(0).transpose();
  const Eigen::VectorXd a = minv * h;
  if (a.norm() <= 1e-12 * std::max(1.0, lin.hessian.norm())) {
    throw Error("no linear matching certificate exists: D^2V(0) annihilates the unactuated direction");
  }
  const Eigen::VectorXd ahat = a.normalized();
  const double c = ahat.dot(b);
  if (c <= -1.0 + 1e-12) {
    throw Error("no linear matching certificate exists: unactuated direction is a real unstable mode");
  }
  Eigen::MatrixXd mbar = Eigen::MatrixXd::Identity(n, n);
  if (c <= 0.0) {
    // Mbar = I + beta (a b^T + b a^T) keeps the smallest eigenvalue at 1 - theta
    // and makes a^T Mbar b = c + beta (1 + c^2) positive.
    const double lower = std::max(0.0, (c * c - c) / (1.0 + c * c));
    const double theta = 0.5 * (lower + 1.0);
    const double beta = theta / (1.0 - c);
    mbar += beta * (ahat * b.transpose() + b * ahat.transpose());
  }
  const Eigen::VectorXd y = minv * mbar * w.row(0).transpose();
  const double hy = h.dot(y);
  const Eigen::MatrixXd proj = Eigen::MatrixXd::Identity(n, n) - y * y.transpose() / y.squaredNorm();
  Eigen::MatrixXd sbar = h * h.transpose() / hy + (h.squaredNorm() / hy) * proj;
  sbar = 0.5 * (sbar + sbar.transpose()).eval();
  mbar = 0.5 * (mbar + mbar.transpose()).eval();
  return make_linear_match(lin, w, std::move(mbar), std::move(sbar));
}

LinearMatch solve_linear_matching(const MechSystem& sys) {
  const Eigen::VectorXd origin = Eigen::VectorXd::Zero(sys.dof());
  return solve_linear_matching(linearize(sys), annihilator(sys, origin));
}

}  // namespace idapbc
