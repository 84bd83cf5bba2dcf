#include "idapbc/system.hpp"

#include <cmath>

#include <json.hpp>

#include "idapbc/errors.hpp"

namespace idapbc {

namespace {

std::vector<Expr> gradient_of(const Expr& e, int n) {
  std::vector<Expr> g;
  g.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) g.push_back(e.differentiate(k));
  return g;
}

std::vector<std::vector<Expr>> hessian_of(const std::vector<Expr>& grad, int n) {
  std::vector<std::vector<Expr>> h(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) h[static_cast<std::size_t>(i)].push_back(grad[static_cast<std::size_t>(i)].differentiate(j));
  return h;
}

Eigen::VectorXd eval_all(const std::vector<Expr>& es, const Eigen::VectorXd& q) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(es.size()));
  for (std::size_t i = 0; i < es.size(); ++i) out(static_cast<Eigen::Index>(i)) = es[i].eval(q);
  return out;
}

Eigen::MatrixXd eval_grid(const std::vector<std::vector<Expr>>& es, const Eigen::VectorXd& q) {
  const auto n = static_cast<Eigen::Index>(es.size());
  Eigen::MatrixXd out(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) out(i, j) = es[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].eval(q);
  return out;
}

double min_eigenvalue(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

}  // namespace

MechSystem::MechSystem(std::string name, std::vector<std::string> vars, ExprMatrix mass,
                       Expr potential, ExprMatrix input, double equilibrium_tol)
    : name_(std::move(name)),
      vars_(std::move(vars)),
      n_(static_cast<int>(vars_.size())),
      m_(input.cols()),
      mass_(std::move(mass)),
      potential_(std::move(potential)),
      input_(std::move(input)) {
  if (n_ < 1) throw ConfigError("system needs at least one configuration variable");
  if (mass_.rows() != n_ || mass_.cols() != n_) throw ConfigError("M must be n x n");
  if (input_.rows() != n_ || m_ < 1 || m_ > n_) throw ConfigError("G must be n x m with 1 <= m <= n");
  if (!mass_.is_structurally_symmetric()) throw ConfigError("M must be symmetric");
  for (int k = 0; k < n_; ++k) mass_d_.push_back(mass_.differentiate(k));
  potential_d_ = gradient_of(potential_, n_);
  potential_dd_ = hessian_of(potential_d_, n_);
  const Eigen::VectorXd g0 = potential_gradient(Eigen::VectorXd::Zero(n_));
  if (g0.cwiseAbs().maxCoeff() > equilibrium_tol) {
    throw ConfigError("origin is not an equilibrium: |dV/dq(0)| = " +
                      std::to_string(g0.cwiseAbs().maxCoeff()));
  }
}

Eigen::MatrixXd MechSystem::mass_unchecked(const Eigen::VectorXd& q) const { return mass_.eval(q); }

Eigen::MatrixXd MechSystem::mass(const Eigen::VectorXd& q) const {
  Eigen::MatrixXd m = mass_.eval(q);
  const double lo = min_eigenvalue(m);
  if (!(lo > 0.0)) throw NotPositiveDefinite("M(q) is not positive definite", lo);
  return m;
}

Eigen::MatrixXd MechSystem::mass_derivative(int k, const Eigen::VectorXd& q) const {
  return mass_d_[static_cast<std::size_t>(k)].eval(q);
}

double MechSystem::potential(const Eigen::VectorXd& q) const { return potential_.eval(q); }

Eigen::VectorXd MechSystem::potential_gradient(const Eigen::VectorXd& q) const {
  return eval_all(potential_d_, q);
}

Eigen::MatrixXd MechSystem::potential_hessian(const Eigen::VectorXd& q) const {
  return eval_grid(potential_dd_, q);
}

Eigen::MatrixXd MechSystem::input(const Eigen::VectorXd& q) const {
  Eigen::MatrixXd g = input_.eval(q);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(g);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0 || s(s.size() - 1) <= 1e-10 * s(0)) {
    throw RankDeficient("G(q) does not have full column rank");
  }
  return g;
}

// ---------------------------------------------------------------------------

ShapedDesign::ShapedDesign(int n, ExprMatrix mhat, Expr vhat, Eigen::MatrixXd kv,
                           std::optional<std::vector<Expr>> gyro)
    : n_(n), mhat_(std::move(mhat)), vhat_(std::move(vhat)), kv_(std::move(kv)), gyro_(std::move(gyro)) {
  if (mhat_.rows() != n_ || mhat_.cols() != n_) throw ConfigError("Mhat must be n x n");
  if (!mhat_.is_structurally_symmetric()) throw ConfigError("Mhat must be symmetric");
  if (kv_.rows() != kv_.cols()) throw ConfigError("Kv must be square");
  if (gyro_ && gyro_->size() != static_cast<std::size_t>(n_ * n_ * n_)) {
    throw ConfigError("explicit C must have n^3 entries");
  }
  for (int k = 0; k < n_; ++k) mhat_d_.push_back(mhat_.differentiate(k));
  vhat_d_ = gradient_of(vhat_, n_);
  vhat_dd_ = hessian_of(vhat_d_, n_);
}

Eigen::MatrixXd ShapedDesign::mhat(const Eigen::VectorXd& q) const { return mhat_.eval(q); }

Eigen::MatrixXd ShapedDesign::mhat_derivative(int k, const Eigen::VectorXd& q) const {
  return mhat_d_[static_cast<std::size_t>(k)].eval(q);
}

double ShapedDesign::vhat(const Eigen::VectorXd& q) const { return vhat_.eval(q); }

Eigen::VectorXd ShapedDesign::vhat_gradient(const Eigen::VectorXd& q) const {
  return eval_all(vhat_d_, q);
}

Eigen::MatrixXd ShapedDesign::vhat_hessian(const Eigen::VectorXd& q) const {
  return eval_grid(vhat_dd_, q);
}

GyroTensor ShapedDesign::explicit_gyro(const Eigen::VectorXd& q) const {
  if (!gyro_) throw Error("design has no explicit gyroscopic tensor");
  Tensor3 t(n_);
  for (std::size_t i = 0; i < gyro_->size(); ++i) t.data()[i] = (*gyro_)[i].eval(q);
  return GyroTensor(std::move(t));
}

ShapedDesign ShapedDesign::with_kv(Eigen::MatrixXd kv) const {
  return ShapedDesign(n_, mhat_, vhat_, std::move(kv), gyro_);
}

ShapedDesign ShapedDesign::with_vhat(Expr vhat) const {
  return ShapedDesign(n_, mhat_, std::move(vhat), kv_, gyro_);
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd annihilator_of(const Eigen::MatrixXd& g) {
  const auto n = g.rows();
  const auto m = g.cols();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(g.transpose(), Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  if (m > 0 && (s(0) == 0.0 || s(m - 1) <= 1e-10 * s(0))) {
    throw RankDeficient("G(q) does not have full column rank");
  }
  Eigen::MatrixXd w = svd.matrixV().rightCols(n - m).transpose();
  for (Eigen::Index r = 0; r < w.rows(); ++r) {
    Eigen::Index idx = 0;
    w.row(r).cwiseAbs().maxCoeff(&idx);
    if (w(r, idx) < 0) w.row(r) *= -1.0;
  }
  return w;
}

Eigen::MatrixXd annihilator(const MechSystem& sys, const Eigen::VectorXd& q) {
  return annihilator_of(sys.input_expr().eval(q));
}

double hamiltonian(const MechSystem& sys, const Eigen::VectorXd& q, const Eigen::VectorXd& p) {
  const Eigen::MatrixXd m = sys.mass(q);
  return 0.5 * p.dot(m.llt().solve(p)) + sys.potential(q);
}

Eigen::VectorXd hamiltonian_q_gradient(const MechSystem& sys, const Eigen::VectorXd& q,
                                       const Eigen::VectorXd& p) {
  const Eigen::MatrixXd m = sys.mass(q);
  const Eigen::VectorXd v = m.llt().solve(p);
  Eigen::VectorXd grad = sys.potential_gradient(q);
  // d(M^{-1})/dq^k = -M^{-1} (dM/dq^k) M^{-1}
  for (int k = 0; k < sys.dof(); ++k) grad(k) -= 0.5 * v.dot(sys.mass_derivative(k, q) * v);
  return grad;
}

PhaseVelocity open_loop_field(const MechSystem& sys, const Eigen::VectorXd& q,
                              const Eigen::VectorXd& p, const Eigen::VectorXd& u) {
  if (u.size() != sys.inputs()) throw Error("input vector has wrong length");
  const Eigen::MatrixXd m = sys.mass(q);
  PhaseVelocity out;
  out.qdot = m.llt().solve(p);
  out.pdot = -hamiltonian_q_gradient(sys, q, p) + sys.input_expr().eval(q) * u;
  return out;
}

// ---------------------------------------------------------------------------
// JSON loading

namespace {

using nlohmann::json;

Expr expr_from_json(const json& j, const std::vector<std::string>& vars, const ParamMap& params,
                    const std::string& where) {
  if (j.is_number()) return Expr::constant(j.get<double>());
  if (!j.is_string()) throw ConfigError(where + ": expected an expression string or number");
  try {
    return parse(j.get<std::string>(), vars, params);
  } catch (const ParseError& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

ExprMatrix matrix_from_json(const json& j, int rows, int cols, const std::vector<std::string>& vars,
                            const ParamMap& params, const std::string& where) {
  if (!j.is_array() || static_cast<int>(j.size()) != rows) {
    throw ConfigError(where + ": expected " + std::to_string(rows) + " rows");
  }
  ExprMatrix out(rows, cols);
  for (int i = 0; i < rows; ++i) {
    const json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<int>(row.size()) != cols) {
      throw ConfigError(where + ": row " + std::to_string(i) + " must have " + std::to_string(cols) +
                        " entries");
    }
    for (int c = 0; c < cols; ++c) {
      out(i, c) = expr_from_json(row[static_cast<std::size_t>(c)], vars, params,
                                 where + "[" + std::to_string(i) + "][" + std::to_string(c) + "]");
    }
  }
  return out;
}

void merge_params(ParamMap& into, const json& j) {
  if (!j.is_object()) throw ConfigError("params must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!value.is_number()) throw ConfigError("param '" + key + "' must be a number");
    into[key] = value.get<double>();
  }
}

}  // namespace

SystemBundle load_system_json(const std::string& json_text, const ParamMap& overrides) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("system description must be a JSON object");
  // Controller bundles embed the system they were synthesised for.
  if (doc.contains("system") && doc["system"].is_object()) doc = doc["system"];
  try {
    const int n = doc.at("n").get<int>();
    const int m = doc.at("m").get<int>();
    std::vector<std::string> vars;
    if (doc.contains("vars")) {
      vars = doc["vars"].get<std::vector<std::string>>();
    } else {
      for (int i = 0; i < n; ++i) vars.push_back("q" + std::to_string(i + 1));
    }
    if (static_cast<int>(vars.size()) != n) throw ConfigError("vars must list n names");

    ParamMap params;
    if (doc.contains("params")) merge_params(params, doc["params"]);
    if (doc.contains("shaped") && doc["shaped"].contains("params")) {
      merge_params(params, doc["shaped"]["params"]);
    }
    for (const auto& [k, v] : overrides) params[k] = v;

    ExprMatrix mass = matrix_from_json(doc.at("M"), n, n, vars, params, "M");
    Expr potential = expr_from_json(doc.at("V"), vars, params, "V");
    ExprMatrix input = matrix_from_json(doc.at("G"), n, m, vars, params, "G");
    MechSystem sys(doc.value("name", std::string("system")), vars, std::move(mass),
                   std::move(potential), std::move(input));

    std::optional<ShapedDesign> design;
    if (doc.contains("shaped")) {
      const json& sh = doc["shaped"];
      ExprMatrix mhat = matrix_from_json(sh.at("Mhat"), n, n, vars, params, "shaped.Mhat");
      Expr vhat = expr_from_json(sh.at("Vhat"), vars, params, "shaped.Vhat");
      Eigen::MatrixXd kv = Eigen::MatrixXd::Identity(m, m);
      if (sh.contains("Kv")) {
        const auto rows = sh["Kv"].get<std::vector<std::vector<double>>>();
        if (static_cast<int>(rows.size()) != m) throw ConfigError("shaped.Kv must be m x m");
        for (int i = 0; i < m; ++i) {
          if (static_cast<int>(rows[static_cast<std::size_t>(i)].size()) != m) {
            throw ConfigError("shaped.Kv must be m x m");
          }
          for (int j = 0; j < m; ++j) kv(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        }
      }
      std::optional<std::vector<Expr>> gyro;
      if (sh.contains("C")) {
        std::vector<Expr> entries;
        const json& c = sh["C"];
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) {
              entries.push_back(expr_from_json(c.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(j)).at(static_cast<std::size_t>(k)), vars, params,
                                               "shaped.C"));
            }
        gyro = std::move(entries);
      }
      design.emplace(n, std::move(mhat), std::move(vhat), std::move(kv), std::move(gyro));
    }
    return SystemBundle{std::move(sys), std::move(design), std::move(params)};
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid system description: ") + e.what());
  }
}

const std::vector<std::string>& builtin_names() {
  static const std::vector<std::string> names{"pendulum_cart", "three_dof"};
  return names;
}

std::string builtin_json(const std::string& name) {
  // The pendulum potential is the upright-equilibrium form M1*g*l*cos(q1)
  // with M1 = M2 = l = 1, g = 10.
  if (name == "pendulum_cart") {
    return R"json({
  "name": "pendulum_cart",
  "n": 2, "m": 1,
  "vars": ["q1", "q2"],
  "M": [["1", "cos(q1)"], ["cos(q1)", "2"]],
  "V": "10*cos(q1)",
  "G": [["0"], ["1"]],
  "shaped": {
    "Mhat": [["2*cos(q1)^2 - eps", "(4 - eps)*cos(q1)"],
             ["(4 - eps)*cos(q1)", "K + (4 - eps)^2*cos(q1)^2/(2*cos(q1)^2 - eps)"]],
    "Vhat": "-(10/eps)*cos(q1) + (q2 + 2*sin(q1)/eps)^2",
    "Kv": [[1.0]],
    "params": {"eps": 1.0, "K": 1.0}
  }
})json";
  }
  if (name == "three_dof") {
    return R"json({
  "name": "three_dof",
  "n": 3, "m": 2,
  "vars": ["q1", "q2", "q3"],
  "M": [["5 + cos(q3)", "sin(q1 - q2)", "sin(q3 - q1)"],
        ["sin(q1 - q2)", "5 + cos(q1 - q3)", "sin(q2)"],
        ["sin(q3 - q1)", "sin(q2)", "5 + cos(q2)"]],
  "V": "cos(q1 + q2) + cos(q2 + q3) + cos(q3)",
  "G": [["sin(q2)", "1"], ["1", "sin(q3)"], ["sin(q1)", "1"]]
})json";
  }
  throw ConfigError("unknown built-in system '" + name + "'");
}

SystemBundle builtin(const std::string& name, const ParamMap& overrides) {
  return load_system_json(builtin_json(name), overrides);
}

}  // namespace idapbc
