// Command-line front end: check, verify, synthesize, simulate, selftest.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "idapbc/control_sim.hpp"
#include "idapbc/errors.hpp"
#include "idapbc/matching.hpp"
#include "idapbc/selftest.hpp"
#include "idapbc/stability.hpp"
#include "idapbc/system.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace idapbc;

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kRejected = 2;
constexpr int kDiverged = 3;

struct Options {
  std::string system;
  std::string grid;
  double tol = 1e-8;
  double energy_tol = 1e-8;
  std::optional<double> eps;
  std::optional<double> k;
  std::string kv;
  std::string x0 = "0.3";
  double t_end = 10.0;
  double dt = 1e-3;
  std::uint64_t seed = 0;
  int dims_max = 6;
  std::string out;
  bool open_loop = false;
};

json to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

json to_json_vec(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << text;
}

std::string system_text(const Options& o) {
  if (o.system.empty()) throw ConfigError("--system is required");
  if (o.system.rfind("builtin:", 0) == 0) return builtin_json(o.system.substr(8));
  return read_file(o.system);
}

ParamMap overrides(const Options& o) {
  ParamMap p;
  if (o.eps) p["eps"] = *o.eps;
  if (o.k) p["K"] = *o.k;
  return p;
}

Eigen::MatrixXd parse_kv(const std::string& text, int m) {
  std::vector<std::vector<double>> rows;
  std::stringstream rs(text);
  std::string row;
  while (std::getline(rs, row, ';')) {
    std::vector<double> vals;
    std::stringstream cs(row);
    std::string cell;
    while (std::getline(cs, cell, ',')) {
      try {
        vals.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ConfigError("--Kv entry '" + cell + "' is not a number");
      }
    }
    rows.push_back(vals);
  }
  if (rows.size() == 1 && rows[0].size() == 1) return rows[0][0] * Eigen::MatrixXd::Identity(m, m);
  if (static_cast<int>(rows.size()) != m) throw ConfigError("--Kv must be a scalar or an m x m matrix 'a,b;c,d'");
  Eigen::MatrixXd kv(m, m);
  for (int i = 0; i < m; ++i) {
    if (static_cast<int>(rows[static_cast<std::size_t>(i)].size()) != m) throw ConfigError("--Kv rows must have m entries");
    for (int j = 0; j < m; ++j) kv(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  return kv;
}

SystemBundle load(const Options& o) {
  SystemBundle b = load_system_json(system_text(o), overrides(o));
  if (!o.kv.empty() && b.design) b.design = b.design->with_kv(parse_kv(o.kv, b.system.inputs()));
  return b;
}

Grid grid_for(const Options& o, const MechSystem& sys) { return Grid::parse(o.grid, sys.vars()); }

void emit(const Options& o, const std::string& file, const json& report) {
  std::cout << report.dump(2) << std::endl;
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    write_file(fs::path(o.out) / file, report.dump(2) + "\n");
  }
}

json eigs_json(const std::vector<std::complex<double>>& eigs) {
  json out = json::array();
  for (const auto& e : eigs) out.push_back({e.real(), e.imag()});
  return out;
}

int cmd_check(const Options& o) {
  const SystemBundle b = load(o);
  const auto rep = verdict(b.system);
  json j;
  j["system"] = b.system.name();
  j["verdict"] = to_string(rep.verdict);
  j["controllable"] = rep.controllable;
  j["kalman_rank"] = rep.kalman_rank;
  j["state_dimension"] = 2 * b.system.dof();
  j["uncontrollable_eigs"] = eigs_json(rep.uncontrollable_eigs);
  j["oscillatory"] = rep.oscillatory;
  j["basis"] = rep.basis;
  j["linearization"] = {{"A", to_json(rep.lin.a)}, {"B", to_json(rep.lin.b)}, {"M0", to_json(rep.lin.mass)},
                        {"hessian", to_json(rep.lin.hessian)}};
  emit(o, "check.json", j);
  return rep.verdict == Verdict::NotStabilizable ? kRejected : kOk;
}

struct Verification {
  bool pass = false;
  json report;
  ResidualReport residuals;
  Grid checked;
};

Verification run_verify(const Options& o, const SystemBundle& b) {
  const ShapedDesign& design = *b.design;
  const Grid grid = grid_for(o, b.system);
  const PdDomain dom = pd_domain(design, grid);
  Verification v;
  v.checked = restrict_to(grid, dom);
  v.residuals = residual_report(b.system, design, v.checked);
  const MinimumCheck minimum = minimum_check(design);
  const auto& r = v.residuals;
  const bool residual_ok = r.failed_points == 0 && r.potential_max_abs <= o.tol && r.kinetic_max_abs <= o.tol;
  v.pass = minimum.pass && residual_ok && v.checked.size() > 0;

  json& j = v.report;
  j["system"] = b.system.name();
  j["pass"] = v.pass;
  j["tolerance"] = o.tol;
  j["grid"] = grid.to_string(b.system.vars());
  json box = json::array();
  for (const auto& [lo, hi] : dom.box) box.push_back({lo, hi});
  j["pd_domain"] = {{"scale", dom.scale}, {"box", box}, {"full", dom.full},
                    {"checked_grid", v.checked.to_string(b.system.vars())},
                    {"checked_points", v.checked.size()}};
  j["residuals"] = {{"potential_max_abs", r.potential_max_abs},
                    {"potential_argmax", to_json_vec(r.potential_argmax)},
                    {"kinetic_max_abs", r.kinetic_max_abs},
                    {"kinetic_argmax", to_json_vec(r.kinetic_argmax)},
                    {"failed_points", r.failed_points}};
  if (r.failed_points > 0) {
    for (std::size_t i = 0; i < r.errors.size(); ++i) {
      if (!r.errors[i].empty()) {
        j["residuals"]["first_failure"] = {{"q", to_json_vec(r.points[i])}, {"error", r.errors[i]}};
        break;
      }
    }
  }
  j["minimum_check"] = {{"pass", minimum.pass},
                        {"gradient_norm", minimum.gradient_norm},
                        {"hessian_eigenvalues", to_json_vec(minimum.hessian_eigenvalues)},
                        {"mhat_eigenvalues", to_json_vec(minimum.mhat_eigenvalues)},
                        {"message", minimum.message}};
  return v;
}

int cmd_verify(const Options& o) {
  const SystemBundle b = load(o);
  if (!b.design) throw ConfigError("system has no shaped design to verify");
  const Verification v = run_verify(o, b);
  emit(o, "verify.json", v.report);
  if (!o.out.empty()) write_file(fs::path(o.out) / "residuals.csv", residual_csv(v.residuals, b.system.vars()));
  return v.pass ? kOk : kRejected;
}

int cmd_synthesize(const Options& o) {
  const std::string text = system_text(o);
  const SystemBundle b = load(o);
  if (!b.design) throw ConfigError("system has no shaped design to synthesize from");
  Controller ctrl(b.system, *b.design);  // rejects an invalid Kv

  const Verification v = run_verify(o, b);
  if (!v.pass) {
    json j{{"refused", true}, {"reason", "design does not verify"}, {"verify", v.report}};
    if (v.residuals.kinetic_max_abs > o.tol) {
      std::ostringstream os;
      os << "cyclic sum of T on the annihilator is " << v.residuals.kinetic_max_abs << " at q = ("
         << v.residuals.kinetic_argmax.transpose() << "); no gyroscopic tensor reproduces T there";
      j["kinetic_diagnostic"] = os.str();
    }
    emit(o, "bundle.json", j);
    return kRejected;
  }

  json samples = json::array();
  const GyroField field(b.system, *b.design, std::max(o.tol, 1e-9));
  for (const auto& q : v.checked.points()) {
    GyroTensor c = field(q);
    const int n = c.dim();
    json cj = json::array();
    for (int i = 0; i < n; ++i) {
      json ci = json::array();
      for (int jj = 0; jj < n; ++jj) {
        json cij = json::array();
        for (int k = 0; k < n; ++k) cij.push_back(c(i, jj, k));
        ci.push_back(cij);
      }
      cj.push_back(ci);
    }
    samples.push_back({{"q", to_json_vec(q)}, {"C", cj}});
  }

  json sys = json::parse(text);
  if (sys.contains("system")) sys = sys["system"];
  for (const auto& [key, value] : overrides(o)) {
    sys["params"][key] = value;
    if (sys["shaped"].contains("params") && sys["shaped"]["params"].contains(key)) sys["shaped"]["params"][key] = value;
  }
  sys["shaped"]["Kv"] = to_json(ctrl.kv());

  json bundle;
  bundle["system"] = sys;
  bundle["Kv"] = to_json(ctrl.kv());
  bundle["C_samples"] = samples;
  bundle["metadata"] = {{"grid", v.checked.to_string(b.system.vars())},
                        {"tolerance", o.tol},
                        {"explicit_C", b.design->has_explicit_gyro()},
                        {"params", b.params}};
  if (o.out.empty()) {
    std::cout << bundle.dump(2) << std::endl;
  } else {
    fs::create_directories(o.out);
    write_file(fs::path(o.out) / "bundle.json", bundle.dump(2) + "\n");
    std::cout << "wrote " << (fs::path(o.out) / "bundle.json").string() << " (" << samples.size() << " C samples)"
              << std::endl;
  }
  return kOk;
}

Eigen::VectorXd parse_x0(const std::string& text, int n) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(2 * n);
  std::stringstream ss(text);
  std::string cell;
  int i = 0;
  while (std::getline(ss, cell, ',')) {
    if (i >= 2 * n) throw ConfigError("--x0 has more than 2n entries");
    try {
      x(i++) = std::stod(cell);
    } catch (const std::exception&) {
      throw ConfigError("--x0 entry '" + cell + "' is not a number");
    }
  }
  return x;
}

int cmd_simulate(const Options& o) {
  const SystemBundle b = load(o);
  const int n = b.system.dof();
  SimConfig cfg;
  cfg.t_end = o.t_end;
  cfg.dt = o.dt;
  cfg.x0 = parse_x0(o.x0, n);

  json metrics;
  metrics["system"] = b.system.name();
  metrics["mode"] = o.open_loop ? "open_loop" : "closed_loop";
  StateTrajectory traj;
  int code = kOk;
  if (o.open_loop) {
    traj = simulate(open_loop_vector_field(b.system), open_loop_energy(b.system), cfg);
    double drift = 0.0;
    for (double e : traj.energies) drift = std::max(drift, std::abs(e - traj.energies.front()));
    metrics["energy_drift"] = drift;
    metrics["energy_conserved"] = drift <= 1e-6;
    if (drift > 1e-6) code = kRejected;
  } else {
    if (!b.design) throw ConfigError("closed-loop simulation needs a shaped design");
    const Controller ctrl(b.system, *b.design);
    traj = simulate(closed_loop_vector_field(ctrl), closed_loop_energy(ctrl), cfg);
    const Verdict vd = verdict(b.system).verdict;
    metrics["verdict"] = to_string(vd);
    if (traj.energies.empty()) {
      metrics["stopped_at"] = 0.0;
      metrics["stop_reason"] = traj.stop_reason;
      emit(o, "metrics.json", metrics);
      return kDiverged;
    }
    const double e_min = b.design->vhat(Eigen::VectorXd::Zero(n));
    const DecayMetrics dm = decay_metrics(traj, e_min);
    metrics["max_energy_increase"] = dm.max_energy_increase;
    metrics["fitted_rate"] = dm.fitted_rate;
    if (!dm.warning.empty()) metrics["warning"] = dm.warning;
    const bool energy_ok = dm.max_energy_increase <= o.energy_tol;
    const bool rate_ok = vd != Verdict::ExponentiallyStabilizable || dm.fitted_rate < 0.0;
    metrics["energy_non_increasing"] = energy_ok;
    metrics["rate_ok"] = rate_ok;
    if (!(energy_ok && rate_ok)) code = kRejected;
  }
  metrics["steps"] = traj.size() > 0 ? traj.size() - 1 : 0;
  if (!traj.states.empty()) {
    metrics["final_time"] = traj.times.back();
    metrics["final_state"] = to_json_vec(traj.states.back());
    metrics["final_norm"] = traj.states.back().norm();
  }
  if (traj.stopped_at) {
    metrics["stopped_at"] = *traj.stopped_at;
    metrics["stop_reason"] = traj.stop_reason;
    code = kDiverged;
  }
  emit(o, "metrics.json", metrics);
  if (!o.out.empty()) write_file(fs::path(o.out) / "trajectory.csv", trajectory_csv(traj, b.system.vars()));
  return code;
}

int cmd_selftest(const Options& o) {
  SelftestOptions so;
  so.seed = o.seed;
  so.dims_max = o.dims_max;
  bool all = true;
  json j = json::array();
  for (const auto& r : run_selftest(so)) {
    std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << r.name << ": " << r.detail << std::endl;
    j.push_back({{"suite", r.name}, {"pass", r.pass}, {"max_error", r.max_error}, {"detail", r.detail}});
    all = all && r.pass;
  }
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    write_file(fs::path(o.out) / "selftest.json", j.dump(2) + "\n");
  }
  return all ? kOk : kRejected;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"IDA-PBC design and verification toolkit"};
  app.require_subcommand(1);
  Options o;

  auto add_system = [&](CLI::App* sub) {
    sub->add_option("--system", o.system, "JSON file or builtin:<name>")->required();
    sub->add_option("--eps", o.eps, "override parameter eps");
    sub->add_option("--K", o.k, "override parameter K");
    sub->add_option("--out", o.out, "output directory");
  };
  auto add_grid = [&](CLI::App* sub) {
    sub->add_option("--grid", o.grid, "q1=lo:hi:count,... (default -1:1:11 per coordinate)");
    sub->add_option("--tol", o.tol, "residual tolerance")->check(CLI::PositiveNumber);
    sub->add_option("--Kv", o.kv, "damping gain: scalar or 'a,b;c,d'");
  };

  auto* check = app.add_subcommand("check", "stabilizability verdict of the linearisation");
  add_system(check);
  auto* verify = app.add_subcommand("verify", "matching residuals and minimum conditions");
  add_system(verify);
  add_grid(verify);
  auto* synth = app.add_subcommand("synthesize", "controller bundle with the gyroscopic tensor");
  add_system(synth);
  add_grid(synth);
  auto* sim = app.add_subcommand("simulate", "closed-loop or open-loop trajectory");
  add_system(sim);
  sim->add_option("--Kv", o.kv, "damping gain: scalar or 'a,b;c,d'");
  sim->add_option("--x0", o.x0, "initial q1,...,qn,p1,...,pn (missing entries are 0)");
  sim->add_option("--t-end", o.t_end, "final time")->check(CLI::PositiveNumber);
  sim->add_option("--dt", o.dt, "step size")->check(CLI::PositiveNumber);
  sim->add_option("--energy-tol", o.energy_tol, "allowed per-step energy increase")->check(CLI::PositiveNumber);
  sim->add_flag("--open-loop", o.open_loop, "integrate with u = 0 and record H");
  auto* self = app.add_subcommand("selftest", "tensor algebra property suites");
  self->add_option("--seed", o.seed, "random seed");
  self->add_option("--dims-max", o.dims_max, "largest n for dimension checks")->check(CLI::Range(2, 12));
  self->add_option("--out", o.out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kInvalid;
  }

  try {
    if (*check) return cmd_check(o);
    if (*verify) return cmd_verify(o);
    if (*synth) return cmd_synthesize(o);
    if (*sim) return cmd_simulate(o);
    if (*self) return cmd_selftest(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kInvalid;
  }
  return kInvalid;
}
