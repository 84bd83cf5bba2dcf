#include <array>
#include <cmath>
#include <limits>
#include <sstream>

#include <boost/numeric/odeint.hpp>

#include "idapbc/errors.hpp"
#include "idapbc/matching.hpp"

namespace idapbc {

namespace odeint = boost::numeric::odeint;

namespace {

using State = std::array<double, 1>;

struct SingularSpeed {
  double q1;
};

// Coefficients of a(q1, m) dm/dq1 + b(q1, m) = 0 along q = (q1, rest).
class Coefficients {
 public:
  Coefficients(const MechSystem& sys, const std::vector<Expr>& ansatz) : sys_(sys), ansatz_(ansatz) {}

  std::pair<double, double> operator()(double q1, double m, const Eigen::VectorXd& rest) const {
    const int n = sys_.dof();
    Eigen::VectorXd q(n);
    q(0) = q1;
    q.tail(n - 1) = rest;
    Eigen::VectorXd point(n + 1);
    point.head(n) = q;
    point(n) = m;
    Eigen::VectorXd row(n);
    row(0) = m;
    for (int a = 1; a < n; ++a) row(a) = ansatz_[static_cast<std::size_t>(a - 1)].eval(point);
    const Eigen::MatrixXd minv = sys_.mass(q).llt().solve(Eigen::MatrixXd::Identity(n, n));
    const Eigen::MatrixXd d_minv = -minv * sys_.mass_derivative(0, q) * minv;
    return {row.dot(minv.col(0)), row.dot(d_minv * row)};
  }

 private:
  const MechSystem& sys_;
  const std::vector<Expr>& ansatz_;
};

struct Leg {
  std::vector<double> s;  // distance from the origin along the leg
  std::vector<double> m;
  double positive = 0.0;  // Mhat_11 > 0 on [0, positive)
  double reached = 0.0;
  bool lost_positivity = false;
  bool stopped = false;
  std::string reason;
};

// Integrates from q1 = 0 in direction `dir` (+1 or -1) up to |q1| = length,
// sampling the dense output at the requested distances. The PDE stays regular
// where Mhat_11 changes sign, so integration continues and only the crossing is
// recorded. A vanishing characteristic speed ends the leg.
Leg integrate_leg(const Coefficients& coeff, double m0, int dir, double length,
                  const std::vector<double>& samples, const CharacteristicsOptions& opts, int n) {
  Leg leg;
  const Eigen::VectorXd rest = Eigen::VectorXd::Zero(n - 1);
  auto rhs = [&](const State& x, State& dxds, double s) {
    const auto [a, b] = coeff(dir * s, x[0], rest);
    if (!(std::abs(a) >= opts.speed_floor)) throw SingularSpeed{dir * s};
    dxds[0] = -dir * b / a;
  };
  std::size_t next = 0;
  while (next < samples.size() && samples[next] <= 0.0) {
    leg.s.push_back(samples[next]);
    leg.m.push_back(m0);
    ++next;
  }
  leg.positive = length;
  if (length <= 0.0) return leg;

  auto stepper = odeint::make_dense_output(opts.tolerance, opts.tolerance,
                                           odeint::runge_kutta_dopri5<State>());
  stepper.initialize(State{m0}, 0.0, std::min(1e-3, length));
  try {
    while (stepper.current_time() < length) {
      const double before = stepper.current_time();
      stepper.do_step(rhs);
      const double after = stepper.current_time();
      const double m_after = stepper.current_state()[0];
      if (!std::isfinite(m_after)) throw Error("solution is not finite");
      if (!leg.lost_positivity && m_after <= 0.0) {
        // Locate the sign change inside the step by bisection on the dense output.
        double lo = before, hi = after;
        State x;
        for (int it = 0; it < 200 && hi - lo > 1e-14 * std::max(1.0, hi); ++it) {
          const double mid = 0.5 * (lo + hi);
          stepper.calc_state(mid, x);
          (x[0] > 0.0 ? lo : hi) = mid;
        }
        leg.lost_positivity = true;
        leg.positive = std::min(hi, length);
        std::ostringstream os;
        os << "Mhat_11 loses positivity at q1 = " << dir * leg.positive;
        leg.reason = os.str();
      }
      State x;
      while (next < samples.size() && samples[next] <= std::min(after, length)) {
        stepper.calc_state(samples[next], x);
        leg.s.push_back(samples[next]);
        leg.m.push_back(x[0]);
        ++next;
      }
    }
    leg.reached = length;
  } catch (const SingularSpeed& s) {
    std::ostringstream os;
    os << "characteristic speed vanishes near q1 = " << s.q1;
    leg.reason += (leg.reason.empty() ? "" : "; ") + os.str();
    leg.stopped = true;
  } catch (const Error& e) {
    leg.reason += (leg.reason.empty() ? "" : "; ") + std::string("evaluation failed: ") + e.what();
    leg.stopped = true;
  }
  if (leg.stopped) {
    leg.reached = leg.s.empty() ? 0.0 : leg.s.back();
    leg.positive = std::min(leg.positive, leg.reached);
  }
  return leg;
}

}  // namespace

CharacteristicsResult solve_kinetic_characteristics(const MechSystem& sys, const std::vector<Expr>& ansatz,
                                                    const LinearMatch& init,
                                                    const CharacteristicsOptions& opts) {
  const int n = sys.dof();
  if (sys.underactuation() != 1) throw Error("characteristics solver requires underactuation degree one");
  if (static_cast<int>(ansatz.size()) != n - 1) throw Error("ansatz must give Mhat_1a for a = 2..n");
  if (!(opts.lo <= 0.0 && opts.hi >= 0.0 && opts.samples >= 2)) {
    throw ConfigError("characteristics range must contain 0 and have at least two samples");
  }
  for (const auto& e : ansatz) {
    if (e.max_var_index() > n) throw Error("ansatz refers to an unknown variable");
  }

  // The PDE is one-dimensional only when the unactuated direction is e1.
  for (double q1 : {opts.lo, 0.0, opts.hi}) {
    Eigen::VectorXd q = Eigen::VectorXd::Zero(n);
    q(0) = q1;
    const Eigen::MatrixXd w = annihilator(sys, q);
    if (std::abs(std::abs(w(0, 0)) - 1.0) > 1e-10) {
      throw Error("characteristics solver requires the input directions to be spanned by e2..en");
    }
  }

  const double m0 = init.mbar(0, 0);
  const Coefficients coeff(sys, ansatz);
  {
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(n - 1);
    Eigen::VectorXd shifted = Eigen::VectorXd::Constant(n - 1, 0.3);
    for (double q1 : {opts.lo, 0.5 * opts.lo, 0.5 * opts.hi, opts.hi}) {
      for (double m : {0.5 * m0, m0}) {
        try {
          const auto base = coeff(q1, m, zero);
          const auto other = coeff(q1, m, shifted);
          const double scale = std::max({1.0, std::abs(base.first), std::abs(base.second)});
          if (std::abs(base.first - other.first) > 1e-9 * scale ||
              std::abs(base.second - other.second) > 1e-9 * scale) {
            throw Error("PDE coefficients depend on coordinates other than q1");
          }
        } catch (const EvalError&) {
        } catch (const NotPositiveDefinite&) {
        }
      }
    }
  }

  std::vector<double> grid(static_cast<std::size_t>(opts.samples));
  for (int i = 0; i < opts.samples; ++i) grid[static_cast<std::size_t>(i)] = opts.lo + (opts.hi - opts.lo) * i / (opts.samples - 1);

  CharacteristicsResult out;
  if (!(m0 > 0.0)) {
    out.truncated = true;
    out.reason = "initial Mhat_11 is not positive";
    return out;
  }
  std::vector<double> forward, backward;
  for (double g : grid) {
    if (g >= 0.0) forward.push_back(g);
    if (g < 0.0) backward.insert(backward.begin(), -g);
  }
  const Leg fwd = integrate_leg(coeff, m0, +1, opts.hi, forward, opts, n);
  const Leg bwd = integrate_leg(coeff, m0, -1, -opts.lo, backward, opts, n);

  for (std::size_t i = bwd.s.size(); i-- > 0;) {
    out.q1.push_back(-bwd.s[i]);
    out.mhat11.push_back(bwd.m[i]);
  }
  for (std::size_t i = 0; i < fwd.s.size(); ++i) {
    out.q1.push_back(fwd.s[i]);
    out.mhat11.push_back(fwd.m[i]);
  }
  out.lo = -bwd.positive;
  out.hi = fwd.positive;
  out.integrated_lo = -bwd.reached;
  out.integrated_hi = fwd.reached;
  out.truncated = !bwd.reason.empty() || !fwd.reason.empty();
  out.reason = bwd.reason;
  if (!fwd.reason.empty()) out.reason += (out.reason.empty() ? "" : "; ") + fwd.reason;
  return out;
}

}  // namespace idapbc
