#include "idapbc/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "idapbc/errors.hpp"

namespace idapbc {

namespace draw {

namespace {
double uniform(std::mt19937_64& rng) { return std::uniform_real_distribution<double>(-1.0, 1.0)(rng); }
}  // namespace

Tensor3 tensor(int n, std::mt19937_64& rng) {
  Tensor3 t(n);
  for (double& x : t.data()) x = uniform(rng);
  return t;
}

Tensor3 admissible_t(int n, int unactuated, std::mt19937_64& rng) {
  Tensor3 t(n);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j)
      for (int k = 0; k < n; ++k) t(i, j, k) = t(j, i, k) = uniform(rng);
  const Tensor3 s = sym(t);
  for (int i = 0; i < unactuated; ++i)
    for (int j = 0; j < unactuated; ++j)
      for (int k = 0; k < unactuated; ++k) t(i, j, k) -= s(i, j, k);
  return t;
}

SkewPairTensor skew_pair(int n, std::mt19937_64& rng) {
  Tensor3 t(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = j + 1; k < n; ++k) {
        t(i, j, k) = uniform(rng);
        t(i, k, j) = -t(i, j, k);
      }
  return SkewPairTensor(std::move(t));
}

GyroTensor gyro(int n, std::mt19937_64& rng) { return GyroTensor(admissible_t(n, n, rng)); }

Interconnection interconnection(int n, std::mt19937_64& rng) {
  Tensor3 t(n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        t(i, j, k) = uniform(rng);
        t(j, i, k) = -t(i, j, k);
      }
  return Interconnection(std::move(t));
}

Eigen::MatrixXd spd(int n, std::mt19937_64& rng) {
  Eigen::MatrixXd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = uniform(rng);
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(a).householderQ();
  Eigen::VectorXd eig(n);
  for (int i = 0; i < n; ++i) eig(i) = 0.5 + 1.25 * (uniform(rng) + 1.0);
  Eigen::MatrixXd m = q * eig.asDiagonal() * q.transpose();
  return 0.5 * (m + m.transpose());
}

Eigen::VectorXd vector(int n, std::mt19937_64& rng) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = uniform(rng);
  return v;
}

}  // namespace draw

namespace {

double asymmetry_any(const Tensor3& t) {
  const int n = t.dim();
  double r = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        const double x = t(i, j, k);
        r = std::max({r, std::abs(x - t(j, i, k)), std::abs(x - t(i, k, j)), std::abs(x - t(k, j, i))});
      }
  return r;
}

SuiteResult finish(SuiteResult r, double tol) {
  r.pass = r.pass && r.max_error <= tol;
  if (r.detail.empty()) {
    std::ostringstream os;
    os << "max error " << r.max_error << " (tolerance " << tol << ")";
    r.detail = os.str();
  }
  return r;
}

}  // namespace

SuiteResult dims_suite(const SelftestOptions& opts) {
  SuiteResult r{"dims", true, 0.0, ""};
  std::ostringstream os;
  for (int n = 2; n <= opts.dims_max; ++n) {
    long psi_rank = 0;
    const SpaceDims got = space_dims_by_rank(n, &psi_rank);
    const SpaceDims want = space_dims(n);
    if (!(got == want) || psi_rank != want.dim_c) {
      r.pass = false;
      os << "n=" << n << ": B " << got.dim_b << "/" << want.dim_b << ", C " << got.dim_c << "/" << want.dim_c
         << ", ker " << got.dim_ker_psi << "/" << want.dim_ker_psi << "; ";
    }
  }
  r.detail = r.pass ? "n = 2.." + std::to_string(opts.dims_max) + " match the closed forms" : os.str();
  return r;
}

SuiteResult sym_suite(const SelftestOptions& opts) {
  std::mt19937_64 rng(opts.seed);
  SuiteResult r{"sym", true, 0.0, ""};
  for (int trial = 0; trial < opts.draws; ++trial) {
    const int n = 2 + trial % 4;
    const Tensor3 s = sym(draw::tensor(n, rng));
    r.max_error = std::max(r.max_error, asymmetry_any(s));
    r.max_error = std::max(r.max_error, (sym(s) - s).max_abs());
    // A gyroscopic tensor has no fully symmetric part.
    r.max_error = std::max(r.max_error, sym(draw::gyro(n, rng).tensor()).max_abs());
  }
  return finish(r, 1e-12);
}

SuiteResult psi_suite(const SelftestOptions& opts) {
  std::mt19937_64 rng(opts.seed + 1);
  SuiteResult r{"psi", true, 0.0, ""};
  try {
    for (int trial = 0; trial < opts.draws; ++trial) {
      const int n = 2 + trial % 4;
      const GyroTensor c = psi(draw::skew_pair(n, rng));
      r.max_error = std::max({r.max_error, first_pair_asymmetry(c.tensor()), cyclic_sum_residual(c.tensor())});
      const GyroTensor target = draw::gyro(n, rng);
      r.max_error = std::max(r.max_error, (psi(psi_preimage(target)).tensor() - target.tensor()).max_abs());
    }
    for (int n = 3; n <= std::max(3, opts.dims_max); ++n) {
      const SkewPairTensor k = psi_kernel_element(n);
      if (k.tensor().max_abs() < 1e-6) r.pass = false;
      r.max_error = std::max(r.max_error, psi(k).tensor().max_abs() / k.tensor().max_abs());
    }
  } catch (const Error& e) {
    r.pass = false;
    r.detail = e.what();
  }
  return finish(r, 1e-12);
}

SuiteResult extension_suite(const SelftestOptions& opts) {
  std::mt19937_64 rng(opts.seed + 2);
  SuiteResult r{"extension", true, 0.0, ""};
  const int configs[][2] = {{2, 1}, {3, 1}, {3, 2}, {4, 2}};
  try {
    for (const auto& nm : configs) {
      const int n = nm[0];
      const int u = n - nm[1];
      for (int trial = 0; trial < opts.draws; ++trial) {
        const Tensor3 t = draw::admissible_t(n, u, rng);
        const GyroTensor c = extend_to_gyro(t, u);
        double agree = 0.0;
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j)
            for (int k = 0; k < u; ++k) agree = std::max(agree, std::abs(c(i, j, k) - t(i, j, k)));
        r.max_error = std::max({r.max_error, first_pair_asymmetry(c.tensor()), cyclic_sum_residual(c.tensor()), agree});
      }
    }
  } catch (const Error& e) {
    r.pass = false;
    r.detail = e.what();
  }
  return finish(r, 1e-12);
}

SuiteResult equivalence_suite(const SelftestOptions& opts) {
  std::mt19937_64 rng(opts.seed + 3);
  SuiteResult r{"equivalence", true, 0.0, ""};
  try {
    for (int trial = 0; trial < opts.draws; ++trial) {
      const int n = 3 + trial % 3;
      const Interconnection j = draw::interconnection(n, rng);
      const Eigen::MatrixXd mhat = draw::spd(n, rng);
      const Eigen::VectorXd p = draw::vector(n, rng);
      const Eigen::VectorXd via_j = force_from_j(j, mhat, p);
      const Eigen::VectorXd via_c = gyro_force(psi(j_to_b(j, mhat)), mhat, p);
      r.max_error = std::max(r.max_error, (via_j - via_c).lpNorm<Eigen::Infinity>());

      const Interconnection k = b_to_j(psi_kernel_element(n, n > 3 ? trial % 2 : 0), mhat);
      r.max_error = std::max(r.max_error, force_from_j(k, mhat, p).lpNorm<Eigen::Infinity>());
    }
  } catch (const Error& e) {
    r.pass = false;
    r.detail = e.what();
  }
  return finish(r, 1e-12);
}

std::vector<SuiteResult> run_selftest(const SelftestOptions& opts) {
  return {dims_suite(opts), sym_suite(opts), psi_suite(opts), extension_suite(opts), equivalence_suite(opts)};
}

}  // namespace idapbc
