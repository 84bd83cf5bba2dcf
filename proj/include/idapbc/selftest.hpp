#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "idapbc/tensor.hpp"

namespace idapbc {

/// Random draws used by the property suites.
namespace draw {

Tensor3 tensor(int n, std::mt19937_64& rng);
/// Symmetric in the first two slots, with vanishing cyclic sum on the
/// block of indices below `unactuated`.
Tensor3 admissible_t(int n, int unactuated, std::mt19937_64& rng);
SkewPairTensor skew_pair(int n, std::mt19937_64& rng);
GyroTensor gyro(int n, std::mt19937_64& rng);
Interconnection interconnection(int n, std::mt19937_64& rng);
/// Symmetric positive definite with eigenvalues in [0.5, 3].
Eigen::MatrixXd spd(int n, std::mt19937_64& rng);
Eigen::VectorXd vector(int n, std::mt19937_64& rng);

}  // namespace draw

struct SelftestOptions {
  std::uint64_t seed = 0;
  int dims_max = 6;
  int draws = 100;
};

struct SuiteResult {
  std::string name;
  bool pass = false;
  double max_error = 0.0;
  std::string detail;
};

SuiteResult dims_suite(const SelftestOptions& opts);
SuiteResult sym_suite(const SelftestOptions& opts);
SuiteResult psi_suite(const SelftestOptions& opts);
SuiteResult extension_suite(const SelftestOptions& opts);
SuiteResult equivalence_suite(const SelftestOptions& opts);

/// All suites in a fixed order.
std::vector<SuiteResult> run_selftest(const SelftestOptions& opts);

}  // namespace idapbc
