#pragma once

#include <complex>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "idapbc/system.hpp"

namespace idapbc {

/// Linearisation at the origin:
///   A = [[0, M^{-1}(0)], [-D^2V(0), 0]],  B = [[0], [G(0)]].
struct Linearization {
  Eigen::MatrixXd a;
  Eigen::MatrixXd b;
  Eigen::MatrixXd mass;     // M(0)
  Eigen::MatrixXd hessian;  // D^2V(0)
  Eigen::MatrixXd input;    // G(0)
};

Linearization linearize(const MechSystem& sys);
Linearization linearize(const Eigen::MatrixXd& mass, const Eigen::MatrixXd& hessian,
                        const Eigen::MatrixXd& input);

struct ControllabilityResult {
  int rank = 0;
  bool controllable = false;
};

/// Rank of [B, AB, ..., A^{N-1}B] with singular values below
/// `rel_threshold * sigma_max` treated as zero.
ControllabilityResult controllability(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                      double rel_threshold = 1e-9);
ControllabilityResult controllability(const Linearization& lin, double rel_threshold = 1e-9);

struct ModeTolerances {
  double rank_threshold = 1e-9;
  double real_part = 1e-9;      // |Re| <= this counts as imaginary
  double imag_floor = 1e-9;     // |Im| >= this counts as nonzero
  double condition_max = 1e8;   // eigenvector condition bound for diagonalisability
};

struct UncontrollableModes {
  std::vector<std::complex<double>> eigenvalues;
  bool diagonalizable = true;
  double eigenvector_condition = 1.0;
  bool oscillatory = true;  // vacuously true when there are no modes
};

/// Spectrum of the uncontrollable block of the Kalman decomposition built
/// from an orthonormal basis of the controllable subspace.
UncontrollableModes uncontrollable_modes(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                         const ModeTolerances& tol = {});

enum class Verdict { ExponentiallyStabilizable, LyapunovStabilizableOnly, NotStabilizable };
const char* to_string(Verdict v);

struct StabilizabilityReport {
  Linearization lin;
  bool controllable = false;
  int kalman_rank = 0;
  std::vector<std::complex<double>> uncontrollable_eigs;
  bool oscillatory = true;
  Verdict verdict = Verdict::NotStabilizable;
  /// Which result the verdict rests on and under what assumptions.
  std::string basis;
};

StabilizabilityReport verdict(const MechSystem& sys, const ModeTolerances& tol = {});
StabilizabilityReport verdict(const Linearization& lin, int underactuation,
                              const ModeTolerances& tol = {});

struct MinimumCheck {
  double gradient_norm = 0.0;
  Eigen::VectorXd hessian_eigenvalues;  // of D^2Vhat(0), ascending
  Eigen::VectorXd mhat_eigenvalues;     // of Mhat(0), ascending
  bool gradient_ok = false;
  bool hessian_ok = false;
  bool mhat_ok = false;
  bool pass = false;
  std::string message;
};

/// dVhat(0) = 0, D^2Vhat(0) > 0 and Mhat(0) > 0.
MinimumCheck minimum_check(const ShapedDesign& design);

/// Linearised closed loop at the origin:
///   [[0, M^{-1}(0)], [-Mhat(0) M^{-1}(0) D^2Vhat(0), -G Kv G^T Mhat^{-1}(0)]].
Eigen::MatrixXd closed_loop_linearization(const MechSystem& sys, const ShapedDesign& design);

}  // namespace idapbc
