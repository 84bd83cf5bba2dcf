#pragma once

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "idapbc/stability.hpp"
#include "idapbc/system.hpp"
#include "idapbc/tensor.hpp"

namespace idapbc {

/// A^{ij}_k = 1/2 Mhat_kl M^{lr} d(Mhat^{ij})/dq^r - 1/2 d(M^{ij})/dq^k,
/// stored as a(i, j, k). Requires M(q) and Mhat(q) positive definite.
Tensor3 a_tensor(const MechSystem& sys, const ShapedDesign& design, const Eigen::VectorXd& q);

/// T_ijk = -1/2 Mhat_kl M^{lt} dMhat_ij/dq^t - 1/2 dM^{rs}/dq^k Mhat_ri Mhat_sj.
/// Does not invert Mhat, so it is defined wherever Mhat(q) evaluates.
Tensor3 t_tensor(const MechSystem& sys, const ShapedDesign& design, const Eigen::VectorXd& q);

/// T(u, v, w) = A(Mhat u, Mhat v, w); the second route to the same tensor.
Tensor3 t_tensor_from_a(const Tensor3& a, const Eigen::MatrixXd& mhat);

/// W (dV/dq - Mhat M^{-1} dVhat/dq), length n - m.
Eigen::VectorXd potential_residual(const MechSystem& sys, const ShapedDesign& design,
                                   const Eigen::VectorXd& q);

/// Cyclic sums T(wa,wb,wc) + T(wb,wc,wa) + T(wc,wa,wb) over the unordered
/// triples a <= b <= c of annihilator rows.
Eigen::VectorXd kinetic_residual(const MechSystem& sys, const ShapedDesign& design,
                                 const Eigen::VectorXd& q);
/// Same, against caller-provided annihilator rows `w`.
Eigen::VectorXd kinetic_residual(const Tensor3& t, const Eigen::MatrixXd& w);

struct PdeCounts {
  long naive = 0;    // n(n+1)(n-m)/2
  long reduced = 0;  // (n-m+2)(n-m+1)(n-m)/6
};
PdeCounts pde_counts(int n, int m);

/// Orthogonal basis adapted to the input split at q: the first n-m columns
/// span the annihilator directions, the rest span the column space of G(q).
Eigen::MatrixXd adapted_basis(const MechSystem& sys, const Eigen::VectorXd& q);

/// Gyroscopic tensor at q with C(u, v, w) = T(u, v, w) for every annihilator
/// direction w. The extension is carried out in adapted_basis() and mapped
/// back. Throws InvariantViolation when the reduced kinetic matching
/// condition fails beyond `rel_tol`.
GyroTensor derive_gyro_at(const MechSystem& sys, const ShapedDesign& design,
                          const Eigen::VectorXd& q, double rel_tol = 1e-9);

/// Gyroscopic tensor field of a design: the explicit table when supplied,
/// otherwise the pointwise derivation above.
class GyroField {
 public:
  GyroField(const MechSystem& sys, const ShapedDesign& design, double rel_tol = 1e-9);
  GyroTensor operator()(const Eigen::VectorXd& q) const;
  /// Derivation without the existence check; used for diagnostics outside
  /// the verified region.
  GyroTensor unchecked(const Eigen::VectorXd& q) const;

 private:
  const MechSystem* sys_;
  const ShapedDesign* design_;
  double rel_tol_;
};

/// Tensor-product sampling grid; an axis with count 1 sits at `lo`.
struct GridAxis {
  double lo = -1.0;
  double hi = 1.0;
  int count = 11;
};

struct Grid {
  std::vector<GridAxis> axes;
  std::size_t size() const;
  std::vector<Eigen::VectorXd> points() const;
  /// "q1=-1:1:41,q2=-1:1:11"; unnamed variables get `fallback`.
  static Grid parse(const std::string& text, const std::vector<std::string>& vars,
                    GridAxis fallback = {});
  std::string to_string(const std::vector<std::string>& vars) const;
};

struct ResidualReport {
  Grid grid;
  std::vector<Eigen::VectorXd> points;
  std::vector<Eigen::VectorXd> potential_res;  // n - m entries per point
  std::vector<Eigen::VectorXd> kinetic_res;    // reduced PDE count per point
  std::vector<std::string> errors;             // per point, empty if evaluated
  double potential_max_abs = 0.0;
  double kinetic_max_abs = 0.0;
  Eigen::VectorXd potential_argmax;
  Eigen::VectorXd kinetic_argmax;
  std::size_t failed_points = 0;
};

ResidualReport residual_report(const MechSystem& sys, const ShapedDesign& design, const Grid& grid);

/// Columns: q..., pot_1..., kin_1... One row per grid point.
std::string residual_csv(const ResidualReport& report, const std::vector<std::string>& vars);

/// Symmetric box around the origin, found by shrinking one axis at a time,
/// such that Mhat is positive definite at every grid point strictly inside
/// it. `bound[i]` is the open bound on |q_i| (infinite when axis i was never
/// shrunk), `box` the same clipped to the grid, and `scale` the smallest
/// ratio of a bound to its grid half-width. `full` means no grid point failed.
struct PdDomain {
  double scale = 0.0;
  std::vector<double> bound;
  std::vector<std::pair<double, double>> box;
  bool full = false;
};
PdDomain pd_domain(const ShapedDesign& design, const Grid& grid);

/// The grid points lying strictly inside the box of `domain`, as a grid.
Grid restrict_to(const Grid& grid, const PdDomain& domain);

/// Constant positive definite pair satisfying W(0) (D^2V(0) - Mbar M^{-1}(0) Sbar) = 0,
/// usable as Mhat(0) and D^2Vhat(0).
struct LinearMatch {
  Eigen::MatrixXd mbar;
  Eigen::MatrixXd sbar;
};

/// Residual max-norm of the linearised potential matching condition.
double linear_match_residual(const Linearization& lin, const Eigen::MatrixXd& w,
                             const Eigen::MatrixXd& mbar, const Eigen::MatrixXd& sbar);

/// Validates a user-supplied certificate (residual <= 1e-9, eigenvalues >= 1e-6).
LinearMatch make_linear_match(const Linearization& lin, const Eigen::MatrixXd& w,
                              Eigen::MatrixXd mbar, Eigen::MatrixXd sbar);

/// Constructs a certificate for underactuation degree one; fully actuated
/// systems have no constraint rows and get (I, I). Throws Error carrying the
/// verdict when no certificate exists, and for degree two or more.
LinearMatch solve_linear_matching(const MechSystem& sys);
LinearMatch solve_linear_matching(const Linearization& lin, const Eigen::MatrixXd& w);

/// Degree-one kinetic matching PDE solved along q^1 by characteristics.
struct CharacteristicsResult {
  std::vector<double> q1;      // increasing grid where the solution is known
  std::vector<double> mhat11;  // solution values on that grid, including any with Mhat_11 <= 0
  double lo = 0.0;             // interval around 0 on which Mhat_11 > 0
  double hi = 0.0;
  double integrated_lo = 0.0;  // interval actually integrated
  double integrated_hi = 0.0;
  bool truncated = false;
  std::string reason;  // why [lo, hi] is smaller than the requested range
};

struct CharacteristicsOptions {
  double lo = -1.0;
  double hi = 1.0;
  int samples = 201;
  double tolerance = 1e-11;  // absolute and relative step tolerance
  double speed_floor = 1e-10;
};

/// `ansatz` holds the first-row entries Mhat_{1a} (a = 2..n), parsed over the
/// system variables plus one extra variable "m11" standing for the unknown.
/// The shaped entries not in the first row do not enter the PDE.
CharacteristicsResult solve_kinetic_characteristics(const MechSystem& sys,
                                                    const std::vector<Expr>& ansatz,
                                                    const LinearMatch& init,
                                                    const CharacteristicsOptions& opts = {});

}  // namespace idapbc
