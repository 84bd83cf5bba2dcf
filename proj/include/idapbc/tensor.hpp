#pragma once

#include <vector>

#include <Eigen/Dense>

namespace idapbc {

/// Dense covariant rank-3 tensor on R^n; entry(i,j,k) = T_ijk (0-based).
class Tensor3 {
 public:
  Tensor3() = default;
  explicit Tensor3(int n);

  int dim() const { return n_; }
  double operator()(int i, int j, int k) const { return data_[index(i, j, k)]; }
  double& operator()(int i, int j, int k) { return data_[index(i, j, k)]; }

  double max_abs() const;
  bool all_finite() const;

  /// T(u, v, w) = T_ijk u^i v^j w^k.
  double contract(const Eigen::VectorXd& u, const Eigen::VectorXd& v,
                  const Eigen::VectorXd& w) const;
  /// Covector F_k = T_ijk u^i v^j.
  Eigen::VectorXd contract_first_two(const Eigen::VectorXd& u, const Eigen::VectorXd& v) const;
  /// Components in the basis given by the columns of `basis`:
  /// result_abc = T(basis_a, basis_b, basis_c).
  Tensor3 change_basis(const Eigen::MatrixXd& basis) const;

  /// Flattened row-major (i,j,k) entries.
  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  Tensor3& operator+=(const Tensor3& other);
  Tensor3& operator-=(const Tensor3& other);
  Tensor3& operator*=(double s);
  friend Tensor3 operator+(Tensor3 a, const Tensor3& b) { return a += b; }
  friend Tensor3 operator-(Tensor3 a, const Tensor3& b) { return a -= b; }
  friend Tensor3 operator*(double s, Tensor3 a) { return a *= s; }

 private:
  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>((i * n_ + j) * n_ + k);
  }
  int n_ = 0;
  std::vector<double> data_;
};

/// Max over (i,j,k) of |T_ijk - T_jik|.
double first_pair_asymmetry(const Tensor3& t);
/// Max over (i,j,k) of |T_ijk + T_jki + T_kij|.
double cyclic_sum_residual(const Tensor3& t);

/// Element of C(V): symmetric in the first two slots with vanishing
/// cyclic sum. Both invariants are checked on construction.
class GyroTensor {
 public:
  explicit GyroTensor(int n) : base_(n) {}
  /// Throws InvariantViolation if either residual exceeds
  /// `rel_tol * max(1, |T|_max)`.
  explicit GyroTensor(Tensor3 t, double rel_tol = 1e-10);

  const Tensor3& tensor() const { return base_; }
  int dim() const { return base_.dim(); }
  double operator()(int i, int j, int k) const { return base_(i, j, k); }

 private:
  Tensor3 base_;
};

/// Element of B(V): B_ijk = -B_ikj.
class SkewPairTensor {
 public:
  explicit SkewPairTensor(int n) : base_(n) {}
  explicit SkewPairTensor(Tensor3 t, double rel_tol = 1e-10);

  const Tensor3& tensor() const { return base_; }
  int dim() const { return base_.dim(); }
  double operator()(int i, int j, int k) const { return base_(i, j, k); }

 private:
  Tensor3 base_;
};

/// Coefficients J^k_ij of a momentum-linear skew matrix J_ij(p) = J^k_ij p_k.
/// Stored as coeff(i, j, k) = J^k_ij.
class Interconnection {
 public:
  explicit Interconnection(int n) : coeffs_(n) {}
  explicit Interconnection(Tensor3 coeffs, double rel_tol = 1e-10);

  int dim() const { return coeffs_.dim(); }
  double coeff(int i, int j, int k) const { return coeffs_(i, j, k); }
  const Tensor3& coeffs() const { return coeffs_; }
  /// J(p) as an n x n skew matrix.
  Eigen::MatrixXd matrix(const Eigen::VectorXd& p) const;

 private:
  Tensor3 coeffs_;
};

/// Full symmetrisation: average over all 3! permutations of the indices.
Tensor3 sym(const Tensor3& t);

/// C_ijk = (B_ijk + B_jik) / 2.
GyroTensor psi(const SkewPairTensor& b);

/// Explicit preimage under psi: returns B with psi(B) == C.
SkewPairTensor psi_preimage(const GyroTensor& c);

struct SpaceDims {
  long dim_b = 0;
  long dim_c = 0;
  long dim_ker_psi = 0;
  friend bool operator==(const SpaceDims&, const SpaceDims&) = default;
};

/// Closed forms n^2(n-1)/2, n(n^2-1)/3, n(n-1)(n-2)/6.
SpaceDims space_dims(int n);

/// Same quantities obtained from ranks of a spanning set of B(V), the
/// linear constraints defining C(V), and the matrix of psi on that basis.
/// `psi_rank` receives the rank of the psi matrix (= dim C iff psi is onto).
SpaceDims space_dims_by_rank(int n, long* psi_rank = nullptr);

/// A nonzero element of ker psi obtained from the null space of the psi
/// matrix; requires n >= 3.
SkewPairTensor psi_kernel_element(int n, int which = 0);

/// Extends T (symmetric in its first two slots) to a gyroscopic tensor
/// agreeing with T whenever the third slot lies in span{e_0..e_{u-1}},
/// u = `unactuated`. The actuated-only block C_abc is set to zero.
/// Throws InvariantViolation when T is not first-pair symmetric or when the
/// cyclic sum of T on the unactuated block exceeds `rel_tol * |T|_max`.
GyroTensor extend_to_gyro(const Tensor3& t, int unactuated, double rel_tol = 1e-9);

/// Cyclic-sum residual of T restricted to indices < unactuated.
double unactuated_cyclic_residual(const Tensor3& t, int unactuated);

/// B_kij = J^l_ji Mhat_lk. Mhat must be symmetric positive definite.
SkewPairTensor j_to_b(const Interconnection& j, const Eigen::MatrixXd& mhat);
/// Inverse of j_to_b: J^l_ji = B_kij Mhat^{kl}.
Interconnection b_to_j(const SkewPairTensor& b, const Eigen::MatrixXd& mhat);

/// F^J_i = J^k_ij Mhat^{jl} p_k p_l, i.e. J(p) Mhat^{-1} p.
Eigen::VectorXd force_from_j(const Interconnection& j, const Eigen::MatrixXd& mhat,
                             const Eigen::VectorXd& p);

/// Gyroscopic force F_k = C_ijk Mhat^{il} Mhat^{jr} p_l p_r.
Eigen::VectorXd gyro_force(const GyroTensor& c, const Eigen::MatrixXd& mhat,
                           const Eigen::VectorXd& p);

/// Checks symmetry and positive definiteness; throws NotPositiveDefinite.
void require_spd(const Eigen::MatrixXd& m, const char* what);

}  // namespace idapbc
