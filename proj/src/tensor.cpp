#include "idapbc/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "idapbc/errors.hpp"

namespace idapbc {

Tensor3::Tensor3(int n) : n_(n), data_(static_cast<std::size_t>(n * n * n), 0.0) {
  if (n < 1) throw Error("tensor dimension must be at least 1");
}

double Tensor3::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

bool Tensor3::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double Tensor3::contract(const Eigen::VectorXd& u, const Eigen::VectorXd& v,
                         const Eigen::VectorXd& w) const {
  return contract_first_two(u, v).dot(w);
}

Eigen::VectorXd Tensor3::contract_first_two(const Eigen::VectorXd& u,
                                            const Eigen::VectorXd& v) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n_);
  for (int i = 0; i < n_; ++i) {
    for (int j = 0; j < n_; ++j) {
      const double uv = u(i) * v(j);
      if (uv == 0.0) continue;
      for (int k = 0; k < n_; ++k) out(k) += (*this)(i, j, k) * uv;
    }
  }
  return out;
}

Tensor3 Tensor3::change_basis(const Eigen::MatrixXd& basis) const {
  // Contract one slot at a time: O(n^4) instead of O(n^6).
  const int n = n_;
  Tensor3 s1(n), s2(n), out(n);
  for (int a = 0; a < n; ++a)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        double acc = 0.0;
        for (int i = 0; i < n; ++i) acc += basis(i, a) * (*this)(i, j, k);
        s1(a, j, k) = acc;
      }
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int k = 0; k < n; ++k) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j) acc += basis(j, b) * s1(a, j, k);
        s2(a, b, k) = acc;
      }
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c) {
        double acc = 0.0;
        for (int k = 0; k < n; ++k) acc += basis(k, c) * s2(a, b, k);
        out(a, b, c) = acc;
      }
  return out;
}

Tensor3& Tensor3::operator+=(const Tensor3& other) {
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor3& Tensor3::operator-=(const Tensor3& other) {
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Tensor3& Tensor3::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

double first_pair_asymmetry(const Tensor3& t) {
  double r = 0.0;
  const int n = t.dim();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) r = std::max(r, std::abs(t(i, j, k) - t(j, i, k)));
  return r;
}

double cyclic_sum_residual(const Tensor3& t) { return unactuated_cyclic_residual(t, t.dim()); }

double unactuated_cyclic_residual(const Tensor3& t, int unactuated) {
  double r = 0.0;
  for (int i = 0; i < unactuated; ++i)
    for (int j = 0; j < unactuated; ++j)
      for (int k = 0; k < unactuated; ++k)
        r = std::max(r, std::abs(t(i, j, k) + t(j, k, i) + t(k, i, j)));
  return r;
}

GyroTensor::GyroTensor(Tensor3 t, double rel_tol) : base_(std::move(t)) {
  const double scale = rel_tol * std::max(1.0, base_.max_abs());
  if (!base_.all_finite()) throw InvariantViolation("gyroscopic tensor has non-finite entries", NAN);
  if (const double r = first_pair_asymmetry(base_); r > scale) {
    throw InvariantViolation("gyroscopic tensor not symmetric in its first two slots", r);
  }
  if (const double r = cyclic_sum_residual(base_); r > scale) {
    throw InvariantViolation("gyroscopic tensor has nonzero cyclic sum", r);
  }
}

SkewPairTensor::SkewPairTensor(Tensor3 t, double rel_tol) : base_(std::move(t)) {
  const double scale = rel_tol * std::max(1.0, base_.max_abs());
  double r = 0.0;
  const int n = base_.dim();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) r = std::max(r, std::abs(base_(i, j, k) + base_(i, k, j)));
  if (r > scale) throw InvariantViolation("tensor not skew in its last two slots", r);
}

Interconnection::Interconnection(Tensor3 coeffs, double rel_tol) : coeffs_(std::move(coeffs)) {
  const double scale = rel_tol * std::max(1.0, coeffs_.max_abs());
  double r = 0.0;
  const int n = coeffs_.dim();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) r = std::max(r, std::abs(coeffs_(i, j, k) + coeffs_(j, i, k)));
  if (r > scale) throw InvariantViolation("interconnection coefficients not skew in (i,j)", r);
}

Eigen::MatrixXd Interconnection::matrix(const Eigen::VectorXd& p) const {
  const int n = dim();
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(n, n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int k = 0; k < n; ++k) j(a, b) += coeffs_(a, b, k) * p(k);
  return j;
}

Tensor3 sym(const Tensor3& t) {
  const int n = t.dim();
  Tensor3 out(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        out(i, j, k) = (t(i, j, k) + t(j, k, i) + t(k, i, j) + t(j, i, k) + t(k, j, i) +
                        t(i, k, j)) / 6.0;
      }
  return out;
}

GyroTensor psi(const SkewPairTensor& b) {
  const int n = b.dim();
  Tensor3 c(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) c(i, j, k) = 0.5 * (b(i, j, k) + b(j, i, k));
  return GyroTensor(std::move(c));
}

SkewPairTensor psi_preimage(const GyroTensor& c) {
  const int n = c.dim();
  Tensor3 b(n);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < n; ++k) {
      if (i == k) continue;
      b(i, i, k) = c(i, i, k);
      b(i, k, i) = -c(i, i, k);
    }
  }
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      for (int k = j + 1; k < n; ++k) {
        b(i, j, k) = 2.0 * c(i, j, k);
        b(i, k, j) = -2.0 * c(i, j, k);
        b(k, i, j) = -2.0 * c(j, k, i);
        b(k, j, i) = 2.0 * c(j, k, i);
      }
  return SkewPairTensor(std::move(b));
}

SpaceDims space_dims(int n) {
  const long nn = n;
  return {nn * nn * (nn - 1) / 2, nn * (nn * nn - 1) / 3, nn * (nn - 1) * (nn - 2) / 6};
}

namespace {

long numeric_rank(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(m);
  qr.setThreshold(1e-10);
  return qr.rank();
}

// Columns: the elementary skew tensors E^(i;j<k) with E_ijk = 1, E_ikj = -1.
Eigen::MatrixXd b_space_spanning_set(int n) {
  const int n3 = n * n * n;
  std::vector<Eigen::VectorXd> cols;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = j + 1; k < n; ++k) {
        Eigen::VectorXd v = Eigen::VectorXd::Zero(n3);
        v((i * n + j) * n + k) = 1.0;
        v((i * n + k) * n + j) = -1.0;
        cols.push_back(v);
      }
  Eigen::MatrixXd out(n3, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) out.col(static_cast<Eigen::Index>(c)) = cols[c];
  return out;
}

// Linear map psi on flattened tensors.
Eigen::MatrixXd psi_matrix(int n) {
  const int n3 = n * n * n;
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n3, n3);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        const int row = (i * n + j) * n + k;
        p(row, (i * n + j) * n + k) += 0.5;
        p(row, (j * n + i) * n + k) += 0.5;
      }
  return p;
}

}  // namespace

SpaceDims space_dims_by_rank(int n, long* psi_rank) {
  const int n3 = n * n * n;
  const Eigen::MatrixXd basis_b = b_space_spanning_set(n);
  const long dim_b = numeric_rank(basis_b);

  Eigen::MatrixXd constraints = Eigen::MatrixXd::Zero(2 * n3, n3);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        const int row = (i * n + j) * n + k;
        constraints(row, (i * n + j) * n + k) += 1.0;
        constraints(row, (j * n + i) * n + k) -= 1.0;
        constraints(n3 + row, (i * n + j) * n + k) += 1.0;
        constraints(n3 + row, (j * n + k) * n + i) += 1.0;
        constraints(n3 + row, (k * n + i) * n + j) += 1.0;
      }
  const long dim_c = n3 - numeric_rank(constraints);

  const long rank_psi = numeric_rank(psi_matrix(n) * basis_b);
  if (psi_rank) *psi_rank = rank_psi;
  return {dim_b, dim_c, dim_b - rank_psi};
}

SkewPairTensor psi_kernel_element(int n, int which) {
  const Eigen::MatrixXd basis_b = b_space_spanning_set(n);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(psi_matrix(n) * basis_b);
  lu.setThreshold(1e-10);
  const Eigen::MatrixXd kernel = lu.kernel();
  if (lu.rank() == basis_b.cols() || which < 0 || which >= kernel.cols()) {
    throw Error("psi has no kernel element with index " + std::to_string(which) +
                " for n = " + std::to_string(n));
  }
  Eigen::VectorXd flat = basis_b * kernel.col(which);
  flat /= flat.cwiseAbs().maxCoeff();
  Tensor3 b(n);
  for (int idx = 0; idx < flat.size(); ++idx) b.data()[static_cast<std::size_t>(idx)] = flat(idx);
  return SkewPairTensor(std::move(b));
}

GyroTensor extend_to_gyro(const Tensor3& t, int unactuated, double rel_tol) {
  const int n = t.dim();
  if (unactuated < 0 || unactuated > n) throw Error("unactuated block size out of range");
  const double scale = rel_tol * t.max_abs();
  if (const double r = first_pair_asymmetry(t); r > scale) {
    throw InvariantViolation("T is not symmetric in its first two slots", r);
  }
  if (const double r = unactuated_cyclic_residual(t, unactuated); r > scale) {
    throw InvariantViolation("cyclic sum of T on the unactuated block does not vanish", r);
  }
  const auto act = [unactuated](int idx) { return idx >= unactuated; };
  Tensor3 c(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        double v = 0.0;
        if (!act(k)) {
          v = t(i, j, k);
        } else if (!act(i) && !act(j)) {
          v = -t(j, k, i) - t(k, i, j);
        } else if (!act(i) && act(j)) {
          v = -0.5 * t(j, k, i);
        } else if (act(i) && !act(j)) {
          v = -0.5 * t(k, i, j);
        }
        c(i, j, k) = v;
      }
  return GyroTensor(std::move(c), std::max(rel_tol, 1e-10));
}

void require_spd(const Eigen::MatrixXd& m, const char* what) {
  if (m.rows() != m.cols()) throw Error(std::string(what) + " is not square");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw Error(std::string(what) + " is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  if (!(lo > 0.0)) throw NotPositiveDefinite(std::string(what) + " is not positive definite", lo);
}

SkewPairTensor j_to_b(const Interconnection& j, const Eigen::MatrixXd& mhat) {
  require_spd(mhat, "Mhat");
  const int n = j.dim();
  Tensor3 b(n);
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int jj = 0; jj < n; ++jj) {
        double acc = 0.0;
        for (int l = 0; l < n; ++l) acc += j.coeff(jj, i, l) * mhat(l, k);
        b(k, i, jj) = acc;
      }
  return SkewPairTensor(std::move(b));
}

Interconnection b_to_j(const SkewPairTensor& b, const Eigen::MatrixXd& mhat) {
  require_spd(mhat, "Mhat");
  const Eigen::MatrixXd inv = mhat.llt().solve(Eigen::MatrixXd::Identity(mhat.rows(), mhat.cols()));
  const int n = b.dim();
  Tensor3 j(n);
  for (int jj = 0; jj < n; ++jj)
    for (int i = 0; i < n; ++i)
      for (int l = 0; l < n; ++l) {
        double acc = 0.0;
        for (int k = 0; k < n; ++k) acc += b(k, i, jj) * inv(k, l);
        j(jj, i, l) = acc;
      }
  return Interconnection(std::move(j));
}

Eigen::VectorXd force_from_j(const Interconnection& j, const Eigen::MatrixXd& mhat,
                             const Eigen::VectorXd& p) {
  const Eigen::VectorXd v = mhat.llt().solve(p);
  return j.matrix(p) * v;
}

Eigen::VectorXd gyro_force(const GyroTensor& c, const Eigen::MatrixXd& mhat,
                           const Eigen::VectorXd& p) {
  const Eigen::VectorXd v = mhat.llt().solve(p);
  return c.tensor().contract_first_two(v, v);
}

}  // namespace idapbc
