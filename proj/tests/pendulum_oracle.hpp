#pragma once

// Hand-derived closed forms for the pendulum on a cart with
//   M = [[1, c], [c, 2]],  Mhat = [[2c^2 - eps, (4 - eps) c], [(4 - eps) c, K + (4 - eps)^2 c^2 / (2c^2 - eps)]],
// c = cos q1, s = sin q1. Plain arithmetic only; nothing here goes through
// the expression engine.

#include <cmath>

#include <Eigen/Dense>

namespace idapbc::oracle {

struct Pendulum {
  double eps = 1.0;
  double k = 1.0;

  Eigen::Matrix2d mhat(double q1) const {
    const double c = std::cos(q1);
    const double e = 2 * c * c - eps;
    Eigen::Matrix2d m;
    m << e, (4 - eps) * c, (4 - eps) * c, k + (4 - eps) * (4 - eps) * c * c / e;
    return m;
  }

  Eigen::Matrix2d mhat_d1(double q1) const {
    const double c = std::cos(q1), s = std::sin(q1);
    const double e = 2 * c * c - eps;
    const double num = (4 - eps) * (4 - eps) * c * c;
    const double num_d = -2 * (4 - eps) * (4 - eps) * c * s;
    const double e_d = -4 * c * s;
    Eigen::Matrix2d m;
    m << -4 * c * s, -(4 - eps) * s, -(4 - eps) * s, (num_d * e - num * e_d) / (e * e);
    return m;
  }

  static Eigen::Matrix2d minv(double q1) {
    const double c = std::cos(q1);
    const double d = 2 - c * c;
    Eigen::Matrix2d m;
    m << 2 / d, -c / d, -c / d, 1 / d;
    return m;
  }

  static Eigen::Matrix2d minv_d1(double q1) {
    const double c = std::cos(q1), s = std::sin(q1);
    const double d = 2 - c * c;
    Eigen::Matrix2d m;
    m << -4 * c * s / (d * d), s / d + 2 * c * c * s / (d * d), s / d + 2 * c * c * s / (d * d), -2 * c * s / (d * d);
    return m;
  }

  // S_ab1 = -1/2 (Mhat_1r M^{rs} d_s Mhat_ab + d_1 M^{rs} Mhat_ra Mhat_sb); only
  // s = 1 contributes since everything depends on q1 alone.
  double s_ab1(int a, int b, double q1) const {
    const Eigen::Matrix2d mh = mhat(q1);
    const double flow = mh.row(0).dot(minv(q1).col(0));
    const Eigen::Matrix2d pulled = mh * minv_d1(q1) * mh;
    return -0.5 * (flow * mhat_d1(q1)(a, b) + pulled(a, b));
  }
  double s121(double q1) const { return s_ab1(0, 1, q1); }
  double s221(double q1) const { return s_ab1(1, 1, q1); }

  // Gradient of Vhat = -(10/eps) cos q1 + (q2 + 2 sin q1 / eps)^2.
  Eigen::Vector2d vhat_gradient(double q1, double q2) const {
    const double w = q2 + 2 * std::sin(q1) / eps;
    return {10 / eps * std::sin(q1) + 2 * w * 2 * std::cos(q1) / eps, 2 * w};
  }
};

}  // namespace idapbc::oracle
