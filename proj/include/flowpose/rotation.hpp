#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "flowpose/types.hpp"

namespace flowpose {

// Rodrigues formula, series-guarded near zero angle.
template <typename S>
Eigen::Matrix<S, 3, 3> axis_angle_to_matrix(const Eigen::Matrix<S, 3, 1>& aa) {
  using Mat3S = Eigen::Matrix<S, 3, 3>;
  const S theta2 = aa.squaredNorm();
  const S theta = std::sqrt(theta2);
  S sinc, cosc;  // sin(t)/t and (1-cos(t))/t^2
  if (theta < S(1e-8)) {
    sinc = S(1) - theta2 / S(6);
    cosc = S(0.5) - theta2 / S(24);
  } else {
    sinc = std::sin(theta) / theta;
    cosc = (S(1) - std::cos(theta)) / theta2;
  }
  Mat3S k;
  k << S(0), -aa.z(), aa.y(), aa.z(), S(0), -aa.x(), -aa.y(), aa.x(), S(0);
  return Mat3S::Identity() + sinc * k + cosc * (k * k);
}

// Log map; returns an axis-angle with angle in [0, pi].
template <typename S>
Eigen::Matrix<S, 3, 1> matrix_to_axis_angle(const Eigen::Matrix<S, 3, 3>& r) {
  Eigen::AngleAxis<S> aa(r);
  return aa.angle() * aa.axis();
}

// Gram-Schmidt on the two stacked 3-vectors; the result takes them as the
// first two columns. Throws DegenerateInputError when they are parallel.
template <typename S>
Eigen::Matrix<S, 3, 3> rot6d_to_matrix(const Eigen::Matrix<S, 6, 1>& r) {
  using V3 = Eigen::Matrix<S, 3, 1>;
  const V3 a1 = r.template head<3>();
  const V3 a2 = r.template tail<3>();
  const S n1 = a1.norm();
  if (n1 < S(1e-8)) throw DegenerateInputError("rot6d: first vector near zero");
  const V3 b1 = a1 / n1;
  const V3 u2 = a2 - b1.dot(a2) * b1;
  const S n2 = u2.norm();
  if (n2 < S(1e-8)) throw DegenerateInputError("rot6d: vectors are parallel");
  const V3 b2 = u2 / n2;
  Eigen::Matrix<S, 3, 3> out;
  out.col(0) = b1;
  out.col(1) = b2;
  out.col(2) = b1.cross(b2);
  return out;
}

// First two columns, stacked.
template <typename S>
Eigen::Matrix<S, 6, 1> matrix_to_rot6d(const Eigen::Matrix<S, 3, 3>& r) {
  Eigen::Matrix<S, 6, 1> out;
  out.template head<3>() = r.col(0);
  out.template tail<3>() = r.col(1);
  return out;
}

// The 6d encoding of the identity rotation.
inline Eigen::Matrix<double, 6, 1> identity_rot6d() {
  Eigen::Matrix<double, 6, 1> r;
  r << 1, 0, 0, 0, 1, 0;
  return r;
}

}  // namespace flowpose
