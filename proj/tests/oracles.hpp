#pragma once

// Test-only reference implementations. Everything here is written as plain
// loops, independent of the library's tape/vectorized paths, so the two
// routes can disagree when one of them is wrong.

#include <cmath>
#include <functional>

#include "flowpose/body_model.hpp"
#include "flowpose/rng.hpp"
#include "flowpose/types.hpp"

namespace oracle {

using flowpose::Mat;
using flowpose::Mat3;
using flowpose::Vec;
using flowpose::Vec3;

// Rotation about an axis computed through the quaternion exponential, as an
// independent route to the Rodrigues formula.
inline Mat3 quaternion_rotation(const Vec3& aa) {
  const double theta = aa.norm();
  double w, s;
  if (theta < 1e-12) {
    w = 1.0;
    s = 0.5;
  } else {
    w = std::cos(0.5 * theta);
    s = std::sin(0.5 * theta) / theta;
  }
  const double x = s * aa.x(), y = s * aa.y(), z = s * aa.z();
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

// Explicit Gram-Schmidt, scalar arithmetic only.
inline Mat3 gram_schmidt(const Eigen::Matrix<double, 6, 1>& v) {
  double a1[3] = {v[0], v[1], v[2]};
  double a2[3] = {v[3], v[4], v[5]};
  double n1 = std::sqrt(a1[0] * a1[0] + a1[1] * a1[1] + a1[2] * a1[2]);
  double b1[3] = {a1[0] / n1, a1[1] / n1, a1[2] / n1};
  double dot = b1[0] * a2[0] + b1[1] * a2[1] + b1[2] * a2[2];
  double u2[3] = {a2[0] - dot * b1[0], a2[1] - dot * b1[1], a2[2] - dot * b1[2]};
  double n2 = std::sqrt(u2[0] * u2[0] + u2[1] * u2[1] + u2[2] * u2[2]);
  double b2[3] = {u2[0] / n2, u2[1] / n2, u2[2] / n2};
  double b3[3] = {b1[1] * b2[2] - b1[2] * b2[1], b1[2] * b2[0] - b1[0] * b2[2],
                  b1[0] * b2[1] - b1[1] * b2[0]};
  Mat3 r;
  for (int i = 0; i < 3; ++i) {
    r(i, 0) = b1[i];
    r(i, 1) = b2[i];
    r(i, 2) = b3[i];
  }
  return r;
}

inline Mat naive_matmul(const Mat& a, const Mat& b) {
  Mat c = Mat::Zero(a.rows(), b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.cols(); ++j)
      for (Eigen::Index k = 0; k < a.cols(); ++k) c(i, j) += a(i, k) * b(k, j);
  return c;
}

inline Mat random_mat(flowpose::Rng& rng, int rows, int cols, double scale = 1.0) {
  Mat m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = scale * rng.normal();
  return m;
}

// Central finite differences of a scalar function with respect to x.
inline Mat fd_grad(const std::function<double()>& f, Mat& x, double h = 1e-6) {
  Mat g(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const double keep = x(r, c);
      x(r, c) = keep + h;
      const double fp = f();
      x(r, c) = keep - h;
      const double fm = f();
      x(r, c) = keep;
      g(r, c) = (fp - fm) / (2.0 * h);
    }
  return g;
}

// Max entrywise error of `analytic` against `reference`, relative with an
// absolute floor so near-zero entries compare sanely.
inline double max_rel_err(const Mat& analytic, const Mat& reference, double abs_floor = 1e-7) {
  double worst = 0.0;
  for (Eigen::Index r = 0; r < analytic.rows(); ++r)
    for (Eigen::Index c = 0; c < analytic.cols(); ++c) {
      const double a = analytic(r, c), b = reference(r, c);
      const double denom = std::max({std::abs(a), std::abs(b), abs_floor});
      worst = std::max(worst, std::abs(a - b) / denom);
    }
  return worst;
}

// Tiny k-joint chain along +x, two anchor vertices per joint.
inline flowpose::BodyTemplate chain_template(int k) {
  flowpose::BodyTemplate tpl;
  const int v = 2 * k;
  tpl.rest_vertices.resize(v, 3);
  tpl.joint_regressor = Mat::Zero(k, v);
  tpl.skin_weights = Mat::Zero(v, k);
  tpl.parent.assign(static_cast<std::size_t>(k), 0);
  tpl.parent[0] = -1;
  for (int j = 1; j < k; ++j) tpl.parent[static_cast<std::size_t>(j)] = j - 1;
  for (int j = 0; j < k; ++j) {
    const double x = 0.3 * j;
    tpl.rest_vertices.row(2 * j) = Eigen::RowVector3d(x, 0.05, 0.0);
    tpl.rest_vertices.row(2 * j + 1) = Eigen::RowVector3d(x, -0.05, 0.0);
    tpl.joint_regressor(j, 2 * j) = 0.5;
    tpl.joint_regressor(j, 2 * j + 1) = 0.5;
    tpl.skin_weights(2 * j, j) = 1.0;
    tpl.skin_weights(2 * j + 1, j) = 1.0;
  }
  tpl.shape_basis.resize(2);
  Mat b0(v, 3), b1(v, 3);
  for (int i = 0; i < v; ++i) {
    b0.row(i) = 0.1 * tpl.rest_vertices.row(i);
    b1.row(i) = Eigen::RowVector3d(0.0, 0.02 * std::sin(1.0 + i), 0.015 * std::cos(0.5 * i));
  }
  tpl.shape_basis[0] = b0;
  tpl.shape_basis[1] = b1;
  tpl.validate();
  return tpl;
}

// Per-vertex transform accumulation, the explicit kinematic-chain route.
inline Mat chain_lbs_reference(const flowpose::BodyTemplate& tpl,
                               const flowpose::SmplParams& params) {
  const int k = tpl.joint_count();
  const Mat shaped = flowpose::shape_mesh(tpl, params.shape);
  const Mat rest_j = tpl.joint_regressor * shaped;
  const auto rots = params.rotations();
  std::vector<Mat3> grot(static_cast<std::size_t>(k));
  std::vector<Vec3> gpos(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) {
    if (tpl.parent[static_cast<std::size_t>(j)] < 0) {
      grot[static_cast<std::size_t>(j)] = rots[static_cast<std::size_t>(j)];
      gpos[static_cast<std::size_t>(j)] = rest_j.row(j).transpose();
    } else {
      const int p = tpl.parent[static_cast<std::size_t>(j)];
      grot[static_cast<std::size_t>(j)] =
          grot[static_cast<std::size_t>(p)] * rots[static_cast<std::size_t>(j)];
      gpos[static_cast<std::size_t>(j)] =
          grot[static_cast<std::size_t>(p)] * (rest_j.row(j) - rest_j.row(p)).transpose() +
          gpos[static_cast<std::size_t>(p)];
    }
  }
  Mat out = Mat::Zero(tpl.vertex_count(), 3);
  for (int i = 0; i < tpl.vertex_count(); ++i) {
    Vec3 acc = Vec3::Zero();
    for (int j = 0; j < k; ++j) {
      const double w = tpl.skin_weights(i, j);
      if (w == 0.0) continue;
      const Vec3 local = shaped.row(i).transpose() - rest_j.row(j).transpose();
      acc += w * (grot[static_cast<std::size_t>(j)] * local + gpos[static_cast<std::size_t>(j)]);
    }
    out.row(i) = acc.transpose();
  }
  return out;
}

}  // namespace oracle
