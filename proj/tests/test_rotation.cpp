#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "flowpose/rng.hpp"
#include "flowpose/rotation.hpp"
#include "oracles.hpp"

using namespace flowpose;

TEST_CASE("axis_angle_to_matrix: zero rotation is identity") {
  const Mat3 r = axis_angle_to_matrix<double>(Vec3::Zero());
  CHECK((r - Mat3::Identity()).norm() == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("axis_angle_to_matrix: 90 degrees about z maps x to y") {
  const Mat3 r = axis_angle_to_matrix<double>(Vec3(0, 0, M_PI / 2));
  const Vec3 v = r * Vec3(1, 0, 0);
  CHECK(v.x() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(v.y() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(v.z() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("axis_angle_to_matrix matches quaternion oracle, always orthonormal") {
  Rng rng(42);
  for (int i = 0; i < 200; ++i) {
    Vec3 aa(rng.normal(), rng.normal(), rng.normal());
    if (i % 7 == 0) aa *= 1e-6;  // exercise the small-angle branch
    const Mat3 r = axis_angle_to_matrix<double>(aa);
    const Mat3 q = oracle::quaternion_rotation(aa);
    CHECK((r - q).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(r.determinant() == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("rot6d_to_matrix: canonical inputs") {
  Eigen::Matrix<double, 6, 1> id;
  id << 1, 0, 0, 0, 1, 0;
  CHECK((rot6d_to_matrix<double>(id) - Mat3::Identity()).norm() < 1e-15);
}

TEST_CASE("rot6d round trip is identity on SO(3)") {
  Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    const Mat3 r = axis_angle_to_matrix<double>(Vec3(rng.normal(), rng.normal(), rng.normal()));
    const Mat3 back = rot6d_to_matrix<double>(matrix_to_rot6d<double>(r));
    CHECK((back - r).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("rot6d_to_matrix matches explicit Gram-Schmidt oracle") {
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    Eigen::Matrix<double, 6, 1> v;
    for (int j = 0; j < 6; ++j) v[j] = rng.normal();
    const Mat3 r = rot6d_to_matrix<double>(v);
    const Mat3 o = oracle::gram_schmidt(v);
    CHECK((r - o).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(r.determinant() == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("rot6d_to_matrix rejects parallel inputs") {
  Eigen::Matrix<double, 6, 1> v;
  v << 1, 2, 3, 2, 4, 6;
  CHECK_THROWS_AS((void)rot6d_to_matrix<double>(v), DegenerateInputError);
  v << 0, 0, 0, 1, 0, 0;
  CHECK_THROWS_AS((void)rot6d_to_matrix<double>(v), DegenerateInputError);
}

TEST_CASE("matrix_to_axis_angle inverts axis_angle_to_matrix") {
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    Vec3 aa(rng.normal(), rng.normal(), rng.normal());
    aa = aa.normalized() * rng.uniform(0.01, 3.0);  // keep the angle under pi so the log is unique
    const Vec3 back = matrix_to_axis_angle<double>(axis_angle_to_matrix<double>(aa));
    CHECK((back - aa).norm() < 1e-9);
  }
}
