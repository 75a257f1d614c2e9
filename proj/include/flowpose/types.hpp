#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace flowpose {

using Scalar = double;

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;
using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;
using Vec2 = Eigen::Vector2d;
using MatF = Eigen::MatrixXf;  // bulk frame/flow storage, 32-bit on disk and in memory

template <typename S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;

// Error taxonomy. The CLI maps DivergenceError to exit code 2 and
// FormatError/VariantError to exit code 3.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct VariantError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DegenerateInputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SeedOverlapError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#define FLOWPOSE_REQUIRE(cond, msg)                                          \
  do {                                                                       \
    if (!(cond)) throw std::invalid_argument(std::string("flowpose: ") + (msg)); \
  } while (0)

}  // namespace flowpose
