#pragma once

#include <string>
#include <vector>

#include "flowpose/rotation.hpp"
#include "flowpose/tape.hpp"
#include "flowpose/types.hpp"

namespace flowpose {

// Parametric articulated body: shape blendshapes, forward kinematics, linear
// blend skinning, joint regression. Lengths are in model units (1 unit = 1 m).
struct BodyTemplate {
  Mat rest_vertices;             // V x 3
  std::vector<Mat> shape_basis;  // S displacement slices, each V x 3
  Mat joint_regressor;           // K x V, rows sum to 1
  Mat skin_weights;              // V x K, rows sum to 1
  std::vector<int> parent;       // K entries, parent[0] == -1

  int vertex_count() const { return static_cast<int>(rest_vertices.rows()); }
  int joint_count() const { return static_cast<int>(joint_regressor.rows()); }
  int shape_dim() const { return static_cast<int>(shape_basis.size()); }

  Mat rest_joints() const { return joint_regressor * rest_vertices; }
  // (K*3) x S matrix mapping shape coefficients to joint displacements,
  // joint-major rows (row j*3 + coord).
  Mat joint_shape_basis() const;
  // (V*3) x S, vertex-major rows.
  Mat vertex_shape_basis() const;

  void validate() const;
};

enum class PoseRep { AxisAngle, Rot6d };

struct SmplParams {
  PoseRep rep = PoseRep::AxisAngle;
  Mat pose;              // K x 3 (axis-angle) or K x 6 (continuous 6d)
  Vec shape;             // shape coefficients, 10 for the standard layout
  Vec3 camera{1, 0, 0};  // weak-perspective (s, t_x, t_y), s > 0

  // Per-joint rotation matrices regardless of representation.
  std::vector<Mat3> rotations() const;
  // K x 9 row-major flattened rotations.
  Mat rotations_rowmajor() const;
};

// 24*6 pose + 10 shape + 3 camera = 157.
constexpr int kPoseJoints = 24;
constexpr int kShapeDim = 10;
constexpr int kParamDim = kPoseJoints * 6 + kShapeDim + 3;

Vec params_to_vec(const SmplParams& p);            // requires rep == Rot6d
SmplParams vec_to_params(const Vec& flat157);      // rep == Rot6d

struct RigidTransform {
  Mat3 rot = Mat3::Identity();
  Vec3 pos = Vec3::Zero();
};

struct MeshResult {
  Mat vertices;  // V x 3
  Mat joints3d;  // K x 3
  std::vector<RigidTransform> joint_transforms;
};

// T-bar plus shape displacements.
Mat shape_mesh(const BodyTemplate& tpl, const Vec& shape);

// Forward kinematics + linear blend skinning.
MeshResult forward(const BodyTemplate& tpl, const SmplParams& params);

// x2d = s * (x, y) + (t_x, t_y); depth is discarded.
Mat project_weak_perspective(const Mat& points3d, const Vec3& camera);

// Procedural desk-scale template: V=128, K=24, standard kinematic tree.
BodyTemplate toy_template();

// Binary template container, version tag "BT1". Unknown trailing arrays
// (e.g. pose-corrective blendshapes) are tolerated and ignored.
void save_template(const std::string& path, const BodyTemplate& tpl);
BodyTemplate load_template(const std::string& path);

// Differentiable batched body forward. Rows of pose6d are joint-major within
// frame-major order: row n*K + j is joint j of frame n. shape is N x S.
struct BodyForwardAd {
  ad::Var joints3d;      // N x (K*3), columns joint-major (x,y,z per joint)
  ad::Var rot_matrices;  // (N*K) x 9 row-major rotations
  ad::Var vertices;      // (N*V) x 3 when requested, otherwise invalid
};

BodyForwardAd forward_ad(ad::Tape& tape, const BodyTemplate& tpl, ad::Var pose6d,
                         ad::Var shape, bool want_vertices = false);

// Gram-Schmidt 6d -> row-major 9 columns on the tape; rows are independent.
ad::Var rot6d_to_matrix_ad(ad::Tape& tape, ad::Var pose6d);

}  // namespace flowpose
