#include "flowpose/body_model.hpp"

#include <cmath>

#include "flowpose/io.hpp"

namespace flowpose {

Mat BodyTemplate::joint_shape_basis() const {
  const int k = joint_count();
  const int s = shape_dim();
  Mat jb(k * 3, s);
  for (int i = 0; i < s; ++i) {
    const Mat slice = joint_regressor * shape_basis[static_cast<std::size_t>(i)];  // K x 3
    for (int j = 0; j < k; ++j)
      for (int c = 0; c < 3; ++c) jb(j * 3 + c, i) = slice(j, c);
  }
  return jb;
}

Mat BodyTemplate::vertex_shape_basis() const {
  const int v = vertex_count();
  const int s = shape_dim();
  Mat vb(v * 3, s);
  for (int i = 0; i < s; ++i)
    for (int r = 0; r < v; ++r)
      for (int c = 0; c < 3; ++c) vb(r * 3 + c, i) = shape_basis[static_cast<std::size_t>(i)](r, c);
  return vb;
}

void BodyTemplate::validate() const {
  const int v = vertex_count();
  const int k = joint_count();
  FLOWPOSE_REQUIRE(v >= k, "template: V must be >= K");
  FLOWPOSE_REQUIRE(static_cast<int>(parent.size()) == k, "template: parent size");
  FLOWPOSE_REQUIRE(joint_regressor.cols() == v, "template: regressor cols");
  FLOWPOSE_REQUIRE(skin_weights.rows() == v && skin_weights.cols() == k,
                   "template: skin weight shape");
  for (const auto& slice : shape_basis)
    FLOWPOSE_REQUIRE(slice.rows() == v && slice.cols() == 3, "template: basis shape");
  FLOWPOSE_REQUIRE(parent[0] == -1, "template: joint 0 must be the root");
  for (int j = 1; j < k; ++j)
    FLOWPOSE_REQUIRE(parent[static_cast<std::size_t>(j)] >= 0 &&
                         parent[static_cast<std::size_t>(j)] < j,
                     "template: parents must precede children");
  for (int j = 0; j < k; ++j) {
    FLOWPOSE_REQUIRE(joint_regressor.row(j).minCoeff() >= 0.0, "template: regressor negative");
    FLOWPOSE_REQUIRE(std::abs(joint_regressor.row(j).sum() - 1.0) <= 1e-6,
                     "template: regressor row sum");
  }
  for (int r = 0; r < v; ++r) {
    FLOWPOSE_REQUIRE(skin_weights.row(r).minCoeff() >= 0.0, "template: skin weight negative");
    FLOWPOSE_REQUIRE(std::abs(skin_weights.row(r).sum() - 1.0) <= 1e-6,
                     "template: skin weight row sum");
  }
}

std::vector<Mat3> SmplParams::rotations() const {
  const int k = static_cast<int>(pose.rows());
  std::vector<Mat3> out(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) {
    if (rep == PoseRep::AxisAngle) {
      FLOWPOSE_REQUIRE(pose.cols() == 3, "params: axis-angle pose must be K x 3");
      out[static_cast<std::size_t>(j)] = axis_angle_to_matrix<double>(pose.row(j).transpose());
    } else {
      FLOWPOSE_REQUIRE(pose.cols() == 6, "params: 6d pose must be K x 6");
      out[static_cast<std::size_t>(j)] = rot6d_to_matrix<double>(pose.row(j).transpose());
    }
  }
  return out;
}

Mat SmplParams::rotations_rowmajor() const {
  const auto rots = rotations();
  Mat out(static_cast<Eigen::Index>(rots.size()), 9);
  for (std::size_t j = 0; j < rots.size(); ++j)
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) out(static_cast<Eigen::Index>(j), r * 3 + c) = rots[j](r, c);
  return out;
}

Vec params_to_vec(const SmplParams& p) {
  FLOWPOSE_REQUIRE(p.rep == PoseRep::Rot6d, "params_to_vec: requires 6d representation");
  FLOWPOSE_REQUIRE(p.pose.rows() == kPoseJoints && p.pose.cols() == 6, "params_to_vec: pose shape");
  FLOWPOSE_REQUIRE(p.shape.size() == kShapeDim, "params_to_vec: shape dim");
  Vec out(kParamDim);
  for (int j = 0; j < kPoseJoints; ++j) out.segment<6>(j * 6) = p.pose.row(j).transpose();
  out.segment<kShapeDim>(kPoseJoints * 6) = p.shape;
  out.tail<3>() = p.camera;
  return out;
}

SmplParams vec_to_params(const Vec& flat) {
  FLOWPOSE_REQUIRE(flat.size() == kParamDim, "vec_to_params: length must be 157");
  SmplParams p;
  p.rep = PoseRep::Rot6d;
  p.pose.resize(kPoseJoints, 6);
  for (int j = 0; j < kPoseJoints; ++j) p.pose.row(j) = flat.segment<6>(j * 6).transpose();
  p.shape = flat.segment<kShapeDim>(kPoseJoints * 6);
  p.camera = flat.tail<3>();
  return p;
}

Mat shape_mesh(const BodyTemplate& tpl, const Vec& shape) {
  FLOWPOSE_REQUIRE(shape.size() == tpl.shape_dim(), "shape_mesh: coefficient count");
  Mat out = tpl.rest_vertices;
  for (int i = 0; i < tpl.shape_dim(); ++i)
    out += shape[i] * tpl.shape_basis[static_cast<std::size_t>(i)];
  return out;
}

MeshResult forward(const BodyTemplate& tpl, const SmplParams& params) {
  const int k = tpl.joint_count();
  FLOWPOSE_REQUIRE(static_cast<int>(params.pose.rows()) == k, "forward: pose joint count");
  const Mat shaped = shape_mesh(tpl, params.shape);
  const Mat rest_j = tpl.joint_regressor * shaped;  // K x 3
  const auto rots = params.rotations();

  MeshResult res;
  res.joint_transforms.resize(static_cast<std::size_t>(k));
  res.joints3d.resize(k, 3);
  res.joint_transforms[0].rot = rots[0];
  res.joint_transforms[0].pos = rest_j.row(0).transpose();
  for (int j = 1; j < k; ++j) {
    const int par = tpl.parent[static_cast<std::size_t>(j)];
    const auto& gp = res.joint_transforms[static_cast<std::size_t>(par)];
    auto& gj = res.joint_transforms[static_cast<std::size_t>(j)];
    gj.rot = gp.rot * rots[static_cast<std::size_t>(j)];
    gj.pos = gp.rot * (rest_j.row(j) - rest_j.row(par)).transpose() + gp.pos;
  }
  for (int j = 0; j < k; ++j)
    res.joints3d.row(j) = res.joint_transforms[static_cast<std::size_t>(j)].pos.transpose();

  const int v = tpl.vertex_count();
  res.vertices = Mat::Zero(v, 3);
  for (int j = 0; j < k; ++j) {
    const auto& g = res.joint_transforms[static_cast<std::size_t>(j)];
    const Mat posed = (shaped.rowwise() - rest_j.row(j)) * g.rot.transpose();
    res.vertices += tpl.skin_weights.col(j).asDiagonal() *
                    (posed.rowwise() + g.pos.transpose());
  }
  return res;
}

Mat project_weak_perspective(const Mat& points3d, const Vec3& camera) {
  FLOWPOSE_REQUIRE(points3d.cols() == 3, "project: points must be N x 3");
  FLOWPOSE_REQUIRE(camera[0] > 0.0, "project: scale must be positive");
  Mat out(points3d.rows(), 2);
  out.col(0) = camera[0] * points3d.col(0).array() + camera[1];
  out.col(1) = camera[0] * points3d.col(1).array() + camera[2];
  return out;
}

// --------------------------------------------------------------------------
// Toy template

namespace {

Mat toy_rest_joints() {
  Mat j(24, 3);
  j << 0.00, 0.00, 0.00,    // pelvis
      0.09, -0.06, 0.00,    // l_hip
      -0.09, -0.06, 0.00,   // r_hip
      0.00, 0.10, 0.00,     // spine1
      0.10, -0.50, 0.00,    // l_knee
      -0.10, -0.50, 0.00,   // r_knee
      0.00, 0.22, 0.00,     // spine2
      0.11, -0.90, 0.00,    // l_ankle
      -0.11, -0.90, 0.00,   // r_ankle
      0.00, 0.32, 0.00,     // spine3
      0.12, -0.97, 0.10,    // l_foot
      -0.12, -0.97, 0.10,   // r_foot
      0.00, 0.45, 0.00,     // neck
      0.07, 0.40, 0.00,     // l_collar
      -0.07, 0.40, 0.00,    // r_collar
      0.00, 0.58, 0.00,     // head
      0.17, 0.42, 0.00,     // l_shoulder
      -0.17, 0.42, 0.00,    // r_shoulder
      0.43, 0.42, 0.00,     // l_elbow
      -0.43, 0.42, 0.00,    // r_elbow
      0.68, 0.42, 0.00,     // l_wrist
      -0.68, 0.42, 0.00,    // r_wrist
      0.76, 0.42, 0.00,     // l_hand
      -0.76, 0.42, 0.00;    // r_hand
  return j;
}

const int kToyParent[24] = {-1, 0, 0,  0,  1,  2,  3,  4,  5,  6,  7,  8,
                            9,  9, 9,  12, 13, 14, 16, 17, 18, 19, 20, 21};

}  // namespace

BodyTemplate toy_template() {
  constexpr int kJ = 24;
  constexpr int kV = 128;
  const Mat joints = toy_rest_joints();

  BodyTemplate tpl;
  tpl.parent.assign(kToyParent, kToyParent + kJ);
  tpl.rest_vertices.resize(kV, 3);
  tpl.joint_regressor = Mat::Zero(kJ, kV);
  tpl.skin_weights = Mat::Zero(kV, kJ);

  // 4 anchor vertices per joint, arranged symmetrically so the regressed
  // joint equals the skeleton position exactly.
  const double r = 0.04;
  int v = 0;
  for (int j = 0; j < kJ; ++j) {
    const Vec3 c = joints.row(j).transpose();
    const Vec3 offs[4] = {Vec3(r, 0, 0), Vec3(-r, 0, 0),
                          (j % 2 == 0) ? Vec3(0, r, 0) : Vec3(0, 0, r),
                          (j % 2 == 0) ? Vec3(0, -r, 0) : Vec3(0, 0, -r)};
    for (const Vec3& o : offs) {
      tpl.rest_vertices.row(v) = (c + o).transpose();
      tpl.joint_regressor(j, v) = 0.25;
      tpl.skin_weights(v, j) = 1.0;
      ++v;
    }
  }
  // Flesh vertices along bones; regressor weight zero, skinning split 50/50.
  int bone = 1;
  while (v < kV) {
    const int j = bone % kJ == 0 ? 1 : bone % kJ;  // skip the root
    const int par = kToyParent[j];
    const Vec3 a = joints.row(par).transpose();
    const Vec3 b = joints.row(j).transpose();
    const double t = 0.35 + 0.3 * ((bone / kJ) % 2);
    const Vec3 axis = (b - a).norm() > 1e-9 ? (b - a).normalized() : Vec3(1, 0, 0);
    const Vec3 side = std::abs(axis.z()) < 0.9 ? axis.cross(Vec3(0, 0, 1)).normalized()
                                               : axis.cross(Vec3(1, 0, 0)).normalized();
    tpl.rest_vertices.row(v) = (a + t * (b - a) + 0.03 * side).transpose();
    tpl.skin_weights(v, j) = 0.5;
    tpl.skin_weights(v, par) = 0.5;
    ++v;
    ++bone;
  }

  // Deterministic smooth shape displacements: the first four are global
  // scale/axis stretches, the rest low-frequency trigonometric fields.
  tpl.shape_basis.resize(kShapeDim);
  for (int s = 0; s < kShapeDim; ++s) {
    Mat slice(kV, 3);
    for (int i = 0; i < kV; ++i) {
      const Vec3 p = tpl.rest_vertices.row(i).transpose();
      Vec3 d = Vec3::Zero();
      switch (s) {
        case 0: d = 0.06 * p; break;
        case 1: d = Vec3(0.05 * p.x(), 0, 0); break;
        case 2: d = Vec3(0, 0.05 * p.y(), 0); break;
        case 3: d = Vec3(0, 0, 0.05 * (p.z() + 0.1)); break;
        default: {
          const double w = 2.0 + 0.7 * s;
          d = 0.02 * Vec3(std::sin(w * p.y() + 0.3 * s), std::cos(w * p.x() - 0.2 * s),
                          std::sin(w * (p.z() + p.x()) + 0.1 * s));
          break;
        }
      }
      slice.row(i) = d.transpose();
    }
    tpl.shape_basis[static_cast<std::size_t>(s)] = std::move(slice);
  }
  tpl.validate();
  return tpl;
}

// --------------------------------------------------------------------------
// Template container ("BT1")

void save_template(const std::string& path, const BodyTemplate& tpl) {
  io::ByteSink s;
  s.put_bytes("BT1", 3);
  s.put_u8(1);
  s.put_named_f64("rest_vertices", tpl.rest_vertices);
  Mat basis(tpl.vertex_count() * 3, tpl.shape_dim());
  basis = tpl.vertex_shape_basis();
  s.put_named_f64("shape_basis", basis);
  s.put_named_f64("joint_regressor", tpl.joint_regressor);
  s.put_named_f64("skin_weights", tpl.skin_weights);
  Mat parent(tpl.joint_count(), 1);
  for (int j = 0; j < tpl.joint_count(); ++j) parent(j, 0) = tpl.parent[static_cast<std::size_t>(j)];
  s.put_named_f64("parent", parent);
  io::write_file(path, s.buf);
}

BodyTemplate load_template(const std::string& path) {
  const auto bytes = io::read_file(path);
  io::ByteSource src(bytes);
  char magic[3];
  src.get_bytes(magic, 3);
  if (std::string(magic, 3) != "BT1") throw FormatError("template: bad magic (want BT1)");
  const std::uint8_t version = src.get_u8();
  if (version != 1) throw FormatError("template: unsupported version");

  BodyTemplate tpl;
  Mat basis_flat, parent;
  bool have[5] = {false, false, false, false, false};
  while (src.remaining() > 0) {
    const std::string name = src.get_str();
    Mat m = src.get_mat_f64();
    if (name == "rest_vertices") {
      tpl.rest_vertices = std::move(m);
      have[0] = true;
    } else if (name == "shape_basis") {
      basis_flat = std::move(m);
      have[1] = true;
    } else if (name == "joint_regressor") {
      tpl.joint_regressor = std::move(m);
      have[2] = true;
    } else if (name == "skin_weights") {
      tpl.skin_weights = std::move(m);
      have[3] = true;
    } else if (name == "parent") {
      parent = std::move(m);
      have[4] = true;
    }
    // Unknown arrays (pose-corrective blendshapes etc.) are skipped.
  }
  for (bool h : have)
    if (!h) throw FormatError("template: missing required array");
  const int v = static_cast<int>(tpl.rest_vertices.rows());
  FLOWPOSE_REQUIRE(basis_flat.rows() == v * 3, "template: basis rows");
  tpl.shape_basis.resize(static_cast<std::size_t>(basis_flat.cols()));
  for (int s = 0; s < basis_flat.cols(); ++s) {
    Mat slice(v, 3);
    for (int r = 0; r < v; ++r)
      for (int c = 0; c < 3; ++c) slice(r, c) = basis_flat(r * 3 + c, s);
    tpl.shape_basis[static_cast<std::size_t>(s)] = std::move(slice);
  }
  tpl.parent.resize(static_cast<std::size_t>(parent.rows()));
  for (int j = 0; j < parent.rows(); ++j)
    tpl.parent[static_cast<std::size_t>(j)] = static_cast<int>(parent(j, 0));
  tpl.validate();
  return tpl;
}

// --------------------------------------------------------------------------
// Differentiable batched forward

ad::Var rot6d_to_matrix_ad(ad::Tape& tape, ad::Var pose6d) {
  const int rows = static_cast<int>(tape.val(pose6d).rows());
  ad::Var a1 = tape.block(pose6d, 0, 0, rows, 3);
  ad::Var a2 = tape.block(pose6d, 0, 3, rows, 3);
  ad::Var b1 = tape.l2_normalize_rows(a1);
  ad::Var d = tape.row_dot(b1, a2);
  ad::Var b2 = tape.l2_normalize_rows(tape.sub(a2, tape.mul_colvec(b1, d)));
  ad::Var b3 = tape.cross_rows(b1, b2);
  // Row-major layout r*3 + c with columns (b1 b2 b3).
  std::vector<ad::Var> cols;
  for (int r = 0; r < 3; ++r)
    for (ad::Var b : {b1, b2, b3}) cols.push_back(tape.block(b, 0, r, rows, 1));
  return tape.hcat(cols);
}

BodyForwardAd forward_ad(ad::Tape& tape, const BodyTemplate& tpl, ad::Var pose6d,
                         ad::Var shape, bool want_vertices) {
  const int k = tpl.joint_count();
  const Mat& pose_val = tape.val(pose6d);
  FLOWPOSE_REQUIRE(pose_val.cols() == 6 && pose_val.rows() % k == 0,
                   "forward_ad: pose6d must be (N*K) x 6");
  const int n = static_cast<int>(pose_val.rows()) / k;
  FLOWPOSE_REQUIRE(tape.val(shape).rows() == n && tape.val(shape).cols() == tpl.shape_dim(),
                   "forward_ad: shape must be N x S");

  BodyForwardAd out;
  out.rot_matrices = rot6d_to_matrix_ad(tape, pose6d);

  // Rest joints per frame: N x (K*3).
  const Mat jb = tpl.joint_shape_basis();  // (K*3) x S
  ad::Var jdisp = tape.matmul(shape, tape.constant(jb.transpose()));
  Mat rest_flat(1, k * 3);
  const Mat rest_j = tpl.rest_joints();
  for (int j = 0; j < k; ++j)
    for (int c = 0; c < 3; ++c) rest_flat(0, j * 3 + c) = rest_j(j, c);
  ad::Var rest = tape.add_rowvec(jdisp, tape.constant(rest_flat));

  // Per-joint rotation stacks (N*3) x 3 gathered out of the flat rotations.
  std::vector<ad::Var> rstack(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) {
    auto idx = std::make_shared<Eigen::MatrixXi>(n * 3, 3);
    for (int i = 0; i < n; ++i)
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
          (*idx)(i * 3 + r, c) = (i * k + j) * 9 + r * 3 + c;
    rstack[static_cast<std::size_t>(j)] = tape.gather(out.rot_matrices, idx);
  }

  std::vector<ad::Var> grot(static_cast<std::size_t>(k)), gpos(static_cast<std::size_t>(k));
  grot[0] = rstack[0];
  gpos[0] = tape.block(rest, 0, 0, n, 3);
  for (int j = 1; j < k; ++j) {
    const int par = tpl.parent[static_cast<std::size_t>(j)];
    ad::Var off = tape.sub(tape.block(rest, 0, j * 3, n, 3), tape.block(rest, 0, par * 3, n, 3));
    grot[static_cast<std::size_t>(j)] =
        tape.mat3_stack_mul(grot[static_cast<std::size_t>(par)], rstack[static_cast<std::size_t>(j)]);
    gpos[static_cast<std::size_t>(j)] = tape.add(
        tape.mat3_stack_vec_mul(grot[static_cast<std::size_t>(par)], off),
        gpos[static_cast<std::size_t>(par)]);
  }
  out.joints3d = tape.hcat(gpos);

  if (want_vertices) {
    const int v = tpl.vertex_count();
    const Mat vb = tpl.vertex_shape_basis();  // (V*3) x S
    ad::Var vb_c = tape.constant(vb);
    ad::Var rest_v = tape.constant(tpl.rest_vertices);
    std::vector<ad::Var> frames;
    frames.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      ad::Var beta_i = tape.transpose(tape.row(shape, i));  // S x 1
      ad::Var disp = tape.reshape(tape.matmul(vb_c, beta_i), v, 3);
      ad::Var shaped = tape.add(rest_v, disp);
      ad::Var acc;
      for (int j = 0; j < k; ++j) {
        ad::Var g3 = tape.block(grot[static_cast<std::size_t>(j)], i * 3, 0, 3, 3);
        ad::Var t = tape.row(gpos[static_cast<std::size_t>(j)], i);
        ad::Var rj = tape.block(rest, i, j * 3, 1, 3);
        ad::Var centered = tape.add_rowvec(shaped, tape.scalar_mul(rj, -1.0));
        ad::Var posed = tape.add_rowvec(tape.matmul(centered, tape.transpose(g3)), t);
        ad::Var weighted = tape.mul_colvec(posed, tape.constant(tpl.skin_weights.col(j)));
        acc = acc.valid() ? tape.add(acc, weighted) : weighted;
      }
      frames.push_back(acc);
    }
    out.vertices = tape.vcat(frames);
  }
  return out;
}

}  // namespace flowpose
