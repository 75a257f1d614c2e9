#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>

#include "flowpose/body_model.hpp"
#include "flowpose/io.hpp"
#include "oracles.hpp"

using namespace flowpose;

namespace {

Mat random_pose6d(Rng& rng, int k, double spread = 1.0) {
  Mat p(k, 6);
  for (int j = 0; j < k; ++j) {
    Eigen::Matrix<double, 6, 1> v = identity_rot6d();
    for (int i = 0; i < 6; ++i) v[i] += spread * rng.normal();
    p.row(j) = v.transpose();
  }
  return p;
}

SmplParams random_params(Rng& rng, int k, int shape_dim) {
  SmplParams p;
  p.rep = PoseRep::Rot6d;
  p.pose = random_pose6d(rng, k, 0.6);
  p.shape = Vec::Zero(shape_dim);
  for (int i = 0; i < shape_dim; ++i) p.shape[i] = 0.5 * rng.normal();
  p.camera = Vec3(1.5, 0.1, -0.2);
  return p;
}

}  // namespace

TEST_CASE("toy template: structural invariants") {
  const BodyTemplate tpl = toy_template();
  CHECK(tpl.vertex_count() == 128);
  CHECK(tpl.joint_count() == 24);
  CHECK(tpl.vertex_count() >= tpl.joint_count());
  for (int j = 0; j < 24; ++j) CHECK(tpl.joint_regressor.row(j).sum() == doctest::Approx(1.0).epsilon(1e-9));
  for (int v = 0; v < 128; ++v) CHECK(tpl.skin_weights.row(v).sum() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(tpl.parent[0] == -1);
}

TEST_CASE("shape_mesh: zero shape is the rest mesh, and it is linear") {
  const BodyTemplate tpl = toy_template();
  const Vec zero = Vec::Zero(10);
  CHECK((shape_mesh(tpl, zero) - tpl.rest_vertices).cwiseAbs().maxCoeff() == 0.0);

  Vec b0 = Vec::Zero(10);
  b0[3] = 1.0;
  const Mat d1 = shape_mesh(tpl, b0) - tpl.rest_vertices;
  const Mat d2 = shape_mesh(tpl, 2.0 * b0) - tpl.rest_vertices;
  CHECK((d2 - 2.0 * d1).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("shape_mesh matches naive summation oracle") {
  const BodyTemplate tpl = toy_template();
  Rng rng(21);
  Vec beta(10);
  for (int i = 0; i < 10; ++i) beta[i] = rng.normal();
  Mat want = tpl.rest_vertices;
  for (int s = 0; s < 10; ++s)
    for (int v = 0; v < tpl.vertex_count(); ++v)
      for (int c = 0; c < 3; ++c) want(v, c) += beta[s] * tpl.shape_basis[s](v, c);
  CHECK((shape_mesh(tpl, beta) - want).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("forward: zero pose and shape reproduce the template") {
  const BodyTemplate tpl = toy_template();
  SmplParams p;
  p.rep = PoseRep::AxisAngle;
  p.pose = Mat::Zero(24, 3);
  p.shape = Vec::Zero(10);
  const MeshResult res = forward(tpl, p);
  CHECK((res.vertices - tpl.rest_vertices).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((res.joints3d - tpl.rest_joints()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("forward: global root rotation moves everything rigidly") {
  const BodyTemplate tpl = toy_template();
  const Vec3 aa(0.3, -0.8, 0.5);
  const Mat3 r = axis_angle_to_matrix<double>(aa);
  SmplParams p;
  p.rep = PoseRep::AxisAngle;
  p.pose = Mat::Zero(24, 3);
  p.pose.row(0) = aa.transpose();
  p.shape = Vec::Zero(10);
  const MeshResult res = forward(tpl, p);
  const Mat rest_j = tpl.rest_joints();
  const Vec3 root = rest_j.row(0).transpose();
  for (int j = 0; j < 24; ++j) {
    const Vec3 want = r * (rest_j.row(j).transpose() - root) + root;
    CHECK((res.joints3d.row(j).transpose() - want).norm() < 1e-6);
  }
  // Skinning partition of unity: the same rigid map applies to every vertex.
  for (int v = 0; v < tpl.vertex_count(); ++v) {
    const Vec3 want = r * (tpl.rest_vertices.row(v).transpose() - root) + root;
    CHECK((res.vertices.row(v).transpose() - want).norm() < 1e-6);
  }
}

TEST_CASE("rigid composition on an already posed body") {
  const BodyTemplate tpl = toy_template();
  Rng rng(31);
  SmplParams p = random_params(rng, 24, 10);
  p.rep = PoseRep::AxisAngle;
  p.pose = Mat::Zero(24, 3);
  for (int j = 0; j < 24; ++j)
    p.pose.row(j) = 0.25 * Vec3(rng.normal(), rng.normal(), rng.normal()).transpose();
  const MeshResult base = forward(tpl, p);

  const Vec3 gaa(0.9, 0.2, -0.4);
  const Mat3 g = axis_angle_to_matrix<double>(gaa);
  SmplParams p2 = p;
  p2.pose.row(0) =
      matrix_to_axis_angle<double>(g * axis_angle_to_matrix<double>(p.pose.row(0).transpose()))
          .transpose();
  const MeshResult moved = forward(tpl, p2);
  const Vec3 pivot = (tpl.joint_regressor * shape_mesh(tpl, p.shape)).row(0).transpose();
  for (int v = 0; v < tpl.vertex_count(); ++v) {
    const Vec3 want = g * (base.vertices.row(v).transpose() - pivot) + pivot;
    CHECK((moved.vertices.row(v).transpose() - want).norm() < 1e-6);
  }
}

TEST_CASE("forward matches transform-accumulation oracle on a 3-joint chain") {
  const BodyTemplate tpl = oracle::chain_template(3);
  Rng rng(41);
  SmplParams p = random_params(rng, 3, 2);
  const Mat want = oracle::chain_lbs_reference(tpl, p);
  const MeshResult res = forward(tpl, p);
  CHECK((res.vertices - want).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("project_weak_perspective: examples and loop oracle") {
  Mat pts(1, 3);
  pts << 0.3, -0.2, 5.0;
  Mat out = project_weak_perspective(pts, Vec3(1, 0, 0));
  CHECK(out(0, 0) == doctest::Approx(0.3));
  CHECK(out(0, 1) == doctest::Approx(-0.2));

  for (double z : {-3.0, 0.0, 11.0}) {
    Mat q(1, 3);
    q << 1, 1, z;
    Mat o = project_weak_perspective(q, Vec3(2, 0.1, 0.1));
    CHECK(o(0, 0) == doctest::Approx(2.1));
    CHECK(o(0, 1) == doctest::Approx(2.1));
  }

  Rng rng(51);
  Mat batch = oracle::random_mat(rng, 40, 3);
  const Vec3 cam(1.7, -0.3, 0.25);
  Mat got = project_weak_perspective(batch, cam);
  for (int i = 0; i < 40; ++i) {
    CHECK(got(i, 0) == doctest::Approx(cam[0] * batch(i, 0) + cam[1]).epsilon(1e-12));
    CHECK(got(i, 1) == doctest::Approx(cam[0] * batch(i, 1) + cam[2]).epsilon(1e-12));
  }
  CHECK_THROWS(project_weak_perspective(batch, Vec3(0.0, 0, 0)));
}

TEST_CASE("157-vector layout round trip") {
  Rng rng(61);
  SmplParams p = random_params(rng, 24, 10);
  const Vec flat = params_to_vec(p);
  CHECK(flat.size() == 157);
  const SmplParams back = vec_to_params(flat);
  CHECK((back.pose - p.pose).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.shape - p.shape).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.camera - p.camera).norm() == 0.0);
}

TEST_CASE("forward_ad equals the plain forward on values") {
  const BodyTemplate tpl = toy_template();
  Rng rng(71);
  const int n = 3;
  Mat pose(n * 24, 6);
  Mat shape(n, 10);
  std::vector<SmplParams> plain(n);
  for (int i = 0; i < n; ++i) {
    SmplParams p = random_params(rng, 24, 10);
    plain[i] = p;
    pose.middleRows(i * 24, 24) = p.pose;
    shape.row(i) = p.shape.transpose();
  }
  ad::Tape tape;
  const BodyForwardAd out =
      forward_ad(tape, tpl, tape.leaf(pose), tape.leaf(shape), /*want_vertices=*/true);
  for (int i = 0; i < n; ++i) {
    const MeshResult res = forward(tpl, plain[i]);
    for (int j = 0; j < 24; ++j)
      for (int c = 0; c < 3; ++c)
        CHECK(tape.val(out.joints3d)(i, j * 3 + c) ==
              doctest::Approx(res.joints3d(j, c)).epsilon(1e-12));
    const Mat rots = plain[i].rotations_rowmajor();
    CHECK((tape.val(out.rot_matrices).middleRows(i * 24, 24) - rots).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((tape.val(out.vertices).middleRows(i * 128, 128) - res.vertices).cwiseAbs().maxCoeff() <
          1e-9);
  }
}

TEST_CASE("analytic gradients of joints3d and vertices match finite differences") {
  const BodyTemplate tpl = oracle::chain_template(3);
  Rng rng(81);
  Mat pose = random_pose6d(rng, 3, 0.5);
  Mat shape = oracle::random_mat(rng, 1, 2, 0.5);

  auto value = [&](bool verts) {
    ad::Tape t;
    const BodyForwardAd out = forward_ad(t, tpl, t.leaf(pose), t.leaf(shape), verts);
    Rng wrng(5);
    const Mat& y = t.val(verts ? out.vertices : out.joints3d);
    Mat w = oracle::random_mat(wrng, static_cast<int>(y.rows()), static_cast<int>(y.cols()));
    return t.scalar_val(t.sum(t.cmul(verts ? out.vertices : out.joints3d, t.constant(w))));
  };

  for (bool verts : {false, true}) {
    ad::Tape t;
    ad::Var vp = t.leaf(pose, true);
    ad::Var vs = t.leaf(shape, true);
    const BodyForwardAd out = forward_ad(t, tpl, vp, vs, verts);
    Rng wrng(5);
    const Mat& y = t.val(verts ? out.vertices : out.joints3d);
    Mat w = oracle::random_mat(wrng, static_cast<int>(y.rows()), static_cast<int>(y.cols()));
    t.backward(t.sum(t.cmul(verts ? out.vertices : out.joints3d, t.constant(w))));
    const Mat fd_pose = oracle::fd_grad([&] { return value(verts); }, pose, 1e-6);
    const Mat fd_shape = oracle::fd_grad([&] { return value(verts); }, shape, 1e-6);
    CHECK(oracle::max_rel_err(t.grad(vp), fd_pose) < 1e-4);
    CHECK(oracle::max_rel_err(t.grad(vs), fd_shape) < 1e-4);
  }
}

TEST_CASE("template container round trip and error paths") {
  const BodyTemplate tpl = toy_template();
  const std::string path = "toy_roundtrip.bt1";
  save_template(path, tpl);
  const BodyTemplate back = load_template(path);
  CHECK((back.rest_vertices - tpl.rest_vertices).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.joint_regressor - tpl.joint_regressor).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.skin_weights - tpl.skin_weights).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.parent == tpl.parent);
  for (int s = 0; s < 10; ++s)
    CHECK((back.shape_basis[s] - tpl.shape_basis[s]).cwiseAbs().maxCoeff() == 0.0);

  // Extra arrays (e.g. pose blendshapes) are tolerated.
  {
    auto bytes = io::read_file(path);
    io::ByteSink extra;
    extra.buf = bytes;
    extra.put_named_f64("pose_basis", Mat::Zero(4, 4));
    io::write_file("toy_extra.bt1", extra.buf);
    CHECK_NOTHROW((void)load_template("toy_extra.bt1"));
  }
  {
    io::ByteSink bad;
    bad.put_bytes("XX1", 3);
    bad.put_u8(1);
    io::write_file("bad_magic.bt1", bad.buf);
    CHECK_THROWS_AS((void)load_template("bad_magic.bt1"), FormatError);
  }
  std::remove(path.c_str());
  std::remove("toy_extra.bt1");
  std::remove("bad_magic.bt1");
}
