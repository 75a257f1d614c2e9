#include "flowpose/losses.hpp"

namespace flowpose {

namespace {

// Root-centered copy of a stacked N x (J*3) joint matrix.
Mat center_root_stack(const Mat& joints) {
  const int j = static_cast<int>(joints.cols()) / 3;
  Mat out = joints;
  for (int q = 0; q < j; ++q)
    for (int c = 0; c < 3; ++c) out.col(q * 3 + c) -= joints.col(c);
  return out;
}

nn::Var center_root_ad(nn::Tape& t, nn::Var joints) {
  const int cols = static_cast<int>(t.val(joints).cols());
  const int rows = static_cast<int>(t.val(joints).rows());
  const int j = cols / 3;
  nn::Var root = t.block(joints, 0, 0, rows, 3);
  std::vector<nn::Var> tiles(static_cast<std::size_t>(j), root);
  return t.sub(joints, t.hcat(tiles));
}

}  // namespace

nn::Var loss_3d(nn::Tape& t, const Mat& gt_joints3d, nn::Var pred_joints3d, Reduction red) {
  const Mat& pv = t.val(pred_joints3d);
  FLOWPOSE_REQUIRE(gt_joints3d.rows() == pv.rows() && gt_joints3d.cols() == pv.cols(),
                   "loss_3d: shape mismatch");
  FLOWPOSE_REQUIRE(pv.cols() % 3 == 0, "loss_3d: columns must be J*3");
  nn::Var diff = t.sub(center_root_ad(t, pred_joints3d), t.constant(center_root_stack(gt_joints3d)));
  nn::Var s = t.sum_sq(diff);
  if (red == Reduction::Mean) s = t.scalar_mul(s, 3.0 / static_cast<double>(pv.size()));
  return s;
}

nn::Var project_ad(nn::Tape& t, nn::Var joints3d, nn::Var cam_scale, nn::Var cam_trans) {
  const int n = static_cast<int>(t.val(joints3d).rows());
  const int j = static_cast<int>(t.val(joints3d).cols()) / 3;
  FLOWPOSE_REQUIRE(t.val(cam_scale).rows() == n && t.val(cam_scale).cols() == 1,
                   "project_ad: cam_scale must be N x 1");
  FLOWPOSE_REQUIRE(t.val(cam_trans).rows() == n && t.val(cam_trans).cols() == 2,
                   "project_ad: cam_trans must be N x 2");
  nn::Var tx = t.block(cam_trans, 0, 0, n, 1);
  nn::Var ty = t.block(cam_trans, 0, 1, n, 1);
  std::vector<nn::Var> cols;
  cols.reserve(static_cast<std::size_t>(2 * j));
  for (int q = 0; q < j; ++q) {
    nn::Var x = t.block(joints3d, 0, q * 3, n, 1);
    nn::Var y = t.block(joints3d, 0, q * 3 + 1, n, 1);
    cols.push_back(t.add(t.cmul(cam_scale, x), tx));
    cols.push_back(t.add(t.cmul(cam_scale, y), ty));
  }
  return t.hcat(cols);
}

nn::Var loss_2d(nn::Tape& t, const Mat& gt2d_px, int width, int height, nn::Var pred_joints3d,
                nn::Var cam_scale, nn::Var cam_trans, Reduction red) {
  nn::Var pred2d = project_ad(t, pred_joints3d, cam_scale, cam_trans);
  const Mat& pv = t.val(pred2d);
  FLOWPOSE_REQUIRE(gt2d_px.rows() == pv.rows() && gt2d_px.cols() == pv.cols(),
                   "loss_2d: shape mismatch");
  Mat gt_norm(gt2d_px.rows(), gt2d_px.cols());
  for (Eigen::Index r = 0; r < gt2d_px.rows(); ++r)
    for (Eigen::Index c = 0; c < gt2d_px.cols(); ++c)
      gt_norm(r, c) = px_to_norm(gt2d_px(r, c), c % 2 == 0 ? width : height);
  nn::Var diff = t.sub(pred2d, t.constant(gt_norm));
  nn::Var s = t.sum_sq(diff);
  if (red == Reduction::Mean) s = t.scalar_mul(s, 2.0 / static_cast<double>(pv.size()));
  return s;
}

nn::Var loss_smpl(nn::Tape& t, const Mat& gt_rot9, nn::Var pred_rot9, const Mat& gt_shape,
                  nn::Var pred_shape, Reduction red) {
  const Mat& rv = t.val(pred_rot9);
  const Mat& sv = t.val(pred_shape);
  FLOWPOSE_REQUIRE(gt_rot9.rows() == rv.rows() && gt_rot9.cols() == 9 && rv.cols() == 9,
                   "loss_smpl: rotation stack mismatch");
  FLOWPOSE_REQUIRE(gt_shape.rows() == sv.rows() && gt_shape.cols() == sv.cols(),
                   "loss_smpl: shape stack mismatch");
  const int frames = static_cast<int>(sv.rows());
  const int joints = static_cast<int>(rv.rows()) / frames;
  nn::Var pose_term = t.sum_sq(t.sub(pred_rot9, t.constant(gt_rot9)));
  nn::Var shape_term = t.sum_sq(t.sub(pred_shape, t.constant(gt_shape)));
  if (red == Reduction::Mean) {
    pose_term = t.scalar_mul(pose_term, 1.0 / (static_cast<double>(frames) * joints));
    shape_term = t.scalar_mul(shape_term, 1.0 / static_cast<double>(frames));
  }
  return t.add(pose_term, shape_term);
}

nn::Var backtrace_ad(nn::Tape& t, nn::Var x2d_px, std::shared_ptr<const Mat> flow, int width) {
  return t.sub(x2d_px, t.bilinear_sample(x2d_px, std::move(flow), width));
}

nn::Var loss_flow_seq(nn::Tape& t, nn::Var pred2d_px, const std::vector<MatF>& flows, int width,
                      int height, Reduction red) {
  const Mat& pv = t.val(pred2d_px);
  const int t_len = static_cast<int>(pv.rows());
  const int j = static_cast<int>(pv.cols()) / 2;
  FLOWPOSE_REQUIRE(t_len >= 2, "loss_flow: needs at least two frames");
  FLOWPOSE_REQUIRE(static_cast<int>(flows.size()) == t_len, "loss_flow: flow count mismatch");
  Mat to_norm(1, 2);
  to_norm << 2.0 / (width - 1), 2.0 / (height - 1);
  nn::Var norm_scale = t.constant(to_norm);
  nn::Var acc;
  for (int ts = 1; ts < t_len; ++ts) {
    auto field = std::make_shared<Mat>(flows[static_cast<std::size_t>(ts)].cast<double>());
    nn::Var cur = t.reshape(t.block(pred2d_px, ts, 0, 1, 2 * j), j, 2);
    nn::Var prev = t.reshape(t.block(pred2d_px, ts - 1, 0, 1, 2 * j), j, 2);
    nn::Var traced = backtrace_ad(t, cur, field, width);
    nn::Var diff = t.mul_rowvec(t.sub(prev, traced), norm_scale);
    nn::Var term = t.sum_sq(diff);
    acc = acc.valid() ? t.add(acc, term) : term;
  }
  if (red == Reduction::Mean)
    acc = t.scalar_mul(acc, 1.0 / (static_cast<double>(t_len - 1) * j));
  return acc;
}

nn::Var total_loss(nn::Tape& t, nn::Var l3d, nn::Var l2d, nn::Var lsmpl, nn::Var ladv,
                   const LossWeights& w) {
  nn::Var s = t.scalar_mul(l3d, w.lambda_3d);
  s = t.add(s, t.scalar_mul(l2d, w.lambda_2d));
  s = t.add(s, t.scalar_mul(lsmpl, w.lambda_smpl));
  s = t.add(s, t.scalar_mul(ladv, w.lambda_adv));
  return s;
}

// --- Plain wrappers ---------------------------------------------------------

namespace {

Mat stack_frames(const std::vector<Mat>& frames) {
  FLOWPOSE_REQUIRE(!frames.empty(), "loss: empty sequence");
  const Eigen::Index j = frames[0].rows(), c = frames[0].cols();
  Mat out(static_cast<Eigen::Index>(frames.size()), j * c);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    FLOWPOSE_REQUIRE(frames[t].rows() == j && frames[t].cols() == c, "loss: ragged frames");
    for (Eigen::Index q = 0; q < j; ++q)
      for (Eigen::Index k = 0; k < c; ++k) out(static_cast<Eigen::Index>(t), q * c + k) = frames[t](q, k);
  }
  return out;
}

}  // namespace

double loss_3d(const std::vector<Mat>& gt, const std::vector<Mat>& pred, Reduction red) {
  nn::Tape t;
  return t.scalar_val(loss_3d(t, stack_frames(gt), t.leaf(stack_frames(pred)), red));
}

double loss_2d(const std::vector<Mat>& gt2d_px, int width, int height,
               const std::vector<Mat>& pred3d, const std::vector<Vec3>& cameras, Reduction red) {
  FLOWPOSE_REQUIRE(pred3d.size() == cameras.size(), "loss_2d: camera count mismatch");
  nn::Tape t;
  const int n = static_cast<int>(pred3d.size());
  Mat s(n, 1), tr(n, 2);
  for (int i = 0; i < n; ++i) {
    FLOWPOSE_REQUIRE(cameras[static_cast<std::size_t>(i)][0] > 0, "loss_2d: camera scale must be positive");
    s(i, 0) = cameras[static_cast<std::size_t>(i)][0];
    tr(i, 0) = cameras[static_cast<std::size_t>(i)][1];
    tr(i, 1) = cameras[static_cast<std::size_t>(i)][2];
  }
  return t.scalar_val(loss_2d(t, stack_frames(gt2d_px), width, height,
                              t.leaf(stack_frames(pred3d)), t.leaf(s), t.leaf(tr), red));
}

double loss_smpl(const std::vector<SmplParams>& gt, const std::vector<SmplParams>& pred,
                 Reduction red) {
  FLOWPOSE_REQUIRE(gt.size() == pred.size() && !gt.empty(), "loss_smpl: frame count mismatch");
  const int n = static_cast<int>(gt.size());
  const int k = static_cast<int>(gt[0].pose.rows());
  FLOWPOSE_REQUIRE(pred[0].pose.rows() == k, "loss_smpl: representation mismatch (joint count)");
  FLOWPOSE_REQUIRE(gt[0].shape.size() == pred[0].shape.size(),
                   "loss_smpl: representation mismatch (shape dim)");
  Mat gt_rot(n * k, 9), pr_rot(n * k, 9);
  Mat gt_shape(n, gt[0].shape.size()), pr_shape(n, gt[0].shape.size());
  for (int i = 0; i < n; ++i) {
    gt_rot.middleRows(i * k, k) = gt[static_cast<std::size_t>(i)].rotations_rowmajor();
    pr_rot.middleRows(i * k, k) = pred[static_cast<std::size_t>(i)].rotations_rowmajor();
    gt_shape.row(i) = gt[static_cast<std::size_t>(i)].shape.transpose();
    pr_shape.row(i) = pred[static_cast<std::size_t>(i)].shape.transpose();
  }
  nn::Tape t;
  return t.scalar_val(loss_smpl(t, gt_rot, t.leaf(pr_rot), gt_shape, t.leaf(pr_shape), red));
}

Mat backtrace_joints(const Mat& x2d_px, const MatF& flow, int width, int height) {
  FLOWPOSE_REQUIRE(flow.rows() == static_cast<Eigen::Index>(width) * height,
                   "backtrace: flow size mismatch");
  nn::Tape t;
  auto field = std::make_shared<Mat>(flow.cast<double>());
  return t.val(backtrace_ad(t, t.leaf(x2d_px), field, width));
}

double loss_flow(const std::vector<Mat>& joints2d_px, const std::vector<MatF>& flows, int width,
                 int height, Reduction red) {
  nn::Tape t;
  return t.scalar_val(
      loss_flow_seq(t, t.leaf(stack_frames(joints2d_px)), flows, width, height, red));
}

double total_loss(double l3d, double l2d, double lsmpl, double ladv, const LossWeights& w) {
  return w.lambda_3d * l3d + w.lambda_2d * l2d + w.lambda_smpl * lsmpl + w.lambda_adv * ladv;
}

}  // namespace flowpose
