#pragma once

#include <memory>
#include <vector>

#include "flowpose/body_model.hpp"
#include "flowpose/nn.hpp"

namespace flowpose {

struct LossWeights {
  double lambda_3d = 300.0;
  double lambda_2d = 200.0;
  double lambda_smpl = 120.0;
  double lambda_adv = 60.0;
};

// `Sum` is the literal per-frame summation; `Mean` (default) averages over
// frames and joints with the lambda weights unchanged.
enum class Reduction { Mean, Sum };

inline double px_to_norm(double px, int size) { return 2.0 * px / (size - 1) - 1.0; }
inline double norm_to_px(double xn, int size) { return (xn + 1.0) * 0.5 * (size - 1); }

// --- Tape losses over stacked frames ---------------------------------------
// joints3d: N x (J*3) joint-major; joints2d: N x (J*2); rot: (N*K) x 9.

// Squared 3d joint distance after root-joint (joint 0) centering of both.
nn::Var loss_3d(nn::Tape& t, const Mat& gt_joints3d, nn::Var pred_joints3d, Reduction red);

// Weak-perspective projection with per-frame camera acting in normalized
// image coordinates; returns N x (J*2).
nn::Var project_ad(nn::Tape& t, nn::Var joints3d, nn::Var cam_scale, nn::Var cam_trans);

// gt2d arrives in pixels and is normalized to [-1, 1] internally.
nn::Var loss_2d(nn::Tape& t, const Mat& gt2d_px, int width, int height, nn::Var pred_joints3d,
                nn::Var cam_scale, nn::Var cam_trans, Reduction red);

// Pose compared as rotation matrices plus squared shape difference.
nn::Var loss_smpl(nn::Tape& t, const Mat& gt_rot9, nn::Var pred_rot9, const Mat& gt_shape,
                  nn::Var pred_shape, Reduction red);

// X^f_{prev} = x - flow(x), border-clamped bilinear sampling.
nn::Var backtrace_ad(nn::Tape& t, nn::Var x2d_px, std::shared_ptr<const Mat> flow, int width);

// Eq-style flow loss for one sequence: sum over i = 2..T of the squared
// distance between frame i-1 joints and the back-traced positions, measured
// in normalized units. flows[0] is never used.
nn::Var loss_flow_seq(nn::Tape& t, nn::Var pred2d_px, const std::vector<MatF>& flows, int width,
                      int height, Reduction red);

nn::Var total_loss(nn::Tape& t, nn::Var l3d, nn::Var l2d, nn::Var lsmpl, nn::Var ladv,
                   const LossWeights& w);

// --- Plain wrappers ---------------------------------------------------------

double loss_3d(const std::vector<Mat>& gt, const std::vector<Mat>& pred,
               Reduction red = Reduction::Mean);
double loss_2d(const std::vector<Mat>& gt2d_px, int width, int height,
               const std::vector<Mat>& pred3d, const std::vector<Vec3>& cameras,
               Reduction red = Reduction::Mean);
double loss_smpl(const std::vector<SmplParams>& gt, const std::vector<SmplParams>& pred,
                 Reduction red = Reduction::Mean);
Mat backtrace_joints(const Mat& x2d_px, const MatF& flow, int width, int height);
double loss_flow(const std::vector<Mat>& joints2d_px, const std::vector<MatF>& flows, int width,
                 int height, Reduction red = Reduction::Mean);
double total_loss(double l3d, double l2d, double lsmpl, double ladv, const LossWeights& w);

}  // namespace flowpose
