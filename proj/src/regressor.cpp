#include "flowpose/regressor.hpp"

#include <cmath>

namespace flowpose {

nn::Var fuse(nn::Tape& t, nn::Var g_v, nn::Var f_o) {
  FLOWPOSE_REQUIRE(t.val(g_v).rows() == t.val(f_o).rows() &&
                       t.val(g_v).cols() == t.val(f_o).cols(),
                   "fuse: stream shapes must match");
  return t.add(g_v, f_o);
}

Mat mean_param_vector() {
  Mat m = Mat::Zero(1, kParamDim);
  for (int j = 0; j < kPoseJoints; ++j) {
    m(0, j * 6 + 0) = 1.0;
    m(0, j * 6 + 4) = 1.0;
  }
  // softplus(raw) == 0.9, a mid-range normalized camera scale.
  m(0, kPoseJoints * 6 + kShapeDim) = std::log(std::exp(0.9) - 1.0);
  return m;
}

CoarseHead CoarseHead::create(nn::ParamStore& store, const std::string& prefix,
                              const std::string& group, int feature_dim, Rng& rng) {
  CoarseHead head;
  head.fc = nn::Linear::create(store, prefix + ".fc", group, feature_dim, kParamDim, rng,
                               nn::Init::Small, /*bias=*/false);
  head.fc.b = store.add(prefix + ".fc.bias", group, mean_param_vector());
  return head;
}

nn::Var CoarseHead::apply(nn::Tape& t, nn::Var fused) const { return fc.apply(t, fused); }

DecodedParams decode_params(nn::Tape& t, nn::Var raw157) {
  const int n = static_cast<int>(t.val(raw157).rows());
  FLOWPOSE_REQUIRE(t.val(raw157).cols() == kParamDim, "decode_params: width must be 157");
  DecodedParams d;
  // Pose block to (N*K) x 6 via row-major reshape of the first 144 columns.
  nn::Var pose_flat = t.block(raw157, 0, 0, n, kPoseJoints * 6);
  d.pose6d = t.reshape(pose_flat, n * kPoseJoints, 6);
  d.rot_matrices = rot6d_to_matrix_ad(t, d.pose6d);
  d.shape = t.block(raw157, 0, kPoseJoints * 6, n, kShapeDim);
  d.cam_scale = t.softplus(t.block(raw157, 0, kPoseJoints * 6 + kShapeDim, n, 1));
  d.cam_trans = t.block(raw157, 0, kPoseJoints * 6 + kShapeDim + 1, n, 2);
  return d;
}

std::vector<SmplParams> decoded_to_params(const nn::Tape& t, const DecodedParams& d) {
  const Mat& pose = t.val(d.pose6d);
  const Mat& shape = t.val(d.shape);
  const Mat& s = t.val(d.cam_scale);
  const Mat& tr = t.val(d.cam_trans);
  const int n = static_cast<int>(shape.rows());
  std::vector<SmplParams> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    auto& p = out[static_cast<std::size_t>(i)];
    p.rep = PoseRep::Rot6d;
    p.pose = pose.middleRows(i * kPoseJoints, kPoseJoints);
    p.shape = shape.row(i).transpose();
    p.camera = Vec3(s(i, 0), tr(i, 0), tr(i, 1));
  }
  return out;
}

TransformerRegressorNet TransformerRegressorNet::create(nn::ParamStore& store,
                                                        const std::string& prefix,
                                                        const std::string& group,
                                                        const TransformerConfig& cfg, Rng& rng) {
  TransformerRegressorNet net;
  net.embed_ = nn::Linear::create(store, prefix + ".embed", group, kParamDim, cfg.d_model, rng,
                                  nn::Init::Xavier);
  net.core_ = TransformerEncoderNet::create(store, prefix + ".core", group, cfg, rng);
  net.out_ = nn::Linear::create(store, prefix + ".head", group, cfg.d_model, kParamDim, rng,
                                nn::Init::Zero);
  return net;
}

nn::Var TransformerRegressorNet::regress(nn::Tape& t, nn::Var coarse, int batch, int seq_len,
                                         double dropout_rate, Rng* dropout_rng) const {
  FLOWPOSE_REQUIRE(t.val(coarse).cols() == kParamDim, "regress: coarse width must be 157");
  nn::Var embedded = embed_.apply(t, coarse);
  nn::Var encoded = core_.encode(t, embedded, batch, seq_len, /*add_positional=*/true,
                                 dropout_rate, dropout_rng, nullptr);
  return t.add(coarse, out_.apply(t, encoded));
}

HmrRegressorNet HmrRegressorNet::create(nn::ParamStore& store, const std::string& prefix,
                                        const std::string& group, int feature_dim, int hidden,
                                        int iterations, Rng& rng) {
  HmrRegressorNet net;
  net.iterations_ = iterations;
  net.fc1_ = nn::Linear::create(store, prefix + ".fc1", group, feature_dim + kParamDim, hidden,
                                rng, nn::Init::He);
  net.fc2_ = nn::Linear::create(store, prefix + ".fc2", group, hidden, hidden, rng, nn::Init::He);
  net.fc3_ = nn::Linear::create(store, prefix + ".fc3", group, hidden, kParamDim, rng,
                                nn::Init::Small);
  return net;
}

nn::Var HmrRegressorNet::regress(nn::Tape& t, nn::Var features, double dropout_rate,
                                 Rng* dropout_rng) const {
  const int n = static_cast<int>(t.val(features).rows());
  const bool drop = dropout_rate > 0.0 && dropout_rng != nullptr;
  Mat mean = mean_param_vector();
  nn::Var params = t.constant(mean.replicate(n, 1));
  for (int it = 0; it < iterations_; ++it) {
    nn::Var x = t.hcat({features, params});
    x = t.relu(fc1_.apply(t, x));
    if (drop) x = t.dropout(x, dropout_rate, *dropout_rng);
    x = t.relu(fc2_.apply(t, x));
    if (drop) x = t.dropout(x, dropout_rate, *dropout_rng);
    params = t.add(params, fc3_.apply(t, x));
  }
  return params;
}

}  // namespace flowpose
