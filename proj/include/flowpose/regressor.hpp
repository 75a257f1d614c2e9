#pragma once

#include <string>
#include <vector>

#include "flowpose/body_model.hpp"
#include "flowpose/temporal_encoder.hpp"

namespace flowpose {

// Elementwise late fusion of temporal RGB features with flow features. The
// zero flow field of frame 0 must contribute nothing, so this is a plain sum.
nn::Var fuse(nn::Tape& t, nn::Var g_v, nn::Var f_o);

// FC feature -> 157 coarse parameter vector (24*6 pose, 10 shape, 3 camera).
// The bias starts at identity rotations and a softplus-neutral camera so the
// zero-feature output is already a feasible parameter vector.
struct CoarseHead {
  nn::Linear fc;
  static CoarseHead create(nn::ParamStore& store, const std::string& prefix,
                           const std::string& group, int feature_dim, Rng& rng);
  nn::Var apply(nn::Tape& t, nn::Var fused) const;
};

// The 157-vector with identity rotations, zero shape, softplus-neutral camera.
Mat mean_param_vector();

// Raw 157 columns split into tape-friendly views plus the decoded,
// constraint-satisfying pieces (valid rotations, positive camera scale).
struct DecodedParams {
  nn::Var pose6d;        // (N*K) x 6
  nn::Var rot_matrices;  // (N*K) x 9
  nn::Var shape;         // N x 10
  nn::Var cam_scale;     // N x 1, softplus(raw) > 0
  nn::Var cam_trans;     // N x 2
};
DecodedParams decode_params(nn::Tape& t, nn::Var raw157);

// Converts decoded per-frame values back to SmplParams (6d representation).
std::vector<SmplParams> decoded_to_params(const nn::Tape& t, const DecodedParams& d);

// Coarse parameters refined by a small transformer; the output head is
// zero-initialized so training starts at the coarse estimate.
class TransformerRegressorNet {
 public:
  static TransformerRegressorNet create(nn::ParamStore& store, const std::string& prefix,
                                        const std::string& group, const TransformerConfig& cfg,
                                        Rng& rng);
  nn::Var regress(nn::Tape& t, nn::Var coarse, int batch, int seq_len, double dropout_rate,
                  Rng* dropout_rng) const;
  const TransformerConfig& config() const { return core_.config(); }

 private:
  nn::Linear embed_;  // 157 -> d_model
  TransformerEncoderNet core_;
  nn::Linear out_;  // d_model -> 157, zero-init
};

// Iterative error-feedback baseline: FC stack on (feature, current params),
// starting from the mean parameter vector.
class HmrRegressorNet {
 public:
  static HmrRegressorNet create(nn::ParamStore& store, const std::string& prefix,
                                const std::string& group, int feature_dim, int hidden,
                                int iterations, Rng& rng);
  nn::Var regress(nn::Tape& t, nn::Var features, double dropout_rate, Rng* dropout_rng) const;
  int iterations() const { return iterations_; }

 private:
  nn::Linear fc1_, fc2_, fc3_;
  int iterations_ = 3;
};

}  // namespace flowpose
