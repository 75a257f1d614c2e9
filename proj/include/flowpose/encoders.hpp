#pragma once

#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "flowpose/nn.hpp"

namespace flowpose {

enum class Stream { Rgb, Flow, Temporal };

struct FeatureSeq {
  Stream stream = Stream::Rgb;
  Mat values;  // T x D

  int length() const { return static_cast<int>(values.rows()); }
  int dim() const { return static_cast<int>(values.cols()); }
};

struct BackboneConfig {
  int in_channels = 3;
  std::vector<int> channels = {8, 16, 32};
  std::vector<int> kernels = {5, 3, 3};
  std::vector<int> strides = {4, 2, 2};
  int out_dim = 2048;  // backbone contract width
};

// Strided convolution stack + global average pool + FC. Stands in for the
// 2048-wide residual backbone; the conv geometry is configurable so the paper
// contract width and a desk-scale width both instantiate.
struct ToyBackbone {
  BackboneConfig cfg;
  std::vector<nn::Conv2d> convs;
  nn::Linear fc;

  static ToyBackbone create(nn::ParamStore& store, const std::string& prefix,
                            const std::string& group, const BackboneConfig& cfg, Rng& rng);
  // x: (frames*H*W) x in_channels stacked images; returns frames x out_dim.
  // Gather maps are cached per (frames, H, W); the cache is not guarded, so
  // first use must happen on the training thread.
  nn::Var apply(nn::Tape& t, nn::Var x, int frames, int h, int w) const;

 private:
  mutable std::map<std::tuple<int, int, int, std::size_t>,
                   std::shared_ptr<const Eigen::MatrixXi>>
      maps_;
};

// One stream: backbone + FC reduction (2048 -> 512 in the paper layout).
struct FrameEncoder {
  ToyBackbone backbone;
  nn::Linear reduce;

  static FrameEncoder create(nn::ParamStore& store, const std::string& prefix,
                             const std::string& group, const BackboneConfig& cfg,
                             int feature_dim, Rng& rng);
  nn::Var extract(nn::Tape& t, nn::Var images, int frames, int h, int w) const;
};

// Stacks per-frame images into the (T*H*W) x C layout the backbone expects.
Mat stack_images(const std::vector<MatF>& images);

// Plain-facing per-sequence extraction (frames processed independently).
FeatureSeq vcnn_extract(const FrameEncoder& enc, const nn::ParamStore& store,
                        const std::vector<MatF>& frames, int h, int w);
FeatureSeq ocnn_extract(const FrameEncoder& enc, const nn::ParamStore& store,
                        const std::vector<MatF>& flows, int h, int w);

}  // namespace flowpose
