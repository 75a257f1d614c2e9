#include "flowpose/encoders.hpp"

namespace flowpose {

ToyBackbone ToyBackbone::create(nn::ParamStore& store, const std::string& prefix,
                                const std::string& group, const BackboneConfig& cfg, Rng& rng) {
  FLOWPOSE_REQUIRE(cfg.channels.size() == cfg.kernels.size() &&
                       cfg.channels.size() == cfg.strides.size(),
                   "backbone: channels/kernels/strides must align");
  FLOWPOSE_REQUIRE(cfg.in_channels == 2 || cfg.in_channels == 3,
                   "backbone: input channels must be 2 or 3");
  ToyBackbone bb;
  bb.cfg = cfg;
  int cin = cfg.in_channels;
  for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
    bb.convs.push_back(nn::Conv2d::create(store, prefix + ".conv" + std::to_string(i), group,
                                          cin, cfg.channels[i], cfg.kernels[i], cfg.strides[i],
                                          cfg.kernels[i] / 2, rng));
    cin = cfg.channels[i];
  }
  bb.fc = nn::Linear::create(store, prefix + ".fc", group, cin, cfg.out_dim, rng, nn::Init::He);
  return bb;
}

nn::Var ToyBackbone::apply(nn::Tape& t, nn::Var x, int frames, int h, int w) const {
  int ch = h, cw = w;
  nn::Var cur = x;
  for (std::size_t i = 0; i < convs.size(); ++i) {
    const auto& conv = convs[i];
    const auto key = std::make_tuple(frames, ch, cw, i);
    auto it = maps_.find(key);
    if (it == maps_.end())
      it = maps_.emplace(key, nn::im2col_map(frames, ch, cw, conv.cin, conv.k, conv.stride,
                                             conv.pad))
               .first;
    cur = t.relu(conv.apply(t, cur, frames, ch, cw, it->second));
    ch = nn::conv_out_dim(ch, conv.k, conv.stride, conv.pad);
    cw = nn::conv_out_dim(cw, conv.k, conv.stride, conv.pad);
  }
  nn::Var pooled = t.row_group_mean(cur, ch * cw);  // frames x C
  return fc.apply(t, pooled);
}

FrameEncoder FrameEncoder::create(nn::ParamStore& store, const std::string& prefix,
                                  const std::string& group, const BackboneConfig& cfg,
                                  int feature_dim, Rng& rng) {
  FrameEncoder enc;
  enc.backbone = ToyBackbone::create(store, prefix + ".backbone", group, cfg, rng);
  enc.reduce = nn::Linear::create(store, prefix + ".reduce", group, cfg.out_dim, feature_dim,
                                  rng, nn::Init::He);
  return enc;
}

nn::Var FrameEncoder::extract(nn::Tape& t, nn::Var images, int frames, int h, int w) const {
  FLOWPOSE_REQUIRE(backbone.fc.out == reduce.in, "extract: backbone output width mismatch");
  return reduce.apply(t, backbone.apply(t, images, frames, h, w));
}

Mat stack_images(const std::vector<MatF>& images) {
  FLOWPOSE_REQUIRE(!images.empty(), "stack_images: empty sequence");
  const Eigen::Index rows = images[0].rows(), cols = images[0].cols();
  Mat out(static_cast<Eigen::Index>(images.size()) * rows, cols);
  for (std::size_t i = 0; i < images.size(); ++i) {
    FLOWPOSE_REQUIRE(images[i].rows() == rows && images[i].cols() == cols,
                     "stack_images: ragged sequence");
    out.middleRows(static_cast<Eigen::Index>(i) * rows, rows) = images[i].cast<double>();
  }
  return out;
}

namespace {

FeatureSeq extract_plain(const FrameEncoder& enc, const nn::ParamStore& store, Stream stream,
                         const std::vector<MatF>& images, int h, int w, int channels) {
  FLOWPOSE_REQUIRE(!images.empty(), "extract: empty sequence");
  FLOWPOSE_REQUIRE(images[0].cols() == channels, "extract: channel mismatch");
  nn::Tape t(&store);
  nn::Var x = t.leaf(stack_images(images));
  nn::Var f = enc.extract(t, x, static_cast<int>(images.size()), h, w);
  FeatureSeq seq;
  seq.stream = stream;
  seq.values = t.val(f);
  FLOWPOSE_REQUIRE(seq.values.allFinite(), "extract: non-finite feature");
  return seq;
}

}  // namespace

FeatureSeq vcnn_extract(const FrameEncoder& enc, const nn::ParamStore& store,
                        const std::vector<MatF>& frames, int h, int w) {
  return extract_plain(enc, store, Stream::Rgb, frames, h, w, 3);
}

FeatureSeq ocnn_extract(const FrameEncoder& enc, const nn::ParamStore& store,
                        const std::vector<MatF>& flows, int h, int w) {
  return extract_plain(enc, store, Stream::Flow, flows, h, w, 2);
}

}  // namespace flowpose
