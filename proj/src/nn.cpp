#include "flowpose/nn.hpp"

#include <cmath>

namespace flowpose::nn {

Mat init_matrix(Rng& rng, int rows, int cols, Init kind) {
  Mat m(rows, cols);
  double stddev = 0.0;
  switch (kind) {
    case Init::He: stddev = std::sqrt(2.0 / rows); break;
    case Init::Xavier: stddev = std::sqrt(2.0 / (rows + cols)); break;
    case Init::Small: stddev = 1e-3; break;
    case Init::Zero: return Mat::Zero(rows, cols);
  }
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = stddev * rng.normal();
  return m;
}

Linear Linear::create(ParamStore& store, const std::string& name, const std::string& group,
                      int in, int out, Rng& rng, Init kind, bool bias) {
  Linear l;
  l.in = in;
  l.out = out;
  l.w = store.add(name + ".weight", group, init_matrix(rng, in, out, kind));
  if (bias) l.b = store.add(name + ".bias", group, Mat::Zero(1, out));
  return l;
}

Var Linear::apply(Tape& t, Var x) const {
  Var y = t.matmul(x, t.param(w));
  if (b >= 0) y = t.add_rowvec(y, t.param(b));
  return y;
}

int conv_out_dim(int size, int k, int stride, int pad) {
  return (size + 2 * pad - k) / stride + 1;
}

std::shared_ptr<const Eigen::MatrixXi> im2col_map(int frames, int h, int w, int c, int k,
                                                  int stride, int pad) {
  const int ho = conv_out_dim(h, k, stride, pad);
  const int wo = conv_out_dim(w, k, stride, pad);
  auto map = std::make_shared<Eigen::MatrixXi>(frames * ho * wo, k * k * c);
  for (int f = 0; f < frames; ++f)
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        const int row = (f * ho + oy) * wo + ox;
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx) {
            const int iy = oy * stride - pad + ky;
            const int ix = ox * stride - pad + kx;
            for (int ci = 0; ci < c; ++ci) {
              const int col = (ky * k + kx) * c + ci;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) {
                (*map)(row, col) = -1;
              } else {
                (*map)(row, col) = ((f * h + iy) * w + ix) * c + ci;
              }
            }
          }
      }
  return map;
}

Conv2d Conv2d::create(ParamStore& store, const std::string& name, const std::string& group,
                      int cin, int cout, int k, int stride, int pad, Rng& rng) {
  Conv2d conv;
  conv.cin = cin;
  conv.cout = cout;
  conv.k = k;
  conv.stride = stride;
  conv.pad = pad;
  conv.w = store.add(name + ".weight", group, init_matrix(rng, k * k * cin, cout, Init::He));
  conv.b = store.add(name + ".bias", group, Mat::Zero(1, cout));
  return conv;
}

Var Conv2d::apply(Tape& t, Var x, int frames, int h, int w,
                  std::shared_ptr<const Eigen::MatrixXi> map) const {
  FLOWPOSE_REQUIRE(t.val(x).cols() == cin, "conv: channel mismatch");
  FLOWPOSE_REQUIRE(t.val(x).rows() == static_cast<Eigen::Index>(frames) * h * w,
                   "conv: rows must be frames*H*W");
  Var patches = t.gather(x, std::move(map));
  return t.add_rowvec(t.matmul(patches, t.param(this->w)), t.param(b));
}

GruCell GruCell::create(ParamStore& store, const std::string& name, const std::string& group,
                        int in, int hidden, Rng& rng) {
  GruCell cell;
  cell.hidden = hidden;
  cell.wx = Linear::create(store, name + ".wx", group, in, 3 * hidden, rng, Init::Xavier);
  cell.wh = Linear::create(store, name + ".wh", group, hidden, 3 * hidden, rng, Init::Xavier);
  return cell;
}

Var GruCell::step(Tape& t, Var x, Var h) const {
  const int hd = hidden;
  const int batch = static_cast<int>(t.val(x).rows());
  Var gi = wx.apply(t, x);
  Var gh = wh.apply(t, h);
  Var r = t.sigmoid(t.add(t.block(gi, 0, 0, batch, hd), t.block(gh, 0, 0, batch, hd)));
  Var z = t.sigmoid(t.add(t.block(gi, 0, hd, batch, hd), t.block(gh, 0, hd, batch, hd)));
  Var n = t.tanh_(t.add(t.block(gi, 0, 2 * hd, batch, hd),
                        t.cmul(r, t.block(gh, 0, 2 * hd, batch, hd))));
  // h' = (1 - z) * n + z * h
  Var one_minus_z = t.add_scalar(t.scalar_mul(z, -1.0), 1.0);
  return t.add(t.cmul(one_minus_z, n), t.cmul(z, h));
}

double Adam::step(ParamStore& store, const Tape& tape, const std::string& group, double lr,
                  double clip) {
  double sq_norm = 0.0;
  std::vector<std::pair<int, const Mat*>> updates;
  for (int pid = 0; pid < static_cast<int>(store.size()); ++pid) {
    if (store.entry(pid).group != group) continue;
    const Mat* g = tape.param_grad(pid);
    if (g == nullptr) continue;
    sq_norm += g->squaredNorm();
    updates.emplace_back(pid, g);
  }
  const double norm = std::sqrt(sq_norm);
  const double scale = (clip > 0.0 && norm > clip) ? clip / norm : 1.0;
  ++steps;
  const double bias1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(steps));
  const double bias2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(steps));
  for (auto& [pid, g] : updates) {
    auto& e = store.entry(pid);
    const Mat clipped = scale * (*g);
    e.m = cfg.beta1 * e.m + (1.0 - cfg.beta1) * clipped;
    e.v = cfg.beta2 * e.v + (1.0 - cfg.beta2) * clipped.cwiseProduct(clipped);
    const Mat mhat = e.m / bias1;
    const Mat vhat = e.v / bias2;
    e.value.array() -= lr * (mhat.array() / (vhat.array().sqrt() + cfg.eps));
  }
  return norm;
}

}  // namespace flowpose::nn
