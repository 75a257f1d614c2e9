#pragma once

#include <map>
#include <memory>
#include <string>
#include <tuple>
#include <vector>

#include "flowpose/params.hpp"
#include "flowpose/rng.hpp"
#include "flowpose/tape.hpp"

namespace flowpose::nn {

using ad::ParamStore;
using ad::Tape;
using ad::Var;

enum class Init { He, Xavier, Zero, Small };

Mat init_matrix(Rng& rng, int rows, int cols, Init kind);

struct Linear {
  int w = -1;
  int b = -1;
  int in = 0;
  int out = 0;

  static Linear create(ParamStore& store, const std::string& name, const std::string& group,
                       int in, int out, Rng& rng, Init kind, bool bias = true);
  Var apply(Tape& t, Var x) const;
};

int conv_out_dim(int size, int k, int stride, int pad);

// Patch gather map: images (frames*H*W) x C row-major pixels -> patches
// (frames*Ho*Wo) x (k*k*C); -1 marks zero padding.
std::shared_ptr<const Eigen::MatrixXi> im2col_map(int frames, int h, int w, int c, int k,
                                                  int stride, int pad);

struct Conv2d {
  int w = -1;  // (k*k*cin) x cout
  int b = -1;  // 1 x cout
  int cin = 0, cout = 0, k = 3, stride = 1, pad = 1;

  static Conv2d create(ParamStore& store, const std::string& name, const std::string& group,
                       int cin, int cout, int k, int stride, int pad, Rng& rng);
  // x is (frames*H*W) x cin; returns (frames*Ho*Wo) x cout.
  Var apply(Tape& t, Var x, int frames, int h, int w,
            std::shared_ptr<const Eigen::MatrixXi> map) const;
};

// Gate layout follows the (reset, update, candidate) convention with the
// candidate path gated after the hidden matmul.
struct GruCell {
  Linear wx;  // in -> 3H
  Linear wh;  // H  -> 3H
  int hidden = 0;

  static GruCell create(ParamStore& store, const std::string& name, const std::string& group,
                        int in, int hidden, Rng& rng);
  Var step(Tape& t, Var x, Var h) const;  // x: B x in, h: B x H
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One instance per parameter group; `t` is the group's update count.
struct Adam {
  AdamConfig cfg;
  long steps = 0;

  // Applies all gradients present on the tape for parameters of `group`,
  // after clipping the group's global gradient norm at `clip` (0 disables).
  // Returns the pre-clip gradient norm.
  double step(ParamStore& store, const Tape& tape, const std::string& group, double lr,
              double clip);
};

}  // namespace flowpose::nn
