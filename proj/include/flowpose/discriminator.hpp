#pragma once

#include <string>
#include <vector>

#include "flowpose/nn.hpp"

namespace flowpose {

// Motion discriminator over pose sequences: 2-layer recurrent encoder,
// learned self-attention pooling over time, linear head to one score per
// sequence. Input rows are flattened K x 9 rotation matrices, sequence-major.
class MotionDiscriminatorNet {
 public:
  static MotionDiscriminatorNet create(nn::ParamStore& store, const std::string& prefix,
                                       const std::string& group, int in_dim, int hidden,
                                       int attn_dim, Rng& rng);

  // poses: (batch*seq_len) x in_dim; returns batch x 1 scores.
  nn::Var score(nn::Tape& t, nn::Var poses, int batch, int seq_len) const;

  int input_dim() const { return in_dim_; }

 private:
  nn::GruCell l1_, l2_;
  int attn_w1 = -1, attn_b1 = -1, attn_w2 = -1;
  nn::Linear out_;
  int in_dim_ = 0;
};

// LSGAN generator objective: mean (score - 1)^2.
nn::Var adv_gen_loss(nn::Tape& t, nn::Var scores_fake);
double adv_gen_loss(const Vec& scores_fake);

// LSGAN discriminator objective: mean (real - 1)^2 + mean fake^2.
nn::Var disc_loss(nn::Tape& t, nn::Var scores_real, nn::Var scores_fake);
double disc_loss(const Vec& scores_real, const Vec& scores_fake);

}  // namespace flowpose
