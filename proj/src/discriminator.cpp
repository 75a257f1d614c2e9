#include "flowpose/discriminator.hpp"

namespace flowpose {

MotionDiscriminatorNet MotionDiscriminatorNet::create(nn::ParamStore& store,
                                                      const std::string& prefix,
                                                      const std::string& group, int in_dim,
                                                      int hidden, int attn_dim, Rng& rng) {
  MotionDiscriminatorNet net;
  net.in_dim_ = in_dim;
  net.l1_ = nn::GruCell::create(store, prefix + ".gru1", group, in_dim, hidden, rng);
  net.l2_ = nn::GruCell::create(store, prefix + ".gru2", group, hidden, hidden, rng);
  net.attn_w1 = store.add(prefix + ".attn.w1", group,
                          nn::init_matrix(rng, hidden, attn_dim, nn::Init::Xavier));
  net.attn_b1 = store.add(prefix + ".attn.b1", group, Mat::Zero(1, attn_dim));
  net.attn_w2 = store.add(prefix + ".attn.w2", group,
                          nn::init_matrix(rng, attn_dim, 1, nn::Init::Xavier));
  net.out_ = nn::Linear::create(store, prefix + ".out", group, hidden, 1, rng, nn::Init::Xavier);
  return net;
}

nn::Var MotionDiscriminatorNet::score(nn::Tape& t, nn::Var poses, int batch, int seq_len) const {
  FLOWPOSE_REQUIRE(t.val(poses).cols() == in_dim_, "discriminator: input width mismatch");
  FLOWPOSE_REQUIRE(t.val(poses).rows() == static_cast<Eigen::Index>(batch) * seq_len,
                   "discriminator: rows must be batch*seq_len");
  FLOWPOSE_REQUIRE(t.val(poses).allFinite(), "discriminator: non-finite pose input");

  // Sequence-major -> time-major for contiguous per-step batches.
  auto to_time = std::make_shared<Eigen::MatrixXi>(batch * seq_len, in_dim_);
  for (int ts = 0; ts < seq_len; ++ts)
    for (int b = 0; b < batch; ++b)
      for (int c = 0; c < in_dim_; ++c)
        (*to_time)(ts * batch + b, c) = (b * seq_len + ts) * in_dim_ + c;
  nn::Var xt = t.gather(poses, to_time);

  nn::Var h1 = t.constant(Mat::Zero(batch, l1_.hidden));
  nn::Var h2 = t.constant(Mat::Zero(batch, l2_.hidden));
  std::vector<nn::Var> states(static_cast<std::size_t>(seq_len));
  std::vector<nn::Var> energies(static_cast<std::size_t>(seq_len));
  for (int ts = 0; ts < seq_len; ++ts) {
    nn::Var step_in = t.block(xt, ts * batch, 0, batch, in_dim_);
    h1 = l1_.step(t, step_in, h1);
    h2 = l2_.step(t, h1, h2);
    states[static_cast<std::size_t>(ts)] = h2;
    nn::Var e = t.matmul(
        t.tanh_(t.add_rowvec(t.matmul(h2, t.param(attn_w1)), t.param(attn_b1))),
        t.param(attn_w2));  // batch x 1
    energies[static_cast<std::size_t>(ts)] = e;
  }
  nn::Var weights = t.softmax_rows(t.hcat(energies));  // batch x seq_len
  nn::Var pooled;
  for (int ts = 0; ts < seq_len; ++ts) {
    nn::Var contrib = t.mul_colvec(states[static_cast<std::size_t>(ts)],
                                   t.block(weights, 0, ts, batch, 1));
    pooled = pooled.valid() ? t.add(pooled, contrib) : contrib;
  }
  return out_.apply(t, pooled);
}

nn::Var adv_gen_loss(nn::Tape& t, nn::Var scores_fake) {
  nn::Var diff = t.add_scalar(scores_fake, -1.0);
  return t.mean(t.cmul(diff, diff));
}

double adv_gen_loss(const Vec& scores_fake) {
  return (scores_fake.array() - 1.0).square().mean();
}

nn::Var disc_loss(nn::Tape& t, nn::Var scores_real, nn::Var scores_fake) {
  nn::Var real_diff = t.add_scalar(scores_real, -1.0);
  return t.add(t.mean(t.cmul(real_diff, real_diff)), t.mean(t.cmul(scores_fake, scores_fake)));
}

double disc_loss(const Vec& scores_real, const Vec& scores_fake) {
  return (scores_real.array() - 1.0).square().mean() + scores_fake.array().square().mean();
}

}  // namespace flowpose
