#pragma once

#include <array>
#include <string>
#include <vector>

#include "flowpose/nn.hpp"

namespace flowpose {

struct TransformerConfig {
  int layers = 6;
  int heads = 8;
  int d_model = 512;
  int ff_dim = 2048;
  double dropout = 0.1;
  int max_seq = 128;

  int key_dim() const { return d_model / heads; }
  void validate() const {
    FLOWPOSE_REQUIRE(d_model % heads == 0, "transformer: d_model must divide by heads");
  }
};

// layers x heads x T x T attention maps of one sequence.
struct AttentionRecord {
  int layers = 0;
  int heads = 0;
  int seq_len = 0;
  std::vector<Mat> maps;  // indexed layer*heads + head

  const Mat& at(int layer, int head) const {
    return maps.at(static_cast<std::size_t>(layer * heads + head));
  }
};

// Q = X W^Q, K = X W^K, V = X W^V (bias-free projections).
std::array<nn::Var, 3> qkv_project(nn::Tape& t, nn::Var x, nn::Var wq, nn::Var wk, nn::Var wv);

// softmax(Q K^T / sqrt(d)) V with d the key dimension; an optional additive
// logit bias feeds masking/shift tests.
nn::Var attention(nn::Tape& t, nn::Var q, nn::Var k, nn::Var v);
nn::Var attention(nn::Tape& t, nn::Var q, nn::Var k, nn::Var v, nn::Var logit_bias);

// T x d sinusoidal positional encoding.
Mat sinusoidal_positional_encoding(int seq_len, int d_model);

// Pre-norm transformer encoder; attention spans whole sequences (no causal
// mask) and the feed-forward block is two fully connected layers with
// dropout. With zero layers the stack reduces to input + positional encoding.
class TransformerEncoderNet {
 public:
  static TransformerEncoderNet create(nn::ParamStore& store, const std::string& prefix,
                                      const std::string& group, const TransformerConfig& cfg,
                                      Rng& rng);

  // x: (batch*seq_len) x d_model, sequence-major rows. dropout_rng may be
  // null for deterministic inference. records, when non-null, receives one
  // AttentionRecord per batch element.
  nn::Var encode(nn::Tape& t, nn::Var x, int batch, int seq_len, bool add_positional,
                 double dropout_rate, Rng* dropout_rng,
                 std::vector<AttentionRecord>* records) const;

  const TransformerConfig& config() const { return cfg_; }

 private:
  struct Layer {
    int wq = -1, wk = -1, wv = -1;  // d_model x d_model, bias-free
    nn::Linear out;                 // d_model -> d_model
    int ln1_g = -1, ln1_b = -1, ln2_g = -1, ln2_b = -1;
    nn::Linear ff1, ff2;
  };
  TransformerConfig cfg_;
  std::vector<Layer> layers_;
};

// Causal recurrent baseline: 2-layer unidirectional recurrent encoder with a
// linear head back to the feature width.
class GruEncoderNet {
 public:
  static GruEncoderNet create(nn::ParamStore& store, const std::string& prefix,
                              const std::string& group, int in_dim, int hidden, int out_dim,
                              Rng& rng);
  nn::Var encode(nn::Tape& t, nn::Var x, int batch, int seq_len) const;

  int hidden_dim() const { return l1_.hidden; }

 private:
  nn::GruCell l1_, l2_;
  nn::Linear out_;
};

// Attention dump: small text header followed by raw 64-bit floats shaped
// layers x heads x T x T.
void save_attention_record(const std::string& path, const AttentionRecord& rec);
AttentionRecord load_attention_record(const std::string& path);

}  // namespace flowpose
