#include "flowpose/temporal_encoder.hpp"

#include <cmath>
#include <fstream>

#include "flowpose/io.hpp"

namespace flowpose {

std::array<nn::Var, 3> qkv_project(nn::Tape& t, nn::Var x, nn::Var wq, nn::Var wk, nn::Var wv) {
  return {t.matmul(x, wq), t.matmul(x, wk), t.matmul(x, wv)};
}

nn::Var attention(nn::Tape& t, nn::Var q, nn::Var k, nn::Var v) {
  return attention(t, q, k, v, nn::Var{});
}

nn::Var attention(nn::Tape& t, nn::Var q, nn::Var k, nn::Var v, nn::Var logit_bias) {
  const double d = static_cast<double>(t.val(k).cols());
  FLOWPOSE_REQUIRE(t.val(q).cols() == t.val(k).cols(), "attention: q/k width mismatch");
  FLOWPOSE_REQUIRE(t.val(k).rows() == t.val(v).rows(), "attention: k/v length mismatch");
  nn::Var logits = t.matmul(q, t.transpose(k));
  if (logit_bias.valid()) logits = t.add(logits, logit_bias);
  nn::Var weights = t.softmax_rows(t.scalar_mul(logits, 1.0 / std::sqrt(d)));
  return t.matmul(weights, v);
}

Mat sinusoidal_positional_encoding(int seq_len, int d_model) {
  Mat pe(seq_len, d_model);
  for (int pos = 0; pos < seq_len; ++pos)
    for (int i = 0; i < d_model; ++i) {
      const double angle = pos / std::pow(10000.0, double(2 * (i / 2)) / d_model);
      pe(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  return pe;
}

TransformerEncoderNet TransformerEncoderNet::create(nn::ParamStore& store,
                                                    const std::string& prefix,
                                                    const std::string& group,
                                                    const TransformerConfig& cfg, Rng& rng) {
  cfg.validate();
  TransformerEncoderNet net;
  net.cfg_ = cfg;
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string base = prefix + ".layer" + std::to_string(l);
    Layer layer;
    layer.wq = store.add(base + ".wq", group,
                         nn::init_matrix(rng, cfg.d_model, cfg.d_model, nn::Init::Xavier));
    layer.wk = store.add(base + ".wk", group,
                         nn::init_matrix(rng, cfg.d_model, cfg.d_model, nn::Init::Xavier));
    layer.wv = store.add(base + ".wv", group,
                         nn::init_matrix(rng, cfg.d_model, cfg.d_model, nn::Init::Xavier));
    layer.out = nn::Linear::create(store, base + ".out", group, cfg.d_model, cfg.d_model, rng,
                                   nn::Init::Xavier);
    layer.ln1_g = store.add(base + ".ln1.gamma", group, Mat::Ones(1, cfg.d_model));
    layer.ln1_b = store.add(base + ".ln1.beta", group, Mat::Zero(1, cfg.d_model));
    layer.ln2_g = store.add(base + ".ln2.gamma", group, Mat::Ones(1, cfg.d_model));
    layer.ln2_b = store.add(base + ".ln2.beta", group, Mat::Zero(1, cfg.d_model));
    layer.ff1 = nn::Linear::create(store, base + ".ff1", group, cfg.d_model, cfg.ff_dim, rng,
                                   nn::Init::He);
    layer.ff2 = nn::Linear::create(store, base + ".ff2", group, cfg.ff_dim, cfg.d_model, rng,
                                   nn::Init::Xavier);
    net.layers_.push_back(layer);
  }
  return net;
}

nn::Var TransformerEncoderNet::encode(nn::Tape& t, nn::Var x, int batch, int seq_len,
                                      bool add_positional, double dropout_rate, Rng* dropout_rng,
                                      std::vector<AttentionRecord>* records) const {
  FLOWPOSE_REQUIRE(seq_len <= cfg_.max_seq, "encode: sequence length exceeds configured maximum");
  FLOWPOSE_REQUIRE(t.val(x).rows() == static_cast<Eigen::Index>(batch) * seq_len,
                   "encode: rows must be batch*seq_len");
  FLOWPOSE_REQUIRE(t.val(x).cols() == cfg_.d_model, "encode: feature width mismatch");
  const bool drop = dropout_rate > 0.0 && dropout_rng != nullptr;

  if (records) {
    records->assign(static_cast<std::size_t>(batch), AttentionRecord{});
    for (auto& r : *records) {
      r.layers = cfg_.layers;
      r.heads = cfg_.heads;
      r.seq_len = seq_len;
      r.maps.resize(static_cast<std::size_t>(cfg_.layers * cfg_.heads));
    }
  }

  nn::Var cur = x;
  if (add_positional) {
    const Mat pe = sinusoidal_positional_encoding(seq_len, cfg_.d_model);
    Mat tiled(batch * seq_len, cfg_.d_model);
    for (int b = 0; b < batch; ++b) tiled.middleRows(b * seq_len, seq_len) = pe;
    cur = t.add(cur, t.constant(tiled));
  }

  const int dk = cfg_.key_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  for (int l = 0; l < cfg_.layers; ++l) {
    const Layer& layer = layers_[static_cast<std::size_t>(l)];
    // Attention sublayer (pre-norm).
    nn::Var normed = t.layer_norm(cur, t.param(layer.ln1_g), t.param(layer.ln1_b));
    auto [q, k, v] =
        qkv_project(t, normed, t.param(layer.wq), t.param(layer.wk), t.param(layer.wv));
    std::vector<nn::Var> seq_outs;
    seq_outs.reserve(static_cast<std::size_t>(batch));
    for (int b = 0; b < batch; ++b) {
      std::vector<nn::Var> head_outs;
      head_outs.reserve(static_cast<std::size_t>(cfg_.heads));
      for (int hidx = 0; hidx < cfg_.heads; ++hidx) {
        nn::Var qh = t.block(q, b * seq_len, hidx * dk, seq_len, dk);
        nn::Var kh = t.block(k, b * seq_len, hidx * dk, seq_len, dk);
        nn::Var vh = t.block(v, b * seq_len, hidx * dk, seq_len, dk);
        nn::Var weights = t.softmax_rows(t.scalar_mul(t.matmul(qh, t.transpose(kh)), scale));
        if (records)
          (*records)[static_cast<std::size_t>(b)]
              .maps[static_cast<std::size_t>(l * cfg_.heads + hidx)] = t.val(weights);
        head_outs.push_back(t.matmul(weights, vh));
      }
      seq_outs.push_back(t.hcat(head_outs));
    }
    nn::Var attn = layer.out.apply(t, t.vcat(seq_outs));
    if (drop) attn = t.dropout(attn, dropout_rate, *dropout_rng);
    cur = t.add(cur, attn);

    // Feed-forward sublayer (two fully connected layers and dropout).
    nn::Var normed2 = t.layer_norm(cur, t.param(layer.ln2_g), t.param(layer.ln2_b));
    nn::Var ff = layer.ff2.apply(t, t.relu(layer.ff1.apply(t, normed2)));
    if (drop) ff = t.dropout(ff, dropout_rate, *dropout_rng);
    cur = t.add(cur, ff);
  }
  return cur;
}

GruEncoderNet GruEncoderNet::create(nn::ParamStore& store, const std::string& prefix,
                                    const std::string& group, int in_dim, int hidden,
                                    int out_dim, Rng& rng) {
  GruEncoderNet net;
  net.l1_ = nn::GruCell::create(store, prefix + ".gru1", group, in_dim, hidden, rng);
  net.l2_ = nn::GruCell::create(store, prefix + ".gru2", group, hidden, hidden, rng);
  net.out_ = nn::Linear::create(store, prefix + ".out", group, hidden, out_dim, rng,
                                nn::Init::Xavier);
  return net;
}

nn::Var GruEncoderNet::encode(nn::Tape& t, nn::Var x, int batch, int seq_len) const {
  const int in_dim = static_cast<int>(t.val(x).cols());
  FLOWPOSE_REQUIRE(t.val(x).rows() == static_cast<Eigen::Index>(batch) * seq_len,
                   "gru_encode: rows must be batch*seq_len");
  // Sequence-major -> time-major so each step is one contiguous block.
  auto to_time = std::make_shared<Eigen::MatrixXi>(batch * seq_len, in_dim);
  for (int ts = 0; ts < seq_len; ++ts)
    for (int b = 0; b < batch; ++b)
      for (int c = 0; c < in_dim; ++c)
        (*to_time)(ts * batch + b, c) = (b * seq_len + ts) * in_dim + c;
  nn::Var xt = t.gather(x, to_time);

  nn::Var h1 = t.constant(Mat::Zero(batch, l1_.hidden));
  nn::Var h2 = t.constant(Mat::Zero(batch, l2_.hidden));
  std::vector<nn::Var> outs(static_cast<std::size_t>(seq_len));
  for (int ts = 0; ts < seq_len; ++ts) {
    nn::Var step_in = t.block(xt, ts * batch, 0, batch, in_dim);
    h1 = l1_.step(t, step_in, h1);
    h2 = l2_.step(t, h1, h2);
    outs[static_cast<std::size_t>(ts)] = h2;
  }
  nn::Var time_major = t.vcat(outs);  // (T*B) x hidden
  const int hidden = l2_.hidden;
  auto to_seq = std::make_shared<Eigen::MatrixXi>(batch * seq_len, hidden);
  for (int b = 0; b < batch; ++b)
    for (int ts = 0; ts < seq_len; ++ts)
      for (int c = 0; c < hidden; ++c)
        (*to_seq)(b * seq_len + ts, c) = (ts * batch + b) * hidden + c;
  return out_.apply(t, t.gather(time_major, to_seq));
}

void save_attention_record(const std::string& path, const AttentionRecord& rec) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open for writing: " + path);
  out << "ATTN1 " << rec.layers << " " << rec.heads << " " << rec.seq_len << "\n";
  for (const Mat& m : rec.maps)
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const double v = m(r, c);
        out.write(reinterpret_cast<const char*>(&v), sizeof(double));
      }
  if (!out) throw FormatError("write failed: " + path);
}

AttentionRecord load_attention_record(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open: " + path);
  std::string tag;
  AttentionRecord rec;
  in >> tag >> rec.layers >> rec.heads >> rec.seq_len;
  if (tag != "ATTN1" || !in) throw FormatError("attention record: bad header");
  in.get();  // newline
  rec.maps.assign(static_cast<std::size_t>(rec.layers * rec.heads),
                  Mat(rec.seq_len, rec.seq_len));
  for (Mat& m : rec.maps)
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        double v;
        in.read(reinterpret_cast<char*>(&v), sizeof(double));
        if (!in) throw FormatError("attention record: truncated");
        m(r, c) = v;
      }
  return rec;
}

}  // namespace flowpose
