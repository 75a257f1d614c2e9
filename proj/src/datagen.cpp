#include "flowpose/datagen.hpp"

#include <algorithm>
#include <cmath>

#include "flowpose/io.hpp"

namespace flowpose {

namespace {

// Catmull-Rom value at continuous key coordinate u over uniformly spaced keys
// with clamped endpoints. keys has one column per channel.
double catmull_rom(const Vec& keys, double u) {
  const int n = static_cast<int>(keys.size());
  if (n == 1) return keys[0];
  const double uc = std::clamp(u, 0.0, double(n - 1));
  int i = std::min(static_cast<int>(std::floor(uc)), n - 2);
  const double s = uc - i;
  auto key = [&](int j) { return keys[std::clamp(j, 0, n - 1)]; };
  const double p0 = key(i - 1), p1 = key(i), p2 = key(i + 1), p3 = key(i + 2);
  const double m1 = 0.5 * (p2 - p0);
  const double m2 = 0.5 * (p3 - p1);
  // Coefficient form so constant keys reproduce exactly (static scenes must
  // render bit-identical frames and an exactly zero flow field).
  const double a2 = (-3.0 * p1 + 3.0 * p2) - 2.0 * m1 - m2;
  const double a3 = (2.0 * p1 - 2.0 * p2) + m1 + m2;
  return p1 + s * (m1 + s * (a2 + s * a3));
}

Vec3 joint_color(int j) {
  const double h = std::fmod(0.618033988749895 * (j + 1), 1.0) * 6.0;
  const int sect = static_cast<int>(h);
  const double f = h - sect;
  const double v = 1.0, s = 0.75;
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (sect % 6) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

}  // namespace

double blob_responsibility(double px, double py, double jx, double jy, double sigma) {
  const double dx = px - jx, dy = py - jy;
  return std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
}

FrameSequence gen_motion(const BodyTemplate& tpl, std::uint64_t seed, const GenConfig& cfg) {
  FLOWPOSE_REQUIRE(cfg.T >= 2, "gen_motion: T must be >= 2");
  Rng rng(seed * 0x9E3779B97F4A7C15ULL + 0x2545F4914F6CDD1DULL);
  const int k = tpl.joint_count();
  const int t_len = cfg.T;
  const double inv_smooth = 1.0 / cfg.smoothness;

  // Sparse keyframes per pose channel, cubic interpolation in between.
  const int segments = std::max(1, (t_len - 1 + cfg.keyframe_every - 1) / cfg.keyframe_every);
  const int n_keys = segments + 1;
  Mat base(k, 3);
  for (int j = 0; j < k; ++j)
    for (int c = 0; c < 3; ++c) base(j, c) = cfg.base_pose_amp * rng.normal();
  std::vector<Mat> keys(static_cast<std::size_t>(n_keys), Mat(k, 3));
  for (int q = 0; q < n_keys; ++q)
    for (int j = 0; j < k; ++j)
      for (int c = 0; c < 3; ++c)
        keys[static_cast<std::size_t>(q)](j, c) = base(j, c) + cfg.pose_amp * inv_smooth * rng.normal();

  Vec shape = Vec::Zero(tpl.shape_dim());
  for (int i = 0; i < tpl.shape_dim(); ++i) shape[i] = cfg.shape_std * rng.normal();

  // Camera wobble keys (fractional scale, pixel shift), same spline scheme.
  Mat cam_keys(n_keys, 3);
  for (int q = 0; q < n_keys; ++q) {
    cam_keys(q, 0) = cfg.scale_jitter * inv_smooth * rng.normal();
    cam_keys(q, 1) = cfg.shift_jitter_px * inv_smooth * rng.normal();
    cam_keys(q, 2) = cfg.shift_jitter_px * inv_smooth * rng.normal();
  }

  FrameSequence seq;
  seq.seed = seed;
  seq.id = seed;
  seq.fps = cfg.fps;
  seq.height = cfg.H;
  seq.width = cfg.W;
  seq.gt_params.resize(static_cast<std::size_t>(t_len));
  seq.gt_joints3d.resize(static_cast<std::size_t>(t_len));
  seq.gt_joints2d.resize(static_cast<std::size_t>(t_len));

  const double key_rate = double(segments) / double(t_len - 1);
  for (int t = 0; t < t_len; ++t) {
    SmplParams p;
    p.rep = PoseRep::AxisAngle;
    p.pose.resize(k, 3);
    const double u = t * key_rate;
    for (int j = 0; j < k; ++j)
      for (int c = 0; c < 3; ++c) {
        Vec channel(n_keys);
        for (int q = 0; q < n_keys; ++q) channel[q] = keys[static_cast<std::size_t>(q)](j, c);
        p.pose(j, c) = catmull_rom(channel, u);
      }
    p.shape = shape;
    seq.gt_params[static_cast<std::size_t>(t)] = std::move(p);
    seq.gt_joints3d[static_cast<std::size_t>(t)] =
        forward(tpl, seq.gt_params[static_cast<std::size_t>(t)]).joints3d;
  }

  // Fit a base camera so the whole trajectory sits margin_px inside the
  // frame, then add the slow wobble (margin_px leaves room for it).
  double min_x = 1e30, max_x = -1e30, min_y = 1e30, max_y = -1e30;
  for (const Mat& j3 : seq.gt_joints3d) {
    min_x = std::min(min_x, j3.col(0).minCoeff());
    max_x = std::max(max_x, j3.col(0).maxCoeff());
    min_y = std::min(min_y, j3.col(1).minCoeff());
    max_y = std::max(max_y, j3.col(1).maxCoeff());
  }
  const double cx = 0.5 * (min_x + max_x), cy = 0.5 * (min_y + max_y);
  const double half_x = std::max(0.5 * (max_x - min_x), 1e-3);
  const double half_y = std::max(0.5 * (max_y - min_y), 1e-3);
  const double s0 = std::min((0.5 * (cfg.W - 1) - cfg.margin_px) / half_x,
                             (0.5 * (cfg.H - 1) - cfg.margin_px) / half_y);
  FLOWPOSE_REQUIRE(s0 > 0, "gen_motion: image too small for the margin");

  for (int t = 0; t < t_len; ++t) {
    const double u = t * key_rate;
    Vec sk(n_keys), xk(n_keys), yk(n_keys);
    for (int q = 0; q < n_keys; ++q) {
      sk[q] = cam_keys(q, 0);
      xk[q] = cam_keys(q, 1);
      yk[q] = cam_keys(q, 2);
    }
    const double s = s0 * (1.0 + catmull_rom(sk, u));
    auto& p = seq.gt_params[static_cast<std::size_t>(t)];
    p.camera[0] = s;
    p.camera[1] = 0.5 * (cfg.W - 1) - s * cx + catmull_rom(xk, u);
    p.camera[2] = 0.5 * (cfg.H - 1) - s * cy + catmull_rom(yk, u);
    seq.gt_joints2d[static_cast<std::size_t>(t)] =
        project_weak_perspective(seq.gt_joints3d[static_cast<std::size_t>(t)], p.camera);
  }
  return seq;
}

void render_frames(FrameSequence& seq, const GenConfig& cfg) {
  const int t_len = seq.length();
  const int w = cfg.W, h = cfg.H;
  seq.frames.assign(static_cast<std::size_t>(t_len), MatF::Zero(w * h, 3));
  for (int t = 0; t < t_len; ++t) {
    const Mat& j2 = seq.gt_joints2d[static_cast<std::size_t>(t)];
    for (int j = 0; j < j2.rows(); ++j) {
      const double x = j2(j, 0), y = j2(j, 1);
      if (x < -2 * cfg.sigma || x > w - 1 + 2 * cfg.sigma || y < -2 * cfg.sigma ||
          y > h - 1 + 2 * cfg.sigma)
        throw OutOfFrameError("render_frames: joint projects outside the image");
    }
    MatF& frame = seq.frames[static_cast<std::size_t>(t)];
    for (int py = 0; py < h; ++py)
      for (int px = 0; px < w; ++px) {
        double acc[3] = {0, 0, 0};
        for (int j = 0; j < j2.rows(); ++j) {
          const double r = blob_responsibility(px, py, j2(j, 0), j2(j, 1), cfg.sigma);
          if (r < 1e-12) continue;
          const Vec3 col = joint_color(j);
          acc[0] += r * col[0];
          acc[1] += r * col[1];
          acc[2] += r * col[2];
        }
        for (int c = 0; c < 3; ++c)
          frame(py * w + px, c) = static_cast<float>(std::clamp(acc[c], 0.0, 1.0));
      }
  }
}

void exact_flow(FrameSequence& seq, const GenConfig& cfg) {
  const int t_len = seq.length();
  const int w = cfg.W, h = cfg.H;
  seq.flows.assign(static_cast<std::size_t>(t_len), MatF::Zero(w * h, 2));
  for (int t = 1; t < t_len; ++t) {
    const Mat& cur = seq.gt_joints2d[static_cast<std::size_t>(t)];
    const Mat& prev = seq.gt_joints2d[static_cast<std::size_t>(t - 1)];
    MatF& flow = seq.flows[static_cast<std::size_t>(t)];
    for (int py = 0; py < h; ++py)
      for (int px = 0; px < w; ++px) {
        double best = -1.0;
        int best_j = -1;
        for (int j = 0; j < cur.rows(); ++j) {
          const double r = blob_responsibility(px, py, cur(j, 0), cur(j, 1), cfg.sigma);
          if (r > best) {
            best = r;
            best_j = j;
          }
        }
        if (best_j >= 0 && best >= cfg.eps_r) {
          flow(py * w + px, 0) = static_cast<float>(cur(best_j, 0) - prev(best_j, 0));
          flow(py * w + px, 1) = static_cast<float>(cur(best_j, 1) - prev(best_j, 1));
        }
      }
  }
}

FrameSequence generate_sequence(const BodyTemplate& tpl, std::uint64_t seed, const GenConfig& cfg) {
  FrameSequence seq = gen_motion(tpl, seed, cfg);
  render_frames(seq, cfg);
  exact_flow(seq, cfg);
  return seq;
}

// --------------------------------------------------------------------------
// Dataset container ("DS1")

namespace {

void put_sequence(io::ByteSink& s, const FrameSequence& seq) {
  const int t_len = seq.length();
  const int k = seq.joint_count();
  s.put_u64(seq.id);
  s.put_u64(seq.seed);
  s.put_f64(seq.fps);
  // Frames and flows stacked frame-major, 32-bit.
  s.put_str("frames");
  s.put_u32(static_cast<std::uint32_t>(t_len));
  for (const MatF& f : seq.frames) s.put_mat_f32(f);
  s.put_str("flows");
  s.put_u32(static_cast<std::uint32_t>(t_len));
  for (const MatF& f : seq.flows) s.put_mat_f32(f);
  Mat pose(t_len * k, 3), cam(t_len, 3), j3(t_len * k, 3), j2(t_len * k, 2);
  for (int t = 0; t < t_len; ++t) {
    pose.middleRows(t * k, k) = seq.gt_params[static_cast<std::size_t>(t)].pose;
    cam.row(t) = seq.gt_params[static_cast<std::size_t>(t)].camera.transpose();
    j3.middleRows(t * k, k) = seq.gt_joints3d[static_cast<std::size_t>(t)];
    j2.middleRows(t * k, k) = seq.gt_joints2d[static_cast<std::size_t>(t)];
  }
  s.put_named_f64("pose", pose);
  s.put_named_f64("shape", seq.gt_params[0].shape);
  s.put_named_f64("camera", cam);
  s.put_named_f64("joints3d", j3);
  s.put_named_f64("joints2d", j2);
}

FrameSequence get_sequence(io::ByteSource& src, int t_len, int k, int h, int w) {
  FrameSequence seq;
  seq.height = h;
  seq.width = w;
  seq.id = src.get_u64();
  seq.seed = src.get_u64();
  seq.fps = src.get_f64();
  if (src.get_str() != "frames") throw FormatError("dataset: expected frames array");
  if (src.get_u32() != static_cast<std::uint32_t>(t_len)) throw FormatError("dataset: frame count");
  seq.frames.resize(static_cast<std::size_t>(t_len));
  for (int t = 0; t < t_len; ++t) seq.frames[static_cast<std::size_t>(t)] = src.get_mat_f32();
  if (src.get_str() != "flows") throw FormatError("dataset: expected flows array");
  if (src.get_u32() != static_cast<std::uint32_t>(t_len)) throw FormatError("dataset: flow count");
  seq.flows.resize(static_cast<std::size_t>(t_len));
  for (int t = 0; t < t_len; ++t) seq.flows[static_cast<std::size_t>(t)] = src.get_mat_f32();
  const Mat pose = src.get_named_f64("pose");
  const Mat shape = src.get_named_f64("shape");
  const Mat cam = src.get_named_f64("camera");
  const Mat j3 = src.get_named_f64("joints3d");
  const Mat j2 = src.get_named_f64("joints2d");
  seq.gt_params.resize(static_cast<std::size_t>(t_len));
  seq.gt_joints3d.resize(static_cast<std::size_t>(t_len));
  seq.gt_joints2d.resize(static_cast<std::size_t>(t_len));
  for (int t = 0; t < t_len; ++t) {
    auto& p = seq.gt_params[static_cast<std::size_t>(t)];
    p.rep = PoseRep::AxisAngle;
    p.pose = pose.middleRows(t * k, k);
    p.shape = shape.col(0);
    p.camera = cam.row(t).transpose();
    seq.gt_joints3d[static_cast<std::size_t>(t)] = j3.middleRows(t * k, k);
    seq.gt_joints2d[static_cast<std::size_t>(t)] = j2.middleRows(t * k, k);
  }
  return seq;
}

}  // namespace

void write_dataset(const std::string& path, const std::vector<FrameSequence>& sequences) {
  io::ByteSink s;
  s.put_bytes("DS1", 3);
  s.put_u8(1);
  const int t_len = sequences.empty() ? 0 : sequences[0].length();
  const int h = sequences.empty() ? 0 : sequences[0].height;
  const int w = sequences.empty() ? 0 : sequences[0].width;
  const int k = sequences.empty() ? 0 : sequences[0].joint_count();
  s.put_u32(static_cast<std::uint32_t>(t_len));
  s.put_u32(static_cast<std::uint32_t>(h));
  s.put_u32(static_cast<std::uint32_t>(w));
  s.put_u32(static_cast<std::uint32_t>(k));
  s.put_u32(static_cast<std::uint32_t>(sequences.size()));
  for (const FrameSequence& seq : sequences) {
    FLOWPOSE_REQUIRE(seq.length() == t_len && seq.height == h && seq.width == w &&
                         seq.joint_count() == k,
                     "write_dataset: sequences must share dimensions");
    io::ByteSink rec;
    put_sequence(rec, seq);
    s.put_u64(rec.buf.size());
    s.put_bytes(rec.buf.data(), rec.buf.size());
    s.put_u32(io::crc32(rec.buf.data(), rec.buf.size()));
  }
  io::write_file(path, s.buf);
}

std::vector<FrameSequence> read_dataset(const std::string& path) {
  const auto bytes = io::read_file(path);
  io::ByteSource src(bytes);
  char magic[3];
  src.get_bytes(magic, 3);
  if (std::string(magic, 3) != "DS1") throw FormatError("dataset: bad magic (want DS1)");
  if (src.get_u8() != 1) throw FormatError("dataset: unsupported version");
  const int t_len = static_cast<int>(src.get_u32());
  const int h = static_cast<int>(src.get_u32());
  const int w = static_cast<int>(src.get_u32());
  const int k = static_cast<int>(src.get_u32());
  const std::uint32_t count = src.get_u32();
  std::vector<FrameSequence> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint64_t len = src.get_u64();
    if (src.remaining() < len + 4) throw FormatError("dataset: truncated record");
    io::ByteSource rec(src.p, len);
    src.p += len;
    const std::uint32_t want_crc = src.get_u32();
    if (io::crc32(rec.p, len) != want_crc) throw FormatError("dataset: record checksum failure");
    out.push_back(get_sequence(rec, t_len, k, h, w));
  }
  return out;
}

// --------------------------------------------------------------------------
// Pose pool ("PP1")

PosePool build_pose_pool(const BodyTemplate& tpl, const std::vector<std::uint64_t>& pool_seeds,
                         const std::vector<std::uint64_t>& train_seeds, const GenConfig& cfg) {
  for (std::uint64_t s : pool_seeds)
    for (std::uint64_t t : train_seeds)
      if (s == t)
        throw SeedOverlapError("pose pool seed " + std::to_string(s) +
                               " collides with a training seed");
  PosePool pool;
  pool.source = "synthetic";
  const int k = tpl.joint_count();
  for (std::uint64_t s : pool_seeds) {
    const FrameSequence seq = gen_motion(tpl, s, cfg);
    Mat flat(cfg.T, k * 3);
    for (int t = 0; t < cfg.T; ++t)
      for (int j = 0; j < k; ++j)
        for (int c = 0; c < 3; ++c)
          flat(t, j * 3 + c) = seq.gt_params[static_cast<std::size_t>(t)].pose(j, c);
    pool.sequences.push_back(std::move(flat));
  }
  return pool;
}

void save_pose_pool(const std::string& path, const PosePool& pool) {
  io::ByteSink s;
  s.put_bytes("PP1", 3);
  s.put_u8(1);
  s.put_u32(static_cast<std::uint32_t>(pool.sequences.size()));
  for (const Mat& m : pool.sequences) s.put_mat_f64(m);
  io::write_file(path, s.buf);
}

PosePool load_pose_pool(const std::string& path) {
  const auto bytes = io::read_file(path);
  io::ByteSource src(bytes);
  char magic[3];
  src.get_bytes(magic, 3);
  if (std::string(magic, 3) != "PP1") throw FormatError("pose pool: bad magic (want PP1)");
  if (src.get_u8() != 1) throw FormatError("pose pool: unsupported version");
  const std::uint32_t count = src.get_u32();
  PosePool pool;
  pool.source = path;
  for (std::uint32_t i = 0; i < count; ++i) {
    Mat m = src.get_mat_f64();
    FLOWPOSE_REQUIRE(m.cols() % 3 == 0, "pose pool: columns must be K*3");
    if (!pool.sequences.empty())
      FLOWPOSE_REQUIRE(m.rows() == pool.sequences[0].rows(), "pose pool: ragged lengths");
    FLOWPOSE_REQUIRE(m.allFinite(), "pose pool: non-finite rotation");
    pool.sequences.push_back(std::move(m));
  }
  return pool;
}

}  // namespace flowpose
