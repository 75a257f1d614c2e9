#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flowpose/body_model.hpp"
#include "flowpose/rng.hpp"
#include "flowpose/types.hpp"

namespace flowpose {

struct OutOfFrameError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GenConfig {
  int T = 16;
  int H = 64;
  int W = 64;
  double smoothness = 1.0;  // keyframe spread scales with 1/smoothness
  double sigma = 2.0;       // blob std-dev, pixels
  double eps_r = 1e-3;      // responsibility threshold for the flow field
  double fps = 30.0;
  int keyframe_every = 8;
  double pose_amp = 0.16;       // keyframe axis-angle std at smoothness 1
  double base_pose_amp = 0.22;  // per-sequence static pose offset
  double shape_std = 0.3;
  double margin_px = 9.0;       // min distance of any joint to the border
  double scale_jitter = 0.02;   // camera wobble at smoothness 1
  double shift_jitter_px = 1.0;
};

// One training/eval sample. Frames and flows are stored as 32-bit matrices of
// shape (H*W) x C in row-major pixel order (row = y*W + x), matching the
// on-disk layout bit for bit.
struct FrameSequence {
  std::vector<MatF> frames;          // T of (H*W) x 3 in [0,1]
  std::vector<MatF> flows;           // T of (H*W) x 2, pixel displacements
  std::vector<SmplParams> gt_params; // axis-angle pose; camera in pixel units
  std::vector<Mat> gt_joints3d;      // T of K x 3 (model units)
  std::vector<Mat> gt_joints2d;      // T of K x 2 (pixels)
  double fps = 30.0;
  std::uint64_t id = 0;
  std::uint64_t seed = 0;
  int height = 0;
  int width = 0;

  int length() const { return static_cast<int>(gt_params.size()); }
  int joint_count() const { return gt_joints3d.empty() ? 0 : static_cast<int>(gt_joints3d[0].rows()); }
};

struct PosePool {
  std::vector<Mat> sequences;  // each T x (K*3), frame-major axis-angle rows
  std::string source;
};

// Ground-truth part only: smooth per-joint trajectories from cubic
// (Catmull-Rom) interpolation of sparse random keyframes, a fixed shape, and
// a slowly varying camera fitted so every joint stays margin_px inside the
// image. Deterministic in seed.
FrameSequence gen_motion(const BodyTemplate& tpl, std::uint64_t seed, const GenConfig& cfg);

// Gaussian-blob imaging model; throws OutOfFrameError when a joint projects
// farther than 2*sigma outside the image.
void render_frames(FrameSequence& seq, const GenConfig& cfg);

// Analytic backward flow: flows[t] (t >= 1) holds, at each pixel, the 2d
// displacement since frame t-1 of the joint with maximum blob responsibility
// in frame t; zero where every responsibility is below eps_r. flows[0] == 0.
void exact_flow(FrameSequence& seq, const GenConfig& cfg);

// gen_motion + render_frames + exact_flow.
FrameSequence generate_sequence(const BodyTemplate& tpl, std::uint64_t seed, const GenConfig& cfg);

// Dataset container, magic "DS1"; CRC32 checked per record.
void write_dataset(const std::string& path, const std::vector<FrameSequence>& sequences);
std::vector<FrameSequence> read_dataset(const std::string& path);

// Pose pool for the motion discriminator. Pool seeds must be disjoint from
// training seeds; a collision throws SeedOverlapError.
PosePool build_pose_pool(const BodyTemplate& tpl, const std::vector<std::uint64_t>& pool_seeds,
                         const std::vector<std::uint64_t>& train_seeds, const GenConfig& cfg);

// Binary container of count x T x (K*3) axis-angle doubles, magic "PP1".
void save_pose_pool(const std::string& path, const PosePool& pool);
PosePool load_pose_pool(const std::string& path);

// Blob responsibility of one joint at a pixel, shared by the renderer, the
// flow builder and their tests.
double blob_responsibility(double px, double py, double jx, double jy, double sigma);

}  // namespace flowpose
