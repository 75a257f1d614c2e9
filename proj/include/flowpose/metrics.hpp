#pragma once

#include <string>
#include <vector>

#include "flowpose/temporal_encoder.hpp"
#include "flowpose/types.hpp"

namespace flowpose {

// Evaluation operates in millimeters; the body model's meter-unit outputs are
// scaled at this boundary.
constexpr double kMillimetersPerUnit = 1000.0;

// Subtracts joint 0 from every joint, per frame.
std::vector<Mat> center_root(const std::vector<Mat>& joints);

// Mean Euclidean joint distance; inputs must already be root-centered.
double mpjpe(const std::vector<Mat>& gt_mm, const std::vector<Mat>& pred_mm);

struct Similarity {
  double scale = 1.0;
  Mat3 rot = Mat3::Identity();
  Vec3 trans = Vec3::Zero();

  Mat apply(const Mat& points) const;  // s * R * p + t, rowwise
};

// Least-squares similarity src -> dst via SVD of the centered cross
// covariance with reflection correction. Throws DegenerateInputError when the
// configuration cannot pin down a rotation (covariance rank < 2).
Similarity procrustes_align(const Mat& src, const Mat& dst);

// Per-frame Procrustes alignment of pred onto gt, then MPJPE.
double pa_mpjpe(const std::vector<Mat>& gt_mm, const std::vector<Mat>& pred_mm);

// Mean per-vertex error after root translation alignment (no rotation fit).
// roots are the per-frame root joint positions used for the alignment.
double pve(const std::vector<Mat>& gt_vertices_mm, const std::vector<Mat>& pred_vertices_mm,
           const std::vector<Vec3>& gt_roots_mm, const std::vector<Vec3>& pred_roots_mm);

// Mean norm of the difference of second finite differences, mm/s^2.
double accel_error(const std::vector<Mat>& gt_mm, const std::vector<Mat>& pred_mm, double fps);

// Per-head mean of first-layer attention maps across records.
std::vector<Mat> attention_summary(const std::vector<AttentionRecord>& records);

struct EvalReport {
  double pa_mpjpe = 0.0;
  double mpjpe = 0.0;
  double pve = 0.0;
  double accel = 0.0;
};

// Plain-text table mirroring the standard column order
// (PA-MPJPE, MPJPE, PVE, Accel) plus a machine-readable twin.
std::string format_report(const EvalReport& rep, const std::string& label);
std::string report_json(const EvalReport& rep, const std::string& label);

}  // namespace flowpose
