#include "flowpose/metrics.hpp"

#include <cmath>
#include <sstream>

namespace flowpose {

std::vector<Mat> center_root(const std::vector<Mat>& joints) {
  std::vector<Mat> out(joints.size());
  for (std::size_t t = 0; t < joints.size(); ++t)
    out[t] = joints[t].rowwise() - joints[t].row(0);
  return out;
}

double mpjpe(const std::vector<Mat>& gt_mm, const std::vector<Mat>& pred_mm) {
  FLOWPOSE_REQUIRE(gt_mm.size() == pred_mm.size() && !gt_mm.empty(), "mpjpe: frame count");
  double acc = 0.0;
  long count = 0;
  for (std::size_t t = 0; t < gt_mm.size(); ++t) {
    FLOWPOSE_REQUIRE(gt_mm[t].rows() == pred_mm[t].rows() && gt_mm[t].cols() == 3 &&
                         pred_mm[t].cols() == 3,
                     "mpjpe: shape mismatch");
    acc += (gt_mm[t] - pred_mm[t]).rowwise().norm().sum();
    count += gt_mm[t].rows();
  }
  return acc / static_cast<double>(count);
}

Mat Similarity::apply(const Mat& points) const {
  return ((scale * (rot * points.transpose())).colwise() + trans).transpose();
}

Similarity procrustes_align(const Mat& src, const Mat& dst) {
  FLOWPOSE_REQUIRE(src.rows() == dst.rows() && src.cols() == 3 && dst.cols() == 3,
                   "procrustes: point sets must be J x 3");
  FLOWPOSE_REQUIRE(src.rows() >= 3, "procrustes: needs at least 3 points");
  const Eigen::RowVector3d mu_s = src.colwise().mean();
  const Eigen::RowVector3d mu_d = dst.colwise().mean();
  const Mat xs = src.rowwise() - mu_s;
  const Mat xd = dst.rowwise() - mu_d;
  const double var_s = xs.squaredNorm() / src.rows();
  if (var_s < 1e-18) throw DegenerateInputError("procrustes: source points coincide");
  const Mat3 cov = (xd.transpose() * xs) / src.rows();
  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 d = svd.singularValues();
  if (d[1] <= 1e-12 * std::max(d[0], 1e-300))
    throw DegenerateInputError("procrustes: covariance rank < 2");
  Vec3 signs(1, 1, 1);
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) signs[2] = -1;
  Similarity sim;
  sim.rot = svd.matrixU() * signs.asDiagonal() * svd.matrixV().transpose();
  sim.scale = (d.dot(signs)) / var_s;
  sim.trans = mu_d.transpose() - sim.scale * sim.rot * mu_s.transpose();
  return sim;
}

double pa_mpjpe(const std::vector<Mat>& gt_mm, const std::vector<Mat>& pred_mm) {
  FLOWPOSE_REQUIRE(gt_mm.size() == pred_mm.size() && !gt_mm.empty(), "pa_mpjpe: frame count");
  double acc = 0.0;
  long count = 0;
  for (std::size_t t = 0; t < gt_mm.size(); ++t) {
    const Similarity sim = procrustes_align(pred_mm[t], gt_mm[t]);
    acc += (gt_mm[t] - sim.apply(pred_mm[t])).rowwise().norm().sum();
    count += gt_mm[t].rows();
  }
  return acc / static_cast<double>(count);
}

double pve(const std::vector<Mat>& gt_vertices_mm, const std::vector<Mat>& pred_vertices_mm,
           const std::vector<Vec3>& gt_roots_mm, const std::vector<Vec3>& pred_roots_mm) {
  FLOWPOSE_REQUIRE(gt_vertices_mm.size() == pred_vertices_mm.size() && !gt_vertices_mm.empty(),
                   "pve: frame count");
  FLOWPOSE_REQUIRE(gt_roots_mm.size() == gt_vertices_mm.size() &&
                       pred_roots_mm.size() == gt_vertices_mm.size(),
                   "pve: root count");
  double acc = 0.0;
  long count = 0;
  for (std::size_t t = 0; t < gt_vertices_mm.size(); ++t) {
    FLOWPOSE_REQUIRE(gt_vertices_mm[t].rows() == pred_vertices_mm[t].rows(),
                     "pve: vertex count mismatch");
    const Mat gt = gt_vertices_mm[t].rowwise() - gt_roots_mm[t].transpose();
    const Mat pr = pred_vertices_mm[t].rowwise() - pred_roots_mm[t].transpose();
    acc += (gt - pr).rowwise().norm().sum();
    count += gt.rows();
  }
  return acc / static_cast<double>(count);
}

double accel_error(const std::vector<Mat>& gt_mm, const std::vector<Mat>& pred_mm, double fps) {
  FLOWPOSE_REQUIRE(gt_mm.size() == pred_mm.size(), "accel: frame count");
  FLOWPOSE_REQUIRE(gt_mm.size() >= 3, "accel: needs at least 3 frames");
  const double fps2 = fps * fps;
  double acc = 0.0;
  long count = 0;
  for (std::size_t t = 1; t + 1 < gt_mm.size(); ++t) {
    const Mat a_gt = (gt_mm[t + 1] - 2.0 * gt_mm[t] + gt_mm[t - 1]) * fps2;
    const Mat a_pr = (pred_mm[t + 1] - 2.0 * pred_mm[t] + pred_mm[t - 1]) * fps2;
    acc += (a_gt - a_pr).rowwise().norm().sum();
    count += a_gt.rows();
  }
  return acc / static_cast<double>(count);
}

std::vector<Mat> attention_summary(const std::vector<AttentionRecord>& records) {
  FLOWPOSE_REQUIRE(!records.empty(), "attention_summary: no records");
  const int heads = records[0].heads;
  const int t_len = records[0].seq_len;
  std::vector<Mat> out(static_cast<std::size_t>(heads), Mat::Zero(t_len, t_len));
  for (const AttentionRecord& rec : records) {
    FLOWPOSE_REQUIRE(rec.heads == heads && rec.seq_len == t_len,
                     "attention_summary: record shape mismatch");
    for (int h = 0; h < heads; ++h) out[static_cast<std::size_t>(h)] += rec.at(0, h);
  }
  for (Mat& m : out) m /= static_cast<double>(records.size());
  return out;
}

std::string format_report(const EvalReport& rep, const std::string& label) {
  std::ostringstream os;
  char line[160];
  os << "Method              PA-MPJPE      MPJPE        PVE      Accel\n";
  std::snprintf(line, sizeof(line), "%-18s %9.2f  %9.2f  %9.2f  %9.2f\n", label.c_str(),
                rep.pa_mpjpe, rep.mpjpe, rep.pve, rep.accel);
  os << line;
  return os.str();
}

std::string report_json(const EvalReport& rep, const std::string& label) {
  std::ostringstream os;
  os.precision(10);
  os << "{\"method\": \"" << label << "\", \"pa_mpjpe\": " << rep.pa_mpjpe
     << ", \"mpjpe\": " << rep.mpjpe << ", \"pve\": " << rep.pve << ", \"accel\": " << rep.accel
     << "}";
  return os.str();
}

}  // namespace flowpose
