#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "monodense/image.hpp"

namespace monodense {

using Eigen::Matrix3d;
using Eigen::Vector2d;
using Eigen::Vector3d;

/// Pinhole intrinsics for a rectified, undistorted camera.
struct Intrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw std::invalid_argument("intrinsics: focal lengths must be positive");
    if (!(cx > 0.0 && cx < width)) throw std::invalid_argument("intrinsics: cx outside image");
    if (!(cy > 0.0 && cy < height)) throw std::invalid_argument("intrinsics: cy outside image");
  }

  Matrix3d matrix() const {
    Matrix3d k;
    k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
    return k;
  }

  Matrix3d inverse_matrix() const {
    Matrix3d ki;
    ki << 1.0 / fx, 0.0, -cx / fx, 0.0, 1.0 / fy, -cy / fy, 0.0, 0.0, 1.0;
    return ki;
  }

  Vector3d unproject(const Vector2d& px) const {
    return {(px.x() - cx) / fx, (px.y() - cy) / fy, 1.0};
  }

  Vector2d project_normalized(const Vector3d& p_cam) const {
    return {fx * p_cam.x() / p_cam.z() + cx, fy * p_cam.y() / p_cam.z() + cy};
  }
};

/// Camera-to-world rigid transform: x_world = rotation * x_cam + translation.
struct Pose {
  Matrix3d rotation = Matrix3d::Identity();
  Vector3d translation = Vector3d::Zero();

  void validate(double tol = 1e-9) const {
    const Matrix3d err = rotation.transpose() * rotation - Matrix3d::Identity();
    if (err.cwiseAbs().maxCoeff() > tol) throw std::invalid_argument("pose: rotation not orthonormal");
    if (std::abs(rotation.determinant() - 1.0) > tol) throw std::invalid_argument("pose: rotation not proper");
  }

  Vector3d to_world(const Vector3d& p_cam) const { return rotation * p_cam + translation; }
  Vector3d to_camera(const Vector3d& p_world) const { return rotation.transpose() * (p_world - translation); }

  static Pose from_quaternion(const Vector3d& t, double qx, double qy, double qz, double qw) {
    Eigen::Quaterniond q(qw, qx, qy, qz);
    q.normalize();
    return Pose{q.toRotationMatrix(), t};
  }
};

/// One posed grayscale input frame.
struct CameraFrame {
  ImageU8 image;
  Intrinsics intrinsics;
  Pose pose;
  double timestamp = 0.0;

  void validate() const {
    intrinsics.validate();
    pose.validate();
    if (image.width() != intrinsics.width || image.height() != intrinsics.height)
      throw std::invalid_argument("camera frame: image dims do not match intrinsics");
  }
};

/// Depth samples uniform in disparity: depth(k) = 1 / (disparity(k) * disparity_scale)
/// with disparity(k) = L-1-k. The zero-disparity entry (index L-1) stands for
/// infinite depth and is stored as a finite sentinel; warping at that sample
/// must use the rotation-only term (see WarpCoefficients::warp_far).
class DepthSampleSet {
 public:
  static constexpr double kFarSentinel = 1e30;

  DepthSampleSet() = default;
  DepthSampleSet(double disparity_scale, int count) : scale_(disparity_scale), samples_(count) {
    for (int k = 0; k + 1 < count; ++k) samples_[k] = 1.0 / ((count - 1 - k) * scale_);
    samples_[count - 1] = kFarSentinel;
  }

  int count() const { return static_cast<int>(samples_.size()); }
  double disparity_scale() const { return scale_; }
  bool is_far(int k) const { return k == count() - 1; }

  double depth(int k) const { return samples_[k]; }
  int disparity(int k) const { return count() - 1 - k; }

  /// Depth at a real-valued disparity index (used after sub-sample refinement).
  double depth_from_index(double k) const { return 1.0 / ((count() - 1 - k) * scale_); }

  double nearest_depth() const { return samples_.front(); }
  double farthest_finite_depth() const { return samples_[count() - 2]; }

  const std::vector<double>& samples() const { return samples_; }

 private:
  double scale_ = 0.0;
  std::vector<double> samples_;
};

/// disparity_scale = 1 / (baseline * focal). Baseline is a virtual sweep
/// baseline chosen from the expected scene depth, not a physical rig measure.
inline DepthSampleSet build_sample_set(double baseline_m, double focal_px, int count) {
  if (!(baseline_m > 0.0)) throw std::invalid_argument("build_sample_set: baseline must be positive");
  if (!(focal_px > 0.0)) throw std::invalid_argument("build_sample_set: focal must be positive");
  if (count < 2) throw std::invalid_argument("build_sample_set: need at least 2 samples");
  return DepthSampleSet(1.0 / (baseline_m * focal_px), count);
}

/// Linear warp of a source pixel into a target view as a function of depth:
/// homogeneous target pixel = depth * h + c.
struct WarpCoefficients {
  Vector3d h = Vector3d::Zero();
  Vector3d c = Vector3d::Zero();

  /// Dehomogenized target pixel at the given depth; empty if it lands behind
  /// the target camera.
  std::optional<Vector2d> warp(double depth) const {
    const Vector3d p = depth * h + c;
    if (!(p.z() > 0.0)) return std::nullopt;
    return Vector2d(p.x() / p.z(), p.y() / p.z());
  }

  /// Depth -> infinity limit: the translation term vanishes and the warp
  /// degenerates to the rotation-only homography.
  std::optional<Vector2d> warp_far() const {
    if (!(h.z() > 0.0)) return std::nullopt;
    return Vector2d(h.x() / h.z(), h.y() / h.z());
  }
};

/// Precomputed i -> j warp for a whole frame pair. h varies per pixel, c is
/// shared by every pixel of the pair.
class FramePairWarper {
 public:
  FramePairWarper(const CameraFrame& frame_i, const CameraFrame& frame_j) {
    const Matrix3d r_w_to_j = frame_j.pose.rotation.transpose();
    m_ = frame_j.intrinsics.matrix() * r_w_to_j * frame_i.pose.rotation * frame_i.intrinsics.inverse_matrix();
    c_ = frame_j.intrinsics.matrix() * (r_w_to_j * (frame_i.pose.translation - frame_j.pose.translation));
  }

  WarpCoefficients coeffs(const Vector2d& pixel) const {
    return {m_ * Vector3d(pixel.x(), pixel.y(), 1.0), c_};
  }

  const Matrix3d& pixel_matrix() const { return m_; }
  const Vector3d& translation_term() const { return c_; }

 private:
  Matrix3d m_;
  Vector3d c_;
};

inline WarpCoefficients warp_coeffs(const Vector2d& pixel, const CameraFrame& frame_i, const CameraFrame& frame_j) {
  return FramePairWarper(frame_i, frame_j).coeffs(pixel);
}

/// Pixel at depth (along the optical axis) -> world point.
inline Vector3d unproject_to_world(const CameraFrame& frame, const Vector2d& pixel, double depth) {
  return frame.pose.to_world(depth * frame.intrinsics.unproject(pixel));
}

/// World point -> pixel; empty if behind the camera.
inline std::optional<Vector2d> project_to_pixel(const CameraFrame& frame, const Vector3d& p_world) {
  const Vector3d p_cam = frame.pose.to_camera(p_world);
  if (!(p_cam.z() > 0.0)) return std::nullopt;
  return frame.intrinsics.project_normalized(p_cam);
}

struct ParallaxResult {
  double pixels = 0.0;
  bool valid = false;  // false: no probe pixel projected inside the other frame
};

namespace detail {
inline std::optional<Vector2d> dehomogenize(const Vector3d& p) {
  if (!(p.z() > 0.0)) return std::nullopt;
  return Vector2d(p.x() / p.z(), p.y() / p.z());
}
}  // namespace detail

/// Mean rotation-compensated displacement, in pixels, of a fixed 16x12 probe
/// grid warped from `ref` into `other` at `probe_depth`. The rotation-only
/// warp uses the same expression with the translation term zeroed, so pure
/// rotation yields exactly zero.
inline ParallaxResult parallax_deviation(const CameraFrame& ref, const CameraFrame& other, double probe_depth) {
  if (!(probe_depth > 0.0)) throw std::invalid_argument("parallax_deviation: probe depth must be positive");
  constexpr int kGridX = 16;
  constexpr int kGridY = 12;
  const FramePairWarper warper(ref, other);
  const Vector3d zero = Vector3d::Zero();

  double sum = 0.0;
  int used = 0;
  for (int gy = 0; gy < kGridY; ++gy) {
    for (int gx = 0; gx < kGridX; ++gx) {
      const Vector2d u((gx + 0.5) * ref.intrinsics.width / kGridX, (gy + 0.5) * ref.intrinsics.height / kGridY);
      const WarpCoefficients wc = warper.coeffs(u);
      const auto full = detail::dehomogenize(probe_depth * wc.h + wc.c);
      const auto rot_only = detail::dehomogenize(probe_depth * wc.h + zero);
      if (!full || !rot_only) continue;
      if (full->x() < 0.0 || full->x() > other.intrinsics.width - 1 || full->y() < 0.0 ||
          full->y() > other.intrinsics.height - 1)
        continue;
      sum += (*full - *rot_only).norm();
      ++used;
    }
  }
  if (used == 0) return {0.0, false};
  return {sum / used, true};
}

/// Picks up to `max_frames` past frames whose parallax deviations best cover
/// the uniform targets m * max_parallax_px / max_frames, m = 1..max_frames.
/// Zero-parallax frames carry no stereo information and are never selected.
inline std::vector<const CameraFrame*> select_aggregation_frames(std::span<const CameraFrame* const> history,
                                                                 const CameraFrame& ref, int max_frames,
                                                                 double max_parallax_px, double probe_depth) {
  if (max_frames < 1) throw std::invalid_argument("select_aggregation_frames: max_frames must be >= 1");
  struct Candidate {
    const CameraFrame* frame;
    double deviation;
  };
  std::vector<Candidate> candidates;
  candidates.reserve(history.size());
  for (const CameraFrame* frame : history) {
    const ParallaxResult r = parallax_deviation(ref, *frame, probe_depth);
    if (r.valid && r.pixels > 0.0) candidates.push_back({frame, r.pixels});
  }

  std::vector<const CameraFrame*> selected;
  std::vector<bool> used(candidates.size(), false);
  for (int m = 1; m <= max_frames; ++m) {
    const double target = max_parallax_px * m / max_frames;
    int best = -1;
    double best_err = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (used[i]) continue;
      const double err = std::abs(candidates[i].deviation - target);
      if (err < best_err) {
        best_err = err;
        best = static_cast<int>(i);
      }
    }
    if (best < 0) break;
    used[best] = true;
    selected.push_back(candidates[best].frame);
  }
  return selected;
}

}  // namespace monodense
