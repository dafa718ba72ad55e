#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "monodense/cost_volume.hpp"
#include "monodense/geometry.hpp"
#include "monodense/image.hpp"
#include "monodense/parallel.hpp"

namespace monodense {

inline constexpr double kInitPseudoCount = 10.0;
inline constexpr double kPropagateGate = 0.4;
inline constexpr double kCollisionGate = 0.5;
inline constexpr double kOutputGate = 0.6;
inline constexpr double kDefaultTranslationVariance = 0.05 * 0.05;

/// Per-pixel depth belief: Gaussian over depth (mu, sigma2) times a Beta over
/// the inlier ratio with pseudo-counts (a, b). The counts are real-valued:
/// moment matching does not keep them integral.
struct Hypothesis {
  double mu = 0.0;
  double sigma2 = 0.0;
  double a = kInitPseudoCount;
  double b = kInitPseudoCount;

  double inlier_expectation() const { return a / (a + b); }
};

struct HypothesisMap {
  int width = 0;
  int height = 0;
  std::vector<std::optional<Hypothesis>> cells;  // row-major, at most one per pixel
  std::int64_t frame_id = -1;

  HypothesisMap() = default;
  HypothesisMap(int w, int h, std::int64_t id = -1)
      : width(w), height(h), cells(static_cast<std::size_t>(w) * h), frame_id(id) {}

  std::optional<Hypothesis>& cell(int x, int y) { return cells[static_cast<std::size_t>(y) * width + x]; }
  const std::optional<Hypothesis>& cell(int x, int y) const {
    return cells[static_cast<std::size_t>(y) * width + x];
  }
};

/// Gaussian + uniform measurement mixture: inlier depths are Gaussian around
/// the true depth with variance r2(d), outliers uniform over [z_min, z_max].
struct MeasurementModel {
  double z_min = 0.0;
  double z_max = 0.0;
  double disparity_scale = 0.0;  // same 1/(baseline*focal) as the sample set
  double sigma_disp2 = 1.0;

  /// One-disparity-step noise mapped through d = 1/(disp * scale):
  /// r^2(d) = (d^2 * scale)^2 * sigma_disp2.
  double variance_at(double d) const {
    const double dd = d * d * disparity_scale;
    return dd * dd * sigma_disp2;
  }

  double uniform_density() const { return 1.0 / (z_max - z_min); }

  static MeasurementModel from_samples(const DepthSampleSet& samples, double sigma_disp2 = 1.0) {
    MeasurementModel m;
    m.z_min = samples.nearest_depth();
    m.z_max = samples.farthest_finite_depth();
    m.disparity_scale = samples.disparity_scale();
    m.sigma_disp2 = sigma_disp2;
    return m;
  }

  void validate() const {
    if (!(z_min < z_max)) throw std::invalid_argument("measurement model: need z_min < z_max");
    if (!(disparity_scale > 0.0)) throw std::invalid_argument("measurement model: disparity scale must be positive");
  }
};

inline Hypothesis init_hypothesis(double d, const DepthSampleSet& samples, double sigma_disp2 = 1.0) {
  if (!std::isfinite(d) || !(d > 0.0)) throw std::invalid_argument("init_hypothesis: depth must be finite and positive");
  const double dd = d * d * samples.disparity_scale();
  return Hypothesis{d, dd * dd * sigma_disp2, kInitPseudoCount, kInitPseudoCount};
}

/// Case (b): the measurement is explained by the uniform outlier component
/// only. The Gaussian factor is untouched and the Beta absorbs one outlier
/// count, exactly.
inline Hypothesis update_outlier_case(const Hypothesis& h) {
  return Hypothesis{h.mu, h.sigma2, h.a, h.b + 1.0};
}

namespace detail {
inline double normal_pdf(double x, double mean, double variance) {
  const double diff = x - mean;
  return std::exp(-0.5 * diff * diff / variance) / std::sqrt(2.0 * M_PI * variance);
}
}  // namespace detail

/// Case (a): fuse one depth measurement through the Gaussian + uniform mixture
/// and project the exact two-component posterior back onto a single
/// Gaussian x Beta by matching the first two moments of depth and inlier
/// ratio. Numerical degeneracy falls back to the outlier update.
inline Hypothesis update_inlier_case(const Hypothesis& h, double d, const MeasurementModel& model) {
  const double r2 = model.variance_at(d);
  const double s2 = 1.0 / (1.0 / h.sigma2 + 1.0 / r2);
  const double m = s2 * (h.mu / h.sigma2 + d / r2);

  double c1 = h.a / (h.a + h.b) * detail::normal_pdf(d, h.mu, h.sigma2 + r2);
  double c2 = h.b / (h.a + h.b) * model.uniform_density();
  const double norm = c1 + c2;
  if (!(norm > 0.0) || !std::isfinite(norm)) return update_outlier_case(h);
  c1 /= norm;
  c2 /= norm;

  const double apb1 = h.a + h.b + 1.0;
  const double apb2 = h.a + h.b + 2.0;
  const double f = c1 * (h.a + 1.0) / apb1 + c2 * h.a / apb1;
  const double e = c1 * (h.a + 1.0) * (h.a + 2.0) / (apb1 * apb2) + c2 * h.a * (h.a + 1.0) / (apb1 * apb2);

  Hypothesis out;
  out.mu = c1 * m + c2 * h.mu;
  out.sigma2 = c1 * (s2 + m * m) + c2 * (h.sigma2 + h.mu * h.mu) - out.mu * out.mu;
  out.a = (e - f) / (f - e / f);
  out.b = out.a * (1.0 - f) / f;
  if (!std::isfinite(out.mu) || !std::isfinite(out.sigma2) || !(out.sigma2 > 0.0) || !(out.a > 0.0) ||
      !(out.b > 0.0))
    return update_outlier_case(h);
  return out;
}

/// Occlusion-aware merge of hypotheses landing on one pixel: only candidates
/// likely to be inliers survive, and of those the nearest surface wins.
inline std::optional<Hypothesis> resolve_collision(std::span<const Hypothesis> candidates,
                                                   double min_expectation = kCollisionGate) {
  const Hypothesis* best = nullptr;
  for (const Hypothesis& h : candidates) {
    if (!(h.inlier_expectation() > min_expectation)) continue;
    if (best == nullptr || h.mu < best->mu) best = &h;
  }
  if (best == nullptr) return std::nullopt;
  return *best;
}

/// Reprojects every sufficiently trusted hypothesis into the new keyframe.
/// The mean shifts by the forward motion t_z (small-rotation model), the
/// variance inflates by sigma_tz2, and multi-source pixels are resolved by
/// resolve_collision. Scatter order is fixed, so results are deterministic.
inline HypothesisMap propagate(const HypothesisMap& prev, const Pose& pose_prev, const Pose& pose_new,
                               const Intrinsics& intr, double sigma_tz2 = kDefaultTranslationVariance,
                               double propagate_gate = kPropagateGate, double collision_gate = kCollisionGate,
                               std::int64_t new_frame_id = -1) {
  if (!(sigma_tz2 >= 0.0)) throw std::invalid_argument("propagate: sigma_tz2 must be >= 0");
  HypothesisMap out(prev.width, prev.height, new_frame_id);

  // forward displacement of the new camera, expressed in the new camera frame
  const double t_z = (pose_new.rotation.transpose() * (pose_new.translation - pose_prev.translation)).z();

  struct Scattered {
    std::int64_t dest;
    Hypothesis h;
  };
  std::vector<Scattered> scattered;
  scattered.reserve(prev.cells.size() / 4);

  for (int y = 0; y < prev.height; ++y) {
    for (int x = 0; x < prev.width; ++x) {
      const auto& cell = prev.cell(x, y);
      if (!cell || cell->inlier_expectation() < propagate_gate) continue;
      const Vector3d p_world = pose_prev.rotation * (cell->mu * intr.unproject({double(x), double(y)})) +
                               pose_prev.translation;
      const Vector3d p_new = pose_new.rotation.transpose() * (p_world - pose_new.translation);
      if (!(p_new.z() > 0.0)) continue;
      const Vector2d px = intr.project_normalized(p_new);
      const int nx = static_cast<int>(std::lround(px.x()));
      const int ny = static_cast<int>(std::lround(px.y()));
      if (nx < 0 || nx >= prev.width || ny < 0 || ny >= prev.height) continue;
      const double mu_new = cell->mu - t_z;
      if (!(mu_new > 0.0)) continue;
      scattered.push_back(
          {static_cast<std::int64_t>(ny) * prev.width + nx, {mu_new, cell->sigma2 + sigma_tz2, cell->a, cell->b}});
    }
  }

  std::stable_sort(scattered.begin(), scattered.end(),
                   [](const Scattered& l, const Scattered& r) { return l.dest < r.dest; });

  std::size_t i = 0;
  while (i < scattered.size()) {
    std::size_t j = i + 1;
    while (j < scattered.size() && scattered[j].dest == scattered[i].dest) ++j;
    std::optional<Hypothesis> winner;
    if (j - i == 1) {
      winner = scattered[i].h;  // a lone hypothesis is not a collision
    } else {
      std::vector<Hypothesis> bucket;
      bucket.reserve(j - i);
      for (std::size_t k = i; k < j; ++k) bucket.push_back(scattered[k].h);
      winner = resolve_collision(bucket, collision_gate);
    }
    out.cells[static_cast<std::size_t>(scattered[i].dest)] = winner;
    i = j;
  }
  return out;
}

/// Copies the nearest surviving hypothesis into every empty pixel within
/// `radius_px` (Euclidean). Donors are the pre-fill cells only; ties go to the
/// smallest row-major donor index.
inline HypothesisMap fill_holes(const HypothesisMap& map, double radius_px = 2.0, int num_threads = 1) {
  if (!(radius_px >= 0.0)) throw std::invalid_argument("fill_holes: radius must be >= 0");
  struct Offset {
    int dy, dx, d2;
  };
  std::vector<Offset> offsets;
  const int r = static_cast<int>(std::ceil(radius_px));
  const double r2 = radius_px * radius_px;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) {
      if (dx == 0 && dy == 0) continue;
      const int d2 = dx * dx + dy * dy;
      if (d2 <= r2) offsets.push_back({dy, dx, d2});
    }
  std::sort(offsets.begin(), offsets.end(), [](const Offset& l, const Offset& r_) {
    if (l.d2 != r_.d2) return l.d2 < r_.d2;
    if (l.dy != r_.dy) return l.dy < r_.dy;
    return l.dx < r_.dx;
  });

  HypothesisMap out = map;
  parallel_for(0, map.height, num_threads, [&](int y) {
    for (int x = 0; x < map.width; ++x) {
      if (map.cell(x, y)) continue;
      for (const Offset& o : offsets) {
        const int sx = x + o.dx;
        const int sy = y + o.dy;
        if (sx < 0 || sx >= map.width || sy < 0 || sy >= map.height) continue;
        const auto& donor = map.cell(sx, sy);
        if (donor) {
          out.cell(x, y) = donor;
          break;
        }
      }
    }
  });
  return out;
}

/// Per-pixel Bayesian update of the map with one keyframe's depth decisions.
/// Valid depths start or refine a hypothesis, flat outliers count against the
/// inlier ratio, and missing data leaves cells untouched.
inline HypothesisMap fuse_observations(const HypothesisMap& map, const DepthObservation& obs,
                                       const DepthSampleSet& samples, const MeasurementModel& model,
                                       int num_threads = 1) {
  if (obs.status.width() != map.width || obs.status.height() != map.height)
    throw std::invalid_argument("fuse_observations: observation dims do not match map");
  HypothesisMap out = map;
  parallel_for(0, map.height, num_threads, [&](int y) {
    for (int x = 0; x < map.width; ++x) {
      const auto& cell = map.cell(x, y);
      const PixelStatus st = obs.status.at(x, y);
      if (st == PixelStatus::kValid) {
        // refinement may overshoot the sweep range by half a disparity step
        const double d = std::clamp(static_cast<double>(obs.depth.at(x, y)), model.z_min, model.z_max);
        out.cell(x, y) = cell ? update_inlier_case(*cell, d, model) : init_hypothesis(d, samples, model.sigma_disp2);
      } else if (st == PixelStatus::kFlatOutlier && cell) {
        out.cell(x, y) = update_outlier_case(*cell);
      }
    }
  });
  return out;
}

/// Gated filter result for downstream integration. Pixels failing the gate
/// are absent, encoded as an all-zero triple (inlier_expectation 0).
struct FilterOutput {
  int width = 0;
  int height = 0;
  std::int64_t frame_id = -1;
  ImageF depth;
  ImageF variance;
  ImageF inlier_expectation;

  FilterOutput() = default;
  FilterOutput(int w, int h, std::int64_t id = -1)
      : width(w), height(h), frame_id(id), depth(w, h, 0.0f), variance(w, h, 0.0f),
        inlier_expectation(w, h, 0.0f) {}

  bool has(int x, int y) const { return inlier_expectation.at(x, y) > 0.0f; }
};

inline FilterOutput emit_output(const HypothesisMap& map, double min_expectation = kOutputGate) {
  FilterOutput out(map.width, map.height, map.frame_id);
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) {
      const auto& cell = map.cell(x, y);
      if (!cell) continue;
      const double e = cell->inlier_expectation();
      if (!(e > min_expectation)) continue;
      out.depth.at(x, y) = static_cast<float>(cell->mu);
      out.variance.at(x, y) = static_cast<float>(cell->sigma2);
      out.inlier_expectation.at(x, y) = static_cast<float>(e);
    }
  }
  return out;
}

// --- fixed little-endian file layout for filter outputs ------------------
//
//   bytes 0..3   magic "DFO1"
//   bytes 4..7   uint32 width
//   bytes 8..11  uint32 height
//   bytes 12..19 int64 frame_id
//   then three row-major float32 planes: depth, variance, inlier expectation

namespace detail {
inline void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}
inline void put_f32(std::string& buf, float f) {
  std::uint32_t v;
  std::memcpy(&v, &f, 4);
  put_u32(buf, v);
}
inline float get_f32(const unsigned char* p) {
  const std::uint32_t v = get_u32(p);
  float f;
  std::memcpy(&f, &v, 4);
  return f;
}
}  // namespace detail

inline void save_filter_output(const FilterOutput& fo, const std::string& path) {
  std::string buf;
  buf.reserve(20 + static_cast<std::size_t>(fo.width) * fo.height * 12);
  buf.append("DFO1");
  detail::put_u32(buf, static_cast<std::uint32_t>(fo.width));
  detail::put_u32(buf, static_cast<std::uint32_t>(fo.height));
  detail::put_u64(buf, static_cast<std::uint64_t>(fo.frame_id));
  for (const ImageF* plane : {&fo.depth, &fo.variance, &fo.inlier_expectation})
    for (float v : plane->data()) detail::put_f32(buf, v);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_filter_output: cannot open " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("save_filter_output: write failed for " + path);
}

inline FilterOutput load_filter_output(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_filter_output: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 20 || buf.compare(0, 4, "DFO1") != 0)
    throw std::runtime_error("load_filter_output: bad header in " + path);
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
  const std::uint32_t w = detail::get_u32(p + 4);
  const std::uint32_t h = detail::get_u32(p + 8);
  const std::int64_t id = static_cast<std::int64_t>(detail::get_u64(p + 12));
  const std::size_t plane = static_cast<std::size_t>(w) * h;
  if (buf.size() != 20 + plane * 12) throw std::runtime_error("load_filter_output: truncated file " + path);
  FilterOutput fo(static_cast<int>(w), static_cast<int>(h), id);
  ImageF* planes[3] = {&fo.depth, &fo.variance, &fo.inlier_expectation};
  std::size_t off = 20;
  for (ImageF* img : planes)
    for (float& v : img->data()) {
      v = detail::get_f32(p + off);
      off += 4;
    }
  return fo;
}

}  // namespace monodense
