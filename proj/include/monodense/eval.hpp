#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "monodense/image.hpp"

namespace monodense {

/// Depth images use 0 (or negative) as "no value" throughout.
inline bool depth_valid(float d) { return d > 0.0f; }

/// Share of ground-truth-covered pixels that carry an estimate, in percent.
/// Empty when the ground truth has no valid pixels at all.
inline std::optional<double> mapping_density(const ImageF& est, const ImageF& gt) {
  if (est.width() != gt.width() || est.height() != gt.height())
    throw std::invalid_argument("mapping_density: image dims differ");
  std::size_t gt_valid = 0;
  std::size_t covered = 0;
  for (int y = 0; y < gt.height(); ++y)
    for (int x = 0; x < gt.width(); ++x) {
      if (!depth_valid(gt.at(x, y))) continue;
      ++gt_valid;
      if (depth_valid(est.at(x, y))) ++covered;
    }
  if (gt_valid == 0) return std::nullopt;
  return 100.0 * static_cast<double>(covered) / static_cast<double>(gt_valid);
}

/// Percentage of jointly valid pixels whose absolute depth error is within
/// each threshold. Thresholds must be ascending; the curve is non-decreasing.
/// Empty when no pixel is valid in both images.
inline std::optional<std::vector<double>> error_curve(const ImageF& est, const ImageF& gt,
                                                      const std::vector<double>& thresholds) {
  if (est.width() != gt.width() || est.height() != gt.height())
    throw std::invalid_argument("error_curve: image dims differ");
  for (std::size_t i = 1; i < thresholds.size(); ++i)
    if (thresholds[i] < thresholds[i - 1]) throw std::invalid_argument("error_curve: thresholds must ascend");

  std::size_t both = 0;
  std::vector<std::size_t> within(thresholds.size(), 0);
  for (int y = 0; y < gt.height(); ++y)
    for (int x = 0; x < gt.width(); ++x) {
      const float g = gt.at(x, y);
      const float e = est.at(x, y);
      if (!depth_valid(g) || !depth_valid(e)) continue;
      ++both;
      const double err = std::abs(static_cast<double>(e) - static_cast<double>(g));
      for (std::size_t i = 0; i < thresholds.size(); ++i)
        if (err <= thresholds[i]) ++within[i];
    }
  if (both == 0) return std::nullopt;
  std::vector<double> curve(thresholds.size());
  for (std::size_t i = 0; i < thresholds.size(); ++i)
    curve[i] = 100.0 * static_cast<double>(within[i]) / static_cast<double>(both);
  return curve;
}

inline std::vector<double> default_error_thresholds() {
  std::vector<double> t;
  for (int i = 1; i <= 50; ++i) t.push_back(0.01 * i);
  return t;
}

struct FrameMetrics {
  std::size_t frame_index = 0;
  double timestamp = 0.0;
  std::optional<double> density;
  std::optional<std::vector<double>> curve;
};

struct StageTimings {
  double aggregate_ms = 0.0;
  double sgm_ms = 0.0;
  double extract_ms = 0.0;
  double filter_ms = 0.0;
  double fuse_ms = 0.0;
  std::size_t keyframes = 0;
};

struct MetricsReport {
  std::string stages_label;
  std::vector<double> thresholds;
  std::vector<FrameMetrics> frames;
  std::optional<double> average_density;
  std::optional<std::vector<double>> average_curve;
  StageTimings timings;  // wall times; written separately, never to the CSV
  std::vector<std::string> failures;

  void finalize() {
    double density_sum = 0.0;
    std::size_t density_n = 0;
    std::vector<double> curve_sum(thresholds.size(), 0.0);
    std::size_t curve_n = 0;
    for (const FrameMetrics& f : frames) {
      if (f.density) {
        density_sum += *f.density;
        ++density_n;
      }
      if (f.curve) {
        for (std::size_t i = 0; i < curve_sum.size(); ++i) curve_sum[i] += (*f.curve)[i];
        ++curve_n;
      }
    }
    if (density_n > 0) average_density = density_sum / density_n;
    if (curve_n > 0) {
      for (double& v : curve_sum) v /= curve_n;
      average_curve = curve_sum;
    }
  }
};

/// One row per evaluated keyframe plus a final "average" row. Missing metrics
/// are written as "nan". No timing columns: the CSV is byte-reproducible.
inline void write_metrics_csv(const MetricsReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_metrics_csv: cannot open " + path);
  out << "frame,timestamp,stages,density_pct";
  char col[64];
  for (double t : report.thresholds) {
    std::snprintf(col, sizeof(col), ",pct_le_%.2f", t);
    out << col;
  }
  out << "\n";
  char buf[64];
  const auto put_value = [&](std::optional<double> v) {
    if (v) {
      std::snprintf(buf, sizeof(buf), ",%.4f", *v);
      out << buf;
    } else {
      out << ",nan";
    }
  };
  for (const FrameMetrics& f : report.frames) {
    std::snprintf(buf, sizeof(buf), "%zu,%.6f,", f.frame_index, f.timestamp);
    out << buf << report.stages_label;
    put_value(f.density);
    for (std::size_t i = 0; i < report.thresholds.size(); ++i)
      put_value(f.curve ? std::optional<double>((*f.curve)[i]) : std::nullopt);
    out << "\n";
  }
  out << "average,," << report.stages_label;
  put_value(report.average_density);
  for (std::size_t i = 0; i < report.thresholds.size(); ++i)
    put_value(report.average_curve ? std::optional<double>((*report.average_curve)[i]) : std::nullopt);
  out << "\n";
}

inline void write_timings(const MetricsReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_timings: cannot open " + path);
  const auto& t = report.timings;
  const double n = t.keyframes > 0 ? static_cast<double>(t.keyframes) : 1.0;
  out << "keyframes " << t.keyframes << "\n";
  out << "aggregate_ms_per_keyframe " << t.aggregate_ms / n << "\n";
  out << "sgm_ms_per_keyframe " << t.sgm_ms / n << "\n";
  out << "extract_ms_per_keyframe " << t.extract_ms / n << "\n";
  out << "filter_ms_per_keyframe " << t.filter_ms / n << "\n";
  out << "fuse_ms_per_keyframe " << t.fuse_ms / n << "\n";
}

}  // namespace monodense
