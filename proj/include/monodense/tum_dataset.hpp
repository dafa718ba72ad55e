#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "monodense/geometry.hpp"
#include "monodense/png_io.hpp"

namespace monodense {

struct TimedPath {
  double timestamp = 0.0;
  std::string path;  // relative to the sequence directory
};

struct TimedPose {
  double timestamp = 0.0;
  Vector3d translation = Vector3d::Zero();
  double qx = 0.0, qy = 0.0, qz = 0.0, qw = 1.0;
};

struct SequenceManifest {
  std::filesystem::path root;
  std::vector<TimedPath> rgb_entries;
  std::vector<TimedPath> depth_entries;  // optional ground truth, evaluation only
  std::vector<TimedPose> gt_poses;
  std::vector<std::string> warnings;
};

struct AssociatedFrame {
  std::string rgb_path;
  std::optional<std::string> depth_path;
  Pose pose;
  double timestamp = 0.0;
};

namespace detail {

inline bool parse_timed_path(const std::string& line, TimedPath& out) {
  std::istringstream ss(line);
  return static_cast<bool>(ss >> out.timestamp >> out.path);
}

inline bool parse_timed_pose(const std::string& line, TimedPose& out) {
  std::istringstream ss(line);
  return static_cast<bool>(ss >> out.timestamp >> out.translation.x() >> out.translation.y() >>
                           out.translation.z() >> out.qx >> out.qy >> out.qz >> out.qw);
}

template <typename Entry, typename ParseFn>
inline std::vector<Entry> parse_list_file(const std::filesystem::path& file, ParseFn&& parse,
                                          std::vector<std::string>& warnings) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("missing input file: " + file.string());
  std::vector<Entry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    Entry e;
    if (!parse(line, e)) {
      warnings.push_back(file.filename().string() + ":" + std::to_string(line_no) + ": malformed line");
      continue;
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace detail

/// Parses rgb.txt + groundtruth.txt (+ optional depth.txt) in the TUM RGB-D
/// text layout: '#' comments, "timestamp filename" and
/// "timestamp tx ty tz qx qy qz qw" records. Quaternions off unit norm by more
/// than 1e-6 are renormalized with a warning.
inline SequenceManifest parse_tum_sequence(const std::filesystem::path& dir) {
  SequenceManifest m;
  m.root = dir;
  m.rgb_entries =
      detail::parse_list_file<TimedPath>(dir / "rgb.txt", detail::parse_timed_path, m.warnings);
  m.gt_poses =
      detail::parse_list_file<TimedPose>(dir / "groundtruth.txt", detail::parse_timed_pose, m.warnings);
  if (std::filesystem::exists(dir / "depth.txt"))
    m.depth_entries =
        detail::parse_list_file<TimedPath>(dir / "depth.txt", detail::parse_timed_path, m.warnings);

  if (m.rgb_entries.empty()) throw std::runtime_error("empty manifest: no parseable rgb entries in " + dir.string());
  if (m.gt_poses.empty()) throw std::runtime_error("empty manifest: no parseable poses in " + dir.string());

  for (TimedPose& p : m.gt_poses) {
    const double norm = std::sqrt(p.qx * p.qx + p.qy * p.qy + p.qz * p.qz + p.qw * p.qw);
    if (!(norm > 0.0)) throw std::runtime_error("zero-norm quaternion at t=" + std::to_string(p.timestamp));
    if (std::abs(norm - 1.0) > 1e-6) {
      m.warnings.push_back("quaternion at t=" + std::to_string(p.timestamp) + " has norm " +
                           std::to_string(norm) + ", renormalized");
      p.qx /= norm;
      p.qy /= norm;
      p.qz /= norm;
      p.qw /= norm;
    }
  }
  return m;
}

/// Writes a manifest back out in the same text layout (round-trip aid).
inline void write_manifest(const SequenceManifest& m, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto write_paths = [](const std::filesystem::path& file, const std::vector<TimedPath>& entries) {
    std::ofstream out(file);
    if (!out) throw std::runtime_error("write_manifest: cannot open " + file.string());
    out << "# timestamp filename\n";
    char line[512];
    for (const TimedPath& e : entries) {
      std::snprintf(line, sizeof(line), "%.6f %s\n", e.timestamp, e.path.c_str());
      out << line;
    }
  };
  write_paths(dir / "rgb.txt", m.rgb_entries);
  if (!m.depth_entries.empty()) write_paths(dir / "depth.txt", m.depth_entries);
  std::ofstream out(dir / "groundtruth.txt");
  if (!out) throw std::runtime_error("write_manifest: cannot open groundtruth.txt");
  out << "# timestamp tx ty tz qx qy qz qw\n";
  char line[512];
  for (const TimedPose& p : m.gt_poses) {
    std::snprintf(line, sizeof(line), "%.6f %.9g %.9g %.9g %.9g %.9g %.9g %.9g\n", p.timestamp,
                  p.translation.x(), p.translation.y(), p.translation.z(), p.qx, p.qy, p.qz, p.qw);
    out << line;
  }
}

namespace detail {

// Greedy mutual-nearest timestamp matching: all pairs within max_diff sorted
// by |dt|, taken while both sides are unused. Symmetric in its two arguments.
inline std::vector<std::pair<std::size_t, std::size_t>> match_timestamps(const std::vector<double>& a,
                                                                         const std::vector<double>& b,
                                                                         double max_diff) {
  struct Pair {
    double diff;
    std::size_t i, j;
  };
  std::vector<Pair> pairs;
  for (std::size_t i = 0; i < a.size(); ++i) {
    // b is sorted; scan the window within max_diff
    const auto lo = std::lower_bound(b.begin(), b.end(), a[i] - max_diff);
    for (auto it = lo; it != b.end() && *it <= a[i] + max_diff; ++it)
      pairs.push_back({std::abs(*it - a[i]), i, static_cast<std::size_t>(it - b.begin())});
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& l, const Pair& r) {
    if (l.diff != r.diff) return l.diff < r.diff;
    if (l.i != r.i) return l.i < r.i;
    return l.j < r.j;
  });
  std::vector<bool> used_a(a.size(), false), used_b(b.size(), false);
  std::vector<std::pair<std::size_t, std::size_t>> matches;
  for (const Pair& p : pairs) {
    if (used_a[p.i] || used_b[p.j]) continue;
    used_a[p.i] = true;
    used_b[p.j] = true;
    matches.emplace_back(p.i, p.j);
  }
  std::sort(matches.begin(), matches.end());
  return matches;
}

}  // namespace detail

struct AssociationReport {
  std::size_t dropped_rgb = 0;  // rgb frames without a pose within max_diff
};

/// Pairs rgb entries with ground-truth poses (and depth maps when present) by
/// nearest timestamp. Each entry is used at most once; rgb frames without a
/// pose match are dropped and counted.
inline std::vector<AssociatedFrame> associate(const SequenceManifest& m, double max_diff = 0.02,
                                              AssociationReport* report = nullptr) {
  if (!(max_diff > 0.0)) throw std::invalid_argument("associate: max_diff must be positive");
  std::vector<double> rgb_t, pose_t, depth_t;
  for (const auto& e : m.rgb_entries) rgb_t.push_back(e.timestamp);
  for (const auto& p : m.gt_poses) pose_t.push_back(p.timestamp);
  for (const auto& e : m.depth_entries) depth_t.push_back(e.timestamp);

  const auto rgb_pose = detail::match_timestamps(rgb_t, pose_t, max_diff);
  const auto rgb_depth = detail::match_timestamps(rgb_t, depth_t, max_diff);
  std::map<std::size_t, std::size_t> depth_of_rgb(rgb_depth.begin(), rgb_depth.end());

  std::vector<AssociatedFrame> frames;
  for (const auto& [ri, pi] : rgb_pose) {
    AssociatedFrame f;
    f.rgb_path = m.rgb_entries[ri].path;
    f.timestamp = m.rgb_entries[ri].timestamp;
    const TimedPose& tp = m.gt_poses[pi];
    f.pose = Pose::from_quaternion(tp.translation, tp.qx, tp.qy, tp.qz, tp.qw);
    if (const auto it = depth_of_rgb.find(ri); it != depth_of_rgb.end())
      f.depth_path = m.depth_entries[it->second].path;
    frames.push_back(std::move(f));
  }
  std::sort(frames.begin(), frames.end(),
            [](const AssociatedFrame& l, const AssociatedFrame& r) { return l.timestamp < r.timestamp; });
  if (report) report->dropped_rgb = m.rgb_entries.size() - frames.size();
  if (frames.empty()) throw std::runtime_error("associate: no rgb/pose pairs within max_diff");
  return frames;
}

/// Plain key=value camera file: fx, fy, cx, cy, width, height. Unknown keys
/// warn and are ignored; missing keys raise a named error.
inline Intrinsics load_camera_config(const std::filesystem::path& path,
                                     std::vector<std::string>* warnings = nullptr) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("missing camera config: " + path.string());
  std::map<std::string, double> values;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    key.erase(std::remove_if(key.begin(), key.end(), [](char c) { return c == ' ' || c == '\t'; }), key.end());
    values[key] = std::stod(line.substr(eq + 1));
  }
  const auto need = [&](const std::string& key) {
    const auto it = values.find(key);
    if (it == values.end()) throw std::runtime_error("camera config missing key: " + key);
    return it->second;
  };
  Intrinsics intr;
  intr.fx = need("fx");
  intr.fy = need("fy");
  intr.cx = need("cx");
  intr.cy = need("cy");
  intr.width = static_cast<int>(need("width"));
  intr.height = static_cast<int>(need("height"));
  for (const auto& [key, value] : values) {
    (void)value;
    if (key != "fx" && key != "fy" && key != "cx" && key != "cy" && key != "width" && key != "height" &&
        warnings != nullptr)
      warnings->push_back("camera config: unknown key '" + key + "' ignored");
  }
  intr.validate();
  return intr;
}

/// Loads the frame's grayscale image and attaches pose + intrinsics.
inline CameraFrame load_frame(const SequenceManifest& m, const AssociatedFrame& assoc, const Intrinsics& intr) {
  CameraFrame frame;
  frame.image = read_png_gray8((m.root / assoc.rgb_path).string());
  frame.intrinsics = intr;
  frame.pose = assoc.pose;
  frame.timestamp = assoc.timestamp;
  frame.validate();
  return frame;
}

inline ImageF load_gt_depth(const SequenceManifest& m, const AssociatedFrame& assoc,
                            double counts_per_meter = kDefaultDepthScale) {
  if (!assoc.depth_path) throw std::runtime_error("load_gt_depth: frame has no associated depth map");
  return decode_depth(read_png_gray16((m.root / *assoc.depth_path).string()), counts_per_meter);
}

}  // namespace monodense
