#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "monodense/depth_filter.hpp"
#include "monodense/geometry.hpp"
#include "monodense/parallel.hpp"
#include "monodense/tsdf_volume.hpp"

namespace monodense {

/// Pipeline stages, cumulative by construction: spatial regularization needs
/// the temporal volume, refinement needs regularized costs, and the filter
/// consumes refined observations.
struct StageFlags {
  bool temporal = true;  // always on
  bool sgm = false;
  bool refine = false;
  bool filter = false;

  void validate() const {
    if (!temporal) throw std::invalid_argument("stages: temporal aggregation is mandatory");
    if (refine && !sgm) throw std::invalid_argument("stages: D requires S");
    if (filter && !refine) throw std::invalid_argument("stages: H requires D");
  }

  std::string label() const {
    std::string s = "T";
    if (sgm) s += "+S";
    if (refine) s += "+D";
    if (filter) s += "+H";
    return s;
  }

  /// Parses "T,S,D,H" (any subset containing T).
  static StageFlags parse(const std::string& text) {
    StageFlags flags;
    flags.temporal = false;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (tok == "T") flags.temporal = true;
      else if (tok == "S") flags.sgm = true;
      else if (tok == "D") flags.refine = true;
      else if (tok == "H") flags.filter = true;
      else if (!tok.empty()) throw std::invalid_argument("stages: unknown stage '" + tok + "'");
    }
    flags.validate();
    return flags;
  }
};

struct PipelineConfig {
  StageFlags stages;
  bool fuse = false;

  // depth sweep
  int num_samples = 64;            // L
  double scene_depth_prior = 2.0;  // meters; also the fallback parallax probe depth
  double baseline = -1.0;          // sweep baseline; <= 0 derives scene_depth_prior / 50

  // aggregation frame selection
  int max_frames = 5;              // K_a
  double max_parallax_px = 100.0;  // K_p

  // cost regularization and extraction
  float p1 = 10.0f;
  float p2 = 100.0f;
  double flat_eps = 0.05;

  // hypothesis filter
  double sigma_tz2 = kDefaultTranslationVariance;
  double hole_fill_radius = 2.0;
  double propagate_gate = kPropagateGate;
  double collision_gate = kCollisionGate;
  double output_gate = kOutputGate;
  double sigma_disp2 = 1.0;

  // fusion
  double voxel_size = 0.1;
  double truncation = -1.0;  // <= 0 derives 3 * voxel_size
  double carve_gate = kCarveGate;
  TsdfWeightMode weight_mode = TsdfWeightMode::kInverseVariance;

  // dataset handling
  int keyframe_every = 5;
  double max_time_diff = 0.02;
  double depth_scale = 5000.0;
  int history_window = 40;
  // calibration override for sequences without a camera.txt
  double fx = 0.0, fy = 0.0, cx = 0.0, cy = 0.0;
  int width = 0, height = 0;

  bool has_camera_override() const { return fx > 0.0 && fy > 0.0 && width > 0 && height > 0; }
  Intrinsics camera_override() const {
    Intrinsics intr{fx, fy, cx, cy, width, height};
    intr.validate();
    return intr;
  }

  int threads = default_thread_count();
  std::uint32_t seed = 0;
  bool debug_dumps = false;
  bool mesh_color = false;  // height-ramp vertex colors on the exported mesh

  double effective_baseline() const { return baseline > 0.0 ? baseline : scene_depth_prior / 50.0; }
  double effective_truncation() const { return truncation > 0.0 ? truncation : 3.0 * voxel_size; }

  void validate() const {
    stages.validate();
    if (num_samples < 2) throw std::invalid_argument("config: num_samples must be >= 2");
    if (max_frames < 1) throw std::invalid_argument("config: max_frames must be >= 1");
    if (!(scene_depth_prior > 0.0)) throw std::invalid_argument("config: scene_depth_prior must be positive");
    if (keyframe_every < 1) throw std::invalid_argument("config: keyframe_every must be >= 1");
    if (threads < 1) throw std::invalid_argument("config: threads must be >= 1");
  }
};

/// key=value overlay onto a config. Lines starting with '#' are comments;
/// unknown keys raise a named error so typos do not silently fall back to
/// defaults.
inline void apply_config_entry(PipelineConfig& cfg, const std::string& key, const std::string& value) {
  const auto as_double = [&] { return std::stod(value); };
  const auto as_int = [&] { return std::stoi(value); };
  if (key == "stages") cfg.stages = StageFlags::parse(value);
  else if (key == "fuse") cfg.fuse = value == "1" || value == "true";
  else if (key == "num_samples") cfg.num_samples = as_int();
  else if (key == "scene_depth_prior") cfg.scene_depth_prior = as_double();
  else if (key == "baseline") cfg.baseline = as_double();
  else if (key == "max_frames") cfg.max_frames = as_int();
  else if (key == "max_parallax_px") cfg.max_parallax_px = as_double();
  else if (key == "p1") cfg.p1 = static_cast<float>(as_double());
  else if (key == "p2") cfg.p2 = static_cast<float>(as_double());
  else if (key == "flat_eps") cfg.flat_eps = as_double();
  else if (key == "sigma_tz2") cfg.sigma_tz2 = as_double();
  else if (key == "hole_fill_radius") cfg.hole_fill_radius = as_double();
  else if (key == "propagate_gate") cfg.propagate_gate = as_double();
  else if (key == "collision_gate") cfg.collision_gate = as_double();
  else if (key == "output_gate") cfg.output_gate = as_double();
  else if (key == "sigma_disp2") cfg.sigma_disp2 = as_double();
  else if (key == "voxel_size") cfg.voxel_size = as_double();
  else if (key == "truncation") cfg.truncation = as_double();
  else if (key == "carve_gate") cfg.carve_gate = as_double();
  else if (key == "weight_mode") {
    if (value == "inverse-variance") cfg.weight_mode = TsdfWeightMode::kInverseVariance;
    else if (value == "raw-variance") cfg.weight_mode = TsdfWeightMode::kRawVariance;
    else throw std::invalid_argument("config: weight_mode must be inverse-variance or raw-variance");
  } else if (key == "fx") cfg.fx = as_double();
  else if (key == "fy") cfg.fy = as_double();
  else if (key == "cx") cfg.cx = as_double();
  else if (key == "cy") cfg.cy = as_double();
  else if (key == "width") cfg.width = as_int();
  else if (key == "height") cfg.height = as_int();
  else if (key == "keyframe_every") cfg.keyframe_every = as_int();
  else if (key == "max_time_diff") cfg.max_time_diff = as_double();
  else if (key == "depth_scale") cfg.depth_scale = as_double();
  else if (key == "history_window") cfg.history_window = as_int();
  else if (key == "threads") cfg.threads = as_int();
  else if (key == "seed") cfg.seed = static_cast<std::uint32_t>(std::stoul(value));
  else if (key == "debug_dumps") cfg.debug_dumps = value == "1" || value == "true";
  else if (key == "mesh_color") cfg.mesh_color = value == "1" || value == "true";
  else throw std::invalid_argument("config: unknown key '" + key + "'");
}

inline void load_config_file(PipelineConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("missing config file: " + path.string());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("config: expected key=value, got '" + line + "'");
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    const auto trim = [](std::string& s) {
      while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.erase(s.begin());
      while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.pop_back();
    };
    trim(key);
    trim(value);
    apply_config_entry(cfg, key, value);
  }
}

}  // namespace monodense
