#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "monodense/config.hpp"
#include "monodense/cost_volume.hpp"
#include "monodense/depth_filter.hpp"
#include "monodense/eval.hpp"
#include "monodense/geometry.hpp"
#include "monodense/marching_cubes.hpp"
#include "monodense/mesh.hpp"
#include "monodense/png_io.hpp"
#include "monodense/synthetic.hpp"
#include "monodense/tsdf_volume.hpp"
#include "monodense/tum_dataset.hpp"

namespace monodense {

namespace detail {

class StageClock {
 public:
  explicit StageClock(double& sink) : sink_(sink), start_(std::chrono::steady_clock::now()) {}
  ~StageClock() {
    sink_ += std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  double& sink_;
  std::chrono::steady_clock::time_point start_;
};

struct PendingFrame {
  std::shared_ptr<CameraFrame> frame;
  std::optional<ImageF> gt_depth;
  std::string name;  // basename for emitted artifacts
};

// Uniform access to the two input kinds: a TUM-layout directory or a
// synthetic scene file rendered on the fly.
class FrameSource {
 public:
  virtual ~FrameSource() = default;
  virtual std::size_t size() const = 0;
  virtual PendingFrame load(std::size_t index) = 0;
};

class TumFrameSource : public FrameSource {
 public:
  TumFrameSource(const std::filesystem::path& dir, const PipelineConfig& cfg) {
    manifest_ = parse_tum_sequence(dir);
    frames_ = associate(manifest_, cfg.max_time_diff);
    intrinsics_ = cfg.has_camera_override() ? cfg.camera_override()
                                            : load_camera_config(dir / "camera.txt", &manifest_.warnings);
    depth_scale_ = cfg.depth_scale;
  }

  std::size_t size() const override { return frames_.size(); }

  PendingFrame load(std::size_t index) override {
    const AssociatedFrame& assoc = frames_[index];
    PendingFrame out;
    out.frame = std::make_shared<CameraFrame>(load_frame(manifest_, assoc, intrinsics_));
    if (assoc.depth_path) out.gt_depth = load_gt_depth(manifest_, assoc, depth_scale_);
    out.name = assoc.depth_path ? std::filesystem::path(*assoc.depth_path).stem().string()
                                : std::to_string(assoc.timestamp);
    return out;
  }

 private:
  SequenceManifest manifest_;
  std::vector<AssociatedFrame> frames_;
  Intrinsics intrinsics_;
  double depth_scale_ = kDefaultDepthScale;
};

class SceneFrameSource : public FrameSource {
 public:
  SceneFrameSource(const std::filesystem::path& file, const PipelineConfig& cfg)
      : scene_(parse_scene_file(file)), threads_(cfg.threads) {
    scene_.seed += cfg.seed;
    validate_scene(scene_);
  }

  std::size_t size() const override { return scene_.trajectory.size(); }

  PendingFrame load(std::size_t index) override {
    SyntheticRender r = render_synthetic(scene_, index, threads_);
    PendingFrame out;
    out.frame = std::make_shared<CameraFrame>(std::move(r.frame));
    out.gt_depth = std::move(r.gt_depth);
    char name[32];
    std::snprintf(name, sizeof(name), "%06zu", index);
    out.name = name;
    return out;
  }

  const Intrinsics& intrinsics() const { return scene_.intrinsics; }

 private:
  SyntheticScene scene_;
  int threads_;
};

inline std::unique_ptr<FrameSource> open_frame_source(const std::filesystem::path& input,
                                                      const PipelineConfig& cfg) {
  if (std::filesystem::is_directory(input)) return std::make_unique<TumFrameSource>(input, cfg);
  if (std::filesystem::is_regular_file(input)) return std::make_unique<SceneFrameSource>(input, cfg);
  throw std::runtime_error("input not found: " + input.string());
}

inline ImageF observation_depth_image(const DepthObservation& obs) {
  ImageF depth(obs.depth.width(), obs.depth.height(), 0.0f);
  for (int y = 0; y < depth.height(); ++y)
    for (int x = 0; x < depth.width(); ++x)
      if (obs.status.at(x, y) == PixelStatus::kValid) depth.at(x, y) = obs.depth.at(x, y);
  return depth;
}

inline std::optional<double> median_positive(const ImageF& depth) {
  std::vector<float> vals;
  vals.reserve(static_cast<std::size_t>(depth.width()) * depth.height() / 4);
  for (float v : depth.data())
    if (v > 0.0f) vals.push_back(v);
  if (vals.empty()) return std::nullopt;
  const auto mid = vals.begin() + vals.size() / 2;
  std::nth_element(vals.begin(), mid, vals.end());
  return static_cast<double>(*mid);
}

}  // namespace detail

/// Streams a posed image sequence through temporal aggregation, optional SGM,
/// refinement, hypothesis filtering and TSDF fusion, and writes per-keyframe
/// depth maps, metrics and (when fusing) the final mesh under `out_dir`.
/// Deterministic for a fixed config: outputs are byte-identical across runs
/// and across thread counts.
inline MetricsReport run_pipeline(const PipelineConfig& cfg, const std::filesystem::path& input,
                                  const std::filesystem::path& out_dir) {
  cfg.validate();
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "depth_est");

  auto source = detail::open_frame_source(input, cfg);

  MetricsReport report;
  report.stages_label = cfg.stages.label();
  report.thresholds = default_error_thresholds();

  std::deque<std::shared_ptr<CameraFrame>> history;
  std::optional<HypothesisMap> filter_map;
  Pose filter_pose;  // pose of the keyframe filter_map is registered to

  DepthSampleSet samples;
  MeasurementModel model;
  bool sweep_ready = false;

  std::optional<TsdfVolume> volume;
  if (cfg.fuse) volume.emplace(cfg.voxel_size, cfg.effective_truncation());

  std::optional<double> rolling_probe;  // median depth of the previous keyframe's output

  for (std::size_t idx = 0; idx < source->size(); ++idx) {
    detail::PendingFrame pending;
    try {
      pending = source->load(idx);
    } catch (const std::exception& e) {
      report.failures.push_back("frame " + std::to_string(idx) + ": " + e.what());
      continue;
    }
    const CameraFrame& frame = *pending.frame;

    if (!sweep_ready) {
      const double b = cfg.effective_baseline();
      samples = build_sample_set(b, frame.intrinsics.fx, cfg.num_samples);
      model = MeasurementModel::from_samples(samples, cfg.sigma_disp2);
      sweep_ready = true;
    }

    const bool is_keyframe = idx % static_cast<std::size_t>(cfg.keyframe_every) == 0 && !history.empty();
    if (is_keyframe) {
      const double probe = rolling_probe.value_or(cfg.scene_depth_prior);
      std::vector<const CameraFrame*> pool;
      pool.reserve(history.size());
      for (const auto& f : history) pool.push_back(f.get());
      const auto selected =
          select_aggregation_frames(pool, frame, cfg.max_frames, cfg.max_parallax_px, probe);

      if (!selected.empty()) {
        CostVolume cv;
        {
          detail::StageClock clock(report.timings.aggregate_ms);
          cv = aggregate_temporal(frame, selected, samples, cfg.threads);
        }
        CostSlab slab;
        if (cfg.stages.sgm) {
          detail::StageClock clock(report.timings.sgm_ms);
          slab = sgm_regularize(cv, cfg.p1, cfg.p2, cfg.threads);
        } else {
          slab = cv.raw;
        }
        DepthObservation obs;
        {
          detail::StageClock clock(report.timings.extract_ms);
          obs = extract_depth(slab, samples, {cfg.flat_eps, cfg.stages.refine}, cfg.threads);
        }

        ImageF est_depth;
        FilterOutput fusion_input;
        if (cfg.stages.filter) {
          detail::StageClock clock(report.timings.filter_ms);
          HypothesisMap map(frame.intrinsics.width, frame.intrinsics.height, static_cast<std::int64_t>(idx));
          if (filter_map) {
            map = propagate(*filter_map, filter_pose, frame.pose, frame.intrinsics, cfg.sigma_tz2,
                            cfg.propagate_gate, cfg.collision_gate, static_cast<std::int64_t>(idx));
            map = fill_holes(map, cfg.hole_fill_radius, cfg.threads);
          }
          map = fuse_observations(map, obs, samples, model, cfg.threads);
          fusion_input = emit_output(map, cfg.output_gate);
          est_depth = fusion_input.depth;
          filter_map = std::move(map);
          filter_pose = frame.pose;
        } else {
          est_depth = detail::observation_depth_image(obs);
          if (cfg.fuse) {
            // unfiltered depths fuse with the disparity-noise variance and a
            // neutral expectation that never triggers carving
            fusion_input = FilterOutput(est_depth.width(), est_depth.height(), static_cast<std::int64_t>(idx));
            for (int y = 0; y < est_depth.height(); ++y)
              for (int x = 0; x < est_depth.width(); ++x) {
                const float d = est_depth.at(x, y);
                if (!(d > 0.0f)) continue;
                fusion_input.depth.at(x, y) = d;
                fusion_input.variance.at(x, y) = static_cast<float>(model.variance_at(d));
                fusion_input.inlier_expectation.at(x, y) = 0.7f;
              }
          }
        }

        if (cfg.fuse) {
          detail::StageClock clock(report.timings.fuse_ms);
          IntegrateOptions opts;
          opts.carve_gate = cfg.carve_gate;
          opts.weight_mode = cfg.weight_mode;
          integrate(*volume, fusion_input, frame, opts);
        }

        write_png_gray16(encode_depth(est_depth, cfg.depth_scale),
                         (out_dir / "depth_est" / (pending.name + ".png")).string());
        if (pending.gt_depth) {
          fs::create_directories(out_dir / "depth_gt");
          write_png_gray16(encode_depth(*pending.gt_depth, cfg.depth_scale),
                           (out_dir / "depth_gt" / (pending.name + ".png")).string());
        }
        if (cfg.stages.filter) {
          fs::create_directories(out_dir / "filter");
          save_filter_output(fusion_input, (out_dir / "filter" / (pending.name + ".dfo")).string());
        }
        if (cfg.debug_dumps) {
          // per-stage intermediates, each recomputed from its own stage input
          // so later stages cannot perturb earlier dumps
          fs::create_directories(out_dir / "stages");
          const auto dump = [&](const ImageF& img, const std::string& tag) {
            write_png_gray16(encode_depth(img, cfg.depth_scale),
                             (out_dir / "stages" / (tag + "_" + pending.name + ".png")).string());
          };
          dump(detail::observation_depth_image(extract_depth(cv.raw, samples, {cfg.flat_eps, false}, cfg.threads)),
               "T");
          if (cfg.stages.sgm)
            dump(detail::observation_depth_image(extract_depth(slab, samples, {cfg.flat_eps, false}, cfg.threads)),
                 "S");
          if (cfg.stages.refine) dump(detail::observation_depth_image(obs), "D");
          if (cfg.stages.filter) dump(est_depth, "H");
          write_cost_slice_pgm(slab, slab.num_samples / 2,
                               (out_dir / "stages" / ("cost_mid_" + pending.name + ".pgm")).string());
        }

        FrameMetrics fm;
        fm.frame_index = idx;
        fm.timestamp = frame.timestamp;
        if (pending.gt_depth) {
          fm.density = mapping_density(est_depth, *pending.gt_depth);
          fm.curve = error_curve(est_depth, *pending.gt_depth, report.thresholds);
        }
        report.frames.push_back(std::move(fm));
        ++report.timings.keyframes;

        if (const auto med = detail::median_positive(est_depth)) rolling_probe = med;
      }
    }

    history.push_back(pending.frame);
    while (history.size() > static_cast<std::size_t>(cfg.history_window)) history.pop_front();
  }

  if (cfg.fuse) {
    Mesh mesh = extract_mesh(*volume);
    if (cfg.mesh_color) colorize_by_height(mesh);
    export_ply(mesh, (out_dir / "mesh.ply").string());
    save_volume(*volume, (out_dir / "volume.tsdf").string());
  }

  report.finalize();
  write_metrics_csv(report, (out_dir / "metrics.csv").string());
  write_timings(report, (out_dir / "timings.txt").string());
  return report;
}

/// Offline metric computation: pairs est and gt 16-bit depth PNGs by basename.
inline MetricsReport evaluate_depth_dirs(const std::filesystem::path& est_dir,
                                         const std::filesystem::path& gt_dir, const std::string& csv_path,
                                         double depth_scale = kDefaultDepthScale) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(est_dir)) throw std::runtime_error("eval: est dir not found: " + est_dir.string());
  if (!fs::is_directory(gt_dir)) throw std::runtime_error("eval: gt dir not found: " + gt_dir.string());

  std::vector<fs::path> est_files;
  for (const auto& entry : fs::directory_iterator(est_dir))
    if (entry.path().extension() == ".png") est_files.push_back(entry.path());
  std::sort(est_files.begin(), est_files.end());

  MetricsReport report;
  report.stages_label = "offline";
  report.thresholds = default_error_thresholds();
  std::size_t index = 0;
  for (const fs::path& est_path : est_files) {
    const fs::path gt_path = gt_dir / est_path.filename();
    if (!fs::exists(gt_path)) continue;
    const ImageF est = decode_depth(read_png_gray16(est_path.string()), depth_scale);
    const ImageF gt = decode_depth(read_png_gray16(gt_path.string()), depth_scale);
    FrameMetrics fm;
    fm.frame_index = index++;
    fm.density = mapping_density(est, gt);
    fm.curve = error_curve(est, gt, report.thresholds);
    report.frames.push_back(std::move(fm));
  }
  if (report.frames.empty()) throw std::runtime_error("eval: no matching est/gt file pairs");
  report.finalize();
  write_metrics_csv(report, csv_path);
  return report;
}

}  // namespace monodense
