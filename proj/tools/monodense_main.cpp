#include <CLI11.hpp>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <string>

#include "monodense/monodense.hpp"

namespace {

int run_reconstruct(const std::string& input, const std::string& out_dir, const std::string& stages,
                    bool fuse, const std::string& config_file, long seed, int threads,
                    const std::string& weight) {
  monodense::PipelineConfig cfg;
  if (!config_file.empty()) monodense::load_config_file(cfg, config_file);
  if (!stages.empty()) cfg.stages = monodense::StageFlags::parse(stages);
  if (fuse) cfg.fuse = true;
  if (seed >= 0) cfg.seed = static_cast<std::uint32_t>(seed);
  if (threads > 0) cfg.threads = threads;
  if (!weight.empty()) monodense::apply_config_entry(cfg, "weight_mode", weight);

  const auto report = monodense::run_pipeline(cfg, input, out_dir);
  std::printf("keyframes: %zu\n", report.timings.keyframes);
  if (report.average_density) std::printf("average mapping density: %.2f%%\n", *report.average_density);
  for (const auto& failure : report.failures) std::fprintf(stderr, "warning: %s\n", failure.c_str());
  std::printf("outputs written to %s\n", out_dir.c_str());
  return report.failures.empty() ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dense depth reconstruction from a posed monocular image sequence"};
  app.require_subcommand(1);

  // reconstruct
  std::string input, out_dir, stages, config_file, weight;
  bool fuse = false;
  long seed = -1;
  int threads = 0;
  auto* rec = app.add_subcommand("reconstruct", "Run the mapping pipeline on a dataset or scene file");
  rec->add_option("--input", input, "TUM-layout sequence directory or synthetic scene file")->required();
  rec->add_option("--out", out_dir, "Output directory")->required();
  rec->add_option("--stages", stages, "Comma list of stages, e.g. T,S,D,H");
  rec->add_flag("--fuse", fuse, "Fuse emitted depths into a TSDF and export mesh.ply");
  rec->add_option("--config", config_file, "key=value config file");
  rec->add_option("--seed", seed, "Texture/noise seed override");
  rec->add_option("--threads", threads, "Worker thread count");
  rec->add_option("--weight", weight, "TSDF weighting: inverse-variance (default) or raw-variance");

  // eval
  std::string est_dir, gt_dir, csv_out;
  double depth_scale = monodense::kDefaultDepthScale;
  auto* ev = app.add_subcommand("eval", "Compare estimated depth PNGs against ground truth");
  ev->add_option("--est", est_dir, "Directory of estimated 16-bit depth PNGs")->required();
  ev->add_option("--gt", gt_dir, "Directory of ground-truth 16-bit depth PNGs")->required();
  ev->add_option("--out", csv_out, "Metrics CSV path")->required();
  ev->add_option("--depth-scale", depth_scale, "Depth PNG counts per meter");

  // synth
  std::string scene_file, synth_out;
  std::size_t n_frames = 0;
  long synth_seed = -1;
  auto* sy = app.add_subcommand("synth", "Render a synthetic scene into a TUM-layout dataset");
  sy->add_option("--scene", scene_file, "Scene description file")->required();
  sy->add_option("--frames", n_frames, "Number of trajectory frames to render")->required();
  sy->add_option("--out", synth_out, "Output dataset directory")->required();
  sy->add_option("--seed", synth_seed, "Texture seed override");

  CLI11_PARSE(app, argc, argv);

  try {
    if (rec->parsed())
      return run_reconstruct(input, out_dir, stages, fuse, config_file, seed, threads, weight);
    if (ev->parsed()) {
      const auto report = monodense::evaluate_depth_dirs(est_dir, gt_dir, csv_out, depth_scale);
      if (report.average_density) std::printf("average mapping density: %.2f%%\n", *report.average_density);
      std::printf("metrics written to %s\n", csv_out.c_str());
      return 0;
    }
    if (sy->parsed()) {
      monodense::SyntheticScene scene = monodense::parse_scene_file(scene_file);
      if (synth_seed >= 0) scene.seed = static_cast<std::uint32_t>(synth_seed);
      monodense::validate_scene(scene);
      monodense::write_synthetic_dataset(scene, n_frames, synth_out);
      std::printf("dataset written to %s\n", synth_out.c_str());
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
