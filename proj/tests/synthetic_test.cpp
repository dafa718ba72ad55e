#include "monodense/synthetic.hpp"

#include <gtest/gtest.h>

#include <fstream>

#include "monodense/tum_dataset.hpp"
#include "test_util.hpp"

using namespace monodense;
using monodense::testing::TempDir;
using monodense::testing::test_intrinsics;

namespace {

SyntheticScene plane_scene(double z = 2.0, int n_poses = 3, double step_x = 0.1) {
  SyntheticScene scene;
  scene.intrinsics = test_intrinsics(64, 48, 64.0);
  ScenePlane plane;
  plane.center = Vector3d(0.0, 0.0, z);
  plane.normal = Vector3d(0.0, 0.0, -1.0);
  plane.half_extent = 20.0;
  plane.texture_id = 1;
  plane.texture_scale = 0.2;
  scene.planes.push_back(plane);
  for (int i = 0; i < n_poses; ++i)
    scene.trajectory.push_back(Pose{Matrix3d::Identity(), Vector3d(step_x * i, 0.0, 0.0)});
  return scene;
}

TEST(Renderer, FrontoParallelPlaneDepthIsConstant) {
  const auto scene = plane_scene(2.0);
  const auto r = render_synthetic(scene, 0);
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 64; ++x) EXPECT_FLOAT_EQ(r.gt_depth.at(x, y), 2.0f) << x << "," << y;
}

TEST(Renderer, SphereCenterPixelDepth) {
  SyntheticScene scene;
  scene.intrinsics = test_intrinsics(64, 48, 64.0);
  SceneSphere s;
  s.center = Vector3d(0.0, 0.0, 3.0);
  s.radius = 1.0;
  s.texture_id = 2;
  scene.spheres.push_back(s);
  scene.trajectory.push_back(Pose{});
  const auto r = render_synthetic(scene, 0);
  EXPECT_NEAR(r.gt_depth.at(32, 24), 2.0f, 1e-5);
  EXPECT_FLOAT_EQ(r.gt_depth.at(0, 0), 0.0f);  // background invalid
}

TEST(Renderer, LateralMotionShiftsImageByDisparity) {
  const double z = 2.0, f = 64.0, baseline = 0.1;
  const auto scene = plane_scene(z, 2, baseline);
  const auto r0 = render_synthetic(scene, 0);
  const auto r1 = render_synthetic(scene, 1);
  const double shift = f * baseline / z;  // 3.2 px
  int checked = 0;
  double total_err = 0.0;
  for (int y = 4; y < 44; ++y)
    for (int x = 8; x < 56; ++x) {
      const double sampled = bilinear(r1.frame.image, x - shift, static_cast<double>(y));
      total_err += std::abs(sampled - static_cast<double>(r0.frame.image.at(x, y)));
      ++checked;
    }
  EXPECT_LT(total_err / checked, 2.0);  // quantization plus bilinear smoothing
}

TEST(Renderer, GtDepthWarpConsistencyAcrossViews) {
  const auto scene = plane_scene(2.0, 2, 0.1);
  const auto r0 = render_synthetic(scene, 0);
  const auto r1 = render_synthetic(scene, 1);
  int checked = 0;
  for (int y = 4; y < 44; y += 3)
    for (int x = 4; x < 60; x += 3) {
      const float d0 = r0.gt_depth.at(x, y);
      ASSERT_GT(d0, 0.0f);
      const Vector3d world = unproject_to_world(r0.frame, {double(x), double(y)}, d0);
      const auto px = project_to_pixel(r1.frame, world);
      if (!px || px->x() < 0 || px->x() > 63 || px->y() < 0 || px->y() > 47) continue;
      const double d1 = r1.frame.pose.to_camera(world).z();
      const int nx = static_cast<int>(std::lround(px->x()));
      const int ny = static_cast<int>(std::lround(px->y()));
      if (r1.gt_depth.at(nx, ny) > 0.0f) {
        EXPECT_NEAR(d1, r1.gt_depth.at(nx, ny), 1e-6);
        ++checked;
      }
    }
  EXPECT_GT(checked, 100);
}

TEST(Renderer, TextureIsDeterministicAndSeeded) {
  auto scene = plane_scene(2.0);
  const auto a = render_synthetic(scene, 0);
  const auto b = render_synthetic(scene, 0);
  EXPECT_EQ(a.frame.image, b.frame.image);
  scene.seed = 77;
  const auto c = render_synthetic(scene, 0);
  EXPECT_NE(a.frame.image, c.frame.image);
}

TEST(Renderer, NearestPrimitiveWins) {
  auto scene = plane_scene(3.0);
  SceneSphere s;
  s.center = Vector3d(0.0, 0.0, 2.0);
  s.radius = 0.5;
  s.texture_id = 9;
  scene.spheres.push_back(s);
  const auto r = render_synthetic(scene, 0);
  EXPECT_NEAR(r.gt_depth.at(32, 24), 1.5f, 1e-5);  // sphere in front of the plane
  EXPECT_NEAR(r.gt_depth.at(2, 2), 3.0f, 1e-5);    // plane at the corner
}

TEST(SceneFile, ParseAndValidate) {
  TempDir tmp;
  const auto path = tmp.path() / "scene.txt";
  std::ofstream(path) << "# test scene\n"
                         "intrinsics 64 64 32 24 64 48\n"
                         "seed 5\n"
                         "plane 0 0 2  0 0 -1  20 1 0.2\n"
                         "sphere 0.5 0 3  1 2 0.1\n"
                         "pose 0 0 0  0 0 0 1\n"
                         "pose 0.1 0 0  0 0 0 1\n";
  const auto scene = parse_scene_file(path);
  EXPECT_EQ(scene.seed, 5u);
  ASSERT_EQ(scene.planes.size(), 1u);
  ASSERT_EQ(scene.spheres.size(), 1u);
  ASSERT_EQ(scene.trajectory.size(), 2u);
  EXPECT_DOUBLE_EQ(scene.planes[0].center.z(), 2.0);
  validate_scene(scene);
}

TEST(SceneFile, Rejections) {
  TempDir tmp;
  const auto write = [&](const std::string& name, const std::string& content) {
    std::ofstream(tmp.path() / name) << content;
    return tmp.path() / name;
  };
  EXPECT_THROW(parse_scene_file(tmp.path() / "missing.txt"), std::runtime_error);
  EXPECT_THROW(parse_scene_file(write("no_intr.txt", "pose 0 0 0 0 0 0 1\nplane 0 0 2 0 0 -1 5 1 0.1\n")),
               std::runtime_error);
  EXPECT_THROW(parse_scene_file(write("bad_tok.txt", "intrinsics 64 64 32 24 64 48\nfrobnicate 1\n")),
               std::runtime_error);
  EXPECT_THROW(
      parse_scene_file(write("no_prim.txt", "intrinsics 64 64 32 24 64 48\npose 0 0 0 0 0 0 1\n")),
      std::runtime_error);
  EXPECT_THROW(parse_scene_file(write("bad_plane.txt",
                                      "intrinsics 64 64 32 24 64 48\nplane 0 0 2 0 0 0 5 1 0.1\npose 0 "
                                      "0 0 0 0 0 1\n")),
               std::runtime_error);
}

TEST(SceneFile, ValidateRejectsBlindPoses) {
  auto scene = plane_scene(2.0, 1);
  // send the camera looking away from the plane
  Pose away;
  away.rotation << -1, 0, 0, 0, 1, 0, 0, 0, -1;
  scene.trajectory.push_back(away);
  EXPECT_THROW(validate_scene(scene), std::runtime_error);
}

TEST(SynthDataset, WritesTumLayoutRoundTrip) {
  TempDir tmp;
  const auto scene = plane_scene(2.0, 3, 0.05);
  write_synthetic_dataset(scene, 3, tmp.path());

  const auto manifest = parse_tum_sequence(tmp.path());
  EXPECT_EQ(manifest.rgb_entries.size(), 3u);
  EXPECT_EQ(manifest.depth_entries.size(), 3u);
  EXPECT_EQ(manifest.gt_poses.size(), 3u);
  const auto frames = associate(manifest, 0.02);
  ASSERT_EQ(frames.size(), 3u);
  const auto intr = load_camera_config(tmp.path() / "camera.txt");
  EXPECT_EQ(intr.width, 64);

  const auto frame = load_frame(manifest, frames[1], intr);
  EXPECT_EQ(frame.image.width(), 64);
  EXPECT_NEAR(frame.pose.translation.x(), 0.05, 1e-9);
  const auto depth = load_gt_depth(manifest, frames[1]);
  EXPECT_NEAR(depth.at(32, 24), 2.0f, 1e-3);  // quantized at 5000 counts/m

  EXPECT_THROW(write_synthetic_dataset(scene, 10, tmp.path()), std::invalid_argument);
}

}  // namespace
