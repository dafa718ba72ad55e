#include "monodense/tum_dataset.hpp"

#include <gtest/gtest.h>

#include <fstream>

#include "monodense/png_io.hpp"
#include "test_util.hpp"

using namespace monodense;
using monodense::testing::TempDir;

namespace {

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

class TumParseTest : public ::testing::Test {
 protected:
  void write_minimal(const std::filesystem::path& dir) {
    write_file(dir / "rgb.txt",
               "# color images\n"
               "1311868164.363181 rgb/1311868164.363181.png\n"
               "1311868164.399026 rgb/1311868164.399026.png\n");
    write_file(dir / "groundtruth.txt",
               "# ground truth trajectory\n"
               "1311868164.363181 1.0 2.0 3.0 0.0 0.0 0.0 1.0\n"
               "1311868164.399026 1.1 2.0 3.0 0.0 0.0 0.0 1.0\n");
  }
};

TEST_F(TumParseTest, ParsesEntriesAndSkipsComments) {
  TempDir tmp;
  write_minimal(tmp.path());
  const auto m = parse_tum_sequence(tmp.path());
  ASSERT_EQ(m.rgb_entries.size(), 2u);
  EXPECT_DOUBLE_EQ(m.rgb_entries[0].timestamp, 1311868164.363181);
  EXPECT_EQ(m.rgb_entries[0].path, "rgb/1311868164.363181.png");
  ASSERT_EQ(m.gt_poses.size(), 2u);
  EXPECT_EQ(m.gt_poses[0].translation, Vector3d(1.0, 2.0, 3.0));
  EXPECT_TRUE(m.warnings.empty());
  EXPECT_TRUE(m.depth_entries.empty());
}

TEST_F(TumParseTest, MalformedLinesAreReportedWithLineNumbers) {
  TempDir tmp;
  write_minimal(tmp.path());
  write_file(tmp.path() / "rgb.txt",
             "1.0 rgb/a.png\n"
             "not-a-number\n"
             "2.0 rgb/b.png\n");
  const auto m = parse_tum_sequence(tmp.path());
  EXPECT_EQ(m.rgb_entries.size(), 2u);
  ASSERT_EQ(m.warnings.size(), 1u);
  EXPECT_NE(m.warnings[0].find("rgb.txt:2"), std::string::npos);
}

TEST_F(TumParseTest, MissingFilesAndEmptyManifestsAreErrors) {
  TempDir tmp;
  EXPECT_THROW(parse_tum_sequence(tmp.path()), std::runtime_error);
  write_file(tmp.path() / "rgb.txt", "# only comments\n");
  write_file(tmp.path() / "groundtruth.txt", "1.0 0 0 0 0 0 0 1\n");
  EXPECT_THROW(parse_tum_sequence(tmp.path()), std::runtime_error);
}

TEST_F(TumParseTest, OffNormQuaternionsAreRenormalized) {
  TempDir tmp;
  write_file(tmp.path() / "rgb.txt", "1.0 rgb/a.png\n");
  write_file(tmp.path() / "groundtruth.txt", "1.0 0 0 0 0 0 0 0.9\n");
  const auto m = parse_tum_sequence(tmp.path());
  ASSERT_EQ(m.warnings.size(), 1u);
  EXPECT_NE(m.warnings[0].find("renormalized"), std::string::npos);
  EXPECT_NEAR(m.gt_poses[0].qw, 1.0, 1e-12);
}

TEST_F(TumParseTest, ManifestRoundTrip) {
  TempDir tmp;
  write_file(tmp.path() / "rgb.txt", "1.250000 rgb/a.png\n2.500000 rgb/b.png\n");
  write_file(tmp.path() / "depth.txt", "1.250000 depth/a.png\n");
  write_file(tmp.path() / "groundtruth.txt", "1.250000 0.5 -1.25 3 0 0 0 1\n");
  const auto m = parse_tum_sequence(tmp.path());

  TempDir out;
  write_manifest(m, out.path());
  const auto back = parse_tum_sequence(out.path());
  ASSERT_EQ(back.rgb_entries.size(), m.rgb_entries.size());
  for (std::size_t i = 0; i < m.rgb_entries.size(); ++i) {
    EXPECT_DOUBLE_EQ(back.rgb_entries[i].timestamp, m.rgb_entries[i].timestamp);
    EXPECT_EQ(back.rgb_entries[i].path, m.rgb_entries[i].path);
  }
  ASSERT_EQ(back.depth_entries.size(), 1u);
  ASSERT_EQ(back.gt_poses.size(), 1u);
  EXPECT_EQ(back.gt_poses[0].translation, m.gt_poses[0].translation);
}

TEST(Associate, WithinToleranceMatches) {
  SequenceManifest m;
  m.rgb_entries = {{10.01, "rgb/a.png"}};
  m.gt_poses = {{10.0, Vector3d::Zero(), 0, 0, 0, 1}};
  const auto frames = associate(m, 0.02);
  ASSERT_EQ(frames.size(), 1u);
  EXPECT_EQ(frames[0].rgb_path, "rgb/a.png");
}

TEST(Associate, OutsideToleranceDropsWithCount) {
  SequenceManifest m;
  m.rgb_entries = {{10.05, "rgb/a.png"}, {10.81, "rgb/b.png"}};
  m.gt_poses = {{10.0, Vector3d::Zero(), 0, 0, 0, 1}, {10.8, Vector3d::Zero(), 0, 0, 0, 1}};
  AssociationReport report;
  const auto frames = associate(m, 0.02, &report);
  ASSERT_EQ(frames.size(), 1u);
  EXPECT_EQ(frames[0].rgb_path, "rgb/b.png");
  EXPECT_EQ(report.dropped_rgb, 1u);
}

TEST(Associate, GreedyNearestHandlesContention) {
  // two rgb frames near one pose: the closer one wins, the other pairs with
  // its next-nearest pose
  SequenceManifest m;
  m.rgb_entries = {{1.000, "rgb/a.png"}, {1.010, "rgb/b.png"}, {1.100, "rgb/c.png"}};
  m.gt_poses = {{1.008, Vector3d(1, 0, 0), 0, 0, 0, 1},
                {1.030, Vector3d(2, 0, 0), 0, 0, 0, 1},
                {1.099, Vector3d(3, 0, 0), 0, 0, 0, 1}};
  const auto frames = associate(m, 0.05);
  ASSERT_EQ(frames.size(), 3u);
  EXPECT_EQ(frames[0].rgb_path, "rgb/a.png");
  EXPECT_EQ(frames[0].pose.translation.x(), 2.0);  // a lost 1.008 to b, pairs with 1.030? no: see below
  EXPECT_EQ(frames[1].pose.translation.x(), 1.0);  // b sits 0.002 from pose 1.008: closest pair overall
  EXPECT_EQ(frames[2].pose.translation.x(), 3.0);
}

TEST(Associate, MutualNearestIsSymmetric) {
  std::vector<double> a = {0.0, 0.11, 0.35, 0.36};
  std::vector<double> b = {0.01, 0.12, 0.34, 0.70};
  const auto ab = monodense::detail::match_timestamps(a, b, 0.05);
  const auto ba = monodense::detail::match_timestamps(b, a, 0.05);
  ASSERT_EQ(ab.size(), ba.size());
  for (const auto& [i, j] : ab) {
    EXPECT_NE(std::find(ba.begin(), ba.end(), std::make_pair(j, i)), ba.end());
  }
}

TEST(Associate, NoMatchesIsAnError) {
  SequenceManifest m;
  m.rgb_entries = {{1.0, "rgb/a.png"}};
  m.gt_poses = {{5.0, Vector3d::Zero(), 0, 0, 0, 1}};
  EXPECT_THROW(associate(m, 0.02), std::runtime_error);
  EXPECT_THROW(associate(m, -1.0), std::invalid_argument);
}

TEST(CameraConfig, ParsesCalibrationFile) {
  TempDir tmp;
  write_file(tmp.path() / "camera.txt",
             "# freiburg2 calibration\n"
             "fx=520.9\nfy=521.0\ncx=325.1\ncy=249.7\nwidth=640\nheight=480\n");
  const auto intr = load_camera_config(tmp.path() / "camera.txt");
  EXPECT_DOUBLE_EQ(intr.fx, 520.9);
  EXPECT_DOUBLE_EQ(intr.fy, 521.0);
  EXPECT_DOUBLE_EQ(intr.cx, 325.1);
  EXPECT_DOUBLE_EQ(intr.cy, 249.7);
  EXPECT_EQ(intr.width, 640);
  EXPECT_EQ(intr.height, 480);
}

TEST(CameraConfig, InvalidAndUnknownKeys) {
  TempDir tmp;
  write_file(tmp.path() / "zero.txt", "fx=0\nfy=1\ncx=1\ncy=1\nwidth=2\nheight=2\n");
  EXPECT_THROW(load_camera_config(tmp.path() / "zero.txt"), std::invalid_argument);

  write_file(tmp.path() / "missing.txt", "fx=500\nfy=500\ncx=320\ncy=240\nwidth=640\n");
  try {
    load_camera_config(tmp.path() / "missing.txt");
    FAIL() << "missing key must raise";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("height"), std::string::npos);
  }

  write_file(tmp.path() / "extra.txt", "fx=500\nfy=500\ncx=320\ncy=240\nwidth=640\nheight=480\nfps=30\n");
  std::vector<std::string> warnings;
  load_camera_config(tmp.path() / "extra.txt", &warnings);
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("fps"), std::string::npos);
}

TEST(PngIo, Gray8RoundTrip) {
  TempDir tmp;
  ImageU8 img(17, 9);
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 17; ++x) img.at(x, y) = static_cast<std::uint8_t>((x * 31 + y * 7) % 256);
  const auto path = (tmp.path() / "gray8.png").string();
  write_png_gray8(img, path);
  EXPECT_EQ(read_png_gray8(path), img);
}

TEST(PngIo, Gray16RoundTrip) {
  TempDir tmp;
  ImageU16 img(13, 11);
  for (int y = 0; y < 11; ++y)
    for (int x = 0; x < 13; ++x) img.at(x, y) = static_cast<std::uint16_t>(x * 5001 + y * 13);
  const auto path = (tmp.path() / "gray16.png").string();
  write_png_gray16(img, path);
  EXPECT_EQ(read_png_gray16(path), img);
}

TEST(PngIo, DepthEncodingConvention) {
  ImageF depth(3, 1, 0.0f);
  depth.at(0, 0) = 2.0f;       // 10000 counts
  depth.at(1, 0) = 0.0f;       // invalid stays 0
  depth.at(2, 0) = 100.0f;     // saturates
  const auto counts = encode_depth(depth, 5000.0);
  EXPECT_EQ(counts.at(0, 0), 10000);
  EXPECT_EQ(counts.at(1, 0), 0);
  EXPECT_EQ(counts.at(2, 0), 65535);
  const auto back = decode_depth(counts, 5000.0);
  EXPECT_FLOAT_EQ(back.at(0, 0), 2.0f);
  EXPECT_FLOAT_EQ(back.at(1, 0), 0.0f);
}

TEST(PngIo, MissingFileRaises) {
  EXPECT_THROW(read_png_gray8("/nonexistent/image.png"), std::runtime_error);
  EXPECT_THROW(read_png_gray16("/nonexistent/image.png"), std::runtime_error);
}

}  // namespace

namespace {

// Color inputs go through the integer BT.601 luma conversion.
TEST(PngIo, RgbInputConvertsToLuma) {
  TempDir tmp;
  const auto path = (tmp.path() / "rgb.png").string();
  {
    std::FILE* fp = std::fopen(path.c_str(), "wb");
    ASSERT_NE(fp, nullptr);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    ASSERT_EQ(setjmp(png_jmpbuf(png)), 0);
    png_init_io(png, fp);
    png_set_IHDR(png, info, 4, 2, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const std::uint8_t rows[2][12] = {
        {255, 0, 0, 0, 255, 0, 0, 0, 255, 255, 255, 255},
        {0, 0, 0, 10, 20, 30, 200, 100, 50, 128, 128, 128},
    };
    for (const auto& row : rows) png_write_row(png, const_cast<png_bytep>(row));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
  }
  const auto img = read_png_gray8(path);
  ASSERT_EQ(img.width(), 4);
  ASSERT_EQ(img.height(), 2);
  EXPECT_EQ(img.at(0, 0), (299 * 255) / 1000);
  EXPECT_EQ(img.at(1, 0), (587 * 255) / 1000);
  EXPECT_EQ(img.at(2, 0), (114 * 255) / 1000);
  EXPECT_EQ(img.at(3, 0), 255);
  EXPECT_EQ(img.at(0, 1), 0);
  EXPECT_EQ(img.at(1, 1), (299 * 10 + 587 * 20 + 114 * 30) / 1000);
  EXPECT_EQ(img.at(3, 1), 128);
}

}  // namespace
