#include "monodense/eval.hpp"

#include <gtest/gtest.h>

#include <random>

#include "test_util.hpp"

using namespace monodense;
using monodense::testing::TempDir;

namespace {

ImageF filled(int w, int h, float v) { return ImageF(w, h, v); }

TEST(MappingDensity, FullAndHalfCoverage) {
  const auto gt = filled(10, 10, 2.0f);
  EXPECT_DOUBLE_EQ(mapping_density(filled(10, 10, 2.0f), gt).value(), 100.0);

  ImageF half(10, 10, 0.0f);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 10; ++x) half.at(x, y) = 1.5f;
  EXPECT_DOUBLE_EQ(mapping_density(half, gt).value(), 50.0);
}

TEST(MappingDensity, OnlyGtValidPixelsCount) {
  ImageF gt(4, 1, 0.0f);
  gt.at(0, 0) = 1.0f;
  gt.at(1, 0) = 1.0f;
  ImageF est(4, 1, 2.0f);  //est covers everything, including gt-invalid pixels
  EXPECT_DOUBLE_EQ(mapping_density(est, gt).value(), 100.0);
}

TEST(MappingDensity, EmptyGtIsUndefined) {
  EXPECT_FALSE(mapping_density(filled(4, 4, 1.0f), filled(4, 4, 0.0f)).has_value());
  EXPECT_THROW(mapping_density(filled(4, 4, 1.0f), filled(5, 4, 1.0f)), std::invalid_argument);
}

TEST(ErrorCurve, ExactMatchIsAlwaysHundred) {
  const auto gt = filled(8, 8, 2.0f);
  const auto curve = error_curve(gt, gt, default_error_thresholds()).value();
  for (double v : curve) EXPECT_DOUBLE_EQ(v, 100.0);
}

TEST(ErrorCurve, UniformOffsetIsAStep) {
  const auto gt = filled(8, 8, 2.0f);
  const auto est = filled(8, 8, 2.05f);
  const std::vector<double> thresholds = {0.01, 0.04, 0.05, 0.10};
  const auto curve = error_curve(est, gt, thresholds).value();
  EXPECT_DOUBLE_EQ(curve[0], 0.0);
  EXPECT_DOUBLE_EQ(curve[1], 0.0);
  EXPECT_NEAR(curve[2], 100.0, 1e-3);  // float32 keeps the difference near 0.05
  EXPECT_DOUBLE_EQ(curve[3], 100.0);
}

TEST(ErrorCurve, MonotoneInThreshold) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<float> d(0.5f, 4.0f);
  ImageF gt(16, 16), est(16, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      gt.at(x, y) = d(rng);
      est.at(x, y) = d(rng) > 2.0f ? 0.0f : d(rng);
    }
  const auto curve = error_curve(est, gt, default_error_thresholds()).value();
  for (std::size_t i = 1; i < curve.size(); ++i) EXPECT_GE(curve[i], curve[i - 1]);
}

TEST(ErrorCurve, NoJointlyValidPixelsIsUndefined) {
  ImageF gt(4, 1, 0.0f), est(4, 1, 0.0f);
  gt.at(0, 0) = 1.0f;
  est.at(1, 0) = 1.0f;
  EXPECT_FALSE(error_curve(est, gt, {0.1}).has_value());
  EXPECT_THROW(error_curve(est, gt, {0.2, 0.1}), std::invalid_argument);
}

TEST(MetricsCsv, SchemaAndDeterminism) {
  MetricsReport report;
  report.stages_label = "T+S";
  report.thresholds = {0.01, 0.02};
  FrameMetrics f;
  f.frame_index = 3;
  f.timestamp = 1.5;
  f.density = 75.0;
  f.curve = std::vector<double>{10.0, 20.0};
  report.frames.push_back(f);
  FrameMetrics undefined_frame;
  undefined_frame.frame_index = 4;
  undefined_frame.timestamp = 2.0;
  report.frames.push_back(undefined_frame);
  report.finalize();

  TempDir tmp;
  const auto path = (tmp.path() / "metrics.csv").string();
  write_metrics_csv(report, path);
  const auto bytes = monodense::testing::read_file_bytes(path);
  EXPECT_NE(bytes.find("frame,timestamp,stages,density_pct,pct_le_0.01,pct_le_0.02\n"), std::string::npos);
  EXPECT_NE(bytes.find("3,1.500000,T+S,75.0000,10.0000,20.0000\n"), std::string::npos);
  EXPECT_NE(bytes.find("4,2.000000,T+S,nan,nan,nan\n"), std::string::npos);
  EXPECT_NE(bytes.find("average,,T+S,75.0000,10.0000,20.0000\n"), std::string::npos);

  const auto path2 = (tmp.path() / "metrics2.csv").string();
  write_metrics_csv(report, path2);
  EXPECT_TRUE(monodense::testing::files_identical(path, path2));
}

TEST(MetricsReport, AveragesSkipUndefinedFrames) {
  MetricsReport report;
  report.thresholds = {0.01};
  FrameMetrics a;
  a.density = 40.0;
  a.curve = std::vector<double>{50.0};
  FrameMetrics b;
  b.density = 60.0;
  b.curve = std::vector<double>{70.0};
  FrameMetrics c;  // undefined
  report.frames = {a, b, c};
  report.finalize();
  EXPECT_DOUBLE_EQ(report.average_density.value(), 50.0);
  EXPECT_DOUBLE_EQ(report.average_curve.value()[0], 60.0);
}

}  // namespace
