#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "monodense/geometry.hpp"
#include "monodense/image.hpp"
#include "monodense/parallel.hpp"

namespace monodense {

// Largest possible 3x3 SAD on 8-bit intensities. Used as a pessimistic fill
// for (pixel, depth) cells no aggregation frame can see.
inline constexpr float kMaxPatchSad = 9.0f * 255.0f;

/// Per-pixel, per-depth-sample cost block shared by the raw and the
/// path-aggregated volume. Pixels flagged no_data carry all-zero costs.
struct CostSlab {
  int width = 0;
  int height = 0;
  int num_samples = 0;
  std::vector<float> costs;          // ((y * width) + x) * num_samples + k
  std::vector<std::uint8_t> no_data; // width * height

  CostSlab() = default;
  CostSlab(int w, int h, int l)
      : width(w), height(h), num_samples(l),
        costs(static_cast<std::size_t>(w) * h * l, 0.0f),
        no_data(static_cast<std::size_t>(w) * h, 0) {}

  float* pixel(int x, int y) {
    return costs.data() + (static_cast<std::size_t>(y) * width + x) * num_samples;
  }
  const float* pixel(int x, int y) const {
    return costs.data() + (static_cast<std::size_t>(y) * width + x) * num_samples;
  }
  bool is_no_data(int x, int y) const { return no_data[static_cast<std::size_t>(y) * width + x] != 0; }
};

struct CostVolume {
  CostSlab raw;
  ImageU8 valid_count;  // frames contributing to the best-covered sample of each pixel
};

using RegularizedVolume = CostSlab;

/// 3x3 sum of absolute intensity differences between an integer-centered patch
/// in `img_a` and a bilinearly sampled patch in `img_b`. Empty when either
/// patch leaves its image.
///
/// All nine taps share one fractional offset, so the bilinear weights are
/// hoisted; each tap evaluates the same expression bilinear() would.
inline std::optional<double> patch_sad(const ImageU8& img_a, int ax, int ay, const ImageU8& img_b, double bx,
                                       double by) {
  if (!patch_inside(img_a, ax, ay, 1) || !patch_inside(img_b, bx, by, 1)) return std::nullopt;
  const int bx0 = static_cast<int>(bx);
  const int by0 = static_cast<int>(by);
  const double fx = bx - bx0;
  const double fy = by - by0;
  const int x_step = bx0 + 2 <= img_b.width() - 1 ? 1 : 0;   // degenerate on the last column
  const int y_step = by0 + 2 <= img_b.height() - 1 ? 1 : 0;  // and the last row

  double sum = 0.0;
  for (int dy = -1; dy <= 1; ++dy) {
    const std::uint8_t* ra = img_a.row(ay + dy) + (ax - 1);
    const std::uint8_t* rb0 = img_b.row(by0 + dy);
    const std::uint8_t* rb1 = img_b.row(by0 + dy + (dy < 1 ? 1 : y_step));
    for (int dx = -1; dx <= 1; ++dx) {
      const int x0 = bx0 + dx;
      const int x1 = x0 + (dx < 1 ? 1 : x_step);
      const double v00 = rb0[x0];
      const double v10 = rb0[x1];
      const double v01 = rb1[x0];
      const double v11 = rb1[x1];
      const double top = v00 + fx * (v10 - v00);
      const double bot = v01 + fx * (v11 - v01);
      sum += std::abs(static_cast<double>(ra[dx + 1]) - (top + fy * (bot - top)));
    }
  }
  return sum;
}

/// Sweeps every depth sample, warps each reference pixel into the selected
/// aggregation frames and averages the per-frame patch costs. A (pixel, depth)
/// cell no frame can see is filled with kMaxPatchSad; a pixel no frame sees at
/// any depth is no_data.
inline CostVolume aggregate_temporal(const CameraFrame& ref, std::span<const CameraFrame* const> frames,
                                     const DepthSampleSet& samples, int num_threads = 1) {
  if (frames.empty()) throw std::invalid_argument("aggregate_temporal: need at least one aggregation frame");
  const int w = ref.intrinsics.width;
  const int h = ref.intrinsics.height;
  const int num = samples.count();

  CostVolume cv;
  cv.raw = CostSlab(w, h, num);
  cv.valid_count = ImageU8(w, h, 0);

  std::vector<FramePairWarper> warpers;
  warpers.reserve(frames.size());
  for (const CameraFrame* f : frames) warpers.emplace_back(ref, *f);

  parallel_for(0, h, num_threads, [&](int y) {
    std::vector<double> acc(num);
    std::vector<int> cnt(num);
    for (int x = 0; x < w; ++x) {
      float* out = cv.raw.pixel(x, y);
      if (!patch_inside(ref.image, x, y, 1)) {
        cv.raw.no_data[static_cast<std::size_t>(y) * w + x] = 1;
        continue;
      }
      std::fill(acc.begin(), acc.end(), 0.0);
      std::fill(cnt.begin(), cnt.end(), 0);
      const Vector2d u(x, y);
      for (std::size_t j = 0; j < warpers.size(); ++j) {
        const WarpCoefficients wc = warpers[j].coeffs(u);
        const ImageU8& img_j = frames[j]->image;
        for (int k = 0; k < num; ++k) {
          const auto target = samples.is_far(k) ? wc.warp_far() : wc.warp(samples.depth(k));
          if (!target) continue;
          const auto sad = patch_sad(ref.image, x, y, img_j, target->x(), target->y());
          if (!sad) continue;
          acc[k] += *sad;
          ++cnt[k];
        }
      }
      int best_count = 0;
      for (int k = 0; k < num; ++k) {
        best_count = std::max(best_count, cnt[k]);
        out[k] = cnt[k] > 0 ? static_cast<float>(acc[k] / cnt[k]) : kMaxPatchSad;
      }
      cv.valid_count.at(x, y) = static_cast<std::uint8_t>(best_count);
      if (best_count == 0) {
        cv.raw.no_data[static_cast<std::size_t>(y) * w + x] = 1;
        std::fill(out, out + num, 0.0f);
      }
    }
  });
  return cv;
}

namespace detail {

// One dynamic-programming step along a path. `out[d] = e[d] + (best - prev_min)`
// keeps costs bounded and, with zero penalties, reproduces e bit-exactly.
inline void sgm_step(const float* e, const float* prev, float prev_min, int num, float p1, float p2, float* out) {
  const float cap = prev_min + p2;
  for (int d = 0; d < num; ++d) {
    float best = prev[d];
    if (d > 0) best = std::min(best, prev[d - 1] + p1);
    if (d + 1 < num) best = std::min(best, prev[d + 1] + p1);
    best = std::min(best, cap);
    out[d] = e[d] + (best - prev_min);
  }
}

inline float row_min(const float* v, int num) {
  float m = v[0];
  for (int d = 1; d < num; ++d) m = std::min(m, v[d]);
  return m;
}

}  // namespace detail

/// Full path table for one of the four axis-aligned directions; (dx, dy) is
/// the traversal step, e.g. (+1, 0) scans each row left to right.
inline CostSlab sgm_single_path(const CostVolume& cv, int dx, int dy, float p1, float p2) {
  const int w = cv.raw.width;
  const int h = cv.raw.height;
  const int num = cv.raw.num_samples;
  CostSlab table(w, h, num);
  table.no_data = cv.raw.no_data;

  const bool horizontal = dy == 0;
  const int lines = horizontal ? h : w;
  for (int line = 0; line < lines; ++line) {
    const int steps = horizontal ? w : h;
    for (int s = 0; s < steps; ++s) {
      const int x = horizontal ? (dx > 0 ? s : w - 1 - s) : line;
      const int y = horizontal ? line : (dy > 0 ? s : h - 1 - s);
      const float* e = cv.raw.pixel(x, y);
      float* out = table.pixel(x, y);
      if (s == 0) {
        std::copy(e, e + num, out);
      } else {
        const float* prev = table.pixel(x - dx, y - dy);
        detail::sgm_step(e, prev, detail::row_min(prev, num), num, p1, p2, out);
      }
    }
  }
  return table;
}

/// 4-path semi-global aggregation: S = (L_left + L_right) + (L_up + L_down),
/// summed pairwise per cell. Parallel over rows for the horizontal paths and
/// over columns for the vertical ones; output is independent of thread count.
inline RegularizedVolume sgm_regularize(const CostVolume& cv, float p1, float p2, int num_threads = 1) {
  if (!(p1 >= 0.0f) || !(p2 >= p1)) throw std::invalid_argument("sgm_regularize: need 0 <= P1 <= P2");
  const int w = cv.raw.width;
  const int h = cv.raw.height;
  const int num = cv.raw.num_samples;
  RegularizedVolume s(w, h, num);
  s.no_data = cv.raw.no_data;

  parallel_for(0, h, num_threads, [&](int y) {
    std::vector<float> fwd(static_cast<std::size_t>(w) * num);
    std::vector<float> bwd(num);
    // left -> right, full row buffered
    for (int x = 0; x < w; ++x) {
      const float* e = cv.raw.pixel(x, y);
      float* out = fwd.data() + static_cast<std::size_t>(x) * num;
      if (x == 0) {
        std::copy(e, e + num, out);
      } else {
        const float* prev = fwd.data() + static_cast<std::size_t>(x - 1) * num;
        detail::sgm_step(e, prev, detail::row_min(prev, num), num, p1, p2, out);
      }
    }
    // right -> left, combined on the fly
    std::vector<float> cur(num);
    for (int x = w - 1; x >= 0; --x) {
      const float* e = cv.raw.pixel(x, y);
      if (x == w - 1) {
        std::copy(e, e + num, cur.data());
      } else {
        detail::sgm_step(e, bwd.data(), detail::row_min(bwd.data(), num), num, p1, p2, cur.data());
      }
      const float* f = fwd.data() + static_cast<std::size_t>(x) * num;
      float* out = s.pixel(x, y);
      for (int d = 0; d < num; ++d) out[d] = f[d] + cur[d];
      std::swap(bwd, cur);
    }
  });

  parallel_for(0, w, num_threads, [&](int x) {
    std::vector<float> down(static_cast<std::size_t>(h) * num);
    std::vector<float> up(num);
    // top -> bottom, full column buffered
    for (int y = 0; y < h; ++y) {
      const float* e = cv.raw.pixel(x, y);
      float* out = down.data() + static_cast<std::size_t>(y) * num;
      if (y == 0) {
        std::copy(e, e + num, out);
      } else {
        const float* prev = down.data() + static_cast<std::size_t>(y - 1) * num;
        detail::sgm_step(e, prev, detail::row_min(prev, num), num, p1, p2, out);
      }
    }
    // bottom -> top, combined pairwise with the buffered direction
    std::vector<float> cur(num);
    for (int y = h - 1; y >= 0; --y) {
      const float* e = cv.raw.pixel(x, y);
      if (y == h - 1) {
        std::copy(e, e + num, cur.data());
      } else {
        detail::sgm_step(e, up.data(), detail::row_min(up.data(), num), num, p1, p2, cur.data());
      }
      const float* dn = down.data() + static_cast<std::size_t>(y) * num;
      float* out = s.pixel(x, y);
      for (int d = 0; d < num; ++d) out[d] += dn[d] + cur[d];
      std::swap(up, cur);
    }
  });
  return s;
}

enum class PixelStatus : std::uint8_t { kNoData = 0, kFlatOutlier = 1, kValid = 2 };

/// Per-pixel depth decision for one keyframe.
struct DepthObservation {
  Image<PixelStatus> status;
  ImageF depth;            // meters, meaningful only where status == kValid
  ImageF disparity_index;  // real-valued refined sample index, ditto
};

struct ExtractOptions {
  double flat_eps = 0.05;
  bool refine = true;  // off reproduces plain winner-takes-all extraction
};

/// Argmin over samples with sub-sample parabola refinement and the flat-region
/// outlier test. Ties in the argmin go to the smallest disparity (largest
/// sample index, farthest depth).
inline DepthObservation extract_depth(const CostSlab& s, const DepthSampleSet& samples,
                                      const ExtractOptions& opts = {}, int num_threads = 1) {
  if (!(opts.flat_eps >= 0.0)) throw std::invalid_argument("extract_depth: flat_eps must be >= 0");
  const int w = s.width;
  const int h = s.height;
  const int num = s.num_samples;

  DepthObservation obs;
  obs.status = Image<PixelStatus>(w, h, PixelStatus::kNoData);
  obs.depth = ImageF(w, h, 0.0f);
  obs.disparity_index = ImageF(w, h, 0.0f);

  parallel_for(0, h, num_threads, [&](int y) {
    for (int x = 0; x < w; ++x) {
      if (s.is_no_data(x, y)) continue;
      const float* c = s.pixel(x, y);
      int best = 0;
      for (int k = 1; k < num; ++k) {
        if (c[k] <= c[best]) best = k;
      }
      if (!opts.refine) {
        if (best == num - 1) {
          obs.status.at(x, y) = PixelStatus::kFlatOutlier;  // zero disparity, no finite depth
        } else {
          obs.status.at(x, y) = PixelStatus::kValid;
          obs.depth.at(x, y) = static_cast<float>(samples.depth(best));
          obs.disparity_index.at(x, y) = static_cast<float>(best);
        }
        continue;
      }
      if (best == 0 || best == num - 1) {
        obs.status.at(x, y) = PixelStatus::kFlatOutlier;
        continue;
      }
      const double lo = c[best - 1];
      const double mid = c[best];
      const double hi = c[best + 1];
      if (2.0 * (1.0 + opts.flat_eps) * mid > lo + hi) {
        obs.status.at(x, y) = PixelStatus::kFlatOutlier;
        continue;
      }
      const double denom = lo + hi - 2.0 * mid;
      const double offset = -0.5 * (hi - lo) / denom;
      assert(std::abs(offset) <= 0.5 + 1e-12);
      const double k_ref = best + offset;
      obs.status.at(x, y) = PixelStatus::kValid;
      obs.depth.at(x, y) = static_cast<float>(samples.depth_from_index(k_ref));
      obs.disparity_index.at(x, y) = static_cast<float>(k_ref);
    }
  });
  return obs;
}

/// Debug aid: one depth slice of a cost slab as a binary 8-bit PGM,
/// intensities scaled to the slice's own min/max.
inline void write_cost_slice_pgm(const CostSlab& s, int k, const std::string& path) {
  if (k < 0 || k >= s.num_samples) throw std::invalid_argument("write_cost_slice_pgm: slice out of range");
  float lo = std::numeric_limits<float>::max();
  float hi = std::numeric_limits<float>::lowest();
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x) {
      const float v = s.pixel(x, y)[k];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  const float range = hi > lo ? hi - lo : 1.0f;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_cost_slice_pgm: cannot open " + path);
  out << "P5\n" << s.width << " " << s.height << "\n255\n";
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x) {
      const float v = (s.pixel(x, y)[k] - lo) / range;
      out.put(static_cast<char>(static_cast<int>(v * 255.0f + 0.5f)));
    }
}

}  // namespace monodense
