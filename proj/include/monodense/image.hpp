#pragma once

#include <algorithm>
#include <cassert>
#include <cstdint>
#include <vector>

namespace monodense {

/// Row-major dense image. Pixel (x, y) = column x, row y.
template <typename T>
class Image {
 public:
  Image() = default;
  Image(int width, int height, T fill = T{})
      : width_(width), height_(height), data_(static_cast<std::size_t>(width) * height, fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return data_.empty(); }

  T& at(int x, int y) {
    assert(contains(x, y));
    return data_[static_cast<std::size_t>(y) * width_ + x];
  }
  const T& at(int x, int y) const {
    assert(contains(x, y));
    return data_[static_cast<std::size_t>(y) * width_ + x];
  }

  bool contains(int x, int y) const { return x >= 0 && x < width_ && y >= 0 && y < height_; }

  T* row(int y) { return data_.data() + static_cast<std::size_t>(y) * width_; }
  const T* row(int y) const { return data_.data() + static_cast<std::size_t>(y) * width_; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool operator==(const Image& other) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using ImageU8 = Image<std::uint8_t>;
using ImageU16 = Image<std::uint16_t>;
using ImageF = Image<float>;

/// Bilinear intensity lookup. Caller guarantees x in [0, w-1], y in [0, h-1];
/// samples landing exactly on the last row/column degenerate to nearest.
template <typename T>
inline double bilinear(const Image<T>& img, double x, double y) {
  const int x0 = static_cast<int>(x);
  const int y0 = static_cast<int>(y);
  const int x1 = std::min(x0 + 1, img.width() - 1);
  const int y1 = std::min(y0 + 1, img.height() - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const double v00 = static_cast<double>(img.at(x0, y0));
  const double v10 = static_cast<double>(img.at(x1, y0));
  const double v01 = static_cast<double>(img.at(x0, y1));
  const double v11 = static_cast<double>(img.at(x1, y1));
  const double top = v00 + fx * (v10 - v00);
  const double bot = v01 + fx * (v11 - v01);
  return top + fy * (bot - top);
}

/// True if a patch of half-width `margin` around (x, y), sampled bilinearly,
/// stays inside the image.
template <typename T>
inline bool patch_inside(const Image<T>& img, double x, double y, int margin) {
  return x >= margin && x <= img.width() - 1 - margin && y >= margin && y <= img.height() - 1 - margin;
}

}  // namespace monodense
