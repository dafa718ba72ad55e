#pragma once

#include <png.h>

#include <cstdio>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "monodense/image.hpp"

namespace monodense {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct PngReader {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngReader() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
  }
};

struct PngWriter {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWriter() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
  }
};

}  // namespace detail

/// Reads any 8/16-bit gray or color PNG as 8-bit grayscale (integer BT.601
/// luma for color inputs).
inline ImageU8 read_png_gray8(const std::string& path) {
  detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw std::runtime_error("read_png_gray8: cannot open " + path);
  detail::PngReader r;
  r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  r.info = png_create_info_struct(r.png);
  if (!r.png || !r.info) throw std::runtime_error("read_png_gray8: libpng init failed");
  if (setjmp(png_jmpbuf(r.png))) throw std::runtime_error("read_png_gray8: failed to decode " + path);
  png_init_io(r.png, fp.get());
  png_read_info(r.png, r.info);

  const png_uint_32 w = png_get_image_width(r.png, r.info);
  const png_uint_32 h = png_get_image_height(r.png, r.info);
  const int color = png_get_color_type(r.png, r.info);
  const int depth = png_get_bit_depth(r.png, r.info);

  if (depth == 16) png_set_strip_16(r.png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(r.png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(r.png);
  if (png_get_valid(r.png, r.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(r.png);
  png_set_strip_alpha(r.png);
  png_read_update_info(r.png, r.info);

  const int channels = png_get_channels(r.png, r.info);
  std::vector<std::uint8_t> row(static_cast<std::size_t>(w) * channels);
  ImageU8 img(static_cast<int>(w), static_cast<int>(h));
  for (png_uint_32 y = 0; y < h; ++y) {
    png_read_row(r.png, row.data(), nullptr);
    for (png_uint_32 x = 0; x < w; ++x) {
      if (channels >= 3) {
        const int lum = (299 * row[x * channels] + 587 * row[x * channels + 1] + 114 * row[x * channels + 2]) / 1000;
        img.at(static_cast<int>(x), static_cast<int>(y)) = static_cast<std::uint8_t>(lum);
      } else {
        img.at(static_cast<int>(x), static_cast<int>(y)) = row[x * channels];
      }
    }
  }
  return img;
}

/// Reads a 16-bit grayscale PNG (the depth-map format) without rescaling.
inline ImageU16 read_png_gray16(const std::string& path) {
  detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw std::runtime_error("read_png_gray16: cannot open " + path);
  detail::PngReader r;
  r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  r.info = png_create_info_struct(r.png);
  if (!r.png || !r.info) throw std::runtime_error("read_png_gray16: libpng init failed");
  if (setjmp(png_jmpbuf(r.png))) throw std::runtime_error("read_png_gray16: failed to decode " + path);
  png_init_io(r.png, fp.get());
  png_read_info(r.png, r.info);

  const png_uint_32 w = png_get_image_width(r.png, r.info);
  const png_uint_32 h = png_get_image_height(r.png, r.info);
  if (png_get_color_type(r.png, r.info) != PNG_COLOR_TYPE_GRAY || png_get_bit_depth(r.png, r.info) != 16)
    throw std::runtime_error("read_png_gray16: " + path + " is not 16-bit grayscale");
  png_read_update_info(r.png, r.info);

  std::vector<std::uint8_t> row(static_cast<std::size_t>(w) * 2);
  ImageU16 img(static_cast<int>(w), static_cast<int>(h));
  for (png_uint_32 y = 0; y < h; ++y) {
    png_read_row(r.png, row.data(), nullptr);
    for (png_uint_32 x = 0; x < w; ++x) {
      // PNG stores 16-bit samples big-endian
      img.at(static_cast<int>(x), static_cast<int>(y)) =
          static_cast<std::uint16_t>((row[x * 2] << 8) | row[x * 2 + 1]);
    }
  }
  return img;
}

inline void write_png_gray8(const ImageU8& img, const std::string& path) {
  detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("write_png_gray8: cannot open " + path);
  detail::PngWriter w;
  w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  w.info = png_create_info_struct(w.png);
  if (!w.png || !w.info) throw std::runtime_error("write_png_gray8: libpng init failed");
  if (setjmp(png_jmpbuf(w.png))) throw std::runtime_error("write_png_gray8: failed to encode " + path);
  png_init_io(w.png, fp.get());
  png_set_IHDR(w.png, w.info, img.width(), img.height(), 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(w.png, w.info);
  for (int y = 0; y < img.height(); ++y)
    png_write_row(w.png, const_cast<png_bytep>(reinterpret_cast<const png_byte*>(img.row(y))));
  png_write_end(w.png, nullptr);
}

inline void write_png_gray16(const ImageU16& img, const std::string& path) {
  detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("write_png_gray16: cannot open " + path);
  detail::PngWriter w;
  w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  w.info = png_create_info_struct(w.png);
  if (!w.png || !w.info) throw std::runtime_error("write_png_gray16: libpng init failed");
  if (setjmp(png_jmpbuf(w.png))) throw std::runtime_error("write_png_gray16: failed to encode " + path);
  png_init_io(w.png, fp.get());
  png_set_IHDR(w.png, w.info, img.width(), img.height(), 16, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(w.png, w.info);
  std::vector<std::uint8_t> row(static_cast<std::size_t>(img.width()) * 2);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const std::uint16_t v = img.at(x, y);
      row[x * 2] = static_cast<std::uint8_t>(v >> 8);
      row[x * 2 + 1] = static_cast<std::uint8_t>(v & 0xff);
    }
    png_write_row(w.png, row.data());
  }
  png_write_end(w.png, nullptr);
}

inline constexpr double kDefaultDepthScale = 5000.0;  // counts per meter, 0 = invalid

inline ImageU16 encode_depth(const ImageF& depth_m, double counts_per_meter = kDefaultDepthScale) {
  ImageU16 out(depth_m.width(), depth_m.height());
  for (int y = 0; y < depth_m.height(); ++y)
    for (int x = 0; x < depth_m.width(); ++x) {
      const float d = depth_m.at(x, y);
      if (!(d > 0.0f)) {
        out.at(x, y) = 0;
        continue;
      }
      const double counts = d * counts_per_meter + 0.5;
      out.at(x, y) = counts >= 65535.0 ? 65535 : static_cast<std::uint16_t>(counts);
    }
  return out;
}

inline ImageF decode_depth(const ImageU16& counts, double counts_per_meter = kDefaultDepthScale) {
  ImageF out(counts.width(), counts.height());
  for (int y = 0; y < counts.height(); ++y)
    for (int x = 0; x < counts.width(); ++x) {
      const std::uint16_t c = counts.at(x, y);
      out.at(x, y) = c == 0 ? 0.0f : static_cast<float>(c / counts_per_meter);
    }
  return out;
}

}  // namespace monodense
