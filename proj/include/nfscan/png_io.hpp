#pragma once

// Minimal grayscale PNG reading and writing on top of libpng.

#include <png.h>

#include <algorithm>
#include <csetjmp>
#include <cstring>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "common.hpp"

namespace nfscan {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct PngReadState {
  png_structp png = nullptr;
  png_infop info = nullptr;
  std::vector<png_byte> data;
  std::vector<png_bytep> rows;
  png_uint_32 width = 0, height = 0;
  int bit_depth = 0, color_type = 0;
  std::string error;
};

// Kept free of objects with destructors between setjmp and longjmp.
inline bool png_read_raw(std::FILE* fp, PngReadState* st) {
  st->png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!st->png) return false;
  st->info = png_create_info_struct(st->png);
  if (!st->info) return false;
  if (setjmp(png_jmpbuf(st->png))) return false;
  png_init_io(st->png, fp);
  png_read_info(st->png, st->info);
  png_get_IHDR(st->png, st->info, &st->width, &st->height, &st->bit_depth, &st->color_type, nullptr, nullptr, nullptr);
  if (st->color_type != PNG_COLOR_TYPE_GRAY || (st->bit_depth != 8 && st->bit_depth != 16)) return true;
  if (st->bit_depth == 16) png_set_swap(st->png);  // host little-endian uint16
  const std::size_t stride = png_get_rowbytes(st->png, st->info);
  st->data.resize(stride * st->height);
  st->rows.resize(st->height);
  for (png_uint_32 r = 0; r < st->height; ++r) st->rows[r] = st->data.data() + r * stride;
  png_read_image(st->png, st->rows.data());
  png_read_end(st->png, nullptr);
  return true;
}

}  // namespace detail

/// Reads an 8- or 16-bit grayscale PNG scaled to [0, 1] by the bit depth.
inline Eigen::MatrixXd read_png_gray(const std::filesystem::path& path) {
  detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw FormatError(path.string() + ": cannot open");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw FormatError(path.string() + ": not a PNG file");
  std::fseek(fp.get(), 0, SEEK_SET);
  detail::PngReadState st;
  const bool ok = detail::png_read_raw(fp.get(), &st);
  png_destroy_read_struct(&st.png, &st.info, nullptr);
  if (!ok) throw FormatError(path.string() + ": corrupt PNG");
  if (st.color_type != PNG_COLOR_TYPE_GRAY || (st.bit_depth != 8 && st.bit_depth != 16))
    throw FormatError(path.string() + ": only 8/16-bit grayscale PNG is supported");
  Eigen::MatrixXd out(st.height, st.width);
  const double scale = st.bit_depth == 16 ? 65535.0 : 255.0;
  for (png_uint_32 r = 0; r < st.height; ++r) {
    for (png_uint_32 c = 0; c < st.width; ++c) {
      double v;
      if (st.bit_depth == 16) {
        std::uint16_t w;
        std::memcpy(&w, st.rows[r] + 2 * c, 2);
        v = w;
      } else {
        v = st.rows[r][c];
      }
      out(r, c) = v / scale;
    }
  }
  return out;
}

/// Writes values in [0, 1] (clamped) as an 8-bit (or 16-bit) grayscale PNG.
inline void write_png_gray(const std::filesystem::path& path, const Eigen::MatrixXd& image, int bit_depth = 8) {
  if (bit_depth != 8 && bit_depth != 16) throw ConfigError("PNG bit depth must be 8 or 16");
  const long h = image.rows(), w = image.cols();
  const int bytes = bit_depth / 8;
  const double scale = bit_depth == 16 ? 65535.0 : 255.0;
  std::vector<png_byte> data(static_cast<std::size_t>(h * w * bytes));
  for (long r = 0; r < h; ++r) {
    for (long c = 0; c < w; ++c) {
      const double v = std::clamp(image(r, c), 0.0, 1.0);
      const auto q = static_cast<unsigned>(std::lround(v * scale));
      png_byte* p = data.data() + (r * w + c) * bytes;
      if (bytes == 2) {
        p[0] = static_cast<png_byte>(q >> 8);  // PNG is big-endian
        p[1] = static_cast<png_byte>(q & 0xFF);
      } else {
        p[0] = static_cast<png_byte>(q);
      }
    }
  }
  detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw FormatError(path.string() + ": cannot create");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw FormatError(path.string() + ": libpng initialisation failed");
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(h));
  for (long r = 0; r < h; ++r) rows[r] = data.data() + r * w * bytes;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw FormatError(path.string() + ": PNG encoding failed");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), bit_depth, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace nfscan
