#include "manigan/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

namespace manigan {

float quantize_unit(float v) {
  float clamped = std::clamp(v, 0.0f, 1.0f);
  return std::round(clamped * 255.0f) / 255.0f;
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

unsigned char to_u8(float v) {
  return static_cast<unsigned char>(
      std::round(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

Tensor read_png(const std::string& path, int want_channels) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw IoError("cannot open " + path);

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("failed to decode " + path);
  }
  png_init_io(png, file.get());
  png_read_info(png, info);

  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  int h = static_cast<int>(png_get_image_height(png, info));
  int w = static_cast<int>(png_get_image_width(png, info));
  int channels = static_cast<int>(png_get_channels(png, info));
  if (channels != want_channels) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(path + ": unexpected channel count");
  }

  std::vector<unsigned char> pixels(static_cast<size_t>(h) * w * channels);
  std::vector<png_bytep> rows(static_cast<size_t>(h));
  for (int y = 0; y < h; ++y)
    rows[y] = pixels.data() + static_cast<size_t>(y) * w * channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  std::vector<float> data(static_cast<size_t>(want_channels) * h * w);
  for (int c = 0; c < want_channels; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        data[(static_cast<size_t>(c) * h + y) * w + x] =
            pixels[(static_cast<size_t>(y) * w + x) * channels + c] / 255.0f;
  return Tensor::from_data({want_channels, h, w}, std::move(data));
}

void write_png(const std::string& path, const Tensor& image, int channels,
               int color_type) {
  if (image.ndim() != 3 || image.dim(0) != channels)
    throw DimensionError("png writer expects [" + std::to_string(channels) +
                         ",H,W], got " + shape_str(image.shape()));
  int h = image.dim(1), w = image.dim(2);

  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw IoError("cannot write " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed to encode " + path);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, w, h, 8, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<unsigned char> line(static_cast<size_t>(w) * channels);
  const auto& data = image.data();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c)
        line[static_cast<size_t>(x) * channels + c] =
            to_u8(data[(static_cast<size_t>(c) * h + y) * w + x]);
    png_write_row(png, line.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

Tensor read_png_rgb(const std::string& path) { return read_png(path, 3); }

void write_png_rgb(const std::string& path, const Tensor& image) {
  write_png(path, image, 3, PNG_COLOR_TYPE_RGB);
}

Tensor read_png_gray(const std::string& path) { return read_png(path, 1); }

void write_png_gray(const std::string& path, const Tensor& image) {
  write_png(path, image, 1, PNG_COLOR_TYPE_GRAY);
}

}  // namespace manigan
