#include "amodal/tensor/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

#include <fmt/format.h>
#include <png.h>

#include "amodal/error.hpp"
#include "amodal/tensor/txf.hpp"

namespace amodal {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct RawImage {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;
};

RawImage decode_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw Error(ErrorCode::Io, fmt::format("cannot open {}", path.string()));

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::Io, "libpng initialisation failed");
  }
  RawImage img;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::Io, fmt::format("malformed PNG {}", path.string()));
  }
  png_init_io(png, file.get());
  png_read_info(png, info);

  const auto color = png_get_color_type(png, info);
  const auto depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.channels = static_cast<int>(png_get_channels(png, info));
  const std::size_t stride = png_get_rowbytes(png, info);
  img.pixels.resize(stride * static_cast<std::size_t>(img.height));
  rows.resize(static_cast<std::size_t>(img.height));
  for (int y = 0; y < img.height; ++y) rows[static_cast<std::size_t>(y)] = img.pixels.data() + stride * static_cast<std::size_t>(y);
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  if (img.channels != 1 && img.channels != 3) {
    throw Error(ErrorCode::Io, fmt::format("unsupported PNG channel count {} in {}", img.channels, path.string()));
  }
  return img;
}

void encode_png(const std::filesystem::path& path, int height, int width, int channels,
                const std::vector<std::uint8_t>& pixels) {
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw Error(ErrorCode::Io, fmt::format("cannot write {}", path.string()));
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::Io, "libpng initialisation failed");
  }
  std::vector<png_const_bytep> rows(static_cast<std::size_t>(height));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::Io, fmt::format("PNG encode failed for {}", path.string()));
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = static_cast<std::size_t>(width) * static_cast<std::size_t>(channels);
  for (int y = 0; y < height; ++y) rows[static_cast<std::size_t>(y)] = pixels.data() + stride * static_cast<std::size_t>(y);
  png_write_image(png, const_cast<png_bytepp>(rows.data()));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

FeatureMap read_png(const std::filesystem::path& path) {
  const RawImage raw = decode_png(path);
  std::vector<double> data(raw.pixels.size());
  std::transform(raw.pixels.begin(), raw.pixels.end(), data.begin(),
                 [](std::uint8_t v) { return static_cast<double>(v) / 255.0; });
  return FeatureMap(raw.height, raw.width, raw.channels, std::move(data));
}

FeatureMap read_png_rgb(const std::filesystem::path& path) {
  FeatureMap img = read_png(path);
  if (img.channels() == 3) return img;
  FeatureMap rgb(img.height(), img.width(), 3);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < 3; ++c) rgb.at(y, x, c) = img.at(y, x, 0);
    }
  }
  return rgb;
}

BinaryMask read_png_mask(const std::filesystem::path& path) {
  const RawImage raw = decode_png(path);
  BinaryMask mask(raw.height, raw.width);
  for (int y = 0; y < raw.height; ++y) {
    for (int x = 0; x < raw.width; ++x) {
      bool set = false;
      for (int c = 0; c < raw.channels; ++c) {
        set = set || raw.pixels[(static_cast<std::size_t>(y) * raw.width + x) * raw.channels + c] != 0;
      }
      mask.set(y, x, set);
    }
  }
  return mask;
}

void write_png(const FeatureMap& image, const std::filesystem::path& path) {
  if (image.channels() != 1 && image.channels() != 3) {
    throw Error(ErrorCode::InvalidArgument, "write_png: image must have 1 or 3 channels");
  }
  std::vector<std::uint8_t> pixels(image.data().size());
  std::transform(image.data().begin(), image.data().end(), pixels.begin(), [](double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
  });
  encode_png(path, image.height(), image.width(), image.channels(), pixels);
}

void write_png(const BinaryMask& mask, const std::filesystem::path& path) {
  std::vector<std::uint8_t> pixels(mask.bits().size());
  std::transform(mask.bits().begin(), mask.bits().end(), pixels.begin(),
                 [](std::uint8_t b) { return static_cast<std::uint8_t>(b ? 255 : 0); });
  encode_png(path, mask.height(), mask.width(), 1, pixels);
}

BinaryMask read_mask_file(const std::filesystem::path& path) {
  if (path.extension() == ".txf") return read_binary_mask(path);
  return read_png_mask(path);
}

}  // namespace amodal
