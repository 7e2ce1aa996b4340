// SPDX-License-Identifier: Apache-2.0
#include "dpose/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "dpose/container.hpp"
#include "dpose/error.hpp"
#include "dpose/raster.hpp"

namespace dpose {

namespace {

std::size_t pixel_count(int h, int w) { return static_cast<std::size_t>(h) * static_cast<std::size_t>(w); }

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

std::vector<std::uint8_t> header_bytes(const std::string& magic, int w, int h, int maxval) {
  const std::string s = magic + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n" + std::to_string(maxval) + "\n";
  return {s.begin(), s.end()};
}

}  // namespace

void write_pgm16(const std::filesystem::path& path, int height, int width, std::span<const double> values) {
  if (values.size() != pixel_count(height, width)) throw ShapeError("write_pgm16: size mismatch");
  auto bytes = header_bytes("P5", width, height, 65535);
  for (double v : values) {
    const auto q = static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 1.0) * 65535.0));
    bytes.push_back(static_cast<std::uint8_t>(q >> 8));  // PGM is big-endian
    bytes.push_back(static_cast<std::uint8_t>(q & 0xff));
  }
  write_file_bytes(path, bytes);
}

void write_ppm(const std::filesystem::path& path, const RgbImage& image) {
  if (image.pixels.size() != pixel_count(image.height, image.width) * 3) throw ShapeError("write_ppm: size mismatch");
  auto bytes = header_bytes("P6", image.width, image.height, 255);
  bytes.insert(bytes.end(), image.pixels.begin(), image.pixels.end());
  write_file_bytes(path, bytes);
}

RgbImage labels_to_rgb(int height, int width, std::span<const std::int32_t> labels) {
  if (labels.size() != pixel_count(height, width)) throw ShapeError("labels_to_rgb: size mismatch");
  RgbImage img{height, width, {}};
  img.pixels.reserve(labels.size() * 3);
  const auto& pal = part_palette();
  for (std::int32_t l : labels) {
    if (l < 0 || l >= static_cast<std::int32_t>(pal.size())) throw ShapeError("labels_to_rgb: label out of range");
    img.pixels.insert(img.pixels.end(), pal[static_cast<std::size_t>(l)].begin(), pal[static_cast<std::size_t>(l)].end());
  }
  return img;
}

RgbImage planar_to_rgb(int height, int width, std::span<const double> planar) {
  const std::size_t n = pixel_count(height, width);
  if (planar.size() != 3 * n) throw ShapeError("planar_to_rgb: size mismatch");
  RgbImage img{height, width, std::vector<std::uint8_t>(3 * n)};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < 3; ++c) img.pixels[i * 3 + c] = to_byte(planar[c * n + i]);
  return img;
}

RgbImage grey_to_rgb(int height, int width, std::span<const double> grey) {
  const std::size_t n = pixel_count(height, width);
  if (grey.size() != n) throw ShapeError("grey_to_rgb: size mismatch");
  RgbImage img{height, width, std::vector<std::uint8_t>(3 * n)};
  for (std::size_t i = 0; i < n; ++i) std::fill_n(img.pixels.begin() + static_cast<std::ptrdiff_t>(i * 3), 3, to_byte(grey[i]));
  return img;
}

RgbImage hstack(const std::vector<RgbImage>& images) {
  if (images.empty()) return {};
  const int h = images.front().height;
  int w = 0;
  for (const auto& im : images) {
    if (im.height != h) throw ShapeError("hstack: heights differ");
    w += im.width;
  }
  w += static_cast<int>(images.size()) - 1;
  RgbImage out{h, w, std::vector<std::uint8_t>(pixel_count(h, w) * 3, 0)};
  int x0 = 0;
  for (const auto& im : images) {
    for (int y = 0; y < h; ++y)
      std::copy_n(im.pixels.begin() + static_cast<std::ptrdiff_t>(pixel_count(y, im.width) * 3),
                  static_cast<std::ptrdiff_t>(im.width) * 3,
                  out.pixels.begin() + static_cast<std::ptrdiff_t>((pixel_count(y, w) + static_cast<std::size_t>(x0)) * 3));
    x0 += im.width + 1;
  }
  return out;
}

RgbImage upscale(const RgbImage& image, int factor) {
  if (factor < 1) throw ShapeError("upscale: factor must be >= 1");
  RgbImage out{image.height * factor, image.width * factor, {}};
  out.pixels.resize(pixel_count(out.height, out.width) * 3);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      for (int c = 0; c < 3; ++c)
        out.pixels[(pixel_count(y, out.width) + static_cast<std::size_t>(x)) * 3 + static_cast<std::size_t>(c)] =
            image.pixels[(pixel_count(y / factor, image.width) + static_cast<std::size_t>(x / factor)) * 3 +
                         static_cast<std::size_t>(c)];
  return out;
}

PnmHeader read_pnm_header(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  std::size_t pos = 0;
  auto fail = [&](const std::string& why) -> void { throw FormatError(path.string() + ": " + why); };
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&] {
    skip_space();
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) fail("malformed header");
    long v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      if (v > 1 << 24) fail("header value too large");
    }
    return static_cast<int>(v);
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) fail("not a binary P5/P6 file");
  PnmHeader h;
  h.magic = std::string(bytes.begin(), bytes.begin() + 2);
  pos = 2;
  h.width = read_int();
  h.height = read_int();
  h.maxval = read_int();
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) fail("missing separator after maxval");
  ++pos;
  if (h.width <= 0 || h.height <= 0 || h.maxval <= 0 || h.maxval > 65535) fail("invalid dimensions or maxval");
  h.data_offset = pos;
  const std::size_t channels = h.magic == "P6" ? 3 : 1;
  const std::size_t depth = h.maxval > 255 ? 2 : 1;
  if (bytes.size() - pos != pixel_count(h.height, h.width) * channels * depth) fail("payload size does not match header");
  return h;
}

}  // namespace dpose
