// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dpose {

/// 8-bit interleaved RGB raster.
struct RgbImage {
  int height = 0, width = 0;
  std::vector<std::uint8_t> pixels;  // height * width * 3
};

/// Grey values in [0, 1] written as binary 16-bit PGM (P5, maxval 65535).
void write_pgm16(const std::filesystem::path& path, int height, int width, std::span<const double> values);
void write_ppm(const std::filesystem::path& path, const RgbImage& image);

RgbImage labels_to_rgb(int height, int width, std::span<const std::int32_t> labels);
/// Planar [3, H, W] values in [0, 1] to RGB.
RgbImage planar_to_rgb(int height, int width, std::span<const double> planar);
/// Grey [H, W] in [0, 1] to RGB.
RgbImage grey_to_rgb(int height, int width, std::span<const double> grey);
/// Places images left to right with a 1-pixel black gutter; heights must match.
RgbImage hstack(const std::vector<RgbImage>& images);
/// Nearest-neighbour enlargement by an integer factor.
RgbImage upscale(const RgbImage& image, int factor);

struct PnmHeader {
  std::string magic;
  int width = 0, height = 0, maxval = 0;
  std::size_t data_offset = 0;
};

/// Parses and validates a binary P5/P6 header, including that the payload
/// size matches. Throws FormatError.
PnmHeader read_pnm_header(const std::filesystem::path& path);

}  // namespace dpose
