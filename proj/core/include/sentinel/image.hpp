// SPDX-License-Identifier: Apache-2.0
#pragma once

// Grayscale working images, bilinear resampling and binary PGM/PPM files.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "sentinel/frame.hpp"

namespace sentinel {

// Single-channel image with intensities in [0, 1].
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  GrayImage() = default;
  GrayImage(int w, int h, double fill = 0.0);

  double& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  bool empty() const { return width == 0 || height == 0; }
};

// Luminance 0.299 R + 0.587 G + 0.114 B, scaled to [0, 1].
GrayImage to_gray(const Frame& frame);

// Sample at continuous pixel coordinates (pixel centers at integer
// positions), clamping to the border.
double sample_bilinear(const GrayImage& img, double x, double y);

// Resample the region [x, x + w) x [y, y + h) to out_w x out_h by bilinear
// interpolation at output pixel centers.
GrayImage resample_region(const GrayImage& img, double x, double y, double w, double h, int out_w, int out_h);

// As resample_region, but when shrinking each output pixel averages a grid of
// bilinear samples spanning its footprint, which suppresses aliasing.
GrayImage resample_region_smooth(const GrayImage& img, double x, double y, double w, double h, int out_w,
                                 int out_h);

// Smooth resize of the whole image.
GrayImage resize(const GrayImage& img, int out_w, int out_h);

// 8-bit raster read from / written to binary PGM (P5) and PPM (P6).
struct PnmImage {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<std::uint8_t> pixels;
};

PnmImage read_pnm(const std::filesystem::path& path);
PnmImage parse_pnm(std::span<const std::uint8_t> bytes);
void write_pnm(const std::filesystem::path& path, const PnmImage& image);
std::vector<std::uint8_t> encode_pnm(const PnmImage& image);

PnmImage to_pnm(const GrayImage& img);
GrayImage from_pnm(const PnmImage& img);

}  // namespace sentinel
