// SPDX-License-Identifier: Apache-2.0
#include "sentinel/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "sentinel/errors.hpp"

namespace sentinel {

void Frame::validate() const {
  if (channels != 1 && channels != 3) throw ContractViolation("frame channels must be 1 or 3");
  const std::size_t expected = static_cast<std::size_t>(width) * height * channels;
  if (pixels.size() != expected) {
    throw ContractViolation("frame buffer has " + std::to_string(pixels.size()) + " bytes, expected " +
                            std::to_string(expected));
  }
}

GrayImage::GrayImage(int w, int h, double fill)
    : width(w), height(h), data(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}

GrayImage to_gray(const Frame& frame) {
  frame.validate();
  GrayImage out(static_cast<int>(frame.width), static_cast<int>(frame.height));
  const std::size_t n = static_cast<std::size_t>(frame.width) * frame.height;
  if (frame.channels == 1) {
    for (std::size_t i = 0; i < n; ++i) out.data[i] = frame.pixels[i] / 255.0;
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const auto* p = &frame.pixels[3 * i];
      out.data[i] = (0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]) / 255.0;
    }
  }
  return out;
}

double sample_bilinear(const GrayImage& img, double x, double y) {
  x = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
  y = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, img.width - 1);
  const int y1 = std::min(y0 + 1, img.height - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const double top = img.at(x0, y0) * (1.0 - fx) + img.at(x1, y0) * fx;
  const double bottom = img.at(x0, y1) * (1.0 - fx) + img.at(x1, y1) * fx;
  return top * (1.0 - fy) + bottom * fy;
}

GrayImage resample_region(const GrayImage& img, double x, double y, double w, double h, int out_w, int out_h) {
  GrayImage out(out_w, out_h);
  const double sx = w / out_w;
  const double sy = h / out_h;
  for (int j = 0; j < out_h; ++j) {
    const double src_y = y + (j + 0.5) * sy - 0.5;
    for (int i = 0; i < out_w; ++i) {
      out.at(i, j) = sample_bilinear(img, x + (i + 0.5) * sx - 0.5, src_y);
    }
  }
  return out;
}

GrayImage resample_region_smooth(const GrayImage& img, double x, double y, double w, double h, int out_w,
                                 int out_h) {
  const double sx = w / out_w;
  const double sy = h / out_h;
  const int kx = std::max(1, static_cast<int>(std::ceil(sx - 1e-9)));
  const int ky = std::max(1, static_cast<int>(std::ceil(sy - 1e-9)));
  if (kx == 1 && ky == 1) return resample_region(img, x, y, w, h, out_w, out_h);
  GrayImage out(out_w, out_h);
  const double norm = 1.0 / (kx * ky);
  for (int j = 0; j < out_h; ++j) {
    for (int i = 0; i < out_w; ++i) {
      double sum = 0.0;
      for (int b = 0; b < ky; ++b) {
        const double src_y = y + j * sy + (b + 0.5) * sy / ky - 0.5;
        for (int a = 0; a < kx; ++a) {
          sum += sample_bilinear(img, x + i * sx + (a + 0.5) * sx / kx - 0.5, src_y);
        }
      }
      out.at(i, j) = sum * norm;
    }
  }
  return out;
}

GrayImage resize(const GrayImage& img, int out_w, int out_h) {
  return resample_region_smooth(img, 0.0, 0.0, img.width, img.height, out_w, out_h);
}

namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string next_token(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    const char c = static_cast<char>(bytes[pos]);
    if (c == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      ++pos;
    } else {
      break;
    }
  }
  std::string token;
  while (pos < bytes.size() && !std::isspace(bytes[pos])) token.push_back(static_cast<char>(bytes[pos++]));
  return token;
}

int parse_positive(const std::string& token, const char* what) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(token, &used);
    if (used != token.size() || v <= 0) throw IoError("");
    return v;
  } catch (const std::exception&) {
    throw IoError(std::string("bad PNM ") + what + ": '" + token + "'");
  }
}

}  // namespace

PnmImage parse_pnm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  const std::string magic = next_token(bytes, pos);
  PnmImage img;
  if (magic == "P5") {
    img.channels = 1;
  } else if (magic == "P6") {
    img.channels = 3;
  } else {
    throw IoError("unsupported image format '" + magic + "' (expected binary PGM/PPM)");
  }
  img.width = parse_positive(next_token(bytes, pos), "width");
  img.height = parse_positive(next_token(bytes, pos), "height");
  const int maxval = parse_positive(next_token(bytes, pos), "maxval");
  if (maxval != 255) throw IoError("only 8-bit PNM images are supported");
  ++pos;  // single whitespace byte after maxval
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height * img.channels;
  if (pos + n > bytes.size()) throw IoError("truncated PNM pixel data");
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                    bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
  return img;
}

PnmImage read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_pnm(bytes);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_pnm(const PnmImage& image) {
  if (image.channels != 1 && image.channels != 3) throw ContractViolation("PNM channels must be 1 or 3");
  const std::string header = std::string(image.channels == 1 ? "P5" : "P6") + "\n" + std::to_string(image.width) +
                             " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

void write_pnm(const std::filesystem::path& path, const PnmImage& image) {
  const auto bytes = encode_pnm(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

PnmImage to_pnm(const GrayImage& img) {
  PnmImage out;
  out.width = img.width;
  out.height = img.height;
  out.channels = 1;
  out.pixels.reserve(img.data.size());
  for (double v : img.data) out.pixels.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
  return out;
}

GrayImage from_pnm(const PnmImage& img) {
  Frame f;
  f.width = static_cast<std::uint32_t>(img.width);
  f.height = static_cast<std::uint32_t>(img.height);
  f.channels = static_cast<std::uint8_t>(img.channels);
  f.pixels = img.pixels;
  return to_gray(f);
}

}  // namespace sentinel
