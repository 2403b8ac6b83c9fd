// SPDX-License-Identifier: Apache-2.0
#pragma once

// Box geometry shared by the cascade and the grid utilities: IoU, greedy
// non-maximum suppression, image pyramid scales and square face crops.

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "json.hpp"
#include "sentinel/frame.hpp"

namespace sentinel {

// Axis-aligned box, top-left corner plus extent, in pixels.
struct BoundingBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;
  double score = 0.0;

  double area() const { return w * h; }
  double center_x() const { return x + 0.5 * w; }
  double center_y() const { return y + 0.5 * h; }
  bool valid() const;

  bool operator==(const BoundingBox&) const = default;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

// Left eye, right eye, nose, left mouth corner, right mouth corner.
using Landmarks = std::array<Point, 5>;

struct FaceDetection {
  BoundingBox box;
  Landmarks landmarks{};
  std::array<double, 3> stage_scores{};

  // Every landmark lies inside the box grown by 20% on each side.
  bool landmarks_within_box() const;
};

double intersection_area(const BoundingBox& a, const BoundingBox& b);
double iou(const BoundingBox& a, const BoundingBox& b);

// Greedy suppression: keep the highest score, drop everything whose IoU with
// it exceeds `iou_threshold`, repeat. Equal scores keep input order. Returns
// indices into `boxes`, best first.
std::vector<std::size_t> nms_indices(std::span<const BoundingBox> boxes, double iou_threshold);
std::vector<BoundingBox> nms(std::span<const BoundingBox> boxes, double iou_threshold);

inline constexpr double kBaseWindow = 12.0;
inline constexpr double kDefaultMinFace = 20.0;
inline constexpr double kDefaultScaleFactor = 0.709;

// Scales s_k = (12 / min_face) * factor^k while min(width, height) * s_k >= 12.
// Throws ContractViolation if min_face < 12 or factor is outside (0, 1).
std::vector<double> image_pyramid(int width, int height, double min_face, double scale_factor);

// Expands the detection box to a square about its center, clips it to the
// frame, resamples bilinearly to out_size x out_size grayscale in [0, 1].
// Throws AlignmentError when the box does not intersect the frame.
std::vector<double> crop_align(const Frame& frame, const BoundingBox& box, int out_size);
std::vector<double> crop_align(const Frame& frame, const FaceDetection& det, int out_size);
struct GrayImage;
std::vector<double> crop_align(const GrayImage& gray, const BoundingBox& box, int out_size);

void to_json(nlohmann::json& j, const BoundingBox& b);
void from_json(const nlohmann::json& j, BoundingBox& b);
void to_json(nlohmann::json& j, const FaceDetection& d);
void from_json(const nlohmann::json& j, FaceDetection& d);

}  // namespace sentinel
