// SPDX-License-Identifier: Apache-2.0
#include "sentinel/detection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sentinel/errors.hpp"
#include "sentinel/image.hpp"

namespace sentinel {

bool BoundingBox::valid() const {
  return std::isfinite(x) && std::isfinite(y) && w > 0.0 && h > 0.0 && std::isfinite(w) && std::isfinite(h) &&
         score >= 0.0 && score <= 1.0;
}

bool FaceDetection::landmarks_within_box() const {
  const double mx = 0.2 * box.w;
  const double my = 0.2 * box.h;
  return std::all_of(landmarks.begin(), landmarks.end(), [&](const Point& p) {
    return std::isfinite(p.x) && std::isfinite(p.y) && p.x >= box.x - mx && p.x <= box.x + box.w + mx &&
           p.y >= box.y - my && p.y <= box.y + box.h + my;
  });
}

double intersection_area(const BoundingBox& a, const BoundingBox& b) {
  const double iw = std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x);
  const double ih = std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  return iw * ih;
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double inter = intersection_area(a, b);
  if (inter == 0.0) return 0.0;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? std::min(1.0, inter / uni) : 0.0;
}

std::vector<std::size_t> nms_indices(std::span<const BoundingBox> boxes, double iou_threshold) {
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return boxes[a].score > boxes[b].score; });
  std::vector<std::size_t> keep;
  std::vector<bool> suppressed(boxes.size(), false);
  for (std::size_t i = 0; i < order.size(); ++i) {
    const std::size_t cur = order[i];
    if (suppressed[cur]) continue;
    keep.push_back(cur);
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      const std::size_t other = order[j];
      if (!suppressed[other] && iou(boxes[cur], boxes[other]) > iou_threshold) suppressed[other] = true;
    }
  }
  return keep;
}

std::vector<BoundingBox> nms(std::span<const BoundingBox> boxes, double iou_threshold) {
  std::vector<BoundingBox> out;
  for (std::size_t i : nms_indices(boxes, iou_threshold)) out.push_back(boxes[i]);
  return out;
}

std::vector<double> image_pyramid(int width, int height, double min_face, double scale_factor) {
  if (min_face < kBaseWindow) throw ContractViolation("min_face must be at least 12 pixels");
  if (!(scale_factor > 0.0 && scale_factor < 1.0)) throw ContractViolation("scale_factor must be in (0, 1)");
  const double min_side = std::min(width, height);
  const double base = kBaseWindow / min_face;
  std::vector<double> scales;
  for (int k = 0;; ++k) {
    const double s = base * std::pow(scale_factor, k);
    if (min_side * s < kBaseWindow) break;
    scales.push_back(s);
  }
  return scales;
}

std::vector<double> crop_align(const GrayImage& gray, const BoundingBox& box, int out_size) {
  if (out_size <= 0) throw ContractViolation("crop size must be positive");
  const double side = std::max(box.w, box.h);
  double x0 = box.center_x() - 0.5 * side;
  double y0 = box.center_y() - 0.5 * side;
  double x1 = x0 + side;
  double y1 = y0 + side;
  x0 = std::max(x0, 0.0);
  y0 = std::max(y0, 0.0);
  x1 = std::min(x1, static_cast<double>(gray.width));
  y1 = std::min(y1, static_cast<double>(gray.height));
  if (!(x1 > x0 && y1 > y0)) throw AlignmentError("detection box does not intersect the frame");
  return resample_region(gray, x0, y0, x1 - x0, y1 - y0, out_size, out_size).data;
}

std::vector<double> crop_align(const Frame& frame, const BoundingBox& box, int out_size) {
  return crop_align(to_gray(frame), box, out_size);
}

std::vector<double> crop_align(const Frame& frame, const FaceDetection& det, int out_size) {
  return crop_align(frame, det.box, out_size);
}

void to_json(nlohmann::json& j, const BoundingBox& b) {
  j = nlohmann::json{{"x", b.x}, {"y", b.y}, {"w", b.w}, {"h", b.h}, {"score", b.score}};
}

void from_json(const nlohmann::json& j, BoundingBox& b) {
  b.x = j.at("x").get<double>();
  b.y = j.at("y").get<double>();
  b.w = j.at("w").get<double>();
  b.h = j.at("h").get<double>();
  b.score = j.value("score", 0.0);
}

void to_json(nlohmann::json& j, const FaceDetection& d) {
  nlohmann::json marks = nlohmann::json::array();
  for (const auto& p : d.landmarks) marks.push_back({p.x, p.y});
  j = nlohmann::json{{"box", d.box}, {"landmarks", marks}, {"stage_scores", d.stage_scores}};
}

void from_json(const nlohmann::json& j, FaceDetection& d) {
  d.box = j.at("box").get<BoundingBox>();
  const auto& marks = j.at("landmarks");
  if (!marks.is_array() || marks.size() != d.landmarks.size()) {
    throw nlohmann::json::other_error::create(501, "expected five landmarks", &j);
  }
  for (std::size_t i = 0; i < d.landmarks.size(); ++i) {
    d.landmarks[i] = {marks[i].at(0).get<double>(), marks[i].at(1).get<double>()};
  }
  d.stage_scores = j.at("stage_scores").get<std::array<double, 3>>();
}

}  // namespace sentinel
