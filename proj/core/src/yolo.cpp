// SPDX-License-Identifier: Apache-2.0
#include "sentinel/yolo.hpp"

#include <algorithm>
#include <cmath>

#include "sentinel/errors.hpp"

namespace sentinel {

std::vector<YoloAssignment> yolo_grid_assign(std::span<const BoundingBox> truths, double width, double height,
                                             std::span<const BoundingBox> predictions, const YoloConfig& config) {
  if (config.grid < 1 || config.boxes_per_cell < 1) throw ContractViolation("grid and boxes_per_cell must be >= 1");
  if (predictions.size() != config.predictor_count()) {
    throw ContractViolation("expected " + std::to_string(config.predictor_count()) + " predictions, got " +
                            std::to_string(predictions.size()));
  }
  std::vector<YoloAssignment> out;
  out.reserve(truths.size());
  for (std::size_t t = 0; t < truths.size(); ++t) {
    const auto& gt = truths[t];
    const double cx = gt.center_x();
    const double cy = gt.center_y();
    if (cx < 0.0 || cy < 0.0 || cx >= width || cy >= height) {
      throw ContractViolation("ground-truth center lies outside the image");
    }
    YoloAssignment a;
    a.truth = t;
    a.col = std::min(config.grid - 1, static_cast<int>(std::floor(cx / width * config.grid)));
    a.row = std::min(config.grid - 1, static_cast<int>(std::floor(cy / height * config.grid)));
    a.iou = -1.0;
    for (int k = 0; k < config.boxes_per_cell; ++k) {
      const double v = iou(gt, predictions[config.index(a.row, a.col, k)]);
      if (v > a.iou) {
        a.iou = v;
        a.predictor = k;
      }
    }
    out.push_back(a);
  }
  return out;
}

double yolo_sse_loss(std::span<const YoloAssignment> assignments, std::span<const BoundingBox> predictions,
                     std::span<const BoundingBox> truths, const YoloConfig& config) {
  if (predictions.size() != config.predictor_count()) throw ContractViolation("prediction count mismatch");
  std::vector<bool> responsible(predictions.size(), false);
  double loss = 0.0;
  for (const auto& a : assignments) {
    if (a.truth >= truths.size()) throw ContractViolation("assignment refers to a missing ground truth");
    const std::size_t idx = config.index(a.row, a.col, a.predictor);
    responsible[idx] = true;
    const auto& p = predictions[idx];
    const auto& g = truths[a.truth];
    const double dx = p.center_x() - g.center_x();
    const double dy = p.center_y() - g.center_y();
    const double dw = std::sqrt(std::max(p.w, 0.0)) - std::sqrt(g.w);
    const double dh = std::sqrt(std::max(p.h, 0.0)) - std::sqrt(g.h);
    const double ds = p.score - g.score;
    loss += config.lambda_coord * (dx * dx + dy * dy + dw * dw + dh * dh) + ds * ds;
  }
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (!responsible[i]) loss += config.lambda_noobj * predictions[i].score * predictions[i].score;
  }
  return loss;
}

}  // namespace sentinel
