// SPDX-License-Identifier: Apache-2.0
#pragma once

// Grid-detector utilities: responsibility assignment of ground truths to
// (cell, predictor) slots and the weighted sum-squared-error loss.

#include <cstddef>
#include <span>
#include <vector>

#include "sentinel/detection.hpp"

namespace sentinel {

struct YoloConfig {
  int grid = 13;
  int boxes_per_cell = 5;
  double lambda_coord = 5.0;
  double lambda_noobj = 0.5;

  std::size_t predictor_count() const {
    return static_cast<std::size_t>(grid) * static_cast<std::size_t>(grid) * static_cast<std::size_t>(boxes_per_cell);
  }
  // Flat index of predictor k in cell (row, col).
  std::size_t index(int row, int col, int k) const {
    return (static_cast<std::size_t>(row) * grid + static_cast<std::size_t>(col)) * boxes_per_cell +
           static_cast<std::size_t>(k);
  }
};

struct YoloAssignment {
  std::size_t truth = 0;
  int row = 0;
  int col = 0;
  int predictor = 0;
  double iou = 0.0;

  bool operator==(const YoloAssignment&) const = default;
};

// Each ground truth goes to the cell holding its center and, inside that
// cell, to the predictor with the largest IoU (lowest index on ties).
// `predictions` holds predictor_count() boxes laid out by YoloConfig::index.
std::vector<YoloAssignment> yolo_grid_assign(std::span<const BoundingBox> truths, double width, double height,
                                             std::span<const BoundingBox> predictions, const YoloConfig& config = {});

// Responsible predictors: lambda_coord * [(cx - cx')^2 + (cy - cy')^2 +
// (sqrt w - sqrt w')^2 + (sqrt h - sqrt h')^2] + (score - score')^2, with the
// truth's score as target. Every other predictor: lambda_noobj * score^2.
double yolo_sse_loss(std::span<const YoloAssignment> assignments, std::span<const BoundingBox> predictions,
                     std::span<const BoundingBox> truths, const YoloConfig& config = {});

}  // namespace sentinel
