// SPDX-License-Identifier: Apache-2.0
#pragma once

// Three-stage face detection cascade (proposal, refine, output) over an
// image pyramid. Stage classifiers are pluggable; the bundled one scores
// windows by normalized cross-correlation against a face template.

#include <array>
#include <memory>
#include <optional>
#include <vector>

#include "sentinel/detection.hpp"
#include "sentinel/image.hpp"

namespace sentinel {

struct StageResult {
  double score = 0.0;  // in [0, 1]
  // Corner regression (dx1, dy1, dx2, dy2) as fractions of the candidate box
  // width/height: x1' = x1 + dx1 * w, x2' = x2 + dx2 * w, and likewise in y.
  std::array<double, 4> offsets{};
  // Landmarks in normalized candidate-box coordinates; output stage only.
  std::optional<Landmarks> landmarks;
};

class StageScorer {
 public:
  virtual ~StageScorer() = default;

  // Side of the square window this stage consumes.
  virtual int window_size() const = 0;
  // Extra border requested around the candidate box, as a fraction of its
  // side on each edge. The window then covers the box grown by this much.
  virtual double context() const { return 0.0; }
  virtual StageResult evaluate(const GrayImage& window) const = 0;
};

struct TemplateSearch {
  double context = 0.0;
  // Candidate sub-box sizes relative to the box.
  std::vector<double> scales{1.0};
  // Shift grid, as fractions of the box side, applied symmetrically.
  double max_shift = 0.0;
  int shift_steps = 0;
  // Part of the box the template depicts (x0, y0, x1, y1 in box units).
  std::array<double, 4> focus{0.0, 0.0, 1.0, 1.0};
};

// Scores a window by its normalized cross-correlation with `tmpl`, clamped to
// [0, 1]. With a search configured, the best-matching sub-box drives both the
// score and the regression offsets.
class TemplateScorer : public StageScorer {
 public:
  TemplateScorer(GrayImage tmpl, TemplateSearch search = {}, std::optional<Landmarks> landmarks = std::nullopt);

  int window_size() const override { return window_size_; }
  double context() const override { return search_.context; }
  StageResult evaluate(const GrayImage& window) const override;

 private:
  GrayImage template_;
  std::vector<double> centered_;  // template minus its mean
  double energy_ = 0.0;
  TemplateSearch search_;
  std::optional<Landmarks> landmarks_;
  int window_size_ = 0;
};

// Normalized cross-correlation of two equally sized images; 0 when either is flat.
double normalized_cross_correlation(const GrayImage& a, const GrayImage& b);

struct CascadeScorers {
  std::shared_ptr<const StageScorer> proposal;
  std::shared_ptr<const StageScorer> refine;
  std::shared_ptr<const StageScorer> output;
};

struct CascadeConfig {
  double min_face = kDefaultMinFace;
  double scale_factor = kDefaultScaleFactor;
  std::array<double, 3> thresholds{0.6, 0.7, 0.7};
  double nms_intra = 0.7;
  double nms_final = 0.5;
  int stride = 2;
  std::size_t max_proposals = 256;

  // Throws ConfigError if any threshold is outside (0, 1).
  void validate() const;
};

std::vector<FaceDetection> detect_faces(const Frame& frame, const CascadeScorers& scorers,
                                        const CascadeConfig& config);
std::vector<FaceDetection> detect_faces(const GrayImage& gray, const CascadeScorers& scorers,
                                        const CascadeConfig& config);

}  // namespace sentinel
