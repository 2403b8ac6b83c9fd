// SPDX-License-Identifier: Apache-2.0
#include "sentinel/cascade.hpp"

#include <algorithm>
#include <cmath>

#include "sentinel/errors.hpp"

namespace sentinel {

double normalized_cross_correlation(const GrayImage& a, const GrayImage& b) {
  if (a.width != b.width || a.height != b.height) throw ContractViolation("NCC operands differ in size");
  const std::size_t n = a.data.size();
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a.data[i];
    mb += b.data[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a.data[i] - ma;
    const double db = b.data[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 1e-12 || sbb <= 1e-12) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

TemplateScorer::TemplateScorer(GrayImage tmpl, TemplateSearch search, std::optional<Landmarks> landmarks)
    : template_(std::move(tmpl)), search_(std::move(search)), landmarks_(landmarks) {
  if (template_.empty() || template_.width != template_.height) {
    throw ContractViolation("template must be a non-empty square image");
  }
  if (search_.scales.empty()) search_.scales = {1.0};
  double mean = 0.0;
  for (double v : template_.data) mean += v;
  mean /= static_cast<double>(template_.data.size());
  centered_.reserve(template_.data.size());
  for (double v : template_.data) {
    centered_.push_back(v - mean);
    energy_ += (v - mean) * (v - mean);
  }
  const double focus_w = search_.focus[2] - search_.focus[0];
  if (!(focus_w > 0.0) || !(search_.focus[3] - search_.focus[1] > 0.0)) {
    throw ContractViolation("template focus region is empty");
  }
  window_size_ = static_cast<int>(std::lround(template_.width / focus_w * (1.0 + 2.0 * search_.context)));
}

StageResult TemplateScorer::evaluate(const GrayImage& window) const {
  if (window.width != window_size_ || window.height != window_size_) {
    throw ContractViolation("stage window has the wrong size");
  }
  // Window pixels per unit of candidate-box side.
  const double box_px = window_size_ / (1.0 + 2.0 * search_.context);
  const double origin = search_.context * box_px;
  const int side = template_.width;

  auto correlate = [&](const GrayImage& patch) {
    double mean = 0.0;
    for (double v : patch.data) mean += v;
    mean /= static_cast<double>(patch.data.size());
    double sab = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < patch.data.size(); ++i) {
      const double d = patch.data[i] - mean;
      sab += centered_[i] * d;
      sbb += d * d;
    }
    if (energy_ <= 1e-12 || sbb <= 1e-12) return 0.0;
    return sab / std::sqrt(energy_ * sbb);
  };

  double best = -2.0;
  double best_x = 0.0, best_y = 0.0, best_scale = 1.0;
  for (double scale : search_.scales) {
    for (int iy = -search_.shift_steps; iy <= search_.shift_steps; ++iy) {
      for (int ix = -search_.shift_steps; ix <= search_.shift_steps; ++ix) {
        const double step = search_.shift_steps > 0 ? search_.max_shift / search_.shift_steps : 0.0;
        // Sub-box in candidate-box units, centered at the box center plus shift.
        const double bx = 0.5 - 0.5 * scale + ix * step;
        const double by = 0.5 - 0.5 * scale + iy * step;
        const auto& fo = search_.focus;
        const bool whole = fo[0] == 0.0 && fo[1] == 0.0 && fo[2] == 1.0 && fo[3] == 1.0;
        GrayImage patch;
        if (whole && scale == 1.0 && ix == 0 && iy == 0 && search_.context == 0.0 && window_size_ == side) {
          patch = window;
        } else {
          patch = resample_region_smooth(window, origin + (bx + fo[0] * scale) * box_px,
                                  origin + (by + fo[1] * scale) * box_px, (fo[2] - fo[0]) * scale * box_px,
                                  (fo[3] - fo[1]) * scale * box_px, side, side);
        }
        const double ncc = correlate(patch);
        if (ncc > best) {
          best = ncc;
          best_x = bx;
          best_y = by;
          best_scale = scale;
        }
      }
    }
  }

  StageResult result;
  result.score = std::clamp(best, 0.0, 1.0);
  result.offsets = {best_x, best_y, best_x + best_scale - 1.0, best_y + best_scale - 1.0};
  if (landmarks_) {
    Landmarks marks{};
    for (std::size_t i = 0; i < marks.size(); ++i) {
      marks[i] = {best_x + (*landmarks_)[i].x * best_scale, best_y + (*landmarks_)[i].y * best_scale};
    }
    result.landmarks = marks;
  }
  return result;
}

void CascadeConfig::validate() const {
  for (double t : thresholds) {
    if (!(t > 0.0 && t < 1.0)) throw ConfigError("stage thresholds must lie in (0, 1)");
  }
  if (!(nms_intra > 0.0 && nms_intra < 1.0) || !(nms_final > 0.0 && nms_final < 1.0)) {
    throw ConfigError("NMS thresholds must lie in (0, 1)");
  }
  if (stride < 1) throw ConfigError("stride must be at least 1");
}

namespace {

struct Candidate {
  BoundingBox box;
  std::array<double, 3> scores{};
  Landmarks landmarks{};
  bool has_landmarks = false;
};

BoundingBox squared(const BoundingBox& b) {
  const double side = std::max(b.w, b.h);
  return {b.center_x() - 0.5 * side, b.center_y() - 0.5 * side, side, side, b.score};
}

BoundingBox apply_offsets(const BoundingBox& b, const std::array<double, 4>& off) {
  const double x1 = b.x + off[0] * b.w;
  const double y1 = b.y + off[1] * b.h;
  const double x2 = b.x + b.w + off[2] * b.w;
  const double y2 = b.y + b.h + off[3] * b.h;
  return {x1, y1, x2 - x1, y2 - y1, b.score};
}

bool finite_offsets(const StageResult& r) {
  return std::isfinite(r.score) && std::all_of(r.offsets.begin(), r.offsets.end(), [](double v) {
           return std::isfinite(v);
         });
}

std::vector<Candidate> keep_after_nms(const std::vector<Candidate>& in, double threshold) {
  std::vector<BoundingBox> boxes;
  boxes.reserve(in.size());
  for (const auto& c : in) boxes.push_back(c.box);
  std::vector<Candidate> out;
  for (std::size_t i : nms_indices(boxes, threshold)) out.push_back(in[i]);
  return out;
}

// Runs one box-level stage (refine or output) over the candidates.
std::vector<Candidate> run_stage(const GrayImage& gray, const StageScorer& scorer, std::vector<Candidate> in,
                                 std::size_t stage, double threshold) {
  std::vector<Candidate> out;
  const int n = scorer.window_size();
  for (auto& cand : in) {
    const BoundingBox box = squared(cand.box);
    const double grow = scorer.context() * box.w;
    const GrayImage window =
        resample_region_smooth(gray, box.x - grow, box.y - grow, box.w + 2.0 * grow, box.h + 2.0 * grow, n, n);
    const StageResult r = scorer.evaluate(window);
    if (!finite_offsets(r) || r.score < threshold) continue;
    Candidate next = cand;
    next.box = apply_offsets(box, r.offsets);
    if (!(next.box.w > 0.0 && next.box.h > 0.0)) continue;
    next.box.score = std::clamp(r.score, 0.0, 1.0);
    next.scores[stage] = next.box.score;
    if (r.landmarks) {
      next.has_landmarks = true;
      for (std::size_t i = 0; i < next.landmarks.size(); ++i) {
        next.landmarks[i] = {box.x + (*r.landmarks)[i].x * box.w, box.y + (*r.landmarks)[i].y * box.h};
      }
    }
    out.push_back(next);
  }
  return out;
}

}  // namespace

std::vector<FaceDetection> detect_faces(const Frame& frame, const CascadeScorers& scorers,
                                        const CascadeConfig& config) {
  return detect_faces(to_gray(frame), scorers, config);
}

std::vector<FaceDetection> detect_faces(const GrayImage& gray, const CascadeScorers& scorers,
                                        const CascadeConfig& config) {
  config.validate();
  if (!scorers.proposal || !scorers.refine || !scorers.output) {
    throw ConfigError("cascade needs all three stage scorers");
  }
  if (gray.empty()) return {};

  // Proposal stage: dense windows over every pyramid level.
  std::vector<Candidate> proposals;
  const int win = scorers.proposal->window_size();
  for (double s : image_pyramid(gray.width, gray.height, config.min_face, config.scale_factor)) {
    const int w = std::max(1, static_cast<int>(std::lround(gray.width * s)));
    const int h = std::max(1, static_cast<int>(std::lround(gray.height * s)));
    if (w < win || h < win) continue;
    const GrayImage level = resize(gray, w, h);
    const double sx = static_cast<double>(gray.width) / w;
    const double sy = static_cast<double>(gray.height) / h;
    GrayImage window(win, win);
    for (int y = 0; y + win <= h; y += config.stride) {
      for (int x = 0; x + win <= w; x += config.stride) {
        for (int j = 0; j < win; ++j) {
          std::copy_n(&level.data[static_cast<std::size_t>(y + j) * w + x], win, &window.data[static_cast<std::size_t>(j) * win]);
        }
        const StageResult r = scorers.proposal->evaluate(window);
        if (!finite_offsets(r) || r.score < config.thresholds[0]) continue;
        Candidate c;
        c.box = apply_offsets({x * sx, y * sy, win * sx, win * sy, 0.0}, r.offsets);
        if (!(c.box.w > 0.0 && c.box.h > 0.0)) continue;
        c.box.score = std::clamp(r.score, 0.0, 1.0);
        c.scores[0] = c.box.score;
        proposals.push_back(c);
      }
    }
  }
  proposals = keep_after_nms(proposals, config.nms_intra);
  if (proposals.size() > config.max_proposals) proposals.resize(config.max_proposals);

  auto refined = run_stage(gray, *scorers.refine, std::move(proposals), 1, config.thresholds[1]);
  refined = keep_after_nms(refined, config.nms_intra);
  auto output = run_stage(gray, *scorers.output, std::move(refined), 2, config.thresholds[2]);
  output = keep_after_nms(output, config.nms_final);

  std::vector<FaceDetection> detections;
  const double fw = gray.width;
  const double fh = gray.height;
  for (const auto& c : output) {
    const double x1 = std::clamp(c.box.x, 0.0, fw);
    const double y1 = std::clamp(c.box.y, 0.0, fh);
    const double x2 = std::clamp(c.box.x + c.box.w, 0.0, fw);
    const double y2 = std::clamp(c.box.y + c.box.h, 0.0, fh);
    if (!(x2 > x1 && y2 > y1)) continue;
    FaceDetection det;
    det.box = {x1, y1, x2 - x1, y2 - y1, c.box.score};
    det.stage_scores = c.scores;
    for (std::size_t i = 0; i < det.landmarks.size(); ++i) {
      const Point p = c.has_landmarks ? c.landmarks[i] : Point{c.box.center_x(), c.box.center_y()};
      det.landmarks[i] = {std::clamp(p.x, 0.0, fw), std::clamp(p.y, 0.0, fh)};
    }
    detections.push_back(det);
  }
  return detections;
}

}  // namespace sentinel
