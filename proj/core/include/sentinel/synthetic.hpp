// SPDX-License-Identifier: Apache-2.0
#pragma once

// Procedural faces with known ground truth. Each identity is a deterministic
// set of facial proportions; scenes plant faces at known boxes on noise.
// Used by the node's synthetic source, the trainer's corpus builder and the
// test suites, and as the source of the bundled detector templates.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sentinel/cascade.hpp"
#include "sentinel/detection.hpp"
#include "sentinel/frame.hpp"
#include "sentinel/image.hpp"

namespace sentinel {

// Proportions in normalized face-box coordinates ([0,1] x [0,1]).
struct FaceParams {
  double skin = 0.78;
  double hair_tone = 0.2;
  double hair_line = 0.21;
  double eye_dx = 0.165;
  double eye_y = 0.42;
  double eye_rx = 0.06;
  double eye_ry = 0.032;
  double brow = 0.024;
  double nose_end = 0.61;
  double mouth_w = 0.13;
  double mouth_y = 0.76;
  double mouth_h = 0.03;
  double eye_tone = 0.1;
  double lip_tone = 0.26;
  double jaw = 0.10;  // darkening of the lower face below the mouth
};

// Identities below this count have pairwise distinct tone codes; beyond it
// tone codes repeat and only the small geometric differences remain.
inline constexpr std::size_t kDistinctIdentities = 64;

FaceParams mean_face();
FaceParams identity_face(std::uint64_t identity);

// Normalized landmark positions (eyes, nose tip, mouth corners).
Landmarks face_landmarks(const FaceParams& face);

// Paints `face` into `canvas` inside `box`; pixels outside the face ellipse
// keep the canvas value. `lighting` shifts all face intensities.
void paint_face(GrayImage& canvas, const FaceParams& face, const BoundingBox& box, double lighting = 0.0,
                int supersample = 3);

inline constexpr double kTemplateBackground = 0.35;

// The mean face on a flat background; `focus` selects the part of the face
// box (x0, y0, x1, y1 in box units) that fills the size x size image.
GrayImage face_template(int size, std::array<double, 4> focus = {0.0, 0.0, 1.0, 1.0});

// Template-correlation scorers for the three cascade stages.
CascadeScorers template_cascade();

struct PlantedFace {
  int label = 0;  // identity index
  BoundingBox box;
};

struct SyntheticScene {
  GrayImage image;
  std::vector<PlantedFace> faces;

  Frame to_frame(const std::string& node_id, std::uint64_t sequence, std::int64_t timestamp_ms) const;
};

struct SceneOptions {
  int width = 160;
  int height = 120;
  double min_face = 28.0;
  double max_face = 44.0;
  double noise_low = 0.15;
  double noise_high = 0.55;
  double distractor_probability = 0.5;  // featureless skin-toned blob
  double lighting_jitter = 0.04;
  double shape_jitter = 0.008;
};

class SceneGenerator {
 public:
  explicit SceneGenerator(std::uint64_t seed, SceneOptions options = {});

  // Plants one face per entry of `identities` at random non-overlapping boxes.
  SyntheticScene render(std::span<const int> identities);
  const SceneOptions& options() const { return options_; }

 private:
  std::mt19937_64 rng_;
  SceneOptions options_;
};

// Identity params with small per-sample jitter, as a camera would see them.
FaceParams jittered_face(int identity, std::mt19937_64& rng, double shape_jitter);

// One aligned crop of `identity`: a face rendered into a small noisy scene
// and cropped around a box perturbed by up to `box_jitter` of its side,
// mimicking detector imprecision.
std::vector<double> synthetic_crop(int identity, std::mt19937_64& rng, int crop_size, double box_jitter = 0.06);

// Display names for synthetic identities: "subject-00", "subject-01", ...
std::string subject_name(int identity);

}  // namespace sentinel
