// SPDX-License-Identifier: Apache-2.0
#include "sentinel/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <memory>
#include <optional>

namespace sentinel {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double lerp(double lo, double hi, double t) { return lo + (hi - lo) * t; }

// Intensity of the face at normalized (u, v); negative when outside the face.
double face_value(const FaceParams& f, double u, double v) {
  const double eu = (u - 0.5) / 0.40;
  const double ev = (v - 0.52) / 0.47;
  if (eu * eu + ev * ev > 1.0) return -1.0;

  for (double side : {-1.0, 1.0}) {
    const double ex = 0.5 + side * f.eye_dx;
    const double du = (u - ex) / f.eye_rx;
    const double dv = (v - f.eye_y) / f.eye_ry;
    if (du * du + dv * dv <= 1.0) return f.eye_tone;
    if (std::abs(v - (f.eye_y - 0.085)) < 0.5 * f.brow && std::abs(u - ex) < 1.2 * f.eye_rx) return 0.25;
  }
  const double mu = (u - 0.5) / f.mouth_w;
  const double mv = (v - f.mouth_y) / f.mouth_h;
  if (mu * mu + mv * mv <= 1.0) return f.lip_tone;
  if (std::abs(u - 0.5) < 0.025 && v > f.eye_y + 0.06 && v < f.nose_end) return f.skin - 0.22;
  if (v < f.hair_line) return f.hair_tone;
  if (v > f.mouth_y + 0.07) return f.skin - f.jaw;
  return f.skin;
}

}  // namespace

FaceParams mean_face() { return FaceParams{}; }

// Tone levels of an identity: four large-area attributes (skin, hair tone,
// hair line, jaw shade) with four levels each, kept to the codewords whose
// levels sum to 0 mod 4. Any two codewords differ in at least two
// attributes. Identities map onto a fixed shuffle of the 64 codewords, so
// identities below kDistinctIdentities never share a tone code.
const std::array<std::array<int, 4>, kDistinctIdentities>& tone_codes() {
  static const auto codes = [] {
    std::array<std::array<int, 4>, kDistinctIdentities> out{};
    std::size_t n = 0;
    for (int i = 0; i < 256; ++i) {
      std::array<int, 4> c{i & 3, (i >> 2) & 3, (i >> 4) & 3, (i >> 6) & 3};
      if ((c[0] + c[1] + c[2] + c[3]) % 4 == 0) out[n++] = c;
    }
    std::mt19937_64 rng(0x70e5c0deULL);
    for (std::size_t i = kDistinctIdentities - 1; i > 0; --i) {
      std::swap(out[i], out[std::uniform_int_distribution<std::size_t>(0, i)(rng)]);
    }
    return out;
  }();
  return codes;
}

FaceParams identity_face(std::uint64_t identity) {
  std::mt19937_64 rng(splitmix64(identity ^ 0x5eed5eedULL));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto& code = tone_codes()[identity % kDistinctIdentities];
  const auto level = [&](std::size_t attr) { return code[attr] / 3.0; };
  FaceParams f;
  // Tones carry the identity (the correlation scorers ignore them); geometry
  // varies little so every identity still matches the mean-face templates.
  f.skin = lerp(0.62, 0.92, level(0));
  f.hair_tone = lerp(0.02, 0.40, level(1));
  f.hair_line = lerp(0.15, 0.27, level(2));
  f.jaw = lerp(0.0, 0.20, level(3));
  f.lip_tone = lerp(0.12, 0.40, unit(rng));
  f.eye_tone = lerp(0.02, 0.20, unit(rng));
  f.eye_dx = lerp(0.145, 0.185, unit(rng));
  f.eye_y = lerp(0.40, 0.44, unit(rng));
  f.eye_rx = lerp(0.05, 0.07, unit(rng));
  f.eye_ry = lerp(0.028, 0.036, unit(rng));
  f.brow = lerp(0.012, 0.035, unit(rng));
  f.nose_end = lerp(0.58, 0.64, unit(rng));
  f.mouth_w = lerp(0.11, 0.15, unit(rng));
  f.mouth_y = lerp(0.74, 0.78, unit(rng));
  f.mouth_h = lerp(0.025, 0.035, unit(rng));
  return f;
}

Landmarks face_landmarks(const FaceParams& f) {
  return {Point{0.5 - f.eye_dx, f.eye_y}, Point{0.5 + f.eye_dx, f.eye_y}, Point{0.5, f.nose_end},
          Point{0.5 - f.mouth_w, f.mouth_y}, Point{0.5 + f.mouth_w, f.mouth_y}};
}

void paint_face(GrayImage& canvas, const FaceParams& face, const BoundingBox& box, double lighting,
                int supersample) {
  const int x0 = std::max(0, static_cast<int>(std::floor(box.x)));
  const int y0 = std::max(0, static_cast<int>(std::floor(box.y)));
  const int x1 = std::min(canvas.width, static_cast<int>(std::ceil(box.x + box.w)));
  const int y1 = std::min(canvas.height, static_cast<int>(std::ceil(box.y + box.h)));
  const int n = std::max(1, supersample);
  for (int py = y0; py < y1; ++py) {
    for (int px = x0; px < x1; ++px) {
      double sum = 0.0;
      int inside = 0;
      for (int sy = 0; sy < n; ++sy) {
        for (int sx = 0; sx < n; ++sx) {
          const double u = (px + (sx + 0.5) / n - box.x) / box.w;
          const double v = (py + (sy + 0.5) / n - box.y) / box.h;
          if (u < 0.0 || u >= 1.0 || v < 0.0 || v >= 1.0) continue;
          const double val = face_value(face, u, v);
          if (val < 0.0) continue;
          sum += std::clamp(val + lighting, 0.0, 1.0);
          ++inside;
        }
      }
      if (inside == 0) continue;
      const double coverage = static_cast<double>(inside) / (n * n);
      double& pixel = canvas.at(px, py);
      pixel = pixel * (1.0 - coverage) + (sum / inside) * coverage;
    }
  }
}

GrayImage face_template(int size, std::array<double, 4> focus) {
  GrayImage img(size, size, kTemplateBackground);
  const double bw = size / (focus[2] - focus[0]);
  const double bh = size / (focus[3] - focus[1]);
  paint_face(img, mean_face(), {-focus[0] * bw, -focus[1] * bh, bw, bh, 1.0}, 0.0, 8);
  return img;
}

CascadeScorers template_cascade() {
  CascadeScorers s;
  s.proposal = std::make_shared<TemplateScorer>(face_template(12));
  s.refine = std::make_shared<TemplateScorer>(
      face_template(24), TemplateSearch{0.2, {0.8, 0.9, 1.0, 1.1, 1.2}, 0.15, 2});
  // The output stage looks only at the eye-to-mouth region, where a face
  // differs from any other skin-toned blob.
  const std::array<double, 4> inner{0.2, 0.3, 0.8, 0.85};
  s.output = std::make_shared<TemplateScorer>(face_template(16, inner),
                                              TemplateSearch{0.1, {0.92, 0.96, 1.0, 1.04, 1.08}, 0.06, 2, inner},
                                              face_landmarks(mean_face()));
  return s;
}

Frame SyntheticScene::to_frame(const std::string& node_id, std::uint64_t sequence,
                               std::int64_t timestamp_ms) const {
  Frame f;
  f.node_id = node_id;
  f.sequence = sequence;
  f.timestamp_ms = timestamp_ms;
  f.width = static_cast<std::uint32_t>(image.width);
  f.height = static_cast<std::uint32_t>(image.height);
  f.channels = 1;
  f.pixels = to_pnm(image).pixels;
  return f;
}

SceneGenerator::SceneGenerator(std::uint64_t seed, SceneOptions options) : rng_(seed), options_(options) {}

FaceParams jittered_face(int identity, std::mt19937_64& rng, double shape_jitter) {
  FaceParams f = identity_face(static_cast<std::uint64_t>(identity));
  std::uniform_real_distribution<double> j(-shape_jitter, shape_jitter);
  f.eye_dx += j(rng);
  f.eye_y += j(rng);
  f.nose_end += j(rng);
  f.mouth_w += j(rng);
  f.mouth_y += j(rng);
  f.hair_line += j(rng);
  return f;
}

SyntheticScene SceneGenerator::render(std::span<const int> identities) {
  const auto& o = options_;
  SyntheticScene scene;
  scene.image = GrayImage(o.width, o.height);
  std::uniform_real_distribution<double> noise(o.noise_low, o.noise_high);
  for (double& v : scene.image.data) v = noise(rng_);

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<BoundingBox> occupied;
  auto place = [&](double size) -> std::optional<BoundingBox> {
    for (int attempt = 0; attempt < 200; ++attempt) {
      const BoundingBox b{unit(rng_) * (o.width - size), unit(rng_) * (o.height - size), size, size, 1.0};
      // Keep a gap so planted objects never touch.
      const BoundingBox grown{b.x - 4.0, b.y - 4.0, b.w + 8.0, b.h + 8.0, 1.0};
      if (std::none_of(occupied.begin(), occupied.end(),
                       [&](const BoundingBox& other) { return intersection_area(grown, other) > 0.0; })) {
        occupied.push_back(b);
        return b;
      }
    }
    return std::nullopt;
  };

  std::uniform_real_distribution<double> light(-o.lighting_jitter, o.lighting_jitter);
  for (int identity : identities) {
    const double size = o.min_face + unit(rng_) * (o.max_face - o.min_face);
    const auto box = place(size);
    if (!box) continue;
    paint_face(scene.image, jittered_face(identity, rng_, o.shape_jitter), *box, light(rng_));
    scene.faces.push_back({identity, *box});
  }
  if (unit(rng_) < o.distractor_probability) {
    const double size = o.min_face + unit(rng_) * (o.max_face - o.min_face);
    if (const auto box = place(size)) {
      // A face-shaped blob with no features: skin tone ellipse only.
      FaceParams blob = identity_face(static_cast<std::uint64_t>(rng_()));
      blob.eye_rx = blob.eye_ry = 1e-6;
      blob.brow = 0.0;
      blob.mouth_w = blob.mouth_h = 1e-6;
      blob.nose_end = 0.0;
      blob.hair_line = 0.0;
      paint_face(scene.image, blob, *box);
    }
  }
  return scene;
}

std::vector<double> synthetic_crop(int identity, std::mt19937_64& rng, int crop_size, double box_jitter) {
  SceneOptions o;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double size = o.min_face + unit(rng) * (o.max_face - o.min_face);
  const int side = static_cast<int>(std::ceil(size * 1.6));
  GrayImage canvas(side, side);
  std::uniform_real_distribution<double> noise(o.noise_low, o.noise_high);
  for (double& v : canvas.data) v = noise(rng);
  const double origin = 0.5 * (side - size);
  const BoundingBox box{origin, origin, size, size, 1.0};
  std::uniform_real_distribution<double> light(-o.lighting_jitter, o.lighting_jitter);
  paint_face(canvas, jittered_face(identity, rng, o.shape_jitter), box, light(rng));

  std::uniform_real_distribution<double> j(-box_jitter, box_jitter);
  const double grow = 1.0 + j(rng);
  BoundingBox seen{box.x + j(rng) * size, box.y + j(rng) * size, size * grow, size * grow, 1.0};
  // Quantize like a real 8-bit camera frame.
  const GrayImage quantized = from_pnm(to_pnm(canvas));
  return crop_align(quantized, seen, crop_size);
}

std::string subject_name(int identity) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "subject-%02d", identity);
  return buf;
}

}  // namespace sentinel
