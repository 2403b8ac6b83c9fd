// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "sentinel/detection.hpp"
#include "sentinel/errors.hpp"
#include "sentinel/image.hpp"
#include "test_support.hpp"

using namespace sentinel;
namespace st = sentinel::testing;

namespace {

BoundingBox box(double x, double y, double w, double h, double score = 1.0) { return {x, y, w, h, score}; }

std::vector<BoundingBox> random_boxes(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> pos(0.0, 40.0), size(2.0, 20.0);
  std::uniform_int_distribution<int> score(0, 9);  // coarse scores force ties
  std::vector<BoundingBox> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(box(pos(rng), pos(rng), size(rng), size(rng), score(rng) / 10.0));
  return out;
}

}  // namespace

TEST(Iou, AnalyticCases) {
  // 2x2 boxes offset by (1,1): intersection 1, union 7.
  EXPECT_NEAR(iou(box(0, 0, 2, 2), box(1, 1, 2, 2)), 1.0 / 7.0, 1e-12);
  EXPECT_NEAR(iou(box(3, 4, 5, 6), box(3, 4, 5, 6)), 1.0, 1e-12);
  EXPECT_NEAR(iou(box(0, 0, 1, 1), box(5, 5, 1, 1)), 0.0, 1e-12);
  EXPECT_NEAR(iou(box(0, 0, 1, 1), box(1, 0, 1, 1)), 0.0, 1e-12);  // shared edge
  EXPECT_NEAR(iou(box(0, 0, 4, 4), box(1, 1, 2, 2)), 0.25, 1e-12);
}

TEST(Iou, SymmetricBoundedAndMatchesReference) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    const auto b = random_boxes(rng, 2);
    const double v = iou(b[0], b[1]);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    EXPECT_DOUBLE_EQ(v, iou(b[1], b[0]));
    EXPECT_NEAR(v, st::reference_iou(b[0], b[1]), 1e-12);
  }
}

TEST(Nms, KeepsBestAndDropsOverlaps) {
  const std::vector<BoundingBox> b{box(0, 0, 10, 10, 0.9), box(1, 1, 10, 10, 0.8), box(30, 30, 5, 5, 0.7)};
  EXPECT_EQ(nms_indices(b, 0.5), (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(nms_indices(b, 0.9), (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_TRUE(nms_indices({}, 0.5).empty());
}

TEST(Nms, EqualScoresKeepInputOrder) {
  const std::vector<BoundingBox> b{box(0, 0, 10, 10, 0.5), box(0, 0, 10, 10, 0.5)};
  EXPECT_EQ(nms_indices(b, 0.5), (std::vector<std::size_t>{0}));
}

TEST(Nms, MatchesBruteForceAndKeptBoxesAreSeparated) {
  std::mt19937_64 rng(2);
  for (int inst = 0; inst < 100; ++inst) {
    const auto b = random_boxes(rng, 1 + rng() % 25);
    const double thr = std::uniform_real_distribution<double>(0.1, 0.9)(rng);
    const auto kept = nms_indices(b, thr);
    EXPECT_EQ(kept, st::brute_force_nms(b, thr));
    for (std::size_t i = 0; i < kept.size(); ++i) {
      for (std::size_t j = i + 1; j < kept.size(); ++j) EXPECT_LE(iou(b[kept[i]], b[kept[j]]), thr);
    }
  }
}

TEST(Pyramid, ScalesForQvgaFrame) {
  const auto s = image_pyramid(160, 120, 20.0, 0.709);
  // 120 * 0.6 * 0.709^k >= 12  <=>  k <= 5.2
  ASSERT_EQ(s.size(), 6u);
  EXPECT_DOUBLE_EQ(s[0], 0.6);
  for (std::size_t k = 1; k < s.size(); ++k) EXPECT_NEAR(s[k] / s[k - 1], 0.709, 1e-12);
  EXPECT_THROW(image_pyramid(160, 120, 11.0, 0.709), ContractViolation);
  EXPECT_THROW(image_pyramid(160, 120, 20.0, 1.0), ContractViolation);
  EXPECT_TRUE(image_pyramid(10, 10, 20.0, 0.709).empty());
}

TEST(CropAlign, SizeRangeAndSquareExpansion) {
  GrayImage img(40, 20);
  for (int y = 0; y < 20; ++y) {
    for (int x = 0; x < 40; ++x) img.at(x, y) = x < 20 ? 0.0 : 1.0;
  }
  // A 4x8 box centered at (20, 10) expands to an 8x8 square.
  const auto crop = crop_align(img, box(18, 6, 4, 8), 8);
  ASSERT_EQ(crop.size(), 64u);
  for (double v : crop) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_LT(crop[0], 0.5);   // left half dark
  EXPECT_GT(crop[7], 0.5);   // right half bright
  EXPECT_THROW(crop_align(img, box(100, 100, 5, 5), 8), AlignmentError);
}

TEST(CropAlign, FrameAndImageAgree) {
  GrayImage img(8, 8);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<double>(i % 7) / 6.0;
  const PnmImage pnm = to_pnm(img);
  Frame f;
  f.width = 8;
  f.height = 8;
  f.pixels = pnm.pixels;
  EXPECT_EQ(crop_align(f, box(1, 1, 6, 6), 4), crop_align(from_pnm(pnm), box(1, 1, 6, 6), 4));
}

TEST(BoundingBoxJson, RoundTrip) {
  const BoundingBox b = box(1.5, 2.5, 3, 4, 0.75);
  const nlohmann::json j = b;
  EXPECT_EQ(j.get<BoundingBox>(), b);
}

TEST(Landmarks, WithinGrownBox) {
  FaceDetection d;
  d.box = box(10, 10, 10, 10);
  d.landmarks = {Point{12, 12}, Point{18, 12}, Point{15, 15}, Point{12, 18}, Point{18, 18}};
  EXPECT_TRUE(d.landmarks_within_box());
  d.landmarks[0] = Point{7.9, 12};
  EXPECT_FALSE(d.landmarks_within_box());
}
