// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <fstream>

#include "sentinel/errors.hpp"
#include "sentinel/node.hpp"
#include "test_support.hpp"

using namespace sentinel;
namespace st = sentinel::testing;

namespace {

void write_gray(const std::filesystem::path& p, std::uint8_t value) {
  PnmImage img;
  img.width = 3;
  img.height = 2;
  img.pixels.assign(6, value);
  write_pnm(p, img);
}

std::vector<std::string> drain_names(FrameSource& s, std::size_t limit = 100) {
  std::vector<std::string> out;
  while (out.size() < limit) {
    auto img = s.next();
    if (!img) break;
    out.push_back(img->name);
  }
  return out;
}

}  // namespace

TEST(DirectorySource, LexicographicOrderAndSkipsUnreadable) {
  st::TempDir dir;
  write_gray(dir / "b.pgm", 2);
  write_gray(dir / "a.pgm", 1);
  write_gray(dir / "c10.pgm", 3);
  {
    std::ofstream out(dir / "c2.pgm");
    out << "not an image";
  }
  auto src = directory_source(dir.path(), false);
  EXPECT_EQ(drain_names(*src), (std::vector<std::string>{"a.pgm", "b.pgm", "c10.pgm"}));
}

TEST(DirectorySource, LoopsWhenAsked) {
  st::TempDir dir;
  write_gray(dir / "x.pgm", 1);
  write_gray(dir / "y.pgm", 2);
  auto src = directory_source(dir.path(), true);
  EXPECT_EQ(drain_names(*src, 5), (std::vector<std::string>{"x.pgm", "y.pgm", "x.pgm", "y.pgm", "x.pgm"}));
}

TEST(DirectorySource, MissingOrEmptyIsAConfigError) {
  st::TempDir dir;
  EXPECT_THROW(directory_source(dir / "nope", false), ConfigError);
  EXPECT_THROW(directory_source(dir.path(), false), ConfigError);
}

TEST(SyntheticSource, DeterministicWithTruth) {
  SyntheticSourceOptions o;
  o.seed = 4;
  o.schedule = {3, -1, 7};
  auto a = synthetic_source(o, false);
  auto b = synthetic_source(o, false);
  for (int i = 0; i < 3; ++i) {
    const auto x = a->next();
    const auto y = b->next();
    ASSERT_TRUE(x && y);
    EXPECT_EQ(x->image.pixels, y->image.pixels);
    EXPECT_EQ(x->truth.size(), i == 1 ? 0u : 1u);
    if (i == 0) EXPECT_EQ(x->truth[0].label, 3);
  }
  EXPECT_FALSE(a->next());
}

TEST(SyntheticSource, DefaultScheduleCyclesTenIdentities) {
  SyntheticSourceOptions o;
  o.frames = 12;
  auto s = synthetic_source(o, false);
  std::vector<int> labels;
  while (auto img = s->next()) labels.push_back(img->truth.at(0).label);
  EXPECT_EQ(labels, (std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 0, 1}));
}

TEST(OpenSource, ParsesSyntheticSpecs) {
  auto s = open_source("synthetic:9:5,-1", false);
  EXPECT_EQ(s->next()->truth.at(0).label, 5);
  EXPECT_TRUE(s->next()->truth.empty());
  EXPECT_FALSE(s->next());
  EXPECT_THROW(open_source("synthetic:x", false), ConfigError);
  EXPECT_THROW(open_source("synthetic:1:", false), ConfigError);
  EXPECT_THROW(open_source("synthetic:1:a,b", false), ConfigError);
}

TEST(FrameStamper, SequencesFromOneWithClockTime) {
  ManualClock clock(500);
  FrameStamper s("door", clock);
  SourceImage img;
  img.image.width = 1;
  img.image.height = 1;
  img.image.pixels = {9};
  const auto f1 = s.stamp(img);
  clock.advance(std::chrono::milliseconds(200));
  const auto f2 = s.stamp(img);
  EXPECT_EQ(f1.sequence, 1u);
  EXPECT_EQ(f2.sequence, 2u);
  EXPECT_EQ(f1.timestamp_ms, 500);
  EXPECT_EQ(f2.timestamp_ms, 700);
  EXPECT_EQ(f2.node_id, "door");
  EXPECT_EQ(s.last_sequence(), 2u);
}

TEST(NodeConfig, Validation) {
  NodeConfig c;
  EXPECT_THROW(c.validate(), ConfigError);
  c.node_id = "n";
  EXPECT_NO_THROW(c.validate());
  c.frame_rate = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c.frame_rate = 30.0;
  EXPECT_NO_THROW(c.validate());
  c.frame_rate = 30.5;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Backoff, DoublesUpToTheCap) {
  NodeConfig c;
  c.node_id = "n";
  const std::vector<std::int64_t> expected{1000, 2000, 4000, 8000, 16000, 30000, 30000};
  for (int a = 1; a <= 7; ++a) EXPECT_EQ(backoff_delay_ms(c, a), expected[static_cast<std::size_t>(a - 1)]);
  EXPECT_EQ(backoff_delay_ms(c, 200), 30000);
}
