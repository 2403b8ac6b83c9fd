// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <random>
#include <set>

#include "sentinel/errors.hpp"
#include "sentinel/trainer.hpp"
#include "test_support.hpp"

using namespace sentinel;
namespace st = sentinel::testing;

namespace {

void write_crop(const std::filesystem::path& p, const std::vector<double>& px, int side) {
  GrayImage g(side, side);
  g.data = px;
  std::filesystem::create_directories(p.parent_path());
  write_pnm(p, to_pnm(g));
}

// `subjects` x `per` crops on disk; every crop of a subject is identical.
void write_constant_corpus(const std::filesystem::path& root, int subjects, int per, int side) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int s = 0; s < subjects; ++s) {
    std::vector<double> px(static_cast<std::size_t>(side * side));
    for (double& v : px) v = u(rng);
    for (int k = 0; k < per; ++k) write_crop(root / subject_name(s) / (std::to_string(k) + ".pgm"), px, side);
  }
}

}  // namespace

TEST(Corpus, LoadsSortedAndValidates) {
  st::TempDir dir;
  write_constant_corpus(dir.path(), 3, 4, 8);
  const auto c = load_corpus(dir.path(), 8);
  EXPECT_EQ(c.subjects, (std::vector<std::string>{"subject-00", "subject-01", "subject-02"}));
  ASSERT_EQ(c.images.size(), 12u);
  EXPECT_EQ(c.images[0].name, "subject-00/0.pgm");
  EXPECT_EQ(c.label_of("subject-02"), 2);
  EXPECT_THROW(load_corpus(dir.path(), 16), ConfigError);

  st::TempDir single;
  write_constant_corpus(single.path(), 1, 4, 8);
  EXPECT_THROW(load_corpus(single.path(), 8), ConfigError);
}

TEST(Corpus, SplitIsDeterministicDisjointAndStratified) {
  st::TempDir dir;
  write_constant_corpus(dir.path(), 4, 10, 4);
  const auto c = load_corpus(dir.path(), 4);
  const auto a = split_corpus(c, 0.2, 5);
  const auto b = split_corpus(c, 0.2, 5);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.holdout, b.holdout);
  EXPECT_NE(split_corpus(c, 0.2, 6).holdout, a.holdout);
  std::set<std::size_t> all(a.train.begin(), a.train.end());
  for (auto h : a.holdout) EXPECT_TRUE(all.insert(h).second);
  EXPECT_EQ(all.size(), c.images.size());
  std::map<std::string, int> held;
  for (auto h : a.holdout) ++held[c.images[h].subject];
  for (const auto& s : c.subjects) EXPECT_EQ(held[s], 2);
  // Never holds out a subject's last image.
  EXPECT_EQ(split_corpus(c, 0.99, 5).train.size(), 4u);
}

TEST(TrainAndEvaluate, IdenticalCropsAreAlwaysRecognized) {
  st::TempDir dir;
  write_constant_corpus(dir.path(), 5, 6, 8);
  const auto c = load_corpus(dir.path(), 8);
  EvaluationOptions o;
  o.epochs = 20;
  o.hidden_dim = 16;
  o.seed = 2;
  const auto out = train_and_evaluate(c, o);
  EXPECT_EQ(out.report.subjects, 5u);
  EXPECT_EQ(out.report.holdout_images, 5u);
  EXPECT_EQ(out.report.train_images, 25u);
  EXPECT_DOUBLE_EQ(out.report.top1_accuracy, 1.0);
  EXPECT_EQ(out.registry.size(), 5u);
  for (const auto& p : out.report.predictions) EXPECT_NEAR(p.distance, 0.0, 1e-9);
}

TEST(TrainAndEvaluate, ReportMatchesItsPredictions) {
  const auto c = synthetic_corpus({.subjects = 4, .images_per_subject = 6, .seed = 3}, template_cascade(), {}, 16);
  EvaluationOptions o;
  o.epochs = 30;
  o.seed = 1;
  o.holdout_fraction = 0.34;
  const auto a = train_and_evaluate(c, o);
  const auto b = train_and_evaluate(c, o);
  EXPECT_EQ(a.network, b.network);
  const auto& r = a.report;
  const auto correct = static_cast<std::size_t>(
      std::count_if(r.predictions.begin(), r.predictions.end(), [](const Prediction& p) { return p.correct; }));
  EXPECT_EQ(r.correct, correct);
  EXPECT_EQ(r.holdout_images, r.predictions.size());
  EXPECT_DOUBLE_EQ(r.top1_accuracy, static_cast<double>(correct) / static_cast<double>(r.holdout_images));
  for (const auto& p : r.predictions) {
    EXPECT_EQ(p.correct, p.predicted == p.subject);
    EXPECT_NEAR(p.confidence, 1.0 - p.distance / 2.0, 1e-12);
  }
  EXPECT_LT(r.final_loss, r.initial_loss);
  EXPECT_EQ(r.summary().at("holdout_images"), r.holdout_images);

  st::TempDir dir;
  write_predictions(dir / "pred.jsonl", r.predictions);
  const auto back = read_predictions(dir / "pred.jsonl");
  ASSERT_EQ(back.size(), r.predictions.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].image, r.predictions[i].image);
    EXPECT_EQ(back[i].correct, r.predictions[i].correct);
  }
}

TEST(Align, SyntheticRawCorpus) {
  st::TempDir dir;
  const auto written = write_synthetic_corpus(dir / "raw", {.subjects = 2, .images_per_subject = 5, .seed = 8});
  EXPECT_EQ(written, 10u);
  {
    std::ofstream junk(dir / "raw/subject-00/zz.pgm");
    junk << "junk";
  }
  const auto report = align_corpus(dir / "raw", dir / "aligned", template_cascade(), {}, 16);
  EXPECT_EQ(report.scanned, 11u);
  EXPECT_EQ(report.detected + report.skipped, report.scanned);
  EXPECT_GE(report.detected, 9u);
  EXPECT_NE(std::find(report.skipped_files.begin(), report.skipped_files.end(), "subject-00/zz.pgm"),
            report.skipped_files.end());
  const auto c = load_corpus(dir / "aligned", 16);
  EXPECT_EQ(c.images.size(), report.detected);
}

TEST(Align, BlankImageHasNoFace) {
  EXPECT_FALSE(align_image(GrayImage(80, 60, 0.3), template_cascade(), {}, 16));
}

TEST(Operators, EnrolledAsWhitelistWithCredentials) {
  st::TempDir dir;
  write_constant_corpus(dir.path(), 2, 3, 8);
  const auto c = load_corpus(dir.path(), 8);
  const EmbedderNetwork net(64, 8, 0.2, 1);
  const auto reg = enroll_operators(net, c, {{"subject-00", "pw"}});
  ASSERT_EQ(reg.size(), 2u);
  for (const auto& [id, rec] : reg.records()) {
    EXPECT_EQ(rec.status, IdentityStatus::whitelist);
    EXPECT_EQ(rec.gallery.size(), 3u);
  }
  EXPECT_NE(reg.verify_credential("subject-00", "pw"), nullptr);
  EXPECT_EQ(reg.verify_credential("subject-01", "pw"), nullptr);
  EXPECT_THROW(enroll_operators(net, c, {{"nobody", "pw"}}), ConfigError);
}
