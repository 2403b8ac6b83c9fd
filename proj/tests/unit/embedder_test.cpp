// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "sentinel/embedder.hpp"
#include "sentinel/errors.hpp"
#include "test_support.hpp"

using namespace sentinel;
namespace st = sentinel::testing;

TEST(Embedder, ParameterLayout) {
  EmbedderNetwork net(256, 64);
  EXPECT_EQ(net.parameter_count(), 256u * 64 + 64 + 128u * 64 + 128);
  EXPECT_EQ(net.hidden_weights().size(), 256u * 64);
  EXPECT_EQ(net.hidden_bias().size(), 64u);
  EXPECT_EQ(net.output_weights().size(), 128u * 64);
  EXPECT_EQ(net.output_bias().size(), 128u);
  for (double b : net.hidden_bias()) EXPECT_EQ(b, 0.0);
}

TEST(Embedder, XavierBoundsAndSeedDeterminism) {
  EmbedderNetwork a(256, 64, 0.2, 7), b(256, 64, 0.2, 7), c(256, 64, 0.2, 8);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  const double limit = std::sqrt(6.0 / (256 + 64));
  for (double w : a.hidden_weights()) EXPECT_LE(std::abs(w), limit);
}

TEST(Embedder, OutputsAreUnitVectors) {
  EmbedderNetwork net(16, 8, 0.2, 1);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    std::vector<double> x(16);
    for (double& v : x) v = u(rng);
    const auto e = net.embed(x);
    double n = 0.0;
    for (double v : e.values()) n += v * v;
    EXPECT_NEAR(n, 1.0, 1e-12);
  }
  EXPECT_THROW(net.embed(std::vector<double>(15, 0.0)), ContractViolation);
}

TEST(Embedder, InputNormalizationIsApplied) {
  EmbedderNetwork net(4, 3, 0.2, 2);
  const std::vector<double> x{0.1, 0.2, 0.3, 0.4};
  const auto plain = net.forward(x);
  EXPECT_EQ(plain.input, x);
  net.set_input_normalization({0.1, 0.1, 0.1, 0.1}, 2.0);
  const auto act = net.forward(x);
  EXPECT_NEAR(act.input[0], 0.0, 1e-15);
  EXPECT_NEAR(act.input[3], 0.6, 1e-15);
  EXPECT_THROW(net.set_input_normalization({0.0}, 1.0), Error);
  EXPECT_THROW(net.set_input_normalization({0, 0, 0, 0}, 0.0), ConfigError);
}

TEST(Embedder, AnalyticGradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    auto g = st::make_gradient_instance(seed, 12, 6, 9);
    ASSERT_FALSE(g.triplets.empty());
    g.net.set_input_normalization(std::vector<double>(12, 0.5), 3.0);
    const auto r = st::check_gradient(g.net, g.inputs, g.triplets, g.margin, {});
    EXPECT_EQ(r.checked, g.net.parameter_count());
    EXPECT_LT(r.max_relative_error, 1e-4) << "seed " << seed;
  }
}

TEST(Embedder, LossWithoutGradientMatches) {
  auto g = st::make_gradient_instance(4, 10, 5, 9);
  const auto with = batch_triplet_loss(g.net, g.inputs, g.triplets, g.margin, true);
  const auto without = batch_triplet_loss(g.net, g.inputs, g.triplets, g.margin, false);
  EXPECT_DOUBLE_EQ(with.loss, without.loss);
  EXPECT_TRUE(without.gradient.empty());
  EXPECT_EQ(with.gradient.size(), g.net.parameter_count());
}

TEST(Training, RejectsDegenerateDatasets) {
  EmbedderNetwork net(4, 3);
  TrainingOptions opt;
  EXPECT_THROW(train_embedder(net, {}, opt), ConfigError);
  std::vector<LabeledSample> one{{{0, 0, 0, 1}, 0}, {{0, 0, 1, 0}, 0}};
  EXPECT_THROW(train_embedder(net, one, opt), ConfigError);
}

TEST(Training, ZeroEpochsReturnsNetworkUnchanged) {
  EmbedderNetwork net(4, 3, 0.2, 5);
  std::vector<LabeledSample> data{{{0, 0, 0, 1}, 0}, {{0, 0, 1, 0}, 1}};
  TrainingOptions opt;
  opt.epochs = 0;
  const auto r = train_embedder(net, data, opt);
  EXPECT_EQ(r.network, net);
  EXPECT_TRUE(r.loss_trace.empty());
}

TEST(Training, SeparatesThreeClustersAndIsDeterministic) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> noise(0.0, 0.1);
  std::vector<LabeledSample> data;
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < 8; ++i) {
      std::vector<double> x(16);
      for (std::size_t k = 0; k < x.size(); ++k) x[k] = (k % 3 == static_cast<std::size_t>(c) ? 0.55 : 0.45) + noise(rng);
      data.push_back({x, c});
    }
  }
  TrainingOptions opt;
  opt.epochs = 60;
  opt.learning_rate = 0.5;
  opt.margin = 1.0;
  opt.seed = 1;
  const auto a = train_embedder(EmbedderNetwork(16, 8, 1.0, 1), data, opt);
  const auto b = train_embedder(EmbedderNetwork(16, 8, 1.0, 1), data, opt);
  EXPECT_EQ(a.network, b.network);
  EXPECT_EQ(a.loss_trace, b.loss_trace);
  EXPECT_GT(a.loss_trace.front(), 0.0);
  EXPECT_LT(a.loss_trace.back(), a.loss_trace.front());

  // Every sample is closer to its own class mean than to any other.
  std::vector<std::array<double, kEmbeddingDim>> sums(3);
  for (const auto& s : data) {
    const auto e = a.network.embed(s.pixels);
    for (std::size_t k = 0; k < kEmbeddingDim; ++k) sums[static_cast<std::size_t>(s.label)][k] += e[k];
  }
  std::vector<Embedding> centers;
  for (const auto& s : sums) centers.push_back(Embedding::normalized(s));
  for (const auto& s : data) {
    const auto e = a.network.embed(s.pixels);
    int best = 0;
    for (int c = 1; c < 3; ++c) {
      if (distance(e, centers[static_cast<std::size_t>(c)]) < distance(e, centers[static_cast<std::size_t>(best)])) best = c;
    }
    EXPECT_EQ(best, s.label);
  }
}

TEST(Training, CappedTripletsPerEpoch) {
  std::vector<LabeledSample> data;
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 12; ++i) {
    std::vector<double> x(8);
    for (double& v : x) v = u(rng);
    data.push_back({x, i % 2});
  }
  TrainingOptions opt;
  opt.epochs = 3;
  opt.max_triplets_per_epoch = 4;
  EXPECT_NO_THROW(train_embedder(EmbedderNetwork(8, 4), data, opt));
}

TEST(NetworkFile, JsonRoundTrip) {
  st::TempDir dir;
  EmbedderNetwork net(16, 8, 0.3, 9);
  net.set_input_normalization(std::vector<double>(16, 0.25), 4.0);
  save_network(net, dir / "net.json");
  const auto back = load_network(dir / "net.json");
  EXPECT_EQ(back, net);
  EXPECT_EQ(back.input_scale(), 4.0);
}

TEST(NetworkFile, RejectsForeignDocuments) {
  EXPECT_THROW(network_from_json(nlohmann::json{{"format", "other"}}), ConfigError);
  auto doc = network_to_json(EmbedderNetwork(4, 2));
  doc["version"] = 2;
  EXPECT_THROW(network_from_json(doc), ConfigError);
  doc = network_to_json(EmbedderNetwork(4, 2));
  doc.erase("input");
  EXPECT_NO_THROW(network_from_json(doc));
}
