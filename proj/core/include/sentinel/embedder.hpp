// SPDX-License-Identifier: Apache-2.0
#pragma once

// A small fully-connected embedder: standardized input -> tanh hidden layer ->
// 128 linear outputs -> L2 normalization. Trained with the batch triplet loss by plain
// gradient descent; the normalization step is differentiated exactly.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "json.hpp"
#include "sentinel/embedding.hpp"

namespace sentinel {

inline constexpr std::size_t kDefaultInputDim = 256;  // 16x16 grayscale crop
inline constexpr std::size_t kDefaultHiddenDim = 64;
inline constexpr double kDefaultLearningRate = 0.05;

class EmbedderNetwork {
 public:
  // Xavier-uniform weights from `seed`, zero biases.
  EmbedderNetwork(std::size_t input_dim = kDefaultInputDim, std::size_t hidden_dim = kDefaultHiddenDim,
                  double margin = kDefaultMargin, std::uint64_t seed = 0);

  std::size_t input_dim() const { return input_dim_; }
  std::size_t hidden_dim() const { return hidden_dim_; }
  std::size_t output_dim() const { return kEmbeddingDim; }
  double margin() const { return margin_; }
  void set_margin(double margin);
  std::uint64_t seed() const { return seed_; }

  // Flat parameter vector: hidden weights (row-major, hidden x input), hidden
  // bias, output weights (row-major, 128 x hidden), output bias.
  std::span<const double> parameters() const { return params_; }
  std::span<double> parameters() { return params_; }
  std::size_t parameter_count() const { return params_.size(); }

  // Fixed input standardization x' = (x - mean) * scale, applied before the
  // hidden layer. Identity until set; not part of parameters().
  std::span<const double> input_mean() const { return input_mean_; }
  double input_scale() const { return input_scale_; }
  void set_input_normalization(std::vector<double> mean, double scale);

  std::span<const double> hidden_weights() const;
  std::span<const double> hidden_bias() const;
  std::span<const double> output_weights() const;
  std::span<const double> output_bias() const;

  // Throws ContractViolation if `pixels` does not have input_dim() entries.
  Embedding embed(std::span<const double> pixels) const;

  struct Activations {
    std::vector<double> input;   // standardized pixels
    std::vector<double> hidden;  // tanh outputs
    std::vector<double> raw;     // pre-normalization outputs
    double raw_norm = 0.0;
    Embedding embedding;
  };
  Activations forward(std::span<const double> pixels) const;

  bool operator==(const EmbedderNetwork&) const = default;

 private:
  std::size_t hidden_offset_bias() const { return hidden_dim_ * input_dim_; }
  std::size_t output_offset_weights() const { return hidden_offset_bias() + hidden_dim_; }
  std::size_t output_offset_bias() const { return output_offset_weights() + kEmbeddingDim * hidden_dim_; }

  std::size_t input_dim_;
  std::size_t hidden_dim_;
  double margin_;
  std::uint64_t seed_;
  std::vector<double> input_mean_;
  double input_scale_ = 1.0;
  std::vector<double> params_;
};

struct LabeledSample {
  std::vector<double> pixels;
  int label = 0;
};

struct BatchLoss {
  double loss = 0.0;
  std::vector<double> gradient;  // same layout as EmbedderNetwork::parameters(); empty if not requested
};

// Mean triplet loss over `triplets` (indices into `inputs`) and, optionally,
// its exact gradient with respect to every network parameter.
BatchLoss batch_triplet_loss(const EmbedderNetwork& net, std::span<const std::vector<double>> inputs,
                             std::span<const Triplet> triplets, double margin, bool with_gradient = true);

struct TrainingOptions {
  std::size_t epochs = 100;
  double learning_rate = kDefaultLearningRate;
  double margin = kDefaultMargin;
  std::uint64_t seed = 0;
  // When nonzero, each epoch uses a seeded random subset of the mined triplets.
  std::size_t max_triplets_per_epoch = 0;
  // Set the input standardization from the dataset (per-pixel mean, inverse
  // global standard deviation) before the first epoch.
  bool fit_input_normalization = true;
};

struct TrainingResult {
  EmbedderNetwork network;
  std::vector<double> loss_trace;  // mean mined-triplet loss per epoch, before the update
};

// Throws ConfigError for an empty or single-class dataset and TrainingError
// when the loss or any parameter becomes non-finite. With zero epochs the
// network is returned unchanged.
TrainingResult train_embedder(EmbedderNetwork net, std::span<const LabeledSample> dataset,
                              const TrainingOptions& options);

nlohmann::json network_to_json(const EmbedderNetwork& net);
EmbedderNetwork network_from_json(const nlohmann::json& doc);
void save_network(const EmbedderNetwork& net, const std::filesystem::path& path);
EmbedderNetwork load_network(const std::filesystem::path& path);

}  // namespace sentinel
