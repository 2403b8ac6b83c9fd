// SPDX-License-Identifier: Apache-2.0
#pragma once

// Offline tooling behind the trainer CLI: corpus alignment, embedder
// training with a holdout evaluation, operator enrollment and a synthetic
// corpus builder.
//
// Corpus layout: <root>/<subject>/<image>.pgm, one subdirectory per subject.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sentinel/cascade.hpp"
#include "sentinel/embedder.hpp"
#include "sentinel/registry.hpp"
#include "sentinel/synthetic.hpp"

namespace sentinel {

struct AlignReport {
  std::size_t scanned = 0;
  std::size_t detected = 0;
  std::size_t skipped = 0;
  std::vector<std::string> skipped_files;
};

// Aligned crop of the highest-scoring face in `image`, if any.
std::optional<std::vector<double>> align_image(const GrayImage& image, const CascadeScorers& scorers,
                                               const CascadeConfig& detector, int crop_size);

// Detects and crops every image under `raw_dir` (recursively), writing
// crops to the same relative path under `out_dir` as 8-bit graymaps.
// Unreadable images and images without a face count as skipped.
AlignReport align_corpus(const std::filesystem::path& raw_dir, const std::filesystem::path& out_dir,
                         const CascadeScorers& scorers, const CascadeConfig& detector, int crop_size);

struct CorpusImage {
  std::string subject;
  std::string name;  // path relative to the corpus root
  std::vector<double> pixels;
};

struct Corpus {
  std::vector<std::string> subjects;  // sorted
  std::vector<CorpusImage> images;    // sorted by subject, then name
  int crop_size = 0;

  int label_of(const std::string& subject) const;
};

// Throws ConfigError for fewer than two subjects or a crop of the wrong size.
Corpus load_corpus(const std::filesystem::path& root, int crop_size);

struct CorpusSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> holdout;
};

// Per-subject seeded shuffle; round(n * holdout_fraction) images of each
// subject are held out, keeping at least one for training.
CorpusSplit split_corpus(const Corpus& corpus, double holdout_fraction, std::uint64_t seed);

struct EvaluationOptions {
  std::size_t epochs = 300;
  double learning_rate = 0.5;
  double margin = 1.0;
  std::uint64_t seed = 0;
  std::size_t hidden_dim = kDefaultHiddenDim;
  double holdout_fraction = 0.2;
  std::size_t max_triplets_per_epoch = 0;
};

struct Prediction {
  std::string image;
  std::string subject;
  std::string predicted;  // display name of the nearest centroid
  double distance = 0.0;
  double confidence = 0.0;
  bool correct = false;
};

struct EvaluationReport {
  std::size_t subjects = 0;
  std::size_t train_images = 0;
  std::size_t holdout_images = 0;
  std::size_t correct = 0;
  double top1_accuracy = 0.0;  // holdout top-1 per image
  double mean_confidence = 0.0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<Prediction> predictions;

  nlohmann::json summary() const;
};

struct TrainOutcome {
  EmbedderNetwork network;
  Registry registry;  // one record per subject, gallery = train-split embeddings
  EvaluationReport report;
};

// Throws ConfigError for a single-subject corpus.
TrainOutcome train_and_evaluate(const Corpus& corpus, const EvaluationOptions& options);

// Registry of train-split embeddings (one record per subject, named after it)
// and holdout evaluation against its centroids.
EvaluationReport evaluate(const EmbedderNetwork& net, const Corpus& corpus, const CorpusSplit& split,
                          Registry& registry);

// One JSON object per line: image, subject, predicted, distance, confidence, correct.
void write_predictions(const std::filesystem::path& path, const std::vector<Prediction>& predictions);
std::vector<Prediction> read_predictions(const std::filesystem::path& path);

// Builds an operator registry: every subject of `corpus` becomes an operator
// whose gallery is the embeddings of all its crops. `passwords` maps display
// names to secrets; operators without one can only log in by face.
Registry enroll_operators(const EmbedderNetwork& net, const Corpus& corpus,
                          const std::vector<std::pair<std::string, std::string>>& passwords);

struct SyntheticCorpusOptions {
  int subjects = 10;
  int images_per_subject = 20;
  int first_identity = 0;
  std::uint64_t seed = 0;
  SceneOptions scene{};
};

// Writes single-face scenes to <out>/<subject-NN>/<k>.pgm, ready for
// align_corpus. Returns the number of images written.
std::size_t write_synthetic_corpus(const std::filesystem::path& out, const SyntheticCorpusOptions& options);

// The same corpus, aligned in memory. Scenes whose face is not detected are
// re-rendered, so every subject gets exactly images_per_subject crops.
Corpus synthetic_corpus(const SyntheticCorpusOptions& options, const CascadeScorers& scorers,
                        const CascadeConfig& detector, int crop_size);

}  // namespace sentinel
