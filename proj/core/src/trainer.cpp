// SPDX-License-Identifier: Apache-2.0
#include "sentinel/trainer.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>

#include "sentinel/errors.hpp"
#include "sentinel/image.hpp"

namespace sentinel {

namespace {

bool is_image(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  return ext == ".pgm" || ext == ".ppm" || ext == ".pnm";
}

std::vector<std::filesystem::path> image_files(const std::filesystem::path& root) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(root)) {
    if (entry.is_regular_file() && is_image(entry.path())) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

PnmImage crop_to_pnm(const std::vector<double>& crop, int size) {
  GrayImage g(size, size);
  g.data = crop;
  return to_pnm(g);
}

}  // namespace

std::optional<std::vector<double>> align_image(const GrayImage& image, const CascadeScorers& scorers,
                                               const CascadeConfig& detector, int crop_size) {
  const auto dets = detect_faces(image, scorers, detector);
  if (dets.empty()) return std::nullopt;
  const auto best = std::max_element(dets.begin(), dets.end(), [](const FaceDetection& a, const FaceDetection& b) {
    return a.box.score < b.box.score;
  });
  return crop_align(image, best->box, crop_size);
}

AlignReport align_corpus(const std::filesystem::path& raw_dir, const std::filesystem::path& out_dir,
                         const CascadeScorers& scorers, const CascadeConfig& detector, int crop_size) {
  if (!std::filesystem::is_directory(raw_dir)) throw ConfigError(raw_dir.string() + " is not a directory");
  AlignReport report;
  for (const auto& path : image_files(raw_dir)) {
    ++report.scanned;
    const auto rel = std::filesystem::relative(path, raw_dir);
    std::optional<std::vector<double>> crop;
    try {
      crop = align_image(from_pnm(read_pnm(path)), scorers, detector, crop_size);
    } catch (const Error& e) {
      spdlog::warn("skipping {}: {}", rel.string(), e.what());
    }
    if (!crop) {
      ++report.skipped;
      report.skipped_files.push_back(rel.generic_string());
      continue;
    }
    ++report.detected;
    auto out = out_dir / rel;
    out.replace_extension(".pgm");
    std::filesystem::create_directories(out.parent_path());
    write_pnm(out, crop_to_pnm(*crop, crop_size));
  }
  return report;
}

int Corpus::label_of(const std::string& subject) const {
  const auto it = std::lower_bound(subjects.begin(), subjects.end(), subject);
  if (it == subjects.end() || *it != subject) throw NotFoundError("unknown subject '" + subject + "'");
  return static_cast<int>(it - subjects.begin());
}

Corpus load_corpus(const std::filesystem::path& root, int crop_size) {
  if (!std::filesystem::is_directory(root)) throw ConfigError(root.string() + " is not a directory");
  Corpus corpus;
  corpus.crop_size = crop_size;
  for (const auto& entry : std::filesystem::directory_iterator(root)) {
    if (entry.is_directory()) corpus.subjects.push_back(entry.path().filename().string());
  }
  std::sort(corpus.subjects.begin(), corpus.subjects.end());
  std::vector<std::string> kept;
  for (const auto& subject : corpus.subjects) {
    const auto files = image_files(root / subject);
    if (files.empty()) continue;
    kept.push_back(subject);
    for (const auto& f : files) {
      const GrayImage g = from_pnm(read_pnm(f));
      if (g.width != crop_size || g.height != crop_size) {
        throw ConfigError(std::filesystem::relative(f, root).string() + " is " + std::to_string(g.width) + "x" +
                          std::to_string(g.height) + ", expected " + std::to_string(crop_size) + "x" +
                          std::to_string(crop_size));
      }
      corpus.images.push_back({subject, std::filesystem::relative(f, root).generic_string(), g.data});
    }
  }
  corpus.subjects = std::move(kept);
  if (corpus.subjects.size() < 2) throw ConfigError("corpus needs at least two subjects with images");
  return corpus;
}

CorpusSplit split_corpus(const Corpus& corpus, double holdout_fraction, std::uint64_t seed) {
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) throw ConfigError("holdout fraction must be in [0, 1)");
  std::map<std::string, std::vector<std::size_t>> by_subject;
  for (std::size_t i = 0; i < corpus.images.size(); ++i) by_subject[corpus.images[i].subject].push_back(i);
  std::mt19937_64 rng(seed);
  CorpusSplit split;
  for (auto& [subject, idx] : by_subject) {
    std::shuffle(idx.begin(), idx.end(), rng);
    auto n_hold = static_cast<std::size_t>(std::llround(static_cast<double>(idx.size()) * holdout_fraction));
    n_hold = std::min(n_hold, idx.size() - 1);
    split.holdout.insert(split.holdout.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_hold));
    split.train.insert(split.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_hold), idx.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.holdout.begin(), split.holdout.end());
  return split;
}

nlohmann::json EvaluationReport::summary() const {
  return {{"subjects", subjects},
          {"train_images", train_images},
          {"holdout_images", holdout_images},
          {"correct", correct},
          {"top1_accuracy", top1_accuracy},
          {"mean_confidence", mean_confidence},
          {"initial_loss", initial_loss},
          {"final_loss", final_loss}};
}

EvaluationReport evaluate(const EmbedderNetwork& net, const Corpus& corpus, const CorpusSplit& split,
                          Registry& registry) {
  std::map<std::string, std::vector<Embedding>> galleries;
  for (auto i : split.train) galleries[corpus.images[i].subject].push_back(net.embed(corpus.images[i].pixels));
  std::map<std::string, std::string> name_of;
  for (auto& [subject, gallery] : galleries) name_of[registry.enroll(subject, std::move(gallery)).id] = subject;

  EvaluationReport report;
  report.subjects = galleries.size();
  report.train_images = split.train.size();
  report.holdout_images = split.holdout.size();
  double conf_sum = 0.0;
  for (auto i : split.holdout) {
    const auto& img = corpus.images[i];
    const MatchResult m = registry.classify(net.embed(img.pixels));
    Prediction p;
    p.image = img.name;
    p.subject = img.subject;
    p.predicted = name_of.at(m.identity_id);
    p.distance = m.distance;
    p.confidence = m.confidence;
    p.correct = p.predicted == p.subject;
    report.correct += p.correct ? 1 : 0;
    conf_sum += p.confidence;
    report.predictions.push_back(std::move(p));
  }
  if (!split.holdout.empty()) {
    report.top1_accuracy = static_cast<double>(report.correct) / static_cast<double>(split.holdout.size());
    report.mean_confidence = conf_sum / static_cast<double>(split.holdout.size());
  }
  return report;
}

TrainOutcome train_and_evaluate(const Corpus& corpus, const EvaluationOptions& options) {
  if (corpus.subjects.size() < 2) throw ConfigError("corpus needs at least two subjects");
  const auto split = split_corpus(corpus, options.holdout_fraction, options.seed);
  std::vector<LabeledSample> train;
  train.reserve(split.train.size());
  for (auto i : split.train) train.push_back({corpus.images[i].pixels, corpus.label_of(corpus.images[i].subject)});

  const auto dim = static_cast<std::size_t>(corpus.crop_size * corpus.crop_size);
  EmbedderNetwork net(dim, options.hidden_dim, options.margin, options.seed);
  TrainingOptions topt;
  topt.epochs = options.epochs;
  topt.learning_rate = options.learning_rate;
  topt.margin = options.margin;
  topt.seed = options.seed;
  topt.max_triplets_per_epoch = options.max_triplets_per_epoch;
  auto trained = train_embedder(std::move(net), train, topt);

  Registry registry;
  auto report = evaluate(trained.network, corpus, split, registry);
  if (!trained.loss_trace.empty()) {
    report.initial_loss = trained.loss_trace.front();
    report.final_loss = trained.loss_trace.back();
  }
  return {std::move(trained.network), std::move(registry), std::move(report)};
}

void write_predictions(const std::filesystem::path& path, const std::vector<Prediction>& predictions) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& p : predictions) {
    out << nlohmann::json{{"image", p.image},
                          {"subject", p.subject},
                          {"predicted", p.predicted},
                          {"distance", p.distance},
                          {"confidence", p.confidence},
                          {"correct", p.correct}}
               .dump()
        << '\n';
  }
}

std::vector<Prediction> read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<Prediction> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back({j.at("image"), j.at("subject"), j.at("predicted"), j.at("distance"), j.at("confidence"),
                     j.at("correct")});
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(n, e.what());
    }
  }
  return out;
}

Registry enroll_operators(const EmbedderNetwork& net, const Corpus& corpus,
                          const std::vector<std::pair<std::string, std::string>>& passwords) {
  std::map<std::string, std::vector<Embedding>> galleries;
  for (const auto& img : corpus.images) galleries[img.subject].push_back(net.embed(img.pixels));
  Registry ops;
  for (auto& [name, gallery] : galleries) ops.enroll(name, std::move(gallery), IdentityStatus::whitelist);
  for (const auto& [name, secret] : passwords) {
    const auto* rec = ops.find_by_name(name);
    if (!rec) throw ConfigError("password given for unknown operator '" + name + "'");
    ops.set_credential(rec->id, secret);
  }
  return ops;
}

std::size_t write_synthetic_corpus(const std::filesystem::path& out, const SyntheticCorpusOptions& options) {
  SceneGenerator gen(options.seed, options.scene);
  std::size_t written = 0;
  for (int s = 0; s < options.subjects; ++s) {
    const int id = options.first_identity + s;
    const auto dir = out / subject_name(id);
    std::filesystem::create_directories(dir);
    for (int k = 0; k < options.images_per_subject; ++k) {
      const std::vector<int> ids{id};
      const auto scene = gen.render(ids);
      char name[32];
      std::snprintf(name, sizeof(name), "%03d.pgm", k);
      write_pnm(dir / name, to_pnm(scene.image));
      ++written;
    }
  }
  return written;
}

Corpus synthetic_corpus(const SyntheticCorpusOptions& options, const CascadeScorers& scorers,
                        const CascadeConfig& detector, int crop_size) {
  SceneGenerator gen(options.seed, options.scene);
  Corpus corpus;
  corpus.crop_size = crop_size;
  for (int s = 0; s < options.subjects; ++s) {
    const int id = options.first_identity + s;
    corpus.subjects.push_back(subject_name(id));
    for (int k = 0; k < options.images_per_subject;) {
      const std::vector<int> ids{id};
      const auto scene = gen.render(ids);
      auto crop = align_image(from_pnm(to_pnm(scene.image)), scorers, detector, crop_size);
      if (!crop) continue;
      char name[48];
      std::snprintf(name, sizeof(name), "%s/%03d.pgm", subject_name(id).c_str(), k);
      corpus.images.push_back({subject_name(id), name, std::move(*crop)});
      ++k;
    }
  }
  std::sort(corpus.subjects.begin(), corpus.subjects.end());
  return corpus;
}

}  // namespace sentinel
