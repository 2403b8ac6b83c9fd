// SPDX-License-Identifier: Apache-2.0
#include "sentinel/embedder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "sentinel/errors.hpp"

namespace sentinel {

EmbedderNetwork::EmbedderNetwork(std::size_t input_dim, std::size_t hidden_dim, double margin,
                                 std::uint64_t seed)
    : input_dim_(input_dim), hidden_dim_(hidden_dim), margin_(margin), seed_(seed) {
  if (input_dim == 0 || hidden_dim == 0) throw ConfigError("network dimensions must be positive");
  if (!(margin > 0.0)) throw ConfigError("triplet margin must be positive");
  params_.assign(output_offset_bias() + kEmbeddingDim, 0.0);
  input_mean_.assign(input_dim, 0.0);

  std::mt19937_64 rng(seed);
  const double limit1 = std::sqrt(6.0 / static_cast<double>(input_dim + hidden_dim));
  std::uniform_real_distribution<double> init1(-limit1, limit1);
  for (std::size_t i = 0; i < hidden_offset_bias(); ++i) params_[i] = init1(rng);

  const double limit2 = std::sqrt(6.0 / static_cast<double>(hidden_dim + kEmbeddingDim));
  std::uniform_real_distribution<double> init2(-limit2, limit2);
  for (std::size_t i = output_offset_weights(); i < output_offset_bias(); ++i) params_[i] = init2(rng);
}

void EmbedderNetwork::set_margin(double margin) {
  if (!(margin > 0.0)) throw ConfigError("triplet margin must be positive");
  margin_ = margin;
}

void EmbedderNetwork::set_input_normalization(std::vector<double> mean, double scale) {
  if (mean.size() != input_dim_) throw ContractViolation("input mean has the wrong length");
  if (!(scale > 0.0) || !std::isfinite(scale)) throw ConfigError("input scale must be positive and finite");
  if (!std::all_of(mean.begin(), mean.end(), [](double v) { return std::isfinite(v); })) {
    throw ConfigError("input mean must be finite");
  }
  input_mean_ = std::move(mean);
  input_scale_ = scale;
}

std::span<const double> EmbedderNetwork::hidden_weights() const {
  return std::span<const double>(params_).subspan(0, hidden_offset_bias());
}
std::span<const double> EmbedderNetwork::hidden_bias() const {
  return std::span<const double>(params_).subspan(hidden_offset_bias(), hidden_dim_);
}
std::span<const double> EmbedderNetwork::output_weights() const {
  return std::span<const double>(params_).subspan(output_offset_weights(), kEmbeddingDim * hidden_dim_);
}
std::span<const double> EmbedderNetwork::output_bias() const {
  return std::span<const double>(params_).subspan(output_offset_bias(), kEmbeddingDim);
}

EmbedderNetwork::Activations EmbedderNetwork::forward(std::span<const double> pixels) const {
  if (pixels.size() != input_dim_) {
    throw ContractViolation("embedder input must have " + std::to_string(input_dim_) + " values, got " +
                            std::to_string(pixels.size()));
  }
  const double* w1 = params_.data();
  const double* b1 = params_.data() + hidden_offset_bias();
  const double* w2 = params_.data() + output_offset_weights();
  const double* b2 = params_.data() + output_offset_bias();

  std::vector<double> input(input_dim_);
  for (std::size_t i = 0; i < input_dim_; ++i) input[i] = (pixels[i] - input_mean_[i]) * input_scale_;

  std::vector<double> hidden(hidden_dim_);
  for (std::size_t h = 0; h < hidden_dim_; ++h) {
    double acc = b1[h];
    const double* row = w1 + h * input_dim_;
    for (std::size_t i = 0; i < input_dim_; ++i) acc += row[i] * input[i];
    hidden[h] = std::tanh(acc);
  }
  std::vector<double> raw(kEmbeddingDim);
  double sq = 0.0;
  for (std::size_t o = 0; o < kEmbeddingDim; ++o) {
    double acc = b2[o];
    const double* row = w2 + o * hidden_dim_;
    for (std::size_t h = 0; h < hidden_dim_; ++h) acc += row[h] * hidden[h];
    raw[o] = acc;
    sq += acc * acc;
  }
  const double norm = std::sqrt(sq);
  Embedding embedding = Embedding::normalized(raw);
  return Activations{std::move(input), std::move(hidden), std::move(raw), norm, embedding};
}

Embedding EmbedderNetwork::embed(std::span<const double> pixels) const { return forward(pixels).embedding; }

BatchLoss batch_triplet_loss(const EmbedderNetwork& net, std::span<const std::vector<double>> inputs,
                             std::span<const Triplet> triplets, double margin, bool with_gradient) {
  if (!(margin > 0.0)) throw ConfigError("triplet margin must be positive");
  BatchLoss result;
  if (with_gradient) result.gradient.assign(net.parameter_count(), 0.0);
  if (triplets.empty()) return result;

  // Only samples that take part in some triplet need a forward pass.
  std::vector<std::size_t> slot(inputs.size(), SIZE_MAX);
  std::vector<EmbedderNetwork::Activations> acts;
  auto activation = [&](std::size_t idx) -> std::size_t {
    if (idx >= inputs.size()) throw ContractViolation("triplet index out of range");
    if (slot[idx] == SIZE_MAX) {
      slot[idx] = acts.size();
      acts.push_back(net.forward(inputs[idx]));
    }
    return slot[idx];
  };

  const std::size_t dim = kEmbeddingDim;
  std::vector<std::vector<double>> grad_e;  // dL/de per activation slot
  const double inv_t = 1.0 / static_cast<double>(triplets.size());
  double total = 0.0;
  for (const auto& t : triplets) {
    const std::size_t sa = activation(t.anchor);
    const std::size_t sp = activation(t.positive);
    const std::size_t sn = activation(t.negative);
    const auto& ea = acts[sa].embedding;
    const auto& ep = acts[sp].embedding;
    const auto& en = acts[sn].embedding;
    const double value = squared_distance(ea, ep) - squared_distance(ea, en) + margin;
    if (value <= 0.0) continue;
    total += value;
    if (!with_gradient) continue;
    if (grad_e.size() < acts.size()) grad_e.resize(acts.size(), std::vector<double>(dim, 0.0));
    for (std::size_t k = 0; k < dim; ++k) {
      grad_e[sa][k] += 2.0 * (en[k] - ep[k]) * inv_t;
      grad_e[sp][k] += -2.0 * (ea[k] - ep[k]) * inv_t;
      grad_e[sn][k] += 2.0 * (ea[k] - en[k]) * inv_t;
    }
  }
  result.loss = total * inv_t;
  if (!with_gradient) return result;
  grad_e.resize(acts.size(), std::vector<double>(dim, 0.0));

  const std::size_t in_dim = net.input_dim();
  const std::size_t hid = net.hidden_dim();
  const auto w2 = net.output_weights();
  double* g = result.gradient.data();
  double* gw1 = g;
  double* gb1 = g + hid * in_dim;
  double* gw2 = gb1 + hid;
  double* gb2 = gw2 + dim * hid;

  std::vector<double> dz(dim);
  std::vector<double> dh(hid);
  for (std::size_t idx = 0; idx < inputs.size(); ++idx) {
    if (slot[idx] == SIZE_MAX) continue;
    const auto& act = acts[slot[idx]];
    const auto& ge = grad_e[slot[idx]];
    const auto& e = act.embedding;

    // d(z/|z|)/dz = (I - e e^T) / |z|
    double dot = 0.0;
    for (std::size_t k = 0; k < dim; ++k) dot += e[k] * ge[k];
    bool any = false;
    for (std::size_t k = 0; k < dim; ++k) {
      dz[k] = (ge[k] - e[k] * dot) / act.raw_norm;
      any = any || dz[k] != 0.0;
    }
    if (!any) continue;

    std::fill(dh.begin(), dh.end(), 0.0);
    for (std::size_t o = 0; o < dim; ++o) {
      const double d = dz[o];
      gb2[o] += d;
      double* grow = gw2 + o * hid;
      const double* wrow = w2.data() + o * hid;
      for (std::size_t h = 0; h < hid; ++h) {
        grow[h] += d * act.hidden[h];
        dh[h] += wrow[h] * d;
      }
    }
    const auto& x = act.input;
    for (std::size_t h = 0; h < hid; ++h) {
      const double da = dh[h] * (1.0 - act.hidden[h] * act.hidden[h]);
      gb1[h] += da;
      double* grow = gw1 + h * in_dim;
      for (std::size_t i = 0; i < in_dim; ++i) grow[i] += da * x[i];
    }
  }
  return result;
}

TrainingResult train_embedder(EmbedderNetwork net, std::span<const LabeledSample> dataset,
                              const TrainingOptions& options) {
  if (dataset.empty()) throw ConfigError("training dataset is empty");
  std::set<int> classes;
  for (const auto& s : dataset) classes.insert(s.label);
  if (classes.size() < 2) throw ConfigError("training needs at least two classes");
  net.set_margin(options.margin);

  std::vector<std::vector<double>> inputs;
  std::vector<int> labels;
  inputs.reserve(dataset.size());
  for (const auto& s : dataset) {
    if (s.pixels.size() != net.input_dim()) {
      throw ContractViolation("training sample has " + std::to_string(s.pixels.size()) +
                              " values, network expects " + std::to_string(net.input_dim()));
    }
    inputs.push_back(s.pixels);
    labels.push_back(s.label);
  }

  if (options.fit_input_normalization && options.epochs > 0) {
    const std::size_t dim = net.input_dim();
    std::vector<double> mean(dim, 0.0);
    for (const auto& x : inputs) {
      for (std::size_t i = 0; i < dim; ++i) mean[i] += x[i];
    }
    for (double& m : mean) m /= static_cast<double>(inputs.size());
    double var = 0.0;
    for (const auto& x : inputs) {
      for (std::size_t i = 0; i < dim; ++i) var += (x[i] - mean[i]) * (x[i] - mean[i]);
    }
    const double sd = std::sqrt(var / static_cast<double>(inputs.size() * dim));
    net.set_input_normalization(std::move(mean), 1.0 / std::max(sd, 1e-3));
  }

  std::mt19937_64 rng(options.seed);
  TrainingResult result{net, {}};
  auto& current = result.network;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::vector<Embedding> embeddings;
    embeddings.reserve(inputs.size());
    for (const auto& x : inputs) embeddings.push_back(current.embed(x));
    auto triplets = mine_triplets(embeddings, labels, options.margin);
    if (options.max_triplets_per_epoch > 0 && triplets.size() > options.max_triplets_per_epoch) {
      std::shuffle(triplets.begin(), triplets.end(), rng);
      triplets.resize(options.max_triplets_per_epoch);
    }
    if (triplets.empty()) {
      result.loss_trace.push_back(0.0);
      continue;
    }
    const BatchLoss batch = batch_triplet_loss(current, inputs, triplets, options.margin);
    if (!std::isfinite(batch.loss)) throw TrainingError(epoch, "loss is not finite");
    result.loss_trace.push_back(batch.loss);

    auto params = current.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
      params[i] -= options.learning_rate * batch.gradient[i];
      if (!std::isfinite(params[i])) throw TrainingError(epoch, "parameter became non-finite");
    }
  }
  return result;
}

namespace {

nlohmann::json matrix_to_json(std::span<const double> flat, std::size_t rows, std::size_t cols) {
  nlohmann::json m = nlohmann::json::array();
  for (std::size_t r = 0; r < rows; ++r) {
    m.push_back(std::vector<double>(flat.begin() + static_cast<std::ptrdiff_t>(r * cols),
                                    flat.begin() + static_cast<std::ptrdiff_t>((r + 1) * cols)));
  }
  return m;
}

void matrix_from_json(const nlohmann::json& m, std::span<double> flat, std::size_t rows, std::size_t cols,
                      const char* name) {
  if (!m.is_array() || m.size() != rows) throw ConfigError(std::string(name) + ": wrong row count");
  for (std::size_t r = 0; r < rows; ++r) {
    const auto& row = m[r];
    if (!row.is_array() || row.size() != cols) throw ConfigError(std::string(name) + ": wrong column count");
    for (std::size_t c = 0; c < cols; ++c) flat[r * cols + c] = row[c].get<double>();
  }
}

}  // namespace

nlohmann::json network_to_json(const EmbedderNetwork& net) {
  nlohmann::json doc;
  doc["format"] = "sentinel-embedder";
  doc["version"] = 1;
  doc["input_dim"] = net.input_dim();
  doc["hidden_dim"] = net.hidden_dim();
  doc["output_dim"] = net.output_dim();
  doc["activation"] = "tanh";
  doc["margin"] = net.margin();
  doc["seed"] = net.seed();
  doc["input"] = {{"mean", std::vector<double>(net.input_mean().begin(), net.input_mean().end())},
                  {"scale", net.input_scale()}};
  doc["hidden"] = {{"weights", matrix_to_json(net.hidden_weights(), net.hidden_dim(), net.input_dim())},
                   {"bias", std::vector<double>(net.hidden_bias().begin(), net.hidden_bias().end())}};
  doc["output"] = {{"weights", matrix_to_json(net.output_weights(), net.output_dim(), net.hidden_dim())},
                   {"bias", std::vector<double>(net.output_bias().begin(), net.output_bias().end())}};
  return doc;
}

EmbedderNetwork network_from_json(const nlohmann::json& doc) {
  try {
    if (doc.value("format", "") != "sentinel-embedder") throw ConfigError("not an embedder network document");
    if (doc.at("version").get<int>() != 1) throw ConfigError("unsupported embedder network version");
    if (doc.at("output_dim").get<std::size_t>() != kEmbeddingDim) throw ConfigError("output_dim must be 128");
    const auto in = doc.at("input_dim").get<std::size_t>();
    const auto hid = doc.at("hidden_dim").get<std::size_t>();
    EmbedderNetwork net(in, hid, doc.at("margin").get<double>(), doc.at("seed").get<std::uint64_t>());
    if (doc.contains("input")) {
      net.set_input_normalization(doc.at("input").at("mean").get<std::vector<double>>(),
                                  doc.at("input").at("scale").get<double>());
    }
    auto p = net.parameters();
    matrix_from_json(doc.at("hidden").at("weights"), p.subspan(0, hid * in), hid, in, "hidden.weights");
    matrix_from_json(nlohmann::json::array({doc.at("hidden").at("bias")}), p.subspan(hid * in, hid), 1, hid,
                     "hidden.bias");
    const std::size_t w2 = hid * in + hid;
    matrix_from_json(doc.at("output").at("weights"), p.subspan(w2, kEmbeddingDim * hid), kEmbeddingDim, hid,
                     "output.weights");
    matrix_from_json(nlohmann::json::array({doc.at("output").at("bias")}), p.subspan(w2 + kEmbeddingDim * hid),
                     1, kEmbeddingDim, "output.bias");
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed embedder network: ") + e.what());
  }
}

void save_network(const EmbedderNetwork& net, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << network_to_json(net).dump(1) << '\n';
}

EmbedderNetwork load_network(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return network_from_json(doc);
}

}  // namespace sentinel
