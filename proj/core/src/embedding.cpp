// SPDX-License-Identifier: Apache-2.0
#include "sentinel/embedding.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <set>
#include <string>

#include "sentinel/errors.hpp"

namespace sentinel {

namespace {

void check_length(std::size_t n) {
  if (n != kEmbeddingDim) {
    throw ContractViolation("embedding must have " + std::to_string(kEmbeddingDim) +
                            " components, got " + std::to_string(n));
  }
}

void check_finite(std::span<const double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) throw ContractViolation("embedding component is not finite");
  }
}

double norm_of(std::span<const double> values) {
  double sum = 0.0;
  for (double v : values) sum += v * v;
  return std::sqrt(sum);
}

}  // namespace

Embedding Embedding::from_unit(std::span<const double> values) {
  check_length(values.size());
  check_finite(values);
  const double norm = norm_of(values);
  if (std::abs(norm - 1.0) > kUnitNormTolerance) {
    throw ContractViolation("embedding is not unit length (norm " + std::to_string(norm) + ")");
  }
  Embedding e;
  std::copy(values.begin(), values.end(), e.values_.begin());
  return e;
}

Embedding Embedding::normalized(std::span<const double> values) {
  check_length(values.size());
  check_finite(values);
  const double norm = norm_of(values);
  if (!(norm > 0.0)) throw ContractViolation("cannot normalize a zero vector");
  Embedding e;
  for (std::size_t i = 0; i < kEmbeddingDim; ++i) e.values_[i] = values[i] / norm;
  return e;
}

double squared_distance(const Embedding& a, const Embedding& b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < kEmbeddingDim; ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return sum;
}

double distance(const Embedding& a, const Embedding& b) { return std::sqrt(squared_distance(a, b)); }

double distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ContractViolation("distance: dimension mismatch (" + std::to_string(a.size()) + " vs " +
                            std::to_string(b.size()) + ")");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return std::sqrt(sum);
}

double triplet_loss(const Embedding& anchor, const Embedding& positive, const Embedding& negative,
                    double margin) {
  if (!(margin > 0.0)) throw ConfigError("triplet margin must be positive");
  return std::max(0.0, squared_distance(anchor, positive) - squared_distance(anchor, negative) + margin);
}

std::vector<Triplet> mine_triplets(std::span<const Embedding> embeddings, std::span<const int> labels,
                                   double margin) {
  if (embeddings.size() != labels.size()) {
    throw ContractViolation("mine_triplets: embeddings and labels differ in length");
  }
  if (!(margin > 0.0)) throw ConfigError("triplet margin must be positive");
  const std::set<int> classes(labels.begin(), labels.end());
  if (classes.size() < 2) return {};

  const std::size_t n = embeddings.size();
  std::vector<double> dist(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double d = distance(embeddings[i], embeddings[j]);
      dist[i * n + j] = d;
      dist[j * n + i] = d;
    }
  }

  std::vector<Triplet> out;
  std::vector<std::pair<double, std::size_t>> negatives;
  for (std::size_t a = 0; a < n; ++a) {
    // Negatives ordered by (distance, index): the first entry is the hardest,
    // and the first entry beyond d(a,p) is the closest semi-hard candidate.
    negatives.clear();
    for (std::size_t neg = 0; neg < n; ++neg) {
      if (labels[neg] != labels[a]) negatives.emplace_back(dist[a * n + neg], neg);
    }
    std::sort(negatives.begin(), negatives.end());
    for (std::size_t p = 0; p < n; ++p) {
      if (p == a || labels[p] != labels[a]) continue;
      const double dap = dist[a * n + p];
      const auto it = std::upper_bound(negatives.begin(), negatives.end(), dap,
                                       [](double v, const auto& entry) { return v < entry.first; });
      const bool semi = it != negatives.end() && it->first < dap + margin;
      out.push_back({a, p, semi ? it->second : negatives.front().second});
    }
  }
  return out;
}

double mean_triplet_loss(std::span<const Embedding> embeddings, std::span<const Triplet> triplets,
                         double margin) {
  if (triplets.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& t : triplets) {
    sum += triplet_loss(embeddings[t.anchor], embeddings[t.positive], embeddings[t.negative], margin);
  }
  return sum / static_cast<double>(triplets.size());
}

QuantizedEmbedding quantize(const Embedding& e) {
  const auto& v = e.values();
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  QuantizedEmbedding q;
  q.offset = *lo;
  q.scale = (*hi - *lo) / 255.0;
  for (std::size_t i = 0; i < kEmbeddingDim; ++i) {
    if (q.scale == 0.0) {
      q.bytes[i] = 0;
      continue;
    }
    const double level = std::round((v[i] - q.offset) / q.scale);
    q.bytes[i] = static_cast<std::uint8_t>(std::clamp(level, 0.0, 255.0));
  }
  return q;
}

std::array<double, kEmbeddingDim> dequantize_values(const QuantizedEmbedding& q) {
  std::array<double, kEmbeddingDim> out{};
  for (std::size_t i = 0; i < kEmbeddingDim; ++i) out[i] = q.offset + q.scale * q.bytes[i];
  return out;
}

Embedding dequantize(const QuantizedEmbedding& q) {
  const auto values = dequantize_values(q);
  return Embedding::normalized(values);
}

void append_f64_le(std::vector<std::uint8_t>& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<std::uint8_t>(bits & 0xffu));
    bits >>= 8;
  }
}

double read_f64_le(std::span<const std::uint8_t> bytes, std::size_t offset) {
  if (offset + 8 > bytes.size()) throw ContractViolation("read_f64_le: buffer too short");
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | bytes[offset + static_cast<std::size_t>(i)];
  return std::bit_cast<double>(bits);
}

std::vector<std::uint8_t> encode_embedding(const Embedding& e) {
  std::vector<std::uint8_t> out;
  out.reserve(kEmbeddingDim * 8);
  for (double v : e.values()) append_f64_le(out, v);
  return out;
}

Embedding decode_embedding(std::span<const std::uint8_t> bytes) {
  if (bytes.size() != kEmbeddingDim * 8) {
    throw ContractViolation("encoded embedding must be 1024 bytes, got " + std::to_string(bytes.size()));
  }
  std::array<double, kEmbeddingDim> values{};
  for (std::size_t i = 0; i < kEmbeddingDim; ++i) values[i] = read_f64_le(bytes, i * 8);
  return Embedding::from_unit(values);
}

std::vector<std::uint8_t> encode_quantized(const QuantizedEmbedding& q) {
  std::vector<std::uint8_t> out(q.bytes.begin(), q.bytes.end());
  append_f64_le(out, q.scale);
  append_f64_le(out, q.offset);
  return out;
}

QuantizedEmbedding decode_quantized(std::span<const std::uint8_t> bytes) {
  if (bytes.size() != kEmbeddingDim + 16) {
    throw ContractViolation("encoded quantized embedding must be 144 bytes, got " +
                            std::to_string(bytes.size()));
  }
  QuantizedEmbedding q;
  std::copy_n(bytes.begin(), kEmbeddingDim, q.bytes.begin());
  q.scale = read_f64_le(bytes, kEmbeddingDim);
  q.offset = read_f64_le(bytes, kEmbeddingDim + 8);
  return q;
}

}  // namespace sentinel

sentinel::Embedding nlohmann::adl_serializer<sentinel::Embedding>::from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw sentinel::ContractViolation("embedding must be a number array");
  std::vector<double> values;
  values.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_number()) throw sentinel::ContractViolation("embedding component is not a number");
    values.push_back(v.get<double>());
  }
  return sentinel::Embedding::from_unit(values);
}

void nlohmann::adl_serializer<sentinel::Embedding>::to_json(nlohmann::json& j, const sentinel::Embedding& e) {
  j = nlohmann::json::array();
  for (double v : e.values()) j.push_back(v);
}
