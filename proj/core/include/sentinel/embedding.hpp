// SPDX-License-Identifier: Apache-2.0
#pragma once

// Face embeddings: 128-D points on the unit hypersphere, the Euclidean
// metric between them, the triplet hinge loss, semi-hard triplet mining and
// optional 8-bit quantization.

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"

namespace sentinel {

inline constexpr std::size_t kEmbeddingDim = 128;
inline constexpr double kUnitNormTolerance = 1e-6;
inline constexpr double kDefaultMargin = 0.2;

class Embedding {
 public:
  using Values = std::array<double, kEmbeddingDim>;

  // Accepts values that are already unit length (within kUnitNormTolerance).
  // Throws ContractViolation on wrong length, non-finite or non-unit input.
  static Embedding from_unit(std::span<const double> values);

  // L2-normalizes `values`. Throws ContractViolation on wrong length,
  // non-finite components or a zero vector.
  static Embedding normalized(std::span<const double> values);

  const Values& values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  std::size_t size() const { return kEmbeddingDim; }

  bool operator==(const Embedding&) const = default;

 private:
  Embedding() = default;
  Values values_{};
};

double squared_distance(const Embedding& a, const Embedding& b);
double distance(const Embedding& a, const Embedding& b);
// Span overload for raw vectors; throws ContractViolation on length mismatch.
double distance(std::span<const double> a, std::span<const double> b);

// max(0, d(a,p)^2 - d(a,n)^2 + margin). Throws ConfigError if margin <= 0.
double triplet_loss(const Embedding& anchor, const Embedding& positive,
                    const Embedding& negative, double margin);

struct Triplet {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;

  auto operator<=>(const Triplet&) const = default;
};

// For every ordered same-class pair (a, p) with a != p, picks the negative n
// minimizing d(a,n) among those with d(a,p) < d(a,n) < d(a,p) + margin, or the
// closest negative overall when that band is empty. Ties go to the lowest
// index. Returns an empty list when fewer than two classes are present.
std::vector<Triplet> mine_triplets(std::span<const Embedding> embeddings,
                                   std::span<const int> labels, double margin);

// Mean of triplet_loss over `triplets`; 0 for an empty list.
double mean_triplet_loss(std::span<const Embedding> embeddings,
                         std::span<const Triplet> triplets, double margin);

struct QuantizedEmbedding {
  std::array<std::uint8_t, kEmbeddingDim> bytes{};
  double scale = 0.0;
  double offset = 0.0;

  bool operator==(const QuantizedEmbedding&) const = default;
};

// Affine min-max quantization: v ~= offset + scale * byte.
QuantizedEmbedding quantize(const Embedding& e);
// Reconstructed components before renormalization; each is within scale/2 of
// the original.
std::array<double, kEmbeddingDim> dequantize_values(const QuantizedEmbedding& q);
Embedding dequantize(const QuantizedEmbedding& q);

// Binary forms: 128 little-endian float64 (1024 bytes), and 128 bytes
// followed by scale and offset as little-endian float64 (144 bytes).
std::vector<std::uint8_t> encode_embedding(const Embedding& e);
Embedding decode_embedding(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_quantized(const QuantizedEmbedding& q);
QuantizedEmbedding decode_quantized(std::span<const std::uint8_t> bytes);

// Little-endian float64 helpers shared by the binary codecs.
void append_f64_le(std::vector<std::uint8_t>& out, double v);
double read_f64_le(std::span<const std::uint8_t> bytes, std::size_t offset);

}  // namespace sentinel

// Embeddings travel as plain number arrays in structured text.
template <>
struct nlohmann::adl_serializer<sentinel::Embedding> {
  static sentinel::Embedding from_json(const nlohmann::json& j);
  static void to_json(nlohmann::json& j, const sentinel::Embedding& e);
};
