// SPDX-License-Identifier: Apache-2.0
#pragma once

// Identity gallery: enrolled subjects, nearest-centroid matching with
// automatic guest enrollment, watch-list status and line-per-record files.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sentinel/embedding.hpp"

namespace sentinel {

enum class IdentityStatus { neutral, whitelist, blacklist };

std::string_view to_string(IdentityStatus status);
// Throws ConfigError for anything but "neutral", "whitelist" or "blacklist".
IdentityStatus parse_status(std::string_view text);

struct IdentityRecord {
  std::string id;
  std::string display_name;
  std::vector<Embedding> gallery;
  IdentityStatus status = IdentityStatus::neutral;
  bool is_guest = false;
  std::int64_t created_at = 0;
  std::int64_t status_changed_at = 0;
  std::string credential;  // hex digest; operator registries only
  std::string crop_path;   // guests only, relative to the registry file

  // Mean of the gallery, re-normalized.
  Embedding centroid() const;
  bool operator==(const IdentityRecord&) const = default;
};

struct MatchResult {
  std::string identity_id;  // empty when the registry is empty
  double distance = 2.0;
  double confidence = 0.0;
  bool is_guest_enrollment = true;
};

inline constexpr double kDefaultGuestThreshold = 0.5;

// 1 - d/2: 1 at distance 0, 0 at the antipode.
double match_confidence(double distance);

enum class Matcher { centroid, knn };

struct RegistryOptions {
  double guest_threshold = kDefaultGuestThreshold;
  Matcher matcher = Matcher::centroid;
  std::size_t knn_k = 3;
  double growth_confidence = 0.8;
  std::size_t guest_gallery_cap = 10;

  bool operator==(const RegistryOptions&) const = default;
};

class Registry {
 public:
  explicit Registry(RegistryOptions options = {});

  const RegistryOptions& options() const { return options_; }
  // Throws ConfigError on out-of-range values.
  void set_options(RegistryOptions options);
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const std::map<std::string, IdentityRecord>& records() const { return records_; }
  std::uint64_t guest_counter() const { return guest_counter_; }
  std::uint64_t id_counter() const { return id_counter_; }

  // New record "id-<n>". Throws EnrollmentError on an empty gallery or a
  // display name that is already taken.
  const IdentityRecord& enroll(const std::string& display_name, std::vector<Embedding> gallery,
                               IdentityStatus status = IdentityStatus::neutral, std::int64_t now_ms = 0);

  MatchResult classify(const Embedding& query) const;

  // New record "guest-<n>" holding `query`. When a crop directory is set and
  // `crop` is a square image, it is written there as <id>.pgm.
  const IdentityRecord& enroll_guest(const Embedding& query, std::span<const double> crop = {},
                                     std::int64_t now_ms = 0);

  // Appends `query` to a matched guest's gallery when the match is strong
  // enough and the gallery has room. Returns whether it grew.
  bool reinforce(const MatchResult& match, const Embedding& query);

  // Throws NotFoundError for an unknown id.
  const IdentityRecord& set_status(const std::string& id, IdentityStatus status, std::int64_t now_ms = 0);
  void set_credential(const std::string& id, std::string_view secret);
  // True iff a record named `display_name` has a credential matching `secret`.
  const IdentityRecord* verify_credential(std::string_view display_name, std::string_view secret) const;

  const IdentityRecord* find(const std::string& id) const;
  const IdentityRecord* find_by_name(std::string_view display_name) const;
  // Throws NotFoundError.
  const IdentityRecord& at(const std::string& id) const;

  // Guest crops go to `<dir>/<id>.pgm`; stored paths are relative to
  // `base` (normally the registry file's directory).
  void set_crop_directory(std::filesystem::path dir, std::filesystem::path base);

  bool operator==(const Registry& other) const {
    return options_ == other.options_ && records_ == other.records_ && guest_counter_ == other.guest_counter_ &&
           id_counter_ == other.id_counter_;
  }

 private:
  friend Registry load_registry(const std::filesystem::path& path);

  MatchResult classify_centroid(const Embedding& query) const;
  MatchResult classify_knn(const Embedding& query) const;

  RegistryOptions options_;
  std::map<std::string, IdentityRecord> records_;
  std::map<std::string, Embedding, std::less<>> centroids_;
  std::uint64_t guest_counter_ = 0;
  std::uint64_t id_counter_ = 0;
  std::optional<std::filesystem::path> crop_dir_;
  std::filesystem::path crop_base_;
};

// Salted SHA-256 of an operator secret, lowercase hex.
std::string hash_credential(std::string_view display_name, std::string_view secret);

// One JSON header line, then one JSON object per record.
void save_registry(const Registry& registry, const std::filesystem::path& path);
// Throws IoError if unreadable and ParseError (with line number and record
// id when known) if malformed.
Registry load_registry(const std::filesystem::path& path);

}  // namespace sentinel
