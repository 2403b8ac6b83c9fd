// SPDX-License-Identifier: Apache-2.0
#include "sentinel/registry.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "sentinel/errors.hpp"
#include "sentinel/image.hpp"

namespace sentinel {

std::string_view to_string(IdentityStatus status) {
  switch (status) {
    case IdentityStatus::whitelist:
      return "whitelist";
    case IdentityStatus::blacklist:
      return "blacklist";
    case IdentityStatus::neutral:
      break;
  }
  return "neutral";
}

IdentityStatus parse_status(std::string_view text) {
  if (text == "neutral") return IdentityStatus::neutral;
  if (text == "whitelist") return IdentityStatus::whitelist;
  if (text == "blacklist") return IdentityStatus::blacklist;
  throw ConfigError("unknown identity status '" + std::string(text) + "'");
}

Embedding IdentityRecord::centroid() const {
  if (gallery.empty()) throw ContractViolation("record " + id + " has an empty gallery");
  std::array<double, kEmbeddingDim> sum{};
  for (const auto& e : gallery) {
    for (std::size_t i = 0; i < kEmbeddingDim; ++i) sum[i] += e[i];
  }
  // Antipodal galleries have no direction; fall back to the first entry.
  double sq = 0.0;
  for (double v : sum) sq += v * v;
  if (sq < 1e-24) return gallery.front();
  return Embedding::normalized(sum);
}

double match_confidence(double distance) { return std::clamp(1.0 - distance / 2.0, 0.0, 1.0); }

std::string hash_credential(std::string_view display_name, std::string_view secret) {
  const std::string input = "sentinel:" + std::string(display_name) + ":" + std::string(secret);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(input.data(), input.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 digest failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

Registry::Registry(RegistryOptions options) { set_options(options); }

void Registry::set_options(RegistryOptions options) {
  if (!(options.guest_threshold > 0.0 && options.guest_threshold < 1.0)) {
    throw ConfigError("guest threshold must lie in (0, 1)");
  }
  if (options.knn_k == 0) throw ConfigError("k must be at least 1");
  options_ = options;
}

const IdentityRecord& Registry::enroll(const std::string& display_name, std::vector<Embedding> gallery,
                                       IdentityStatus status, std::int64_t now_ms) {
  if (gallery.empty()) throw EnrollmentError("gallery for '" + display_name + "' is empty");
  if (display_name.empty()) throw EnrollmentError("display name is empty");
  if (find_by_name(display_name)) throw EnrollmentError("display name '" + display_name + "' is already enrolled");
  IdentityRecord rec;
  do {
    rec.id = "id-" + std::to_string(++id_counter_);
  } while (records_.contains(rec.id));
  rec.display_name = display_name;
  rec.gallery = std::move(gallery);
  rec.status = status;
  rec.created_at = now_ms;
  rec.status_changed_at = now_ms;
  centroids_.insert_or_assign(rec.id, rec.centroid());
  return records_.emplace(rec.id, std::move(rec)).first->second;
}

MatchResult Registry::classify(const Embedding& query) const {
  MatchResult r = options_.matcher == Matcher::knn ? classify_knn(query) : classify_centroid(query);
  if (!r.identity_id.empty()) {
    r.confidence = match_confidence(r.distance);
    r.is_guest_enrollment = r.confidence < options_.guest_threshold;
  }
  return r;
}

MatchResult Registry::classify_centroid(const Embedding& query) const {
  MatchResult best;
  // Map order is lexicographic, so strict < keeps the smallest id on ties.
  for (const auto& [id, c] : centroids_) {
    const double d = distance(query, c);
    if (best.identity_id.empty() || d < best.distance) {
      best.identity_id = id;
      best.distance = d;
    }
  }
  return best;
}

MatchResult Registry::classify_knn(const Embedding& query) const {
  struct Neighbor {
    double d;
    const std::string* id;
  };
  std::vector<Neighbor> all;
  for (const auto& [id, rec] : records_) {
    for (const auto& e : rec.gallery) all.push_back({distance(query, e), &id});
  }
  if (all.empty()) return {};
  std::stable_sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) { return a.d < b.d; });
  all.resize(std::min(all.size(), options_.knn_k));

  struct Vote {
    int count = 0;
    double nearest = 2.0;
  };
  std::map<std::string, Vote> votes;
  for (const auto& n : all) {
    auto& v = votes[*n.id];
    ++v.count;
    v.nearest = std::min(v.nearest, n.d);
  }
  MatchResult best;
  int best_count = 0;
  for (const auto& [id, v] : votes) {
    if (v.count > best_count || (v.count == best_count && v.nearest < best.distance)) {
      best_count = v.count;
      best.identity_id = id;
      best.distance = v.nearest;
    }
  }
  return best;
}

const IdentityRecord& Registry::enroll_guest(const Embedding& query, std::span<const double> crop,
                                             std::int64_t now_ms) {
  IdentityRecord rec;
  do {
    rec.id = "guest-" + std::to_string(++guest_counter_);
  } while (records_.contains(rec.id));
  rec.display_name = rec.id;
  rec.gallery = {query};
  rec.is_guest = true;
  rec.created_at = now_ms;
  rec.status_changed_at = now_ms;

  const auto side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(crop.size()))));
  if (crop_dir_ && side > 0 && static_cast<std::size_t>(side) * side == crop.size()) {
    std::filesystem::create_directories(*crop_dir_);
    const auto file = *crop_dir_ / (rec.id + ".pgm");
    GrayImage img(side, side);
    std::copy(crop.begin(), crop.end(), img.data.begin());
    write_pnm(file, to_pnm(img));
    rec.crop_path = std::filesystem::relative(file, crop_base_).generic_string();
  }
  centroids_.insert_or_assign(rec.id, query);
  return records_.emplace(rec.id, std::move(rec)).first->second;
}

bool Registry::reinforce(const MatchResult& match, const Embedding& query) {
  const auto it = records_.find(match.identity_id);
  if (it == records_.end() || !it->second.is_guest) return false;
  if (match.confidence < options_.growth_confidence) return false;
  auto& rec = it->second;
  if (rec.gallery.size() >= options_.guest_gallery_cap) return false;
  rec.gallery.push_back(query);
  centroids_.insert_or_assign(rec.id, rec.centroid());
  return true;
}

const IdentityRecord& Registry::set_status(const std::string& id, IdentityStatus status, std::int64_t now_ms) {
  const auto it = records_.find(id);
  if (it == records_.end()) throw NotFoundError("no identity with id '" + id + "'");
  it->second.status = status;
  it->second.status_changed_at = now_ms;
  return it->second;
}

void Registry::set_credential(const std::string& id, std::string_view secret) {
  const auto it = records_.find(id);
  if (it == records_.end()) throw NotFoundError("no identity with id '" + id + "'");
  it->second.credential = hash_credential(it->second.display_name, secret);
}

const IdentityRecord* Registry::verify_credential(std::string_view display_name, std::string_view secret) const {
  const IdentityRecord* rec = find_by_name(display_name);
  if (!rec || rec->credential.empty()) return nullptr;
  return rec->credential == hash_credential(display_name, secret) ? rec : nullptr;
}

const IdentityRecord* Registry::find(const std::string& id) const {
  const auto it = records_.find(id);
  return it == records_.end() ? nullptr : &it->second;
}

const IdentityRecord* Registry::find_by_name(std::string_view display_name) const {
  for (const auto& [id, rec] : records_) {
    if (rec.display_name == display_name) return &rec;
  }
  return nullptr;
}

const IdentityRecord& Registry::at(const std::string& id) const {
  if (const auto* rec = find(id)) return *rec;
  throw NotFoundError("no identity with id '" + id + "'");
}

void Registry::set_crop_directory(std::filesystem::path dir, std::filesystem::path base) {
  crop_dir_ = std::move(dir);
  crop_base_ = std::move(base);
}

namespace {

constexpr const char* kFormat = "sentinel-registry";

nlohmann::json record_to_json(const IdentityRecord& rec) {
  nlohmann::json gallery = nlohmann::json::array();
  for (const auto& e : rec.gallery) gallery.push_back(e);
  nlohmann::json j{{"id", rec.id},
                   {"name", rec.display_name},
                   {"status", to_string(rec.status)},
                   {"guest", rec.is_guest},
                   {"created_at", rec.created_at},
                   {"status_changed_at", rec.status_changed_at},
                   {"gallery", std::move(gallery)}};
  if (!rec.credential.empty()) j["credential"] = rec.credential;
  if (!rec.crop_path.empty()) j["crop"] = rec.crop_path;
  return j;
}

IdentityRecord record_from_json(const nlohmann::json& j, std::size_t line) {
  const std::string id = j.is_object() && j.contains("id") && j["id"].is_string() ? j["id"].get<std::string>() : "";
  const std::string who = id.empty() ? "record" : "record '" + id + "'";
  try {
    IdentityRecord rec;
    rec.id = j.at("id").get<std::string>();
    if (rec.id.empty()) throw ParseError(line, "record id is empty");
    rec.display_name = j.at("name").get<std::string>();
    rec.status = parse_status(j.at("status").get<std::string>());
    rec.is_guest = j.at("guest").get<bool>();
    rec.created_at = j.at("created_at").get<std::int64_t>();
    rec.status_changed_at = j.value("status_changed_at", rec.created_at);
    rec.credential = j.value("credential", "");
    rec.crop_path = j.value("crop", "");
    const auto& gallery = j.at("gallery");
    if (!gallery.is_array() || gallery.empty()) throw ParseError(line, who + ": gallery is empty");
    for (std::size_t g = 0; g < gallery.size(); ++g) {
      const auto& values = gallery[g];
      if (!values.is_array() || values.size() != kEmbeddingDim) {
        throw ParseError(line, who + ": embedding " + std::to_string(g) + " has " +
                                   std::to_string(values.is_array() ? values.size() : 0) + " values, expected " +
                                   std::to_string(kEmbeddingDim));
      }
      rec.gallery.push_back(Embedding::from_unit(values.get<std::vector<double>>()));
    }
    if (rec.is_guest && !rec.id.starts_with("guest-")) throw ParseError(line, who + ": guest id lacks 'guest-'");
    return rec;
  } catch (const ParseError&) {
    throw;
  } catch (const std::exception& e) {
    throw ParseError(line, who + ": " + e.what());
  }
}

}  // namespace

void save_registry(const Registry& registry, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    const auto& o = registry.options();
    nlohmann::json header{{"format", kFormat},
                          {"version", 1},
                          {"guest_counter", registry.guest_counter()},
                          {"id_counter", registry.id_counter()},
                          {"guest_threshold", o.guest_threshold},
                          {"matcher", o.matcher == Matcher::knn ? "knn" : "centroid"},
                          {"knn_k", o.knn_k},
                          {"growth_confidence", o.growth_confidence},
                          {"guest_gallery_cap", o.guest_gallery_cap}};
    out << header.dump() << '\n';
    for (const auto& [id, rec] : registry.records()) out << record_to_json(rec).dump() << '\n';
    if (!out) throw IoError("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Registry load_registry(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::string text;
  std::size_t line = 0;
  if (!std::getline(in, text)) throw ParseError(1, "missing registry header");
  ++line;

  RegistryOptions options;
  std::uint64_t guest_counter = 0;
  std::uint64_t id_counter = 0;
  try {
    const auto header = nlohmann::json::parse(text);
    if (header.value("format", "") != kFormat) throw ParseError(line, "not a registry file");
    if (header.at("version").get<int>() != 1) throw ParseError(line, "unsupported registry version");
    guest_counter = header.at("guest_counter").get<std::uint64_t>();
    id_counter = header.value("id_counter", std::uint64_t{0});
    options.guest_threshold = header.value("guest_threshold", kDefaultGuestThreshold);
    options.matcher = header.value("matcher", "centroid") == "knn" ? Matcher::knn : Matcher::centroid;
    options.knn_k = header.value("knn_k", options.knn_k);
    options.growth_confidence = header.value("growth_confidence", options.growth_confidence);
    options.guest_gallery_cap = header.value("guest_gallery_cap", options.guest_gallery_cap);
  } catch (const ParseError&) {
    throw;
  } catch (const std::exception& e) {
    throw ParseError(line, std::string("bad header: ") + e.what());
  }

  Registry reg(options);
  reg.guest_counter_ = guest_counter;
  reg.id_counter_ = id_counter;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line, std::string("malformed record: ") + e.what());
    }
    IdentityRecord rec = record_from_json(j, line);
    if (reg.records_.contains(rec.id)) throw ParseError(line, "duplicate record '" + rec.id + "'");
    reg.centroids_.insert_or_assign(rec.id, rec.centroid());
    reg.records_.emplace(rec.id, std::move(rec));
  }
  return reg;
}

}  // namespace sentinel
