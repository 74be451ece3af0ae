#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cipherbreak/ciphers.hpp"
#include "cipherbreak/image.hpp"
#include "cipherbreak/keyed_rng.hpp"

namespace cipherbreak {

inline constexpr int kManifestSchemaVersion = 1;

nlohmann::json to_json(const SchemeConfig& cfg);
SchemeConfig scheme_from_json(const nlohmann::json& j);

struct KeyPolicy {
  enum class Kind { Fixed, PerEpoch };
  Kind kind = Kind::PerEpoch;
  // Fixed: fingerprint of the only key. PerEpoch: keys derive from `seed`.
  std::string key_fingerprint;
  std::uint64_t seed = 0;

  static KeyPolicy fixed(const MasterKey& key);
  static KeyPolicy per_epoch(std::uint64_t seed);
};

struct ManifestEntry {
  std::string id;
  std::filesystem::path plain_path;  // relative to the manifest root
};

struct PairManifest {
  int schema_version = kManifestSchemaVersion;
  std::filesystem::path root;
  SchemeConfig scheme;
  std::string split;  // "train" or "val"
  KeyPolicy key_policy;
  int image_size = 64;
  std::vector<ManifestEntry> entries;

  std::filesystem::path plain_file(const ManifestEntry& e) const { return root / e.plain_path; }
  // Throws DataError when a referenced file is missing or undecodable.
  void validate_files() const;
};

// `root` is not serialized; it is the directory holding the manifest file.
nlohmann::json to_json(const PairManifest& m);
PairManifest manifest_from_json(const nlohmann::json& j, const std::filesystem::path& root);
void write_manifest(const std::filesystem::path& path, const PairManifest& m);
PairManifest read_manifest(const std::filesystem::path& path);

struct DatasetBuild {
  PairManifest train;
  PairManifest val;
  int skipped = 0;  // undecodable source files
  std::vector<std::string> skipped_files;
};

// Center-crops and resizes every decodable PNG in `src_dir` into
// out_root/plain/<id>.png and splits them with a seeded shuffle; the first
// round(ratio * n) go to train. Writes manifest-train.json / manifest-val.json.
DatasetBuild build_manifest(const std::filesystem::path& src_dir, const SchemeConfig& cfg, int size,
                            double split_ratio, std::uint64_t split_seed, const KeyPolicy& policy,
                            const std::filesystem::path& out_root);

// Key for `epoch`. A fixed policy needs the key itself, checked against the
// recorded fingerprint.
MasterKey epoch_key(const KeyPolicy& policy, std::uint64_t epoch, const std::optional<MasterKey>& fixed_key);

struct Pair {
  std::string id;
  ImageTensor plain;
  ImageTensor encrypted;
  std::uint64_t epoch_key_id = 0;
};

// Plain images held in memory; encryption happens per request.
class PairSource {
 public:
  explicit PairSource(PairManifest m, std::optional<MasterKey> fixed_key = std::nullopt);

  const PairManifest& manifest() const { return m_; }
  std::size_t size() const { return plain_.size(); }
  const ImageTensor& plain(std::size_t i) const { return plain_[i]; }
  const std::vector<ImageTensor>& plain_images() const { return plain_; }

  MasterKey key_for_epoch(std::uint64_t epoch) const { return epoch_key(m_.key_policy, epoch, fixed_key_); }
  Pair pair(std::size_t i, std::uint64_t epoch) const;
  // Encrypted images of one epoch, optionally with a different scheme config
  // (used by the scramble-only curriculum stage).
  std::vector<ImageTensor> encrypted_epoch(std::uint64_t epoch, const SchemeConfig& cfg) const;

 private:
  PairManifest m_;
  std::optional<MasterKey> fixed_key_;
  std::vector<ImageTensor> plain_;
};

std::vector<Pair> epoch_pairs(const PairManifest& m, std::uint64_t epoch,
                              const std::optional<MasterKey>& fixed_key = std::nullopt);

// Writes out_dir/{plain,encrypted}/<id>.png and out_dir/manifest.json (fixed
// policy under `key`). Returns the number of entries written.
int export_pairs(const PairManifest& m, const MasterKey& key, const std::filesystem::path& out_dir);

}  // namespace cipherbreak
