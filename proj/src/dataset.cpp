#include "cipherbreak/dataset.hpp"

#include <cmath>
#include <fstream>

#include "cipherbreak/embedder.hpp"
#include "cipherbreak/errors.hpp"
#include "cipherbreak/image_io.hpp"
#include "cipherbreak/rng.hpp"

namespace cipherbreak {

nlohmann::json to_json(const SchemeConfig& cfg) {
  return {{"scheme", std::string(to_string(cfg.scheme))}, {"block_size", cfg.block_size},
          {"scramble_only", cfg.scramble_only}};
}

SchemeConfig scheme_from_json(const nlohmann::json& j) {
  SchemeConfig c;
  c.scheme = parse_scheme(j.at("scheme").get<std::string>());
  c.block_size = j.at("block_size").get<int>();
  c.scramble_only = j.value("scramble_only", false);
  c.validate();
  return c;
}

KeyPolicy KeyPolicy::fixed(const MasterKey& key) {
  KeyPolicy p;
  p.kind = Kind::Fixed;
  p.key_fingerprint = key.fingerprint();
  return p;
}

KeyPolicy KeyPolicy::per_epoch(std::uint64_t seed) {
  KeyPolicy p;
  p.kind = Kind::PerEpoch;
  p.seed = seed;
  return p;
}

void PairManifest::validate_files() const {
  for (const auto& e : entries) {
    const auto path = plain_file(e);
    if (!std::filesystem::exists(path)) throw DataError("manifest entry " + e.id + ": missing " + path.string());
    const auto img = read_png(path);
    if (img.width() != image_size || img.height() != image_size) {
      throw DataError("manifest entry " + e.id + ": expected " + std::to_string(image_size) + "x" +
                      std::to_string(image_size));
    }
  }
}

nlohmann::json to_json(const PairManifest& m) {
  nlohmann::json policy;
  if (m.key_policy.kind == KeyPolicy::Kind::Fixed) {
    policy = {{"kind", "fixed"}, {"key_fingerprint", m.key_policy.key_fingerprint}};
  } else {
    policy = {{"kind", "per_epoch"}, {"seed", m.key_policy.seed}};
  }
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : m.entries) entries.push_back({{"id", e.id}, {"plain", e.plain_path.generic_string()}});
  return {{"schema_version", m.schema_version}, {"scheme", to_json(m.scheme)}, {"split", m.split},
          {"key_policy", policy},             {"image_size", m.image_size}, {"entries", entries}};
}

PairManifest manifest_from_json(const nlohmann::json& j, const std::filesystem::path& root) {
  PairManifest m;
  m.root = root;
  try {
    m.schema_version = j.at("schema_version").get<int>();
    if (m.schema_version != kManifestSchemaVersion) {
      throw DataError("unsupported manifest schema version " + std::to_string(m.schema_version));
    }
    m.scheme = scheme_from_json(j.at("scheme"));
    m.split = j.at("split").get<std::string>();
    const auto& p = j.at("key_policy");
    const auto kind = p.at("kind").get<std::string>();
    if (kind == "fixed") {
      m.key_policy.kind = KeyPolicy::Kind::Fixed;
      m.key_policy.key_fingerprint = p.at("key_fingerprint").get<std::string>();
    } else if (kind == "per_epoch") {
      m.key_policy.kind = KeyPolicy::Kind::PerEpoch;
      m.key_policy.seed = p.at("seed").get<std::uint64_t>();
    } else {
      throw DataError("unknown key policy '" + kind + "'");
    }
    m.image_size = j.at("image_size").get<int>();
    for (const auto& e : j.at("entries")) {
      m.entries.push_back({e.at("id").get<std::string>(), e.at("plain").get<std::string>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }
  if (m.image_size % m.scheme.dimension_multiple() != 0) {
    throw DataError("manifest image size " + std::to_string(m.image_size) + " not divisible by " +
                    std::to_string(m.scheme.dimension_multiple()));
  }
  return m;
}

void write_manifest(const std::filesystem::path& path, const PairManifest& m) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  out << to_json(m).dump(2) << "\n";
  if (!out) throw DataError("cannot write " + path.string());
}

PairManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return manifest_from_json(j, path.parent_path());
}

DatasetBuild build_manifest(const std::filesystem::path& src_dir, const SchemeConfig& cfg, int size,
                            double split_ratio, std::uint64_t split_seed, const KeyPolicy& policy,
                            const std::filesystem::path& out_root) {
  cfg.validate();
  if (size <= 0 || size % cfg.dimension_multiple() != 0) {
    throw DimensionError("image size " + std::to_string(size) + " not divisible by " +
                         std::to_string(cfg.dimension_multiple()) + " for " + cfg.describe());
  }
  if (!(split_ratio >= 0.0 && split_ratio <= 1.0)) throw ArgumentError("split ratio must be in [0, 1]");
  if (!std::filesystem::is_directory(src_dir)) throw DataError("not a directory: " + src_dir.string());

  DatasetBuild b;
  std::vector<std::string> ids;
  for (const auto& path : list_png_files(src_dir)) {
    ImageTensor img;
    try {
      img = read_png(path);
    } catch (const DataError&) {
      ++b.skipped;
      b.skipped_files.push_back(path.filename().string());
      continue;
    }
    const std::string id = path.stem().string();
    write_png(out_root / "plain" / (id + ".png"), square_resize(img, size));
    ids.push_back(id);
  }
  if (ids.empty()) throw DataError("no decodable PNG images in " + src_dir.string());

  Rng rng(split_seed);
  for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[rng.below(i)]);
  const std::size_t n_train = static_cast<std::size_t>(std::llround(split_ratio * static_cast<double>(ids.size())));

  for (PairManifest* m : {&b.train, &b.val}) {
    m->root = out_root;
    m->scheme = cfg;
    m->key_policy = policy;
    m->image_size = size;
  }
  b.train.split = "train";
  b.val.split = "val";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto& m = i < n_train ? b.train : b.val;
    m.entries.push_back({ids[i], std::filesystem::path("plain") / (ids[i] + ".png")});
  }
  auto by_id = [](const ManifestEntry& a, const ManifestEntry& c) { return a.id < c.id; };
  std::sort(b.train.entries.begin(), b.train.entries.end(), by_id);
  std::sort(b.val.entries.begin(), b.val.entries.end(), by_id);
  write_manifest(out_root / "manifest-train.json", b.train);
  write_manifest(out_root / "manifest-val.json", b.val);
  return b;
}

MasterKey epoch_key(const KeyPolicy& policy, std::uint64_t epoch, const std::optional<MasterKey>& fixed_key) {
  if (policy.kind == KeyPolicy::Kind::PerEpoch) {
    return derive_epoch_key(MasterKey::from_seed(policy.seed), policy.seed, epoch);
  }
  if (!fixed_key) throw ArgumentError("fixed key policy requires the key (--key-file or --key-hex)");
  if (fixed_key->fingerprint() != policy.key_fingerprint) {
    throw DataError("key fingerprint " + fixed_key->fingerprint() + " does not match manifest " +
                    policy.key_fingerprint);
  }
  return *fixed_key;
}

PairSource::PairSource(PairManifest m, std::optional<MasterKey> fixed_key)
    : m_(std::move(m)), fixed_key_(std::move(fixed_key)) {
  plain_.reserve(m_.entries.size());
  for (const auto& e : m_.entries) {
    ImageTensor img;
    try {
      img = read_png(m_.plain_file(e));
    } catch (const Error& err) {
      throw DataError("entry " + e.id + ": " + err.what());
    }
    if (img.width() != m_.image_size || img.height() != m_.image_size) {
      throw DataError("entry " + e.id + " has the wrong size");
    }
    plain_.push_back(std::move(img));
  }
}

Pair PairSource::pair(std::size_t i, std::uint64_t epoch) const {
  const MasterKey key = key_for_epoch(epoch);
  return {m_.entries[i].id, plain_[i], encrypt(plain_[i], key, m_.scheme), epoch};
}

std::vector<ImageTensor> PairSource::encrypted_epoch(std::uint64_t epoch, const SchemeConfig& cfg) const {
  const MasterKey key = key_for_epoch(epoch);
  std::vector<ImageTensor> out;
  out.reserve(plain_.size());
  for (const auto& img : plain_) out.push_back(encrypt(img, key, cfg));
  return out;
}

std::vector<Pair> epoch_pairs(const PairManifest& m, std::uint64_t epoch, const std::optional<MasterKey>& fixed_key) {
  PairSource src(m, fixed_key);
  std::vector<Pair> out;
  for (std::size_t i = 0; i < src.size(); ++i) out.push_back(src.pair(i, epoch));
  return out;
}

int export_pairs(const PairManifest& m, const MasterKey& key, const std::filesystem::path& out_dir) {
  PairManifest out = m;
  out.root = out_dir;
  out.key_policy = KeyPolicy::fixed(key);
  out.entries.clear();
  int written = 0;
  try {
    for (const auto& e : m.entries) {
      const ImageTensor plain = read_png(m.plain_file(e));
      const auto rel = std::filesystem::path("plain") / (e.id + ".png");
      write_png(out_dir / rel, plain);
      write_png(out_dir / "encrypted" / (e.id + ".png"), encrypt(plain, key, m.scheme));
      out.entries.push_back({e.id, rel});
      ++written;
    }
    write_manifest(out_dir / "manifest.json", out);
  } catch (const std::exception& err) {
    throw DataError("export aborted after " + std::to_string(written) + " of " + std::to_string(m.entries.size()) +
                    " pairs: " + err.what());
  }
  return written;
}

}  // namespace cipherbreak
