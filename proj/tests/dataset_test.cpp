#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "cipherbreak/dataset.hpp"
#include "cipherbreak/errors.hpp"
#include "cipherbreak/image_io.hpp"
#include "cipherbreak/synthetic.hpp"

using namespace cipherbreak;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("cb_dataset_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Source images are larger and non-square so crop + resize is exercised.
fs::path make_source(const std::string& name, int count) {
  const auto dir = scratch(name + "_src");
  for (int i = 0; i < count; ++i) {
    const auto sq = synthetic::shapes_image(48, 11, static_cast<std::uint64_t>(i));
    ImageTensor wide(56, 48);
    for (int y = 0; y < 48; ++y)
      for (int x = 0; x < 56; ++x)
        for (int c = 0; c < 3; ++c) wide.at(x, y, c) = sq.at(std::min(x, 47), y, c);
    char buf[32];
    std::snprintf(buf, sizeof buf, "img_%03d.png", i);
    write_png(dir / buf, wide);
  }
  return dir;
}

std::string file_text(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(BuildManifest, SplitArithmeticAndResize) {
  const auto src = make_source("split", 100);
  const auto out = scratch("split_out");
  const auto b = build_manifest(src, SchemeConfig::defaults(Scheme::EtC), 32, 0.9, 5, KeyPolicy::per_epoch(1), out);
  EXPECT_EQ(b.train.entries.size(), 90u);
  EXPECT_EQ(b.val.entries.size(), 10u);
  EXPECT_EQ(b.skipped, 0);
  std::set<std::string> ids;
  for (const auto* m : {&b.train, &b.val})
    for (const auto& e : m->entries) ids.insert(e.id);
  EXPECT_EQ(ids.size(), 100u);
  const auto img = read_png(b.train.plain_file(b.train.entries[0]));
  EXPECT_EQ(img.width(), 32);
  EXPECT_EQ(img.height(), 32);
  b.train.validate_files();
  EXPECT_TRUE(fs::exists(out / "manifest-train.json"));
  EXPECT_TRUE(fs::exists(out / "manifest-val.json"));
}

TEST(BuildManifest, SeededSplitIsDeterministic) {
  const auto src = make_source("det", 20);
  const auto a = build_manifest(src, SchemeConfig::defaults(Scheme::EtC), 32, 0.5, 7, KeyPolicy::per_epoch(1),
                                scratch("det_a"));
  const auto b = build_manifest(src, SchemeConfig::defaults(Scheme::EtC), 32, 0.5, 7, KeyPolicy::per_epoch(1),
                                scratch("det_b"));
  const auto c = build_manifest(src, SchemeConfig::defaults(Scheme::EtC), 32, 0.5, 8, KeyPolicy::per_epoch(1),
                                scratch("det_c"));
  EXPECT_EQ(to_json(a.train).dump(), to_json(b.train).dump());
  EXPECT_NE(to_json(a.train).dump(), to_json(c.train).dump());
}

TEST(BuildManifest, RatioOneLeavesValEmpty) {
  const auto src = make_source("ratio1", 10);
  const auto b = build_manifest(src, SchemeConfig::defaults(Scheme::EtC), 32, 1.0, 1, KeyPolicy::per_epoch(1),
                                scratch("ratio1_out"));
  EXPECT_EQ(b.train.entries.size(), 10u);
  EXPECT_TRUE(b.val.entries.empty());
}

TEST(BuildManifest, ErrorsAndSkippedFiles) {
  const auto empty = scratch("empty");
  EXPECT_THROW(build_manifest(empty, SchemeConfig::defaults(Scheme::EtC), 32, 0.9, 1, KeyPolicy::per_epoch(1),
                              scratch("empty_out")),
               DataError);
  const auto src = make_source("skip", 4);
  std::ofstream(src / "broken.png") << "not a png";
  const auto b = build_manifest(src, SchemeConfig::defaults(Scheme::EtC), 32, 1.0, 1, KeyPolicy::per_epoch(1),
                                scratch("skip_out"));
  EXPECT_EQ(b.skipped, 1);
  EXPECT_EQ(b.train.entries.size(), 4u);
  // 36 is not a multiple of the EtC block size.
  EXPECT_THROW(build_manifest(src, SchemeConfig::defaults(Scheme::EtC), 36, 1.0, 1, KeyPolicy::per_epoch(1),
                              scratch("skip_out2")),
               DimensionError);
}

TEST(EpochPairs, PerEpochKeysDifferAndDecrypt) {
  const auto src = make_source("epochs", 6);
  const auto b = build_manifest(src, SchemeConfig::defaults(Scheme::EtC), 32, 1.0, 1, KeyPolicy::per_epoch(42),
                                scratch("epochs_out"));
  const auto e0 = epoch_pairs(b.train, 0);
  const auto e1 = epoch_pairs(b.train, 1);
  const auto e0_again = epoch_pairs(b.train, 0);
  ASSERT_EQ(e0.size(), 6u);
  std::set<std::string> fingerprints;
  for (std::uint64_t e = 0; e < 8; ++e) fingerprints.insert(epoch_key(b.train.key_policy, e, std::nullopt).fingerprint());
  EXPECT_EQ(fingerprints.size(), 8u);
  for (std::size_t i = 0; i < e0.size(); ++i) {
    EXPECT_EQ(e0[i].plain, e1[i].plain);
    EXPECT_NE(e0[i].encrypted, e1[i].encrypted);
    EXPECT_EQ(e0[i].encrypted, e0_again[i].encrypted);
    EXPECT_EQ(e0[i].encrypted.width(), e0[i].plain.width());
    const auto key = epoch_key(b.train.key_policy, e1[i].epoch_key_id, std::nullopt);
    EXPECT_EQ(decrypt(e1[i].encrypted, key, b.train.scheme), e1[i].plain);
  }
  EXPECT_FALSE(fs::exists(b.train.root / "encrypted"));
}

TEST(EpochPairs, FixedPolicyRepeatsAndChecksFingerprint) {
  const auto src = make_source("fixed", 3);
  const MasterKey key = MasterKey::from_seed(3);
  const auto b = build_manifest(src, SchemeConfig::defaults(Scheme::PE), 32, 1.0, 1, KeyPolicy::fixed(key),
                                scratch("fixed_out"));
  const auto e0 = epoch_pairs(b.train, 0, key);
  const auto e5 = epoch_pairs(b.train, 5, key);
  for (std::size_t i = 0; i < e0.size(); ++i) EXPECT_EQ(e0[i].encrypted, e5[i].encrypted);
  EXPECT_THROW(epoch_pairs(b.train, 0, MasterKey::from_seed(4)), DataError);
  EXPECT_THROW(epoch_pairs(b.train, 0), ArgumentError);
}

TEST(Manifest, JsonRoundTripWithoutKeyBytes) {
  const auto src = make_source("json", 4);
  const MasterKey key = MasterKey::from_seed(9);
  const auto out = scratch("json_out");
  const auto b = build_manifest(src, SchemeConfig::defaults(Scheme::LE), 32, 0.5, 1, KeyPolicy::fixed(key), out);
  const auto back = read_manifest(out / "manifest-train.json");
  EXPECT_EQ(to_json(back).dump(), to_json(b.train).dump());
  EXPECT_EQ(back.root, out);
  const auto text = file_text(out / "manifest-train.json");
  EXPECT_EQ(text.find(key.to_hex()), std::string::npos);
  EXPECT_NE(text.find(key.fingerprint()), std::string::npos);
  EXPECT_NE(text.find("\"schema_version\""), std::string::npos);
}

TEST(ExportPairs, ReloadsByteIdenticalAndDecrypts) {
  const auto src = make_source("export", 5);
  const auto b = build_manifest(src, SchemeConfig::defaults(Scheme::ELE), 32, 1.0, 1, KeyPolicy::per_epoch(2),
                                scratch("export_out"));
  const MasterKey key = MasterKey::from_seed(21);
  const auto out = scratch("export_frozen");
  EXPECT_EQ(export_pairs(b.train, key, out), 5);
  const auto frozen = read_manifest(out / "manifest.json");
  EXPECT_EQ(frozen.key_policy.kind, KeyPolicy::Kind::Fixed);
  EXPECT_EQ(frozen.key_policy.key_fingerprint, key.fingerprint());
  for (const auto& e : frozen.entries) {
    const auto plain = read_png(frozen.plain_file(e));
    EXPECT_EQ(plain, read_png(b.train.root / "plain" / (e.id + ".png")));
    const auto enc = read_png(out / "encrypted" / (e.id + ".png"));
    EXPECT_EQ(decrypt(enc, key, frozen.scheme), plain);
  }
  EXPECT_EQ(file_text(out / "manifest.json").find(key.to_hex()), std::string::npos);
}
