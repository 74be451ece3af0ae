#include "cipherbreak/ciphers.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "cipherbreak/errors.hpp"
#include "cipherbreak/synthetic.hpp"
#include "test_util.hpp"

namespace cipherbreak {
namespace {

using testing::random_image;

const std::vector<SchemeConfig> kAllSchemes = {
    {Scheme::LE, 4, false}, {Scheme::PE, 1, false}, {Scheme::ELE, 4, false},
    {Scheme::EtC, 8, false}, {Scheme::EtC, 16, false}};

double exact_match_rate(const ImageTensor& a, const ImageTensor& b) {
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.size(); i += 3) {
    same += a.data()[i] == b.data()[i] && a.data()[i + 1] == b.data()[i + 1] &&
            a.data()[i + 2] == b.data()[i + 2];
  }
  return static_cast<double>(same) / (a.size() / 3);
}

TEST(NegativePositive, UnitVectorAndInvolution) {
  EXPECT_EQ(negative_positive(0, true), 255);
  EXPECT_EQ(negative_positive(0, false), 0);
  EXPECT_EQ(negative_positive(200, true), 55);
  for (int p = 0; p < 256; ++p) {
    for (bool r : {false, true}) {
      auto v = static_cast<std::uint8_t>(p);
      EXPECT_EQ(negative_positive(negative_positive(v, r), r), v);
    }
  }
}

TEST(SchemeConfig, Validation) {
  EXPECT_NO_THROW((SchemeConfig{Scheme::EtC, 8, true}.validate()));
  EXPECT_THROW((SchemeConfig{Scheme::EtC, 4, false}.validate()), ArgumentError);
  EXPECT_THROW((SchemeConfig{Scheme::PE, 2, false}.validate()), ArgumentError);
  EXPECT_THROW((SchemeConfig{Scheme::LE, 8, false}.validate()), ArgumentError);
  EXPECT_THROW((SchemeConfig{Scheme::PE, 1, true}.validate()), ArgumentError);
  EXPECT_THROW((SchemeConfig{Scheme::LE, 4, true}.validate()), ArgumentError);
  EXPECT_NO_THROW((SchemeConfig{Scheme::ELE, 4, true}.validate()));
  EXPECT_EQ(parse_scheme("EtC"), Scheme::EtC);
  EXPECT_THROW(parse_scheme("aes"), ArgumentError);
}

TEST(ChannelPerms, InverseTable) {
  for (int k = 0; k < 6; ++k) {
    const auto& p = kChannelPerms[k];
    const auto& q = kChannelPerms[channel_perm_inverse(k)];
    for (int c = 0; c < 3; ++c) EXPECT_EQ(p[q[c]], c);
  }
}

TEST(Ciphers, RoundTripAllSchemes) {
  for (const auto& cfg : kAllSchemes) {
    for (int i = 0; i < 20; ++i) {
      auto x = random_image(64, 64, 100 + i);
      auto key = MasterKey::from_seed(static_cast<std::uint64_t>(i % 5));
      auto y = encrypt(x, key, cfg);
      ASSERT_EQ(y.width(), x.width());
      ASSERT_EQ(y.height(), x.height());
      ASSERT_NE(y, x) << cfg.describe();
      ASSERT_EQ(decrypt(y, key, cfg), x) << cfg.describe();
    }
  }
}

TEST(Ciphers, RoundTripNonSquare) {
  auto x = random_image(96, 32, 7);
  auto key = MasterKey::from_seed(9);
  for (const auto& cfg : kAllSchemes) EXPECT_EQ(decrypt(encrypt(x, key, cfg), key, cfg), x);
}

TEST(Ciphers, DimensionErrors) {
  auto key = MasterKey::from_seed(1);
  auto bad = random_image(60, 64, 1);
  EXPECT_THROW(etc_encrypt(bad, key, {Scheme::EtC, 8, false}), DimensionError);
  EXPECT_THROW(le_encrypt(random_image(62, 64, 1), key), DimensionError);
  EXPECT_THROW(ele_encrypt(random_image(40, 40, 1), key), DimensionError);
  auto y = etc_encrypt(random_image(64, 64, 2), key, {Scheme::EtC, 8, false});
  auto plan = make_etc_plan(key, {Scheme::EtC, 8, false}, 64, 64);
  EXPECT_THROW(invert_etc(random_image(32, 32, 2), plan), DimensionError);
}

TEST(Ciphers, DeterministicGivenKey) {
  auto x = random_image(64, 64, 3);
  auto key = MasterKey::from_seed(4);
  for (const auto& cfg : kAllSchemes) EXPECT_EQ(encrypt(x, key, cfg), encrypt(x, key, cfg));
}

TEST(Ciphers, WrongKeyExactMatchRateIsLow) {
  for (const auto& cfg : kAllSchemes) {
    double total = 0;
    constexpr int kImages = 10;
    for (int i = 0; i < kImages; ++i) {
      auto x = synthetic::textured_image(64, 5, i);
      auto y = encrypt(x, MasterKey::from_seed(1000 + i), cfg);
      total += exact_match_rate(decrypt(y, MasterKey::from_seed(2000 + i), cfg), x);
    }
    // PE acts per pixel through a 48-element group (8 inversion masks x 6
    // channel orders), so a wrong key hits the identity with p >= 1/48.
    const double bound = cfg.scheme == Scheme::PE ? 1.0 / 48 + 0.01 : 0.02;
    EXPECT_LE(total / kImages, bound) << cfg.describe();
  }
}

TEST(Etc, NegativePositiveBranchIdentityWhenBitIsZero) {
  auto x = random_image(16, 16, 5);
  EtcPlan plan;
  plan.block_size = 8;
  plan.permutation = {0, 1, 2, 3};
  plan.dihedral = {0, 0, 0, 0};
  plan.invert = {0, 0, 0, 0};
  plan.channels = {0, 0, 0, 0};
  EXPECT_EQ(apply_etc(x, plan), x);

  // r = 1 on block 3 complements all three channels of that block only.
  plan.invert = {0, 0, 0, 1};
  auto y = apply_etc(x, plan);
  for (int yy = 0; yy < 16; ++yy)
    for (int xx = 0; xx < 16; ++xx)
      for (int c = 0; c < 3; ++c) {
        const bool in_block3 = xx >= 8 && yy >= 8;
        EXPECT_EQ(y.at(xx, yy, c), in_block3 ? 255 - x.at(xx, yy, c) : x.at(xx, yy, c));
      }
  EXPECT_EQ(invert_etc(y, plan), x);
}

TEST(Etc, ScrambleOnlyPreservesBlockMultiset) {
  const SchemeConfig cfg{Scheme::EtC, 8, true};
  for (int i = 0; i < 10; ++i) {
    auto x = random_image(64, 64, 200 + i);
    auto key = MasterKey::from_seed(static_cast<std::uint64_t>(i));
    auto y = etc_encrypt(x, key, cfg);
    auto bx = partition(x, 8).blocks, by = partition(y, 8).blocks;
    auto key_of = [](const Tile& t) { return t.data; };
    std::vector<std::vector<std::uint8_t>> sx, sy;
    for (auto& t : bx) sx.push_back(key_of(t));
    for (auto& t : by) sy.push_back(key_of(t));
    std::sort(sx.begin(), sx.end());
    std::sort(sy.begin(), sy.end());
    EXPECT_EQ(sx, sy);
    EXPECT_NE(x, y);
    EXPECT_EQ(etc_decrypt(y, key, cfg), x);
  }
}

TEST(Etc, KeyAvalanche) {
  const SchemeConfig cfg{Scheme::EtC, 8, false};
  double changed = 0;
  int trials = 0;
  for (int i = 0; i < 8; ++i) {
    auto x = synthetic::textured_image(64, 11, i);
    auto key = MasterKey::from_seed(300 + i);
    auto y = etc_encrypt(x, key, cfg);
    for (std::size_t bit : {0u, 77u, 255u}) {
      auto y2 = etc_encrypt(x, key.with_bit_flipped(bit), cfg);
      changed += 1.0 - exact_match_rate(y, y2);
      ++trials;
    }
  }
  EXPECT_GE(changed / trials, 0.30);
}

TEST(Etc, StepsUseSeparateStreams) {
  auto key = MasterKey::from_seed(8);
  auto full = make_etc_plan(key, {Scheme::EtC, 8, false}, 64, 64);
  auto scramble = make_etc_plan(key, {Scheme::EtC, 8, true}, 64, 64);
  EXPECT_EQ(full.permutation, scramble.permutation);
  EXPECT_TRUE(scramble.dihedral.empty());
  EXPECT_EQ(full.dihedral.size(), 64u);
  EXPECT_EQ(full.invert.size(), 64u);
  for (auto d : full.dihedral) EXPECT_LT(d, 8);
  for (auto c : full.channels) EXPECT_LT(c, 6);
}

TEST(Pe, ChannelWiseNegativePositive) {
  ImageTensor black(2, 1, 0);
  PePlan plan;
  plan.invert = {1, 1, 1, 0, 0, 0};
  plan.channels = {3, 0};
  auto y = apply_pe(black, plan);
  for (int c = 0; c < 3; ++c) EXPECT_EQ(y.at(0, 0, c), 255);
  EXPECT_EQ(invert_pe(y, plan), black);

  auto x = random_image(8, 8, 3);
  PePlan identity{std::vector<std::uint8_t>(192, 0), std::vector<std::uint8_t>(64, 0)};
  EXPECT_EQ(apply_pe(x, identity), x);

  // Drawn plans use independent bits per channel (not one shared bit).
  auto drawn = make_pe_plan(MasterKey::from_seed(2), 16, 16);
  int mixed = 0;
  for (std::size_t p = 0; p < 256; ++p) {
    mixed += !(drawn.invert[3 * p] == drawn.invert[3 * p + 1] && drawn.invert[3 * p] == drawn.invert[3 * p + 2]);
  }
  EXPECT_GT(mixed, 100);
}

TEST(Pe, ChannelShuffleThenInvert) {
  ImageTensor x(1, 1);
  x.at(0, 0, 0) = 10;
  x.at(0, 0, 1) = 20;
  x.at(0, 0, 2) = 30;
  PePlan plan{{1, 0, 0}, {5}};  // invert R, then output reads (B, G, R)
  auto y = apply_pe(x, plan);
  EXPECT_EQ(y.at(0, 0, 0), 30);
  EXPECT_EQ(y.at(0, 0, 1), 20);
  EXPECT_EQ(y.at(0, 0, 2), 245);
}

TEST(Le, IdentityKeyAndSharedBlockKey) {
  auto x = random_image(16, 16, 4);
  EXPECT_EQ(apply_le(x, BlockPixelKey::identity()), x);

  // Two blocks with identical content encrypt identically.
  ImageTensor dup(8, 4);
  auto t = testing::random_tile(4, 5);
  for (int b = 0; b < 2; ++b)
    for (int yy = 0; yy < 4; ++yy)
      for (int xx = 0; xx < 4; ++xx)
        for (int c = 0; c < 3; ++c) dup.at(4 * b + xx, yy, c) = t.at(xx, yy, c);
  auto y = le_encrypt(dup, MasterKey::from_seed(6));
  auto g = partition(y, 4);
  EXPECT_EQ(g.blocks[0], g.blocks[1]);
  EXPECT_NE(g.blocks[0], t);
}

TEST(Ele, DuplicateBlocksEncryptDifferently) {
  ImageTensor dup(32, 16);
  auto t = testing::random_tile(4, 9);
  for (int yy = 0; yy < 16; ++yy)
    for (int xx = 0; xx < 32; ++xx)
      for (int c = 0; c < 3; ++c) dup.at(xx, yy, c) = t.at(xx % 4, yy % 4, c);
  auto key = MasterKey::from_seed(10);
  auto plan = make_ele_plan(key, {Scheme::ELE, 4, false}, 32, 16);
  plan.permutation = {0, 1};
  auto y = apply_ele(dup, plan);
  auto g = partition(y, 4);
  int distinct = 0;
  for (std::size_t i = 1; i < g.blocks.size(); ++i) distinct += g.blocks[i] != g.blocks[0];
  EXPECT_EQ(distinct, static_cast<int>(g.blocks.size()) - 1);
}

TEST(Ele, IdentityPermutationEqualsBlockStage) {
  auto x = random_image(32, 32, 12);
  auto key = MasterKey::from_seed(13);
  auto plan = make_ele_plan(key, {Scheme::ELE, 4, false}, 32, 32);
  std::iota(plan.permutation.begin(), plan.permutation.end(), 0u);
  auto g = partition(x, 4);
  for (std::size_t b = 0; b < g.blocks.size(); ++b) g.blocks[b] = apply_block_pixel_key(g.blocks[b], plan.block_keys[b]);
  EXPECT_EQ(apply_ele(x, plan), integrate(g));
  EXPECT_EQ(invert_ele(apply_ele(x, plan), plan), x);
}

TEST(Ele, ScrambleOnlyRoundTrip) {
  auto x = random_image(64, 64, 14);
  auto key = MasterKey::from_seed(15);
  auto y = ele_encrypt(x, key, true);
  EXPECT_NE(y, x);
  EXPECT_EQ(ele_decrypt(y, key, true), x);
}

}  // namespace
}  // namespace cipherbreak
