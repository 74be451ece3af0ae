#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "cipherbreak/image.hpp"
#include "cipherbreak/keyed_rng.hpp"

namespace cipherbreak {

enum class Scheme { LE, PE, ELE, EtC };

std::string_view to_string(Scheme s);
// Case-insensitive: "le", "pe", "ele", "etc".
Scheme parse_scheme(std::string_view name);

struct SchemeConfig {
  Scheme scheme = Scheme::EtC;
  int block_size = 8;
  // Block scrambling only (EtC step 1 / ELE outer permutation).
  bool scramble_only = false;

  static SchemeConfig defaults(Scheme s);
  // EtC: M in {8, 16}; PE: M = 1; LE/ELE: M = 4; scramble_only only for EtC/ELE.
  void validate() const;
  // Size the image dimensions must be divisible by.
  int dimension_multiple() const;
  std::string describe() const;

  friend bool operator==(const SchemeConfig&, const SchemeConfig&) = default;
};

struct CipherRecord {
  SchemeConfig scheme;
  std::string key_fingerprint;
  std::string image_id;
};

// p' = p xor (2^L - 1) when r = 1, else p.
constexpr std::uint8_t negative_positive(std::uint8_t p, bool r, int bits = 8) {
  return r ? static_cast<std::uint8_t>(p ^ ((1u << bits) - 1u)) : p;
}

// The six orderings of (R, G, B); output channel c reads input channel perm[c].
inline constexpr std::array<std::array<int, 3>, 6> kChannelPerms = {{
    {0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
int channel_perm_inverse(int choice);

// All key-dependent draws for one image, generated before any pixel is touched
// so that decryption can consume them in reverse step order.
struct EtcPlan {
  int block_size = 8;
  bool scramble_only = false;
  std::vector<std::uint32_t> permutation;  // output block i <- input block permutation[i]
  std::vector<std::uint8_t> dihedral;      // K2, per output block, 0..7
  std::vector<std::uint8_t> invert;        // K3, per output block, shared by all channels
  std::vector<std::uint8_t> channels;      // K4, per output block, 0..5
};
EtcPlan make_etc_plan(const MasterKey& key, const SchemeConfig& cfg, int width, int height);
ImageTensor apply_etc(const ImageTensor& x, const EtcPlan& plan);
ImageTensor invert_etc(const ImageTensor& y, const EtcPlan& plan);

struct PePlan {
  std::vector<std::uint8_t> invert;    // K3, 3 bits per pixel (channel-wise)
  std::vector<std::uint8_t> channels;  // K4, per pixel
};
PePlan make_pe_plan(const MasterKey& key, int width, int height);
ImageTensor apply_pe(const ImageTensor& x, const PePlan& plan);
ImageTensor invert_pe(const ImageTensor& y, const PePlan& plan);

// One 4x4 block's pixel operation: position shuffle then channel-wise
// negative-positive per output position.
struct BlockPixelKey {
  static constexpr int kBlock = 4;
  static constexpr int kPositions = kBlock * kBlock;
  std::vector<std::uint32_t> positions;  // output position j <- input position positions[j]
  std::vector<std::uint8_t> invert;      // 3 bits per output position
  static BlockPixelKey identity();
};
Tile apply_block_pixel_key(const Tile& t, const BlockPixelKey& k);
Tile invert_block_pixel_key(const Tile& t, const BlockPixelKey& k);

// LE: one BlockPixelKey shared by every 4x4 block.
BlockPixelKey make_le_plan(const MasterKey& key);
ImageTensor apply_le(const ImageTensor& x, const BlockPixelKey& plan);
ImageTensor invert_le(const ImageTensor& y, const BlockPixelKey& plan);

// ELE: independent BlockPixelKey per 4x4 block, then a 16x16 block scramble.
struct ElePlan {
  static constexpr int kScrambleBlock = 16;
  bool scramble_only = false;
  std::vector<BlockPixelKey> block_keys;   // per 4x4 block, row-major over the image
  std::vector<std::uint32_t> permutation;  // over 16x16 blocks
};
ElePlan make_ele_plan(const MasterKey& key, const SchemeConfig& cfg, int width, int height);
ImageTensor apply_ele(const ImageTensor& x, const ElePlan& plan);
ImageTensor invert_ele(const ImageTensor& y, const ElePlan& plan);

ImageTensor etc_encrypt(const ImageTensor& x, const MasterKey& key, const SchemeConfig& cfg);
ImageTensor etc_decrypt(const ImageTensor& y, const MasterKey& key, const SchemeConfig& cfg);
ImageTensor pe_encrypt(const ImageTensor& x, const MasterKey& key);
ImageTensor pe_decrypt(const ImageTensor& y, const MasterKey& key);
ImageTensor le_encrypt(const ImageTensor& x, const MasterKey& key);
ImageTensor le_decrypt(const ImageTensor& y, const MasterKey& key);
ImageTensor ele_encrypt(const ImageTensor& x, const MasterKey& key, bool scramble_only = false);
ImageTensor ele_decrypt(const ImageTensor& y, const MasterKey& key, bool scramble_only = false);

// Dispatch on cfg.scheme.
ImageTensor encrypt(const ImageTensor& x, const MasterKey& key, const SchemeConfig& cfg);
ImageTensor decrypt(const ImageTensor& y, const MasterKey& key, const SchemeConfig& cfg);

}  // namespace cipherbreak
