#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cipherbreak {

// 256-bit secret. Never printed; use fingerprint() in logs and metadata.
class MasterKey {
 public:
  static constexpr std::size_t kSize = 32;
  using Bytes = std::array<std::uint8_t, kSize>;

  MasterKey() = default;
  explicit MasterKey(const Bytes& bytes) : bytes_(bytes) {}

  static MasterKey from_hex(std::string_view hex);
  // Deterministic key for tests and synthetic attacker-side keys.
  static MasterKey from_seed(std::uint64_t seed);
  static MasterKey random();

  const Bytes& bytes() const { return bytes_; }
  std::string to_hex() const;
  // 16 hex chars of a domain-separated SHA-256; reveals nothing about the key.
  std::string fingerprint() const;
  MasterKey with_bit_flipped(std::size_t bit) const;

  friend bool operator==(const MasterKey&, const MasterKey&) = default;

 private:
  Bytes bytes_{};
};

// Key file: first line "cipherbreak-key v1", second line 64 hex chars.
MasterKey read_key_file(const std::filesystem::path& path);
void write_key_file(const std::filesystem::path& path, const MasterKey& key);

enum class SubKeyLabel : std::uint8_t { K1 = 1, K2 = 2, K3 = 3, K4 = 4, Extra = 0xE0 };

std::string_view to_string(SubKeyLabel label);

// Counter-mode generator: seed = SHA-256(domain || key || label || context),
// block j = SHA-256(seed || le64(j)), each block yields four little-endian
// 64-bit words consumed in order. Copying a stream forks identical state.
class SubKeyStream {
 public:
  SubKeyStream(const MasterKey& key, SubKeyLabel label,
               std::span<const std::uint64_t> context = {});

  SubKeyLabel label() const { return label_; }
  std::uint64_t draws() const { return word_index_; }

  std::uint64_t next_u64();
  // Unbiased integer in [0, k) by rejection of the low 2^64 mod k values.
  std::uint64_t uniform(std::uint64_t k);

 private:
  void refill();

  SubKeyLabel label_;
  std::array<std::uint8_t, 32> seed_{};
  std::array<std::uint64_t, 4> block_{};
  std::uint64_t block_counter_ = 0;
  std::uint64_t word_index_ = 0;
  int block_pos_ = 4;
};

SubKeyStream derive_stream(const MasterKey& key, SubKeyLabel label,
                           std::span<const std::uint64_t> context = {});

// Fisher-Yates from the top: for i = n-1..1, swap(p[i], p[uniform(i+1)]).
std::vector<std::uint32_t> gen_permutation(SubKeyStream& s, std::size_t n);
// ceil(n/64) words; bit i is bit (i mod 64) of word i/64.
std::vector<std::uint8_t> gen_bits(SubKeyStream& s, std::size_t n);
std::uint32_t gen_choice(SubKeyStream& s, std::uint32_t k);

std::vector<std::uint32_t> invert_permutation(std::span<const std::uint32_t> perm);

// Training key for epoch `epoch` under a per-epoch key schedule.
MasterKey derive_epoch_key(const MasterKey& master, std::uint64_t seed, std::uint64_t epoch);

// Hex SHA-256 of arbitrary bytes; used for input fingerprints in run manifests.
std::string sha256_hex(std::span<const std::uint8_t> data);
std::array<std::uint8_t, 32> sha256(std::span<const std::uint8_t> data);

}  // namespace cipherbreak
