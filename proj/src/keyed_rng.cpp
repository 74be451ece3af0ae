#include "cipherbreak/keyed_rng.hpp"

#include <openssl/evp.h>
#include <openssl/rand.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>

#include "cipherbreak/errors.hpp"

namespace cipherbreak {

namespace {

constexpr std::string_view kStreamDomain = "cipherbreak.keyed-rng.v1";
constexpr std::string_view kFingerprintDomain = "cipherbreak.fingerprint.v1";
constexpr std::string_view kSeedKeyDomain = "cipherbreak.seed-key.v1";
constexpr std::string_view kKeyFileTag = "cipherbreak-key v1";

void put_le64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_str(std::vector<std::uint8_t>& out, std::string_view s) {
  out.insert(out.end(), s.begin(), s.end());
  out.push_back(0);
}

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s;
  s.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    s.push_back(kDigits[b >> 4]);
    s.push_back(kDigits[b & 15]);
  }
  return s;
}

}  // namespace

std::array<std::uint8_t, 32> sha256(std::span<const std::uint8_t> data) {
  std::array<std::uint8_t, 32> out{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 ||
      len != out.size()) {
    throw Error("SHA-256 digest failed");
  }
  return out;
}

std::string sha256_hex(std::span<const std::uint8_t> data) {
  auto d = sha256(data);
  return to_hex(d);
}

MasterKey MasterKey::from_hex(std::string_view hex) {
  while (!hex.empty() && std::isspace(static_cast<unsigned char>(hex.back()))) hex.remove_suffix(1);
  while (!hex.empty() && std::isspace(static_cast<unsigned char>(hex.front()))) hex.remove_prefix(1);
  if (hex.size() != 2 * kSize) {
    throw ArgumentError("master key must be exactly 64 hex characters (32 bytes), got " +
                        std::to_string(hex.size()));
  }
  Bytes b{};
  for (std::size_t i = 0; i < kSize; ++i) {
    int hi = hex_value(hex[2 * i]);
    int lo = hex_value(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw ArgumentError("master key contains a non-hex character");
    b[i] = static_cast<std::uint8_t>(hi * 16 + lo);
  }
  return MasterKey(b);
}

MasterKey MasterKey::from_seed(std::uint64_t seed) {
  std::vector<std::uint8_t> msg;
  put_str(msg, kSeedKeyDomain);
  put_le64(msg, seed);
  return MasterKey(sha256(msg));
}

MasterKey MasterKey::random() {
  Bytes b{};
  if (RAND_bytes(b.data(), static_cast<int>(b.size())) != 1) throw Error("RAND_bytes failed");
  return MasterKey(b);
}

std::string MasterKey::to_hex() const { return cipherbreak::to_hex(bytes_); }

std::string MasterKey::fingerprint() const {
  std::vector<std::uint8_t> msg;
  put_str(msg, kFingerprintDomain);
  msg.insert(msg.end(), bytes_.begin(), bytes_.end());
  auto d = sha256(msg);
  return cipherbreak::to_hex(std::span(d).first(8));
}

MasterKey MasterKey::with_bit_flipped(std::size_t bit) const {
  if (bit >= kSize * 8) throw ArgumentError("key bit index out of range");
  Bytes b = bytes_;
  b[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
  return MasterKey(b);
}

MasterKey read_key_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open key file " + path.string());
  std::string tag, hex;
  std::getline(in, tag);
  std::getline(in, hex);
  if (tag != kKeyFileTag) {
    throw DataError("key file " + path.string() + " has unsupported header (expected '" +
                    std::string(kKeyFileTag) + "')");
  }
  return MasterKey::from_hex(hex);
}

void write_key_file(const std::filesystem::path& path, const MasterKey& key) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write key file " + path.string());
  out << kKeyFileTag << '\n' << key.to_hex() << '\n';
  if (!out) throw DataError("failed writing key file " + path.string());
}

std::string_view to_string(SubKeyLabel label) {
  switch (label) {
    case SubKeyLabel::K1: return "K1";
    case SubKeyLabel::K2: return "K2";
    case SubKeyLabel::K3: return "K3";
    case SubKeyLabel::K4: return "K4";
    case SubKeyLabel::Extra: return "extra";
  }
  return "?";
}

SubKeyStream::SubKeyStream(const MasterKey& key, SubKeyLabel label,
                           std::span<const std::uint64_t> context)
    : label_(label) {
  switch (label) {
    case SubKeyLabel::K1:
    case SubKeyLabel::K2:
    case SubKeyLabel::K3:
    case SubKeyLabel::K4:
    case SubKeyLabel::Extra:
      break;
    default:
      throw ArgumentError("invalid subkey label");
  }
  std::vector<std::uint8_t> msg;
  put_str(msg, kStreamDomain);
  msg.insert(msg.end(), key.bytes().begin(), key.bytes().end());
  msg.push_back(static_cast<std::uint8_t>(label));
  put_le64(msg, context.size());
  for (auto w : context) put_le64(msg, w);
  seed_ = sha256(msg);
}

void SubKeyStream::refill() {
  std::array<std::uint8_t, 40> msg{};
  std::copy(seed_.begin(), seed_.end(), msg.begin());
  for (int i = 0; i < 8; ++i) msg[32 + i] = static_cast<std::uint8_t>(block_counter_ >> (8 * i));
  auto d = sha256(msg);
  for (int w = 0; w < 4; ++w) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(d[8 * w + i]) << (8 * i);
    block_[w] = v;
  }
  ++block_counter_;
  block_pos_ = 0;
}

std::uint64_t SubKeyStream::next_u64() {
  if (block_pos_ == 4) refill();
  ++word_index_;
  return block_[block_pos_++];
}

std::uint64_t SubKeyStream::uniform(std::uint64_t k) {
  if (k == 0) throw ArgumentError("uniform(0) has no values");
  const std::uint64_t threshold = (0 - k) % k;  // 2^64 mod k
  for (;;) {
    std::uint64_t x = next_u64();
    if (x >= threshold) return x % k;
  }
}

SubKeyStream derive_stream(const MasterKey& key, SubKeyLabel label,
                           std::span<const std::uint64_t> context) {
  return SubKeyStream(key, label, context);
}

std::vector<std::uint32_t> gen_permutation(SubKeyStream& s, std::size_t n) {
  if (n == 0) throw ArgumentError("gen_permutation: empty input (n = 0)");
  std::vector<std::uint32_t> p(n);
  std::iota(p.begin(), p.end(), 0u);
  for (std::size_t i = n - 1; i > 0; --i) {
    auto j = static_cast<std::size_t>(s.uniform(i + 1));
    std::swap(p[i], p[j]);
  }
  return p;
}

std::vector<std::uint8_t> gen_bits(SubKeyStream& s, std::size_t n) {
  std::vector<std::uint8_t> bits(n);
  std::uint64_t word = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i % 64 == 0) word = s.next_u64();
    bits[i] = static_cast<std::uint8_t>((word >> (i % 64)) & 1u);
  }
  return bits;
}

std::uint32_t gen_choice(SubKeyStream& s, std::uint32_t k) {
  if (k == 0) throw ArgumentError("gen_choice: k must be >= 1");
  return static_cast<std::uint32_t>(s.uniform(k));
}

std::vector<std::uint32_t> invert_permutation(std::span<const std::uint32_t> perm) {
  std::vector<std::uint32_t> inv(perm.size());
  std::vector<bool> seen(perm.size(), false);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    if (perm[i] >= perm.size() || seen[perm[i]]) throw ArgumentError("not a permutation");
    seen[perm[i]] = true;
    inv[perm[i]] = static_cast<std::uint32_t>(i);
  }
  return inv;
}

MasterKey derive_epoch_key(const MasterKey& master, std::uint64_t seed, std::uint64_t epoch) {
  const std::uint64_t ctx[] = {seed, epoch};
  auto s = derive_stream(master, SubKeyLabel::Extra, ctx);
  MasterKey::Bytes b{};
  for (int w = 0; w < 4; ++w) {
    auto v = s.next_u64();
    for (int i = 0; i < 8; ++i) b[8 * w + i] = static_cast<std::uint8_t>(v >> (8 * i));
  }
  return MasterKey(b);
}

}  // namespace cipherbreak
