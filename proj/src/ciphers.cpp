#include "cipherbreak/ciphers.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>

#include "cipherbreak/errors.hpp"

namespace cipherbreak {

std::string_view to_string(Scheme s) {
  switch (s) {
    case Scheme::LE: return "le";
    case Scheme::PE: return "pe";
    case Scheme::ELE: return "ele";
    case Scheme::EtC: return "etc";
  }
  return "?";
}

Scheme parse_scheme(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "le") return Scheme::LE;
  if (lower == "pe") return Scheme::PE;
  if (lower == "ele") return Scheme::ELE;
  if (lower == "etc") return Scheme::EtC;
  throw ArgumentError("unknown scheme '" + std::string(name) + "' (expected le|pe|ele|etc)");
}

SchemeConfig SchemeConfig::defaults(Scheme s) {
  switch (s) {
    case Scheme::LE: return {Scheme::LE, 4, false};
    case Scheme::PE: return {Scheme::PE, 1, false};
    case Scheme::ELE: return {Scheme::ELE, 4, false};
    case Scheme::EtC: return {Scheme::EtC, 8, false};
  }
  throw ArgumentError("unknown scheme");
}

void SchemeConfig::validate() const {
  switch (scheme) {
    case Scheme::EtC:
      if (block_size != 8 && block_size != 16) {
        throw ArgumentError("EtC block size must be 8 or 16, got " + std::to_string(block_size));
      }
      break;
    case Scheme::PE:
      if (block_size != 1) throw ArgumentError("PE block size must be 1");
      break;
    case Scheme::LE:
    case Scheme::ELE:
      if (block_size != 4) {
        throw ArgumentError(std::string(to_string(scheme)) + " block size must be 4");
      }
      break;
  }
  if (scramble_only && scheme != Scheme::EtC && scheme != Scheme::ELE) {
    throw ArgumentError("scramble-only mode is only defined for EtC and ELE");
  }
}

int SchemeConfig::dimension_multiple() const {
  return scheme == Scheme::ELE ? ElePlan::kScrambleBlock : block_size;
}

std::string SchemeConfig::describe() const {
  std::string s(to_string(scheme));
  s += "-m" + std::to_string(block_size);
  if (scramble_only) s += "-scramble";
  return s;
}

int channel_perm_inverse(int choice) {
  if (choice < 0 || choice >= 6) throw ArgumentError("channel permutation choice out of range");
  const auto& p = kChannelPerms[choice];
  std::array<int, 3> inv{};
  for (int c = 0; c < 3; ++c) inv[p[c]] = c;
  for (int k = 0; k < 6; ++k) {
    if (kChannelPerms[k] == inv) return k;
  }
  throw StructuralError("channel permutation table is not closed under inversion");
}

namespace {

void check_dims(const ImageTensor& x, int multiple) {
  if (x.empty()) throw DimensionError("empty image");
  if (x.width() % multiple != 0 || x.height() % multiple != 0) {
    throw DimensionError("image " + std::to_string(x.width()) + "x" + std::to_string(x.height()) +
                         " is not divisible by " + std::to_string(multiple));
  }
}

void check_plan_size(std::size_t got, std::size_t want) {
  if (got != want) throw DimensionError("image shape does not match the encryption plan");
}

void invert_tile(Tile& t) {
  for (auto& v : t.data) v = negative_positive(v, true);
}

void shuffle_tile_channels(Tile& t, int choice) {
  const auto& p = kChannelPerms[choice];
  for (std::size_t i = 0; i < t.data.size(); i += 3) {
    std::array<std::uint8_t, 3> px = {t.data[i], t.data[i + 1], t.data[i + 2]};
    for (int c = 0; c < 3; ++c) t.data[i + c] = px[p[c]];
  }
}

std::vector<Tile> permute(const std::vector<Tile>& blocks, std::span<const std::uint32_t> perm) {
  std::vector<Tile> out;
  out.reserve(blocks.size());
  for (auto src : perm) out.push_back(blocks[src]);
  return out;
}

std::vector<Tile> unpermute(const std::vector<Tile>& blocks, std::span<const std::uint32_t> perm) {
  std::vector<Tile> out(blocks.size());
  for (std::size_t i = 0; i < perm.size(); ++i) out[perm[i]] = blocks[i];
  return out;
}

std::vector<std::uint8_t> choices(SubKeyStream& s, std::size_t n, std::uint32_t k) {
  std::vector<std::uint8_t> v(n);
  for (auto& c : v) c = static_cast<std::uint8_t>(gen_choice(s, k));
  return v;
}

}  // namespace

// ---- EtC ----

EtcPlan make_etc_plan(const MasterKey& key, const SchemeConfig& cfg, int width, int height) {
  cfg.validate();
  if (cfg.scheme != Scheme::EtC) throw ArgumentError("make_etc_plan requires the EtC scheme");
  if (width <= 0 || height <= 0 || width % cfg.block_size || height % cfg.block_size) {
    throw DimensionError("image dimensions not divisible by EtC block size " +
                         std::to_string(cfg.block_size));
  }
  const std::size_t n = static_cast<std::size_t>(width / cfg.block_size) * (height / cfg.block_size);
  EtcPlan plan;
  plan.block_size = cfg.block_size;
  plan.scramble_only = cfg.scramble_only;
  auto k1 = derive_stream(key, SubKeyLabel::K1);
  plan.permutation = gen_permutation(k1, n);
  if (!cfg.scramble_only) {
    auto k2 = derive_stream(key, SubKeyLabel::K2);
    auto k3 = derive_stream(key, SubKeyLabel::K3);
    auto k4 = derive_stream(key, SubKeyLabel::K4);
    plan.dihedral = choices(k2, n, kDihedralOps);
    plan.invert = gen_bits(k3, n);
    plan.channels = choices(k4, n, 6);
  }
  return plan;
}

ImageTensor apply_etc(const ImageTensor& x, const EtcPlan& plan) {
  BlockGrid g = partition(x, plan.block_size);
  check_plan_size(g.blocks.size(), plan.permutation.size());
  g.blocks = permute(g.blocks, plan.permutation);
  if (!plan.scramble_only) {
    for (std::size_t i = 0; i < g.blocks.size(); ++i) {
      Tile t = dihedral_transform(g.blocks[i], plan.dihedral[i]);
      if (plan.invert[i]) invert_tile(t);
      shuffle_tile_channels(t, plan.channels[i]);
      g.blocks[i] = std::move(t);
    }
  }
  return integrate(g);
}

ImageTensor invert_etc(const ImageTensor& y, const EtcPlan& plan) {
  BlockGrid g = partition(y, plan.block_size);
  check_plan_size(g.blocks.size(), plan.permutation.size());
  if (!plan.scramble_only) {
    for (std::size_t i = 0; i < g.blocks.size(); ++i) {
      Tile& t = g.blocks[i];
      shuffle_tile_channels(t, channel_perm_inverse(plan.channels[i]));
      if (plan.invert[i]) invert_tile(t);
      t = dihedral_transform(t, dihedral_inverse(plan.dihedral[i]));
    }
  }
  g.blocks = unpermute(g.blocks, plan.permutation);
  return integrate(g);
}

ImageTensor etc_encrypt(const ImageTensor& x, const MasterKey& key, const SchemeConfig& cfg) {
  check_dims(x, cfg.block_size);
  return apply_etc(x, make_etc_plan(key, cfg, x.width(), x.height()));
}

ImageTensor etc_decrypt(const ImageTensor& y, const MasterKey& key, const SchemeConfig& cfg) {
  check_dims(y, cfg.block_size);
  return invert_etc(y, make_etc_plan(key, cfg, y.width(), y.height()));
}

// ---- PE ----

PePlan make_pe_plan(const MasterKey& key, int width, int height) {
  if (width <= 0 || height <= 0) throw DimensionError("empty image");
  const std::size_t n = static_cast<std::size_t>(width) * height;
  auto k3 = derive_stream(key, SubKeyLabel::K3);
  auto k4 = derive_stream(key, SubKeyLabel::K4);
  PePlan plan;
  plan.invert = gen_bits(k3, 3 * n);
  plan.channels = choices(k4, n, 6);
  return plan;
}

ImageTensor apply_pe(const ImageTensor& x, const PePlan& plan) {
  const std::size_t n = x.size() / 3;
  check_plan_size(plan.channels.size(), n);
  ImageTensor y = x;
  auto d = y.data();
  for (std::size_t p = 0; p < n; ++p) {
    std::array<std::uint8_t, 3> px{};
    for (int c = 0; c < 3; ++c) px[c] = negative_positive(d[3 * p + c], plan.invert[3 * p + c]);
    const auto& perm = kChannelPerms[plan.channels[p]];
    for (int c = 0; c < 3; ++c) d[3 * p + c] = px[perm[c]];
  }
  return y;
}

ImageTensor invert_pe(const ImageTensor& y, const PePlan& plan) {
  const std::size_t n = y.size() / 3;
  check_plan_size(plan.channels.size(), n);
  ImageTensor x = y;
  auto d = x.data();
  for (std::size_t p = 0; p < n; ++p) {
    const auto& perm = kChannelPerms[plan.channels[p]];
    std::array<std::uint8_t, 3> px{};
    for (int c = 0; c < 3; ++c) px[perm[c]] = d[3 * p + c];
    for (int c = 0; c < 3; ++c) d[3 * p + c] = negative_positive(px[c], plan.invert[3 * p + c]);
  }
  return x;
}

ImageTensor pe_encrypt(const ImageTensor& x, const MasterKey& key) {
  check_dims(x, 1);
  return apply_pe(x, make_pe_plan(key, x.width(), x.height()));
}

ImageTensor pe_decrypt(const ImageTensor& y, const MasterKey& key) {
  check_dims(y, 1);
  return invert_pe(y, make_pe_plan(key, y.width(), y.height()));
}

// ---- LE / ELE block pixel keys ----

BlockPixelKey BlockPixelKey::identity() {
  BlockPixelKey k;
  k.positions.resize(kPositions);
  std::iota(k.positions.begin(), k.positions.end(), 0u);
  k.invert.assign(3 * kPositions, 0);
  return k;
}

namespace {

BlockPixelKey draw_block_key(SubKeyStream& shuffle, SubKeyStream& invert) {
  BlockPixelKey k;
  k.positions = gen_permutation(shuffle, BlockPixelKey::kPositions);
  k.invert = gen_bits(invert, 3 * BlockPixelKey::kPositions);
  return k;
}

}  // namespace

Tile apply_block_pixel_key(const Tile& t, const BlockPixelKey& k) {
  if (t.size != BlockPixelKey::kBlock) throw DimensionError("block pixel key needs 4x4 tiles");
  Tile out(t.size);
  for (int j = 0; j < BlockPixelKey::kPositions; ++j) {
    const std::size_t src = k.positions[j];
    for (int c = 0; c < 3; ++c) {
      out.data[3 * j + c] = negative_positive(t.data[3 * src + c], k.invert[3 * j + c]);
    }
  }
  return out;
}

Tile invert_block_pixel_key(const Tile& t, const BlockPixelKey& k) {
  if (t.size != BlockPixelKey::kBlock) throw DimensionError("block pixel key needs 4x4 tiles");
  Tile out(t.size);
  for (int j = 0; j < BlockPixelKey::kPositions; ++j) {
    const std::size_t src = k.positions[j];
    for (int c = 0; c < 3; ++c) {
      out.data[3 * src + c] = negative_positive(t.data[3 * j + c], k.invert[3 * j + c]);
    }
  }
  return out;
}

BlockPixelKey make_le_plan(const MasterKey& key) {
  auto k1 = derive_stream(key, SubKeyLabel::K1);
  auto k3 = derive_stream(key, SubKeyLabel::K3);
  return draw_block_key(k1, k3);
}

ImageTensor apply_le(const ImageTensor& x, const BlockPixelKey& plan) {
  BlockGrid g = partition(x, BlockPixelKey::kBlock);
  for (auto& t : g.blocks) t = apply_block_pixel_key(t, plan);
  return integrate(g);
}

ImageTensor invert_le(const ImageTensor& y, const BlockPixelKey& plan) {
  BlockGrid g = partition(y, BlockPixelKey::kBlock);
  for (auto& t : g.blocks) t = invert_block_pixel_key(t, plan);
  return integrate(g);
}

ImageTensor le_encrypt(const ImageTensor& x, const MasterKey& key) {
  check_dims(x, BlockPixelKey::kBlock);
  return apply_le(x, make_le_plan(key));
}

ImageTensor le_decrypt(const ImageTensor& y, const MasterKey& key) {
  check_dims(y, BlockPixelKey::kBlock);
  return invert_le(y, make_le_plan(key));
}

ElePlan make_ele_plan(const MasterKey& key, const SchemeConfig& cfg, int width, int height) {
  cfg.validate();
  constexpr int kOuter = ElePlan::kScrambleBlock;
  if (width <= 0 || height <= 0 || width % kOuter || height % kOuter) {
    throw DimensionError("ELE needs image dimensions divisible by 16");
  }
  ElePlan plan;
  plan.scramble_only = cfg.scramble_only;
  const std::size_t outer = static_cast<std::size_t>(width / kOuter) * (height / kOuter);
  auto k1 = derive_stream(key, SubKeyLabel::K1);
  plan.permutation = gen_permutation(k1, outer);
  if (!cfg.scramble_only) {
    const std::size_t inner = static_cast<std::size_t>(width / BlockPixelKey::kBlock) *
                              (height / BlockPixelKey::kBlock);
    plan.block_keys.reserve(inner);
    for (std::uint64_t b = 0; b < inner; ++b) {
      const std::uint64_t ctx[] = {b};
      auto k2 = derive_stream(key, SubKeyLabel::K2, ctx);
      auto k3 = derive_stream(key, SubKeyLabel::K3, ctx);
      plan.block_keys.push_back(draw_block_key(k2, k3));
    }
  }
  return plan;
}

ImageTensor apply_ele(const ImageTensor& x, const ElePlan& plan) {
  ImageTensor y = x;
  if (!plan.scramble_only) {
    BlockGrid g = partition(x, BlockPixelKey::kBlock);
    check_plan_size(g.blocks.size(), plan.block_keys.size());
    for (std::size_t b = 0; b < g.blocks.size(); ++b) {
      g.blocks[b] = apply_block_pixel_key(g.blocks[b], plan.block_keys[b]);
    }
    y = integrate(g);
  }
  BlockGrid outer = partition(y, ElePlan::kScrambleBlock);
  check_plan_size(outer.blocks.size(), plan.permutation.size());
  outer.blocks = permute(outer.blocks, plan.permutation);
  return integrate(outer);
}

ImageTensor invert_ele(const ImageTensor& y, const ElePlan& plan) {
  BlockGrid outer = partition(y, ElePlan::kScrambleBlock);
  check_plan_size(outer.blocks.size(), plan.permutation.size());
  outer.blocks = unpermute(outer.blocks, plan.permutation);
  ImageTensor x = integrate(outer);
  if (plan.scramble_only) return x;
  BlockGrid g = partition(x, BlockPixelKey::kBlock);
  check_plan_size(g.blocks.size(), plan.block_keys.size());
  for (std::size_t b = 0; b < g.blocks.size(); ++b) {
    g.blocks[b] = invert_block_pixel_key(g.blocks[b], plan.block_keys[b]);
  }
  return integrate(g);
}

ImageTensor ele_encrypt(const ImageTensor& x, const MasterKey& key, bool scramble_only) {
  check_dims(x, ElePlan::kScrambleBlock);
  SchemeConfig cfg{Scheme::ELE, 4, scramble_only};
  return apply_ele(x, make_ele_plan(key, cfg, x.width(), x.height()));
}

ImageTensor ele_decrypt(const ImageTensor& y, const MasterKey& key, bool scramble_only) {
  check_dims(y, ElePlan::kScrambleBlock);
  SchemeConfig cfg{Scheme::ELE, 4, scramble_only};
  return invert_ele(y, make_ele_plan(key, cfg, y.width(), y.height()));
}

ImageTensor encrypt(const ImageTensor& x, const MasterKey& key, const SchemeConfig& cfg) {
  cfg.validate();
  switch (cfg.scheme) {
    case Scheme::EtC: return etc_encrypt(x, key, cfg);
    case Scheme::PE: return pe_encrypt(x, key);
    case Scheme::LE: return le_encrypt(x, key);
    case Scheme::ELE: return ele_encrypt(x, key, cfg.scramble_only);
  }
  throw ArgumentError("unknown scheme");
}

ImageTensor decrypt(const ImageTensor& y, const MasterKey& key, const SchemeConfig& cfg) {
  cfg.validate();
  switch (cfg.scheme) {
    case Scheme::EtC: return etc_decrypt(y, key, cfg);
    case Scheme::PE: return pe_decrypt(y, key);
    case Scheme::LE: return le_decrypt(y, key);
    case Scheme::ELE: return ele_decrypt(y, key, cfg.scramble_only);
  }
  throw ArgumentError("unknown scheme");
}

}  // namespace cipherbreak
