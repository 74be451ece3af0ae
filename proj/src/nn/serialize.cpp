#include "cipherbreak/nn/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "cipherbreak/errors.hpp"

namespace cipherbreak::nn {

namespace {

constexpr char kMagic[8] = {'C', 'B', 'C', 'K', 'P', 'T', '0', '1'};

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

struct Opened {
  nlohmann::json header;
  std::ifstream in;
  std::streamoff data_start = 0;
};

Opened open_container(const std::filesystem::path& path) {
  Opened o;
  o.in.open(path, std::ios::binary);
  if (!o.in) throw DataError("cannot open " + path.string());
  char magic[8];
  std::uint64_t len = 0;
  o.in.read(magic, 8);
  o.in.read(reinterpret_cast<char*>(&len), 8);
  if (!o.in || std::memcmp(magic, kMagic, 8) != 0) throw DataError(path.string() + " is not a parameter container");
  if (len > (1u << 30)) throw DataError(path.string() + ": implausible header length");
  std::string text(len, '\0');
  o.in.read(text.data(), static_cast<std::streamsize>(len));
  if (!o.in) throw DataError(path.string() + ": truncated header");
  try {
    o.header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": bad header: " + e.what());
  }
  o.data_start = static_cast<std::streamoff>(16 + len);
  return o;
}

}  // namespace

void save_parameters(const std::filesystem::path& path, const ParameterSet<float>& params,
                     const nlohmann::json& meta) {
  nlohmann::json table = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    table.push_back({{"name", p.name}, {"shape", p.value.shape()}, {"offset", offset}});
    offset += p.value.numel() * sizeof(float);
  }
  const nlohmann::json header = {{"format", "cipherbreak-params"}, {"version", 1}, {"meta", meta}, {"params", table}};
  const std::string text = header.dump();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp);
    const std::uint64_t len = text.size();
    out.write(kMagic, 8);
    out.write(reinterpret_cast<const char*>(&len), 8);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& v = params[i].value;
      out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.numel() * sizeof(float)));
    }
    if (!out) throw DataError("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

nlohmann::json read_container_header(const std::filesystem::path& path) { return open_container(path).header; }

nlohmann::json load_parameters(const std::filesystem::path& path, ParameterSet<float>& params) {
  auto o = open_container(path);
  const auto& table = o.header.at("params");
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    const nlohmann::json* entry = nullptr;
    for (const auto& e : table)
      if (e.at("name") == p.name) entry = &e;
    if (!entry) throw StructuralError(path.string() + ": missing parameter " + p.name);
    if (entry->at("shape").get<Shape>() != p.value.shape()) {
      throw StructuralError(path.string() + ": shape mismatch for " + p.name);
    }
    o.in.seekg(o.data_start + entry->at("offset").get<std::streamoff>());
    o.in.read(reinterpret_cast<char*>(p.value.data()), static_cast<std::streamsize>(p.value.numel() * sizeof(float)));
    if (!o.in) throw DataError(path.string() + ": truncated data for " + p.name);
  }
  return o.header.at("meta");
}

}  // namespace cipherbreak::nn
