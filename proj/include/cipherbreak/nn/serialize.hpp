#pragma once

#include <filesystem>

#include <json.hpp>

#include "cipherbreak/nn/graph.hpp"

namespace cipherbreak::nn {

// Container layout: "CBCKPT01", u64 LE header length, JSON header, then
// float32 LE parameter blobs in header order. The header carries caller
// metadata under "meta" and a "params" table of {name, shape, offset}.
void save_parameters(const std::filesystem::path& path, const ParameterSet<float>& params,
                     const nlohmann::json& meta);

// Reads the header only.
nlohmann::json read_container_header(const std::filesystem::path& path);

// Loads values into `params` by name; every parameter must be present with
// a matching shape. Returns the "meta" object.
nlohmann::json load_parameters(const std::filesystem::path& path, ParameterSet<float>& params);

}  // namespace cipherbreak::nn
