#pragma once

// Binary checkpoint: 8-byte magic, u64 LE header length, JSON header
// {format_version, config, meta, tensors: {name: {shape, offset}}}, then
// the tensors as contiguous little-endian f64 in row-major order.

#include "fspc/model.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace fspc {

inline constexpr char kCheckpointMagic[9] = "FSPCKPT1";

struct Checkpoint {
  ModelConfig config;
  ModelParameters params;
  nlohmann::json meta;  // free-form (epoch, seed, ...)
};

std::vector<std::uint8_t> serialize_checkpoint(const ModelConfig& config, const ModelParameters& params,
                                               const nlohmann::json& meta = nlohmann::json::object());
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config, const ModelParameters& params,
                     const nlohmann::json& meta = nlohmann::json::object());
/// Throws Data when the file is missing, truncated or inconsistent.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fspc
