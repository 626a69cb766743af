#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "mac/data.hpp"
#include "mac/model.hpp"

namespace mac {

// File layout (all integers little-endian):
//   8 bytes   magic "MACCKPT1"
//   u64       manifest length L
//   L bytes   manifest JSON (UTF-8)
//   u64       parameter count P
//   P * 8     parameter values, IEEE-754 binary64, MacParams::parameters() order
//   u64       FNV-1a of every preceding byte
struct Checkpoint {
  MacConfig config;
  Encoder encoder;
  Schema schema = Schema::snopes;
  std::uint64_t seed = 0;
  /// Free-form extras (fold index, metric history, corpus hash).
  nlohmann::json extra = nlohmann::json::object();
  std::vector<double> values;
};

Checkpoint make_checkpoint(const MacParams& params, const MacConfig& cfg, const Encoder& encoder, Schema schema,
                           std::uint64_t seed, nlohmann::json extra = nlohmann::json::object());

std::string serialize_checkpoint(const Checkpoint& ckpt);
/// Throws CheckpointError on bad magic, truncation, checksum mismatch,
/// vocabulary hash mismatch or a parameter count that disagrees with the config.
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Rebuilds parameters from a checkpoint (bitwise identical values).
MacParams restore_params(const Checkpoint& ckpt);

}  // namespace mac
