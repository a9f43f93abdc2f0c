#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "grunt/learn/net.hpp"
#include "grunt/learn/svm.hpp"

namespace grunt {

// Model checkpoint layout (little-endian):
//   "GMDL" | u16 version | u32 config length | config JSON (UTF-8)
//   | u64 parameter count | parameter count * f64
//
// The config names the model kind and the layout of the parameter vector.
// SVM: weights, bias, then the standardizer means and stds (if any).
// Nets: the flat NetParams vector, then the standardizer means and stds.

inline constexpr std::uint16_t kCheckpointVersion = 1;

struct Checkpoint {
  nlohmann::ordered_json config;
  Vector params;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c);
/// Throws FormatError on a bad magic, version, truncation or JSON.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// `extra` is merged into the config (e.g. feature and task metadata).
Checkpoint svm_checkpoint(const SvmModel& model, const nlohmann::ordered_json& extra = nlohmann::ordered_json::object());
SvmModel svm_from_checkpoint(const Checkpoint& c);

struct NetModel {
  NetParams params;
  Standardizer standardizer;
};

nlohmann::ordered_json net_config_json(const NetConfig& config);
NetConfig net_config_from_json(const nlohmann::ordered_json& j);

Checkpoint net_checkpoint(const NetModel& model, const nlohmann::ordered_json& extra = nlohmann::ordered_json::object());
NetModel net_from_checkpoint(const Checkpoint& c);

}  // namespace grunt
