#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "stimpute/data.hpp"
#include "stimpute/model.hpp"

namespace stimpute {

/// Everything needed to resume or serve a trained model.
struct Checkpoint {
    ModelConfig config;
    ModelParams params;
    Normalizer normalizer;
    std::int64_t train_step = 0;
};

/// JSON (de)serialization for configs; strict — unknown keys are rejected.
nlohmann::json model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Throws ConfigError naming the first key of `obj` not in `allowed`.
void reject_unknown_keys(const nlohmann::json& obj, std::initializer_list<const char*> allowed,
                         const std::string& context);

/// Binary format: magic, little-endian u64 header length, JSON header
/// (config, normalizer, parameter name/shape manifest, step counter), then
/// raw float64 blocks in ModelParams::named() order. The round trip is
/// bit-exact.
void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);

/// Throws FormatError on a corrupt or truncated file, ConfigError when the
/// stored config is invalid or `expected_nodes` (if >= 0) disagrees; no
/// partial state escapes on failure.
Checkpoint load_checkpoint(const std::string& path, int expected_nodes = -1);

}  // namespace stimpute
