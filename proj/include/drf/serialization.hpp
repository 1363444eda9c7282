#pragma once

#include "drf/trainer.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>

namespace drf {

/// Bad or missing configuration field. `field()` names it.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string field, const std::string& message)
        : std::runtime_error(message), field_(std::move(field)) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

/// Malformed or unsupported model file.
class ModelFormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr const char* kModelFormat = "drf-model";
inline constexpr int kModelVersion = 1;

/// Reads a TrainConfig from a JSON object. "trees", "depth", "output_units"
/// and "hidden_layers" are required; the remaining fields default. Unknown
/// keys are rejected.
TrainConfig parse_train_config(const std::string& json_text);
TrainConfig load_train_config(const std::filesystem::path& path);

/// Model document: JSON with every real number written at 17 significant
/// digits, so load(save(m)) reproduces m's parameters bit for bit.
std::string model_to_string(const TrainedForest& forest);
TrainedForest model_from_string(const std::string& text);

void save_model(const std::filesystem::path& path, const TrainedForest& forest);
TrainedForest load_model(const std::filesystem::path& path);

/// Training report as a JSON document.
std::string report_to_string(const TrainReport& report, const TrainConfig& config);

}  // namespace drf
