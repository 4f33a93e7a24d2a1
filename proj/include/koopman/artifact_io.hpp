#pragma once

#include <filesystem>

#include <json.hpp>

#include "koopman/edmd.hpp"
#include "koopman/noise.hpp"
#include "koopman/pipeline.hpp"

namespace koopman {

// Trained models and artifacts are stored as a single CBOR document (binary,
// self-describing). Doubles are written at full precision, so save -> load
// reproduces every matrix bit for bit. Only "poly" dictionaries can be saved,
// since the dictionary is rebuilt from its descriptor on load.

nlohmann::json noise_to_json(const NoiseSpec& noise);
NoiseSpec noise_from_json(const nlohmann::json& j);

nlohmann::json model_to_json(const KoopmanModel& model);
KoopmanModel model_from_json(const nlohmann::json& j);

nlohmann::json artifacts_to_json(const TrainedArtifacts& artifacts);
TrainedArtifacts artifacts_from_json(const nlohmann::json& j);

void save_model(const KoopmanModel& model, const std::filesystem::path& path);
KoopmanModel load_model(const std::filesystem::path& path);

void save_artifacts(const TrainedArtifacts& artifacts, const std::filesystem::path& path);
TrainedArtifacts load_artifacts(const std::filesystem::path& path);

}  // namespace koopman
