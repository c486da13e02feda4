#pragma once

#include <memory>
#include <string>

#include <json.hpp>

#include "regdet/model/detector.hpp"

namespace regdet::model {

// Versioned checkpoint container: JSON header (config, metadata, parameter
// table) followed by the concatenated float32 parameter payload.
void save_checkpoint(const std::string& path, Detector& detector,
                     const nlohmann::json& metadata);

struct LoadedCheckpoint {
    std::unique_ptr<Detector> detector;
    nlohmann::json metadata;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace regdet::model
