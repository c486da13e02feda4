#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "regdet/annotations.hpp"
#include "regdet/binning.hpp"
#include "regdet/toy.hpp"

namespace regdet::io {

// Dataset-level metadata persisted in manifest.json.
struct Manifest {
    std::uint64_t seed = 0;
    std::vector<double> bin_centers;
    int rater_count = 1;
    double score_min = 0.0;
    std::optional<double> score_max;  // unbounded when absent
    std::vector<std::string> scene_ids;
    std::map<std::string, std::vector<std::string>> splits;  // train/val/test
    std::optional<toy::ToyConfig> toy_config;

    BinningScheme binning() const { return BinningScheme(bin_centers); }
};

nlohmann::json toy_config_to_json(const toy::ToyConfig& config);
toy::ToyConfig toy_config_from_json(const nlohmann::json& j);

// Raw volume container: magic line, little-endian u32 header length, JSON
// header (dtype/shape/spacing), then the payload.
void write_volume(const std::string& path, const Volume& volume);
Volume read_volume(const std::string& path);
void write_labels(const std::string& path, const LabelVolume& labels);
LabelVolume read_labels(const std::string& path);

void write_manifest(const std::string& directory, const Manifest& manifest);
Manifest read_manifest(const std::string& directory);

// Writes one scene's .vol / .seg / .ann.jsonl files under <dir>/scenes/.
void write_scene(const std::string& directory, const Scene& scene);
Scene read_scene(const std::string& directory, const std::string& scene_id,
                 const Manifest& manifest);

void write_dataset(const std::string& directory, const std::vector<Scene>& scenes,
                   const Manifest& manifest);

// Read-only scene store with lazy caching. Scene accesses are recorded so
// experiment runs can prove which splits they touched.
class DatasetStore {
public:
    explicit DatasetStore(std::string directory);

    const Manifest& manifest() const { return manifest_; }
    const std::string& directory() const { return directory_; }

    std::shared_ptr<const Scene> load_scene(const std::string& id) const;

    std::set<std::string> accessed_ids() const;
    void reset_access_log() const;

    const std::vector<std::string>& split(const std::string& name) const;

private:
    std::string directory_;
    Manifest manifest_;
    mutable std::unique_ptr<std::mutex> mutex_;
    mutable std::map<std::string, std::shared_ptr<const Scene>> cache_;
    mutable std::set<std::string> accessed_;
};

}  // namespace regdet::io
