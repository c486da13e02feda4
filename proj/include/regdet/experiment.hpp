#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "regdet/dataset_io.hpp"
#include "regdet/ensemble.hpp"
#include "regdet/evalm.hpp"
#include "regdet/model/checkpoint.hpp"
#include "regdet/pipeline.hpp"

namespace regdet::exp {

struct ExperimentConfig {
    model::GradingHead variant = model::GradingHead::kRegressor;
    int dims = 2;
    int epochs = 20;
    int batches_per_epoch = 50;
    int batch_size = 16;
    double learning_rate = 1e-4;
    std::vector<int> crop_shape{128, 128};
    double fg_probability = 0.5;
    std::uint64_t seed = 1;
    int workers = 2;
    int top_k_checkpoints = 4;
    int val_interval = 1;      // epochs between validation passes
    int val_max_scenes = 0;    // 0 = all
    double eval_iou = 0.1;
    model::DetectorConfig detector;
    infer::EnsembleConfig ensemble;

    void validate() const;
    nlohmann::json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json& j);
};

struct EpochRecord {
    int epoch = 0;
    double mean_total = 0.0;
    std::map<std::string, double> mean_components;
    double val_avp10 = 0.0;
    double val_ap10 = 0.0;
    bool validated = false;
    double wall_seconds = 0.0;
};

struct RunRecord {
    std::string run_dir;
    std::string variant;
    std::uint64_t seed = 0;
    std::string config_digest;  // FNV-1a of the serialized config
    std::string batch_digest;   // FNV-1a over every consumed batch
    std::vector<EpochRecord> epochs;
    std::vector<std::string> checkpoints;  // best-first, at most top_k
    std::vector<std::string> accessed_scenes;
    double wall_seconds = 0.0;
    bool aborted = false;
    std::string abort_reason;

    nlohmann::json to_json() const;
    static RunRecord from_json(const nlohmann::json& j);
    void save(const std::string& path) const;
    static RunRecord load(const std::string& path);
};

// Scene-id lists a run trains/validates/tests on; defaults to the dataset
// manifest splits, or one fold of a cross-validation plan.
struct SplitSelection {
    std::vector<std::string> train, val, test;
};
SplitSelection splits_from_store(const io::DatasetStore& store);
SplitSelection splits_from_plan(const pipeline::SplitPlan& plan, int fold);

// Config-driven training with per-epoch validation and top-k checkpoint
// retention; fully seeded. Writes run.json plus checkpoints under `run_dir`.
RunRecord train(const ExperimentConfig& config, const io::DatasetStore& store,
                const SplitSelection& splits, const std::string& run_dir);

struct EvaluationResult {
    evalm::FoldMetrics metrics;
    std::string detections_path;
    nlohmann::json to_json() const;
};

// Ensemble inference over the test split, scored against exact annotations.
EvaluationResult evaluate(const ExperimentConfig& config, const io::DatasetStore& store,
                          const std::vector<std::string>& test_ids, const RunRecord& run,
                          const std::string& out_dir);

struct ComparisonRep {
    std::uint64_t seed = 0;
    evalm::FoldMetrics regressor;
    evalm::FoldMetrics classifier;
    bool batch_digests_match = false;
    RunRecord regressor_run;
    RunRecord classifier_run;
};

struct ComparisonOutcome {
    std::vector<ComparisonRep> reps;
    evalm::MetricsReport regressor_summary;
    evalm::MetricsReport classifier_summary;
    nlohmann::json to_json() const;
};

// Paired variant runs over `reps` repetitions with shared data seeds.
ComparisonOutcome compare(const ExperimentConfig& base, const io::DatasetStore& store,
                          const SplitSelection& splits, const std::string& out_dir, int reps);

// Table-1-shaped plain-text table (AVP10, AP10, Bin Accuracy per variant row).
std::string format_results_table(
    const std::vector<std::pair<std::string, evalm::MetricsReport>>& rows);

// GT vs. detections overlay (green GT, red/blue variant boxes); writes PNG.
void render_overlay(const Scene& scene, const std::vector<Detection>& variant_a,
                    const std::vector<Detection>& variant_b, const std::string& path);

// Hash helpers shared with the acceptance suite.
std::uint64_t fnv1a_bytes(const void* data, std::size_t len, std::uint64_t h = 14695981039346656037ULL);

}  // namespace regdet::exp
