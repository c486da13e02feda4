#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "regdet/annotations.hpp"
#include "regdet/binning.hpp"
#include "regdet/dataset_io.hpp"
#include "regdet/random.hpp"

namespace regdet::pipeline {

// Five-fold style cross-validation plan: per fold, disjoint train/val/test
// scene-id lists at roughly 60/20/20, with every scene in exactly one test
// list across folds.
struct SplitPlan {
    struct Fold {
        std::vector<std::string> train;
        std::vector<std::string> val;
        std::vector<std::string> test;
    };
    std::vector<Fold> folds;
};

SplitPlan make_cv_splits(std::vector<std::string> scene_ids, int folds, std::uint64_t seed);

void write_split_plan(const std::string& path, const SplitPlan& plan);
SplitPlan read_split_plan(const std::string& path);

// One training grading target: a rater score drawn uniformly from the
// annotation's raters, plus its bin under `scheme`.
struct TrainingTarget {
    double score = 0.0;
    int bin = 0;  // 1-based
};

TrainingTarget sample_training_target(const RoiAnnotation& annotation,
                                      const BinningScheme& scheme, RandomStream& rng);

// A cropped training sample. Annotation boxes are expressed in patch
// coordinates; `origin` maps them back into the source scene.
struct PatchSample {
    Volume patch;
    std::vector<RoiAnnotation> annotations;  // noisy/training annotations
    std::string scene_id;
    std::array<double, 3> origin{0.0, 0.0, 0.0};
    std::shared_ptr<const Scene> scene;  // for mask lookups
};

// Crops `crop_shape` out of the scene. With probability `fg_probability` the
// crop is centered (with jitter) on a random annotation, otherwise its origin
// is uniform. Annotations are kept iff at least half their box volume lies
// inside the crop, then clipped to it.
PatchSample sample_patch(const std::shared_ptr<const Scene>& scene,
                         const std::vector<int>& crop_shape, double fg_probability,
                         RandomStream& rng);

// Opens an external dataset in the shared on-disk format and validates the
// multi-rater contract: consistent rater count across annotations and
// exact_score equal to the rater mean when more than one rater is present.
io::DatasetStore ingest_external(const std::string& directory);

void validate_multi_rater(const Scene& scene, int expected_raters);

}  // namespace regdet::pipeline
