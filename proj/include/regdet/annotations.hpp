#pragma once

#include <string>
#include <vector>

#include "regdet/binning.hpp"
#include "regdet/geometry.hpp"
#include "regdet/volume.hpp"

namespace regdet {

// One ground-truth object. `rater_scores` are the (possibly noisy) training
// gradings; `exact_score` is the clean evaluation target. `category` is the
// 1-based bin of the score this annotation represents.
struct RoiAnnotation {
    Box box;
    std::vector<double> rater_scores;
    double exact_score = 0.0;
    int category = 0;
    int mask_instance = 0;  // instance id in the scene label map; 0 = no mask
};

// One predicted object. Regressor variants fill `score`; classifier variants
// fill `probs` (per-category, sums to 1). Source metadata identifies where an
// ensemble detection came from.
struct Detection {
    Box box;
    double objectness = 0.0;
    double score = 0.0;
    std::vector<double> probs;
    int slice = -1;  // z index for slice-wise 2D pipelines
    int member = 0;
    int view = 0;
    int fold = -1;
    std::string scene_id;

    bool has_probs() const { return !probs.empty(); }

    // Predicted 1-based category under `scheme` (argmax for classifiers,
    // binned score for regressors).
    int predicted_bin(const BinningScheme& scheme) const {
        if (has_probs()) {
            int best = 0;
            for (std::size_t k = 1; k < probs.size(); ++k)
                if (probs[k] > probs[best]) best = static_cast<int>(k);
            return best + 1;
        }
        return scheme.bin_index(score);
    }
};

// A generated or ingested image with exact and training annotation lists.
// The two lists pair up element-wise: identical boxes and masks, differing
// only in score/category fields.
struct Scene {
    std::string id;
    Volume volume;
    LabelVolume labels;
    std::vector<RoiAnnotation> annotations;        // exact ground truth
    std::vector<RoiAnnotation> noisy_annotations;  // training ground truth
};

}  // namespace regdet
