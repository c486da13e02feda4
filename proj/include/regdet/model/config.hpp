#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "regdet/common.hpp"

namespace regdet::model {

enum class GradingHead { kRegressor, kClassifier };

inline std::string to_string(GradingHead head) {
    return head == GradingHead::kRegressor ? "regressor" : "classifier";
}

inline GradingHead grading_head_from_string(const std::string& s) {
    if (s == "regressor") return GradingHead::kRegressor;
    if (s == "classifier") return GradingHead::kClassifier;
    fail<ConfigError>("unknown grading head '", s, "' (expected regressor|classifier)");
}

// Shared two-stage detector configuration. The grading head selects the
// variant; everything else is common to both so a head swap changes nothing
// upstream.
struct DetectorConfig {
    int dims = 2;
    GradingHead grading_head = GradingHead::kRegressor;
    int class_count = 5;
    int input_channels = 1;

    // Backbone / FPN. Level k sits at in-plane stride 4 * 2^k.
    std::vector<int> stage_channels{16, 32, 48, 64};
    std::vector<int> stage_z_strides{1, 2, 2, 2};  // per-stage z stride, 3D only
    int fpn_channels = 32;
    int rpn_feature_maps = 64;
    int gn_groups = 8;

    // Anchors: side = stride * anchor_base * scale, per ratio.
    std::vector<double> anchor_scales{1.0, 1.4142};
    std::vector<double> anchor_ratios{1.0};
    double anchor_base = 2.0;
    double anchor_depth = 6.0;  // z size of 3D anchors

    // First-stage matching and sampling.
    double rpn_match_high = 0.7;
    double rpn_match_low = 0.3;
    int rpn_positive_cap = 32;
    double negative_ratio = 3.0;
    int rpn_negative_floor = 8;

    // Proposal generation.
    int train_pre_nms = 2000;
    int train_post_nms = 300;
    int eval_pre_nms = 1000;
    int eval_post_nms = 100;
    double rpn_nms_iou = 0.7;

    // Second stage.
    double proposal_match_iou = 0.3;
    int roi_positive_cap = 16;
    std::vector<int> pool_grading{7, 7, 3};  // (h, w, d); d used in 3D only
    std::vector<int> pool_mask{14, 14, 5};
    int roialign_sampling = 2;
    int head_fc_dim = 256;
    int mask_head_channels = 32;
    bool append_gt_proposals = true;

    // Box delta normalization, (centers..., sizes...) per axis.
    std::vector<double> bbox_std{0.1, 0.1, 0.2, 0.2};
    std::vector<double> bbox_std_3d{0.1, 0.1, 0.1, 0.2, 0.2, 0.2};

    // Loss weights.
    double w_rpn_obj = 1.0;
    double w_rpn_box = 1.0;
    double w_grading = 1.0;
    double w_box = 1.0;
    double w_mask = 1.0;

    // Final filtering.
    double detection_nms_iou = 0.25;
    double detection_min_objectness = 0.01;
    int detection_max_instances = 50;

    std::uint64_t init_seed = 7;

    int level_count() const { return static_cast<int>(stage_channels.size()); }
    int stride_xy(int level) const { return 4 << level; }
    int stride_z(int level) const {
        int s = 1;
        for (int k = 0; k <= level && k < static_cast<int>(stage_z_strides.size()); ++k)
            s *= stage_z_strides[k];
        return s;
    }
    int box_dim() const { return 2 * dims; }
    const std::vector<double>& delta_std() const { return dims == 3 ? bbox_std_3d : bbox_std; }

    void validate() const;
    nlohmann::json to_json() const;
    static DetectorConfig from_json(const nlohmann::json& j);
};

}  // namespace regdet::model
