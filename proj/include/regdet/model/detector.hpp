#pragma once

#include <array>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "regdet/annotations.hpp"
#include "regdet/model/config.hpp"
#include "regdet/nn/adam.hpp"
#include "regdet/nn/ops.hpp"
#include "regdet/random.hpp"
#include "regdet/volume.hpp"

namespace regdet::model {

// --- box parameterization -----------------------------------------------------

// Center-offset / log-size encoding of `target` against `anchor`, divided by
// the per-axis normalization in `std_dev` (centers first, then sizes).
std::vector<double> encode_box_delta(const Box& target, const Box& anchor,
                                     const std::vector<double>& std_dev);
Box decode_box_delta(const std::vector<double>& delta, const Box& anchor,
                     const std::vector<double>& std_dev);

// Greedy IoU-suppression keyed on descending `scores`; returns surviving
// indices in score order.
std::vector<int> nms(const std::vector<Box>& boxes, const std::vector<double>& scores,
                     double iou_thresh);

struct Proposal {
    Box box;
    double objectness = 0.0;
};

// Second-stage target assignment: a proposal is positive iff its best IoU
// against any GT reaches `match_iou`, matched to the argmax-IoU GT.
struct HeadTargets {
    std::vector<bool> is_positive;
    std::vector<int> matched_gt;  // -1 for background
};
HeadTargets assign_head_targets(const std::vector<Box>& proposals,
                                const std::vector<Box>& gt_boxes, double match_iou);

// --- training plumbing ---------------------------------------------------------

// One training sample, already cropped and with per-iteration grading targets
// sampled upstream.
struct SampleTargets {
    nn::Tensor patch;  // [1, H, W] or [1, D, H, W]
    std::vector<Box> gt_boxes;
    std::vector<double> grading_scores;  // sampled rater / noisy scores
    std::vector<int> grading_bins;       // 1-based bins of those scores
    std::vector<int> mask_instances;     // 0 when the object has no mask
    std::shared_ptr<const Scene> scene;  // mask lookup
    std::array<double, 3> origin{0.0, 0.0, 0.0};
    std::uint64_t sample_seed = 0;  // drives SHEM and roi subsampling
};

struct LossBreakdown {
    double total = 0.0;
    std::map<std::string, double> components;  // weighted contributions
    bool had_positives = false;
    bool grading_flagged_zero = false;  // no positives reached the grading loss
};

// --- detector -------------------------------------------------------------------

class Detector {
public:
    explicit Detector(DetectorConfig config);

    const DetectorConfig& config() const { return config_; }

    std::vector<nn::Param*> parameters();
    std::vector<std::pair<std::string, std::vector<int>>> parameter_signature() const;

    // Builds the per-sample loss graph, backpropagates, and adds parameter
    // gradients into `grad_acc`. Thread-safe across samples.
    LossBreakdown train_step_sample(const SampleTargets& sample,
                                    std::map<const nn::Param*, nn::Tensor>& grad_acc) const;

    // Loss values only (no backward); used by tests.
    LossBreakdown loss_components(const SampleTargets& sample) const;

    // Eval-mode forward: proposals, head refinement, objectness-keyed NMS.
    std::vector<Detection> predict(const Volume& patch) const;

    // Eval-mode feature pyramid spatial shapes for a given input, documenting
    // the stride contract (used by tests).
    std::vector<std::vector<int>> pyramid_shapes(const std::vector<int>& input_shape) const;

    // First-stage outputs on one patch (eval mode): per-anchor objectness
    // probabilities. Exposed for statistical tests.
    std::vector<double> rpn_objectness(const Volume& patch) const;

    // Raw proposal generation on one patch (eval mode).
    std::vector<Proposal> propose(const Volume& patch, bool train_counts) const;

    int assign_pyramid_level(const Box& box) const;

    friend struct DetectorAccess;

private:
    struct ConvLayer {
        nn::Param w, b;
        int stride_y = 1, stride_x = 1, stride_z = 1;
        int pad_y = 0, pad_x = 0, pad_z = 0;
    };
    struct NormLayer {
        nn::Param gamma, beta;
    };
    struct FcLayer {
        nn::Param w, b;
    };
    struct Stage {
        ConvLayer down;
        NormLayer down_norm;
        ConvLayer conv1, conv2;
        NormLayer norm1, norm2;
    };

    struct Pyramid {
        std::vector<nn::Var> levels;
    };
    struct RpnOut {
        std::vector<nn::Var> obj_logits;  // per level, [A, spatial...]
        std::vector<nn::Var> deltas;      // per level, [A*box_dim, spatial...]
    };
    struct AnchorSet {
        std::vector<Box> boxes;                 // concatenated over levels
        std::vector<int> level_of;              // per anchor
        std::vector<long> flat_obj_index;       // into concatenated obj logits
        std::vector<std::vector<long>> delta_index;  // per anchor, box_dim entries
    };

    ConvLayer make_conv(const std::string& name, int in_ch, int out_ch, int kernel, int stride,
                        int stride_z, int pad);
    NormLayer make_norm(const std::string& name, int channels);
    FcLayer make_fc(const std::string& name, int in_dim, int out_dim);

    nn::Var apply_conv(nn::Binder& bind, const ConvLayer& layer, const nn::Var& x) const;
    nn::Var apply_norm(nn::Binder& bind, const NormLayer& layer, const nn::Var& x) const;
    nn::Var apply_fc(nn::Binder& bind, const FcLayer& layer, const nn::Var& x) const;

    Pyramid forward_pyramid(nn::Binder& bind, const nn::Var& input) const;
    Pyramid forward_pyramid(nn::Binder& bind, const nn::Tensor& patch) const {
        return forward_pyramid(bind, nn::constant(patch));
    }
    RpnOut forward_rpn(nn::Binder& bind, const Pyramid& pyramid) const;
    AnchorSet make_anchors(const std::vector<std::vector<int>>& level_spatial) const;

    std::vector<Proposal> decode_proposals(const AnchorSet& anchors,
                                           const std::vector<float>& obj_logits,
                                           const std::vector<float>& deltas_flat,
                                           const std::vector<int>& patch_shape, int pre_nms,
                                           int post_nms) const;

    // Pools grading/box features for `boxes` (patch coords) and runs the
    // shared FC trunk. Returns [R, head_fc_dim].
    nn::Var roi_trunk(nn::Binder& bind, const Pyramid& pyramid, const std::vector<Box>& boxes)
        const;

    nn::Var pool_on_level(nn::Binder& bind, const Pyramid& pyramid, const Box& box, int level,
                          const std::vector<int>& pool) const;

    Box box_to_feature_coords(const Box& box, int level) const;

    DetectorConfig config_;
    int anchors_per_cell_ = 1;

    ConvLayer stem_;
    NormLayer stem_norm_;
    std::vector<Stage> stages_;
    std::vector<ConvLayer> fpn_lateral_;
    std::vector<ConvLayer> fpn_output_;
    ConvLayer rpn_conv_;
    ConvLayer rpn_obj_;
    ConvLayer rpn_delta_;
    FcLayer head_fc1_, head_fc2_;
    FcLayer box_fc_;
    FcLayer grading_fc_;
    ConvLayer mask_conv1_, mask_conv2_, mask_logits_;
    NormLayer mask_norm1_, mask_norm2_;

    std::vector<nn::Param*> ordered_params_;
};

}  // namespace regdet::model
