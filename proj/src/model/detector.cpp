#include "regdet/model/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "regdet/losses.hpp"

namespace regdet::model {

using nn::Binder;
using nn::Param;
using nn::Tensor;
using nn::Var;

// --- config ---------------------------------------------------------------------

void DetectorConfig::validate() const {
    require<ConfigError>(dims == 2 || dims == 3, "detector: dims must be 2 or 3");
    require<ConfigError>(class_count >= 2, "detector: class_count must be >= 2");
    require<ConfigError>(!stage_channels.empty() && stage_channels.size() <= 5,
                         "detector: 1..5 backbone stages supported");
    require<ConfigError>(fpn_channels > 0 && rpn_feature_maps > 0, "detector: bad channel counts");
    require<ConfigError>(proposal_match_iou > 0.0 && proposal_match_iou < 1.0,
                         "detector: proposal_match_iou must lie in (0, 1)");
    require<ConfigError>(rpn_match_low <= rpn_match_high, "detector: rpn match thresholds inverted");
    require<ConfigError>(!anchor_scales.empty() && !anchor_ratios.empty(),
                         "detector: need anchor scales and ratios");
    for (int p : pool_grading) require<ConfigError>(p > 0, "detector: bad grading pool size");
    for (int p : pool_mask) require<ConfigError>(p > 0, "detector: bad mask pool size");
    require<ConfigError>(static_cast<int>(delta_std().size()) == box_dim(),
                         "detector: delta normalization length must be ", box_dim());
    require<ConfigError>(negative_ratio > 0, "detector: negative_ratio must be > 0");
    if (dims == 3)
        require<ConfigError>(stage_z_strides.size() >= stage_channels.size(),
                             "detector: need a z stride per stage in 3D");
}

nlohmann::json DetectorConfig::to_json() const {
    return nlohmann::json{{"dims", dims},
                          {"grading_head", to_string(grading_head)},
                          {"class_count", class_count},
                          {"input_channels", input_channels},
                          {"stage_channels", stage_channels},
                          {"stage_z_strides", stage_z_strides},
                          {"fpn_channels", fpn_channels},
                          {"rpn_feature_maps", rpn_feature_maps},
                          {"gn_groups", gn_groups},
                          {"anchor_scales", anchor_scales},
                          {"anchor_ratios", anchor_ratios},
                          {"anchor_base", anchor_base},
                          {"anchor_depth", anchor_depth},
                          {"rpn_match_high", rpn_match_high},
                          {"rpn_match_low", rpn_match_low},
                          {"rpn_positive_cap", rpn_positive_cap},
                          {"negative_ratio", negative_ratio},
                          {"rpn_negative_floor", rpn_negative_floor},
                          {"train_pre_nms", train_pre_nms},
                          {"train_post_nms", train_post_nms},
                          {"eval_pre_nms", eval_pre_nms},
                          {"eval_post_nms", eval_post_nms},
                          {"rpn_nms_iou", rpn_nms_iou},
                          {"proposal_match_iou", proposal_match_iou},
                          {"roi_positive_cap", roi_positive_cap},
                          {"pool_grading", pool_grading},
                          {"pool_mask", pool_mask},
                          {"roialign_sampling", roialign_sampling},
                          {"head_fc_dim", head_fc_dim},
                          {"mask_head_channels", mask_head_channels},
                          {"append_gt_proposals", append_gt_proposals},
                          {"bbox_std", bbox_std},
                          {"bbox_std_3d", bbox_std_3d},
                          {"w_rpn_obj", w_rpn_obj},
                          {"w_rpn_box", w_rpn_box},
                          {"w_grading", w_grading},
                          {"w_box", w_box},
                          {"w_mask", w_mask},
                          {"detection_nms_iou", detection_nms_iou},
                          {"detection_min_objectness", detection_min_objectness},
                          {"detection_max_instances", detection_max_instances},
                          {"init_seed", init_seed}};
}

DetectorConfig DetectorConfig::from_json(const nlohmann::json& j) {
    DetectorConfig c;
    try {
        c.dims = j.value("dims", c.dims);
        if (j.contains("grading_head"))
            c.grading_head = grading_head_from_string(j["grading_head"].get<std::string>());
        c.class_count = j.value("class_count", c.class_count);
        c.input_channels = j.value("input_channels", c.input_channels);
        if (j.contains("stage_channels"))
            c.stage_channels = j["stage_channels"].get<std::vector<int>>();
        if (j.contains("stage_z_strides"))
            c.stage_z_strides = j["stage_z_strides"].get<std::vector<int>>();
        c.fpn_channels = j.value("fpn_channels", c.fpn_channels);
        c.rpn_feature_maps = j.value("rpn_feature_maps", c.rpn_feature_maps);
        c.gn_groups = j.value("gn_groups", c.gn_groups);
        if (j.contains("anchor_scales"))
            c.anchor_scales = j["anchor_scales"].get<std::vector<double>>();
        if (j.contains("anchor_ratios"))
            c.anchor_ratios = j["anchor_ratios"].get<std::vector<double>>();
        c.anchor_base = j.value("anchor_base", c.anchor_base);
        c.anchor_depth = j.value("anchor_depth", c.anchor_depth);
        c.rpn_match_high = j.value("rpn_match_high", c.rpn_match_high);
        c.rpn_match_low = j.value("rpn_match_low", c.rpn_match_low);
        c.rpn_positive_cap = j.value("rpn_positive_cap", c.rpn_positive_cap);
        c.negative_ratio = j.value("negative_ratio", c.negative_ratio);
        c.rpn_negative_floor = j.value("rpn_negative_floor", c.rpn_negative_floor);
        c.train_pre_nms = j.value("train_pre_nms", c.train_pre_nms);
        c.train_post_nms = j.value("train_post_nms", c.train_post_nms);
        c.eval_pre_nms = j.value("eval_pre_nms", c.eval_pre_nms);
        c.eval_post_nms = j.value("eval_post_nms", c.eval_post_nms);
        c.rpn_nms_iou = j.value("rpn_nms_iou", c.rpn_nms_iou);
        c.proposal_match_iou = j.value("proposal_match_iou", c.proposal_match_iou);
        c.roi_positive_cap = j.value("roi_positive_cap", c.roi_positive_cap);
        if (j.contains("pool_grading")) c.pool_grading = j["pool_grading"].get<std::vector<int>>();
        if (j.contains("pool_mask")) c.pool_mask = j["pool_mask"].get<std::vector<int>>();
        c.roialign_sampling = j.value("roialign_sampling", c.roialign_sampling);
        c.head_fc_dim = j.value("head_fc_dim", c.head_fc_dim);
        c.mask_head_channels = j.value("mask_head_channels", c.mask_head_channels);
        c.append_gt_proposals = j.value("append_gt_proposals", c.append_gt_proposals);
        if (j.contains("bbox_std")) c.bbox_std = j["bbox_std"].get<std::vector<double>>();
        if (j.contains("bbox_std_3d")) c.bbox_std_3d = j["bbox_std_3d"].get<std::vector<double>>();
        c.w_rpn_obj = j.value("w_rpn_obj", c.w_rpn_obj);
        c.w_rpn_box = j.value("w_rpn_box", c.w_rpn_box);
        c.w_grading = j.value("w_grading", c.w_grading);
        c.w_box = j.value("w_box", c.w_box);
        c.w_mask = j.value("w_mask", c.w_mask);
        c.detection_nms_iou = j.value("detection_nms_iou", c.detection_nms_iou);
        c.detection_min_objectness = j.value("detection_min_objectness", c.detection_min_objectness);
        c.detection_max_instances = j.value("detection_max_instances", c.detection_max_instances);
        c.init_seed = j.value("init_seed", c.init_seed);
    } catch (const nlohmann::json::exception& e) {
        fail<ConfigError>("bad detector config: ", e.what());
    }
    c.validate();
    return c;
}

// --- box helpers -----------------------------------------------------------------

std::vector<double> encode_box_delta(const Box& target, const Box& anchor,
                                     const std::vector<double>& std_dev) {
    const int dims = target.dims;
    std::vector<double> delta(2 * dims);
    for (int a = 0; a < dims; ++a) {
        const double asize = std::max(1e-6, anchor.extent(a));
        const double tsize = std::max(1e-6, target.extent(a));
        delta[a] = (target.center(a) - anchor.center(a)) / asize / std_dev[a];
        delta[dims + a] = std::log(tsize / asize) / std_dev[dims + a];
    }
    return delta;
}

Box decode_box_delta(const std::vector<double>& delta, const Box& anchor,
                     const std::vector<double>& std_dev) {
    const int dims = anchor.dims;
    Box out;
    out.dims = dims;
    for (int a = 0; a < dims; ++a) {
        const double asize = std::max(1e-6, anchor.extent(a));
        const double center = anchor.center(a) + delta[a] * std_dev[a] * asize;
        // Clamp the log-size term so a wild early regression cannot explode.
        const double log_ratio = std::clamp(delta[dims + a] * std_dev[dims + a], -4.0, 4.0);
        const double size = asize * std::exp(log_ratio);
        out.lo[a] = center - size / 2.0;
        out.hi[a] = center + size / 2.0;
    }
    return out;
}

std::vector<int> nms(const std::vector<Box>& boxes, const std::vector<double>& scores,
                     double iou_thresh) {
    require<ConfigError>(boxes.size() == scores.size(), "nms: box/score count mismatch");
    std::vector<int> order(boxes.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });
    std::vector<int> keep;
    for (int idx : order) {
        bool suppressed = false;
        for (int k : keep) {
            if (iou(boxes[idx], boxes[k]) > iou_thresh) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) keep.push_back(idx);
    }
    return keep;
}

HeadTargets assign_head_targets(const std::vector<Box>& proposals,
                                const std::vector<Box>& gt_boxes, double match_iou) {
    HeadTargets t;
    t.is_positive.assign(proposals.size(), false);
    t.matched_gt.assign(proposals.size(), -1);
    for (std::size_t p = 0; p < proposals.size(); ++p) {
        double best = 0.0;
        int best_gt = -1;
        for (std::size_t g = 0; g < gt_boxes.size(); ++g) {
            const double v = iou(proposals[p], gt_boxes[g]);
            if (v > best) {
                best = v;
                best_gt = static_cast<int>(g);
            }
        }
        if (best_gt >= 0 && best >= match_iou) {
            t.is_positive[p] = true;
            t.matched_gt[p] = best_gt;
        }
    }
    return t;
}

// --- construction ----------------------------------------------------------------

namespace {

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

Tensor init_normal(const std::vector<int>& shape, double stddev, std::uint64_t seed,
                   const std::string& name) {
    Tensor t = Tensor::zeros(shape);
    RandomStream rng(derive_seed(seed, fnv1a(name)));
    for (std::size_t i = 0; i < t.size(); ++i)
        t.data()[i] = static_cast<float>(rng.normal(0.0, stddev));
    return t;
}

bool is_output_layer(const std::string& name) {
    return name.find("rpn.obj") != std::string::npos ||
           name.find("rpn.delta") != std::string::npos ||
           name.find("heads.box") != std::string::npos ||
           name.find("heads.grading") != std::string::npos ||
           name.find("mask.logits") != std::string::npos;
}

}  // namespace

Detector::ConvLayer Detector::make_conv(const std::string& name, int in_ch, int out_ch,
                                        int kernel, int stride, int stride_z, int pad) {
    ConvLayer layer;
    layer.stride_y = layer.stride_x = stride;
    layer.stride_z = stride_z;
    layer.pad_y = layer.pad_x = pad;
    layer.pad_z = kernel == 1 ? 0 : pad;
    std::vector<int> wshape;
    int fan_in;
    if (config_.dims == 3) {
        wshape = {out_ch, in_ch, kernel, kernel, kernel};
        fan_in = in_ch * kernel * kernel * kernel;
    } else {
        wshape = {out_ch, in_ch, kernel, kernel};
        fan_in = in_ch * kernel * kernel;
    }
    const double stddev = is_output_layer(name) ? 0.01 : std::sqrt(2.0 / fan_in);
    layer.w = Param{name + ".w", init_normal(wshape, stddev, config_.init_seed, name + ".w")};
    layer.b = Param{name + ".b", Tensor::zeros({out_ch})};
    ordered_params_.push_back(&layer.w);  // fixed up after move in ctor
    ordered_params_.push_back(&layer.b);
    return layer;
}

Detector::NormLayer Detector::make_norm(const std::string& name, int channels) {
    NormLayer layer;
    layer.gamma = Param{name + ".gamma", Tensor::full({channels}, 1.0f)};
    layer.beta = Param{name + ".beta", Tensor::zeros({channels})};
    ordered_params_.push_back(&layer.gamma);
    ordered_params_.push_back(&layer.beta);
    return layer;
}

Detector::FcLayer Detector::make_fc(const std::string& name, int in_dim, int out_dim) {
    FcLayer layer;
    const double stddev = is_output_layer(name) ? 0.01 : std::sqrt(2.0 / in_dim);
    layer.w = Param{name + ".w", init_normal({out_dim, in_dim}, stddev, config_.init_seed,
                                             name + ".w")};
    layer.b = Param{name + ".b", Tensor::zeros({out_dim})};
    ordered_params_.push_back(&layer.w);
    ordered_params_.push_back(&layer.b);
    return layer;
}

Detector::Detector(DetectorConfig config) : config_(std::move(config)) {
    config_.validate();
    anchors_per_cell_ =
        static_cast<int>(config_.anchor_scales.size() * config_.anchor_ratios.size());

    const int levels = config_.level_count();
    const int c0 = config_.stage_channels[0];

    stem_ = make_conv("backbone.stem.conv", config_.input_channels, c0, 3, 2, 1, 1);
    stem_norm_ = make_norm("backbone.stem.gn", c0);

    int prev = c0;
    for (int k = 0; k < levels; ++k) {
        const int ch = config_.stage_channels[k];
        const int sz = config_.dims == 3 ? config_.stage_z_strides[k] : 1;
        Stage stage;
        stage.down = make_conv(cat("backbone.stage", k, ".down.conv"), prev, ch, 3, 2, sz, 1);
        stage.down_norm = make_norm(cat("backbone.stage", k, ".down.gn"), ch);
        stage.conv1 = make_conv(cat("backbone.stage", k, ".block.conv1"), ch, ch, 3, 1, 1, 1);
        stage.norm1 = make_norm(cat("backbone.stage", k, ".block.gn1"), ch);
        stage.conv2 = make_conv(cat("backbone.stage", k, ".block.conv2"), ch, ch, 3, 1, 1, 1);
        stage.norm2 = make_norm(cat("backbone.stage", k, ".block.gn2"), ch);
        stages_.push_back(std::move(stage));
        prev = ch;
    }

    for (int k = 0; k < levels; ++k) {
        fpn_lateral_.push_back(make_conv(cat("fpn.lateral", k), config_.stage_channels[k],
                                         config_.fpn_channels, 1, 1, 1, 0));
        fpn_output_.push_back(
            make_conv(cat("fpn.output", k), config_.fpn_channels, config_.fpn_channels, 3, 1, 1, 1));
    }

    rpn_conv_ = make_conv("rpn.conv", config_.fpn_channels, config_.rpn_feature_maps, 3, 1, 1, 1);
    rpn_obj_ = make_conv("rpn.obj", config_.rpn_feature_maps, anchors_per_cell_, 1, 1, 1, 0);
    rpn_delta_ = make_conv("rpn.delta", config_.rpn_feature_maps,
                           anchors_per_cell_ * config_.box_dim(), 1, 1, 1, 0);

    int pooled_dim = config_.fpn_channels * config_.pool_grading[0] * config_.pool_grading[1];
    if (config_.dims == 3) pooled_dim *= config_.pool_grading[2];
    head_fc1_ = make_fc("heads.fc1", pooled_dim, config_.head_fc_dim);
    head_fc2_ = make_fc("heads.fc2", config_.head_fc_dim, config_.head_fc_dim);
    box_fc_ = make_fc("heads.box.fc", config_.head_fc_dim, config_.box_dim());
    if (config_.grading_head == GradingHead::kClassifier)
        grading_fc_ = make_fc("heads.grading.cls.fc", config_.head_fc_dim, config_.class_count);
    else
        grading_fc_ = make_fc("heads.grading.reg.fc", config_.head_fc_dim, 1);

    const int mc = config_.mask_head_channels;
    mask_conv1_ = make_conv("heads.mask.conv1", config_.fpn_channels, mc, 3, 1, 1, 1);
    mask_norm1_ = make_norm("heads.mask.gn1", mc);
    mask_conv2_ = make_conv("heads.mask.conv2", mc, mc, 3, 1, 1, 1);
    mask_norm2_ = make_norm("heads.mask.gn2", mc);
    mask_logits_ = make_conv("heads.mask.logits", mc, 1, 1, 1, 1, 0);

    // make_* recorded addresses of temporaries; rebuild the ordered list from
    // the final member locations.
    ordered_params_.clear();
    auto push_conv = [&](ConvLayer& l) {
        ordered_params_.push_back(&l.w);
        ordered_params_.push_back(&l.b);
    };
    auto push_norm = [&](NormLayer& l) {
        ordered_params_.push_back(&l.gamma);
        ordered_params_.push_back(&l.beta);
    };
    auto push_fc = [&](FcLayer& l) {
        ordered_params_.push_back(&l.w);
        ordered_params_.push_back(&l.b);
    };
    push_conv(stem_);
    push_norm(stem_norm_);
    for (Stage& s : stages_) {
        push_conv(s.down);
        push_norm(s.down_norm);
        push_conv(s.conv1);
        push_norm(s.norm1);
        push_conv(s.conv2);
        push_norm(s.norm2);
    }
    for (ConvLayer& l : fpn_lateral_) push_conv(l);
    for (ConvLayer& l : fpn_output_) push_conv(l);
    push_conv(rpn_conv_);
    push_conv(rpn_obj_);
    push_conv(rpn_delta_);
    push_fc(head_fc1_);
    push_fc(head_fc2_);
    push_fc(box_fc_);
    push_fc(grading_fc_);
    push_conv(mask_conv1_);
    push_norm(mask_norm1_);
    push_conv(mask_conv2_);
    push_norm(mask_norm2_);
    push_conv(mask_logits_);
}

std::vector<Param*> Detector::parameters() { return ordered_params_; }

std::vector<std::pair<std::string, std::vector<int>>> Detector::parameter_signature() const {
    std::vector<std::pair<std::string, std::vector<int>>> sig;
    for (const Param* p : ordered_params_) sig.emplace_back(p->name, p->value.shape);
    return sig;
}

// --- forward pieces -----------------------------------------------------------------

Var Detector::apply_conv(Binder& bind, const ConvLayer& layer, const Var& x) const {
    if (config_.dims == 3)
        return nn::conv3d(x, bind(layer.w), bind(layer.b), layer.stride_z, layer.stride_y,
                          layer.stride_x, layer.pad_z, layer.pad_y, layer.pad_x);
    return nn::conv2d(x, bind(layer.w), bind(layer.b), layer.stride_y, layer.stride_x,
                      layer.pad_y, layer.pad_x);
}

Var Detector::apply_norm(Binder& bind, const NormLayer& layer, const Var& x) const {
    const int channels = x->value.dim(0);
    int groups = std::min(config_.gn_groups, channels);
    while (channels % groups != 0) --groups;
    return nn::group_norm(x, bind(layer.gamma), bind(layer.beta), groups);
}

Var Detector::apply_fc(Binder& bind, const FcLayer& layer, const Var& x) const {
    return nn::linear(x, bind(layer.w), bind(layer.b));
}

Detector::Pyramid Detector::forward_pyramid(Binder& bind, const Var& input) const {
    require<DataError>(input->value.rank() == config_.dims + 1, "detector: patch rank ",
                       input->value.rank(), " does not match configured dims ", config_.dims);
    Var x = nn::relu(apply_norm(bind, stem_norm_, apply_conv(bind, stem_, input)));

    std::vector<Var> stage_out;
    for (const Stage& stage : stages_) {
        x = nn::relu(apply_norm(bind, stage.down_norm, apply_conv(bind, stage.down, x)));
        Var h = nn::relu(apply_norm(bind, stage.norm1, apply_conv(bind, stage.conv1, x)));
        h = apply_norm(bind, stage.norm2, apply_conv(bind, stage.conv2, h));
        x = nn::relu(nn::add(x, h));
        stage_out.push_back(x);
    }

    const int levels = config_.level_count();
    std::vector<Var> laterals(levels);
    for (int k = 0; k < levels; ++k)
        laterals[k] = apply_conv(bind, fpn_lateral_[k], stage_out[k]);

    Pyramid pyr;
    pyr.levels.resize(levels);
    Var top = laterals[levels - 1];
    pyr.levels[levels - 1] = apply_conv(bind, fpn_output_[levels - 1], top);
    for (int k = levels - 2; k >= 0; --k) {
        std::vector<int> target(laterals[k]->value.shape.begin() + 1,
                                laterals[k]->value.shape.end());
        top = nn::add(laterals[k], nn::upsample_to(top, target));
        pyr.levels[k] = apply_conv(bind, fpn_output_[k], top);
    }
    return pyr;
}

Detector::RpnOut Detector::forward_rpn(Binder& bind, const Pyramid& pyramid) const {
    RpnOut out;
    for (const Var& level : pyramid.levels) {
        Var t = nn::relu(apply_conv(bind, rpn_conv_, level));
        out.obj_logits.push_back(apply_conv(bind, rpn_obj_, t));
        out.deltas.push_back(apply_conv(bind, rpn_delta_, t));
    }
    return out;
}

Detector::AnchorSet Detector::make_anchors(
    const std::vector<std::vector<int>>& level_spatial) const {
    AnchorSet set;
    const int bd = config_.box_dim();
    long obj_offset = 0;
    long delta_offset = 0;
    for (int k = 0; k < config_.level_count(); ++k) {
        const auto& sp = level_spatial[k];
        const int sxy = config_.stride_xy(k);
        long cells = 1;
        for (int d : sp) cells *= d;

        const int gd = config_.dims == 3 ? sp[0] : 1;
        const int gh = config_.dims == 3 ? sp[1] : sp[0];
        const int gw = config_.dims == 3 ? sp[2] : sp[1];
        const int sz = config_.dims == 3 ? config_.stride_z(k) : 1;

        int a = 0;
        for (std::size_t si = 0; si < config_.anchor_scales.size(); ++si) {
            for (std::size_t ri = 0; ri < config_.anchor_ratios.size(); ++ri, ++a) {
                const double side = sxy * config_.anchor_base * config_.anchor_scales[si];
                const double ah = side * std::sqrt(config_.anchor_ratios[ri]);
                const double aw = side / std::sqrt(config_.anchor_ratios[ri]);
                long cell = 0;
                for (int z = 0; z < gd; ++z) {
                    for (int y = 0; y < gh; ++y) {
                        for (int x = 0; x < gw; ++x, ++cell) {
                            const double cy = (y + 0.5) * sxy;
                            const double cx = (x + 0.5) * sxy;
                            Box box;
                            if (config_.dims == 3) {
                                const double cz = (z + 0.5) * sz;
                                box = Box::make3d(cz - config_.anchor_depth / 2, cy - ah / 2,
                                                  cx - aw / 2, cz + config_.anchor_depth / 2,
                                                  cy + ah / 2, cx + aw / 2);
                            } else {
                                box = Box::make2d(cy - ah / 2, cx - aw / 2, cy + ah / 2,
                                                  cx + aw / 2);
                            }
                            set.boxes.push_back(box);
                            set.level_of.push_back(k);
                            set.flat_obj_index.push_back(obj_offset + a * cells + cell);
                            std::vector<long> didx(bd);
                            for (int c = 0; c < bd; ++c)
                                didx[c] = delta_offset + (static_cast<long>(a) * bd + c) * cells +
                                          cell;
                            set.delta_index.push_back(std::move(didx));
                        }
                    }
                }
            }
        }
        obj_offset += static_cast<long>(anchors_per_cell_) * cells;
        delta_offset += static_cast<long>(anchors_per_cell_) * bd * cells;
    }
    return set;
}

std::vector<Proposal> Detector::decode_proposals(const AnchorSet& anchors,
                                                 const std::vector<float>& obj_logits,
                                                 const std::vector<float>& deltas_flat,
                                                 const std::vector<int>& patch_shape, int pre_nms,
                                                 int post_nms) const {
    for (float v : obj_logits)
        require<NumericError>(std::isfinite(v), "non-finite objectness logits in the network");
    const std::size_t n = anchors.boxes.size();
    std::vector<double> objectness(n);
    for (std::size_t i = 0; i < n; ++i)
        objectness[i] = 1.0 / (1.0 + std::exp(-static_cast<double>(
                                  obj_logits[anchors.flat_obj_index[i]])));

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    const std::size_t keep_n = std::min<std::size_t>(n, static_cast<std::size_t>(pre_nms));
    std::partial_sort(order.begin(), order.begin() + keep_n, order.end(), [&](int a, int b) {
        if (objectness[a] != objectness[b]) return objectness[a] > objectness[b];
        return a < b;
    });
    order.resize(keep_n);

    Box bounds;
    bounds.dims = config_.dims;
    for (int a = 0; a < config_.dims; ++a) {
        bounds.lo[a] = 0;
        bounds.hi[a] = patch_shape[a];
    }

    const int bd = config_.box_dim();
    std::vector<Box> boxes;
    std::vector<double> scores;
    std::vector<int> src;
    boxes.reserve(keep_n);
    for (int idx : order) {
        std::vector<double> delta(bd);
        for (int c = 0; c < bd; ++c) delta[c] = deltas_flat[anchors.delta_index[idx][c]];
        Box b = clip_box(decode_box_delta(delta, anchors.boxes[idx], config_.delta_std()), bounds);
        bool ok = true;
        for (int a = 0; a < b.dims; ++a) ok = ok && b.extent(a) > 1e-3;
        if (!ok) continue;
        boxes.push_back(b);
        scores.push_back(objectness[idx]);
        src.push_back(idx);
    }

    std::vector<int> keep = nms(boxes, scores, config_.rpn_nms_iou);
    if (static_cast<int>(keep.size()) > post_nms) keep.resize(post_nms);

    std::vector<Proposal> proposals;
    proposals.reserve(keep.size());
    for (int k : keep) proposals.push_back(Proposal{boxes[k], scores[k]});
    return proposals;
}

int Detector::assign_pyramid_level(const Box& box) const {
    const int y_axis = config_.dims == 3 ? 1 : 0;
    const double size =
        std::sqrt(std::max(1e-6, box.extent(y_axis) * box.extent(y_axis + 1)));
    const double base = config_.anchor_base * config_.stride_xy(0);
    const int level = static_cast<int>(std::lround(std::log2(std::max(size, 1.0) / base)));
    return std::clamp(level, 0, config_.level_count() - 1);
}

Box Detector::box_to_feature_coords(const Box& box, int level) const {
    Box f = box;
    const double sxy = config_.stride_xy(level);
    if (config_.dims == 3) {
        const double sz = config_.stride_z(level);
        f.lo[0] /= sz;
        f.hi[0] /= sz;
        for (int a = 1; a < 3; ++a) {
            f.lo[a] /= sxy;
            f.hi[a] /= sxy;
        }
    } else {
        for (int a = 0; a < 2; ++a) {
            f.lo[a] /= sxy;
            f.hi[a] /= sxy;
        }
    }
    return f;
}

nn::Var Detector::pool_on_level(Binder& bind, const Pyramid& pyramid, const Box& box, int level,
                                const std::vector<int>& pool) const {
    const Box f = box_to_feature_coords(box, level);
    if (config_.dims == 3)
        return nn::roi_align3d(pyramid.levels[level], {f}, pool[2], pool[0], pool[1],
                               config_.roialign_sampling);
    return nn::roi_align2d(pyramid.levels[level], {f}, pool[0], pool[1],
                           config_.roialign_sampling);
}

nn::Var Detector::roi_trunk(Binder& bind, const Pyramid& pyramid,
                            const std::vector<Box>& boxes) const {
    // Pool each roi on its assigned level, then run the shared FC trunk on
    // the stacked features.
    std::vector<Var> pooled;
    pooled.reserve(boxes.size());
    for (const Box& box : boxes)
        pooled.push_back(
            pool_on_level(bind, pyramid, box, assign_pyramid_level(box), config_.pool_grading));
    Var stacked = pooled.size() == 1 ? pooled[0] : nn::concat_rows(pooled);
    const int r = static_cast<int>(boxes.size());
    const int flat = static_cast<int>(stacked->value.count() / r);
    Var x = nn::reshape(stacked, {r, flat});
    x = nn::relu(apply_fc(bind, head_fc1_, x));
    x = nn::relu(apply_fc(bind, head_fc2_, x));
    return x;
}

// --- training ---------------------------------------------------------------------

namespace {

struct LossGraph {
    Var total;
    std::map<std::string, double> components;
    bool had_positives = false;
    bool grading_flagged_zero = false;
};

std::vector<int> seeded_subsample(std::vector<int> pool, int cap, RandomStream& rng) {
    if (static_cast<int>(pool.size()) <= cap) return pool;
    for (std::size_t i = pool.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1));
        std::swap(pool[i - 1], pool[j]);
    }
    pool.resize(cap);
    std::sort(pool.begin(), pool.end());
    return pool;
}

}  // namespace

LossBreakdown Detector::train_step_sample(const SampleTargets& sample,
                                          std::map<const Param*, Tensor>& grad_acc) const {
    Binder bind(true);
    // Build the losses inline so the graph lives in this scope.
    LossGraph g;

    const auto patch_shape_vec = [&] {
        std::vector<int> s(sample.patch.shape.begin() + 1, sample.patch.shape.end());
        return s;
    }();

    Pyramid pyramid = forward_pyramid(bind, sample.patch);
    RpnOut rpn = forward_rpn(bind, pyramid);

    std::vector<std::vector<int>> level_spatial;
    for (const Var& obj : rpn.obj_logits)
        level_spatial.emplace_back(obj->value.shape.begin() + 1, obj->value.shape.end());
    AnchorSet anchors = make_anchors(level_spatial);

    // Flatten RPN outputs into single graph nodes so anchor selections can be
    // expressed as gathers.
    std::vector<Var> obj_parts, delta_parts;
    for (std::size_t k = 0; k < rpn.obj_logits.size(); ++k) {
        obj_parts.push_back(nn::reshape(rpn.obj_logits[k],
                                        {static_cast<int>(rpn.obj_logits[k]->value.count())}));
        delta_parts.push_back(
            nn::reshape(rpn.deltas[k], {static_cast<int>(rpn.deltas[k]->value.count())}));
    }
    Var obj_flat = obj_parts.size() == 1 ? obj_parts[0] : nn::concat_rows(obj_parts);
    Var delta_flat = delta_parts.size() == 1 ? delta_parts[0] : nn::concat_rows(delta_parts);

    RandomStream sample_rng(derive_seed(sample.sample_seed, 0xA11CE));

    // --- RPN anchor matching (value space)
    const std::size_t n_anchors = anchors.boxes.size();
    std::vector<double> anchor_best_iou(n_anchors, 0.0);
    std::vector<int> anchor_best_gt(n_anchors, -1);
    std::vector<int> gt_best_anchor(sample.gt_boxes.size(), -1);
    std::vector<double> gt_best_iou(sample.gt_boxes.size(), 0.0);
    for (std::size_t i = 0; i < n_anchors; ++i) {
        for (std::size_t gidx = 0; gidx < sample.gt_boxes.size(); ++gidx) {
            const double v = iou(anchors.boxes[i], sample.gt_boxes[gidx]);
            if (v > anchor_best_iou[i]) {
                anchor_best_iou[i] = v;
                anchor_best_gt[i] = static_cast<int>(gidx);
            }
            if (v > gt_best_iou[gidx]) {
                gt_best_iou[gidx] = v;
                gt_best_anchor[gidx] = static_cast<int>(i);
            }
        }
    }

    std::vector<int> rpn_positive;
    std::vector<char> is_positive(n_anchors, 0);
    for (std::size_t i = 0; i < n_anchors; ++i)
        if (anchor_best_gt[i] >= 0 && anchor_best_iou[i] >= config_.rpn_match_high)
            is_positive[i] = 1;
    for (std::size_t gidx = 0; gidx < sample.gt_boxes.size(); ++gidx)
        if (gt_best_anchor[gidx] >= 0 && gt_best_iou[gidx] > 0.0)
            is_positive[gt_best_anchor[gidx]] = 1;
    for (std::size_t i = 0; i < n_anchors; ++i)
        if (is_positive[i]) rpn_positive.push_back(static_cast<int>(i));
    rpn_positive = seeded_subsample(std::move(rpn_positive), config_.rpn_positive_cap, sample_rng);

    std::vector<int> negative_pool;
    std::vector<double> negative_scores;
    const float* obj_values = obj_flat->value.data();
    for (std::size_t i = 0; i < n_anchors; ++i) {
        if (is_positive[i] || anchor_best_iou[i] >= config_.rpn_match_low) continue;
        negative_pool.push_back(static_cast<int>(i));
        negative_scores.push_back(
            1.0 / (1.0 + std::exp(-static_cast<double>(obj_values[anchors.flat_obj_index[i]]))));
    }
    const int mining_pos = std::max<int>(
        static_cast<int>(rpn_positive.size()),
        static_cast<int>(std::ceil(config_.rpn_negative_floor / config_.negative_ratio)));
    std::vector<int> mined = losses::mine_hard_negatives(negative_scores, mining_pos,
                                                         config_.negative_ratio, sample_rng);

    std::vector<Var> weighted_terms;
    auto add_component = [&](const std::string& name, const Var& term, double weight) {
        const double value = term ? static_cast<double>(term->value.item()) * weight : 0.0;
        g.components[name] = value;
        if (term && weight != 0.0) weighted_terms.push_back(nn::scale(term, weight));
    };

    // rpn objectness: positives toward 1, mined hard negatives toward 0.
    if (!rpn_positive.empty()) {
        std::vector<long> idx;
        for (int i : rpn_positive) idx.push_back(anchors.flat_obj_index[i]);
        Var logits = nn::gather_flat(obj_flat, idx);
        add_component("rpn_obj_fg",
                      nn::bce_with_logits_mean(logits, Tensor::full({(int)idx.size()}, 1.0f)),
                      config_.w_rpn_obj);
    } else {
        g.components["rpn_obj_fg"] = 0.0;
    }
    if (!mined.empty()) {
        std::vector<long> idx;
        for (int m : mined) idx.push_back(anchors.flat_obj_index[negative_pool[m]]);
        Var logits = nn::gather_flat(obj_flat, idx);
        add_component("rpn_obj_bg",
                      nn::bce_with_logits_mean(logits, Tensor::zeros({(int)idx.size()})),
                      config_.w_rpn_obj);
    } else {
        g.components["rpn_obj_bg"] = 0.0;
    }

    // rpn box regression on positives.
    if (!rpn_positive.empty()) {
        const int bd = config_.box_dim();
        std::vector<long> idx;
        std::vector<float> targets;
        for (int i : rpn_positive) {
            const Box& gt = sample.gt_boxes[anchor_best_gt[i] >= 0 ? anchor_best_gt[i] : 0];
            const auto delta = encode_box_delta(gt, anchors.boxes[i], config_.delta_std());
            for (int c = 0; c < bd; ++c) {
                idx.push_back(anchors.delta_index[i][c]);
                targets.push_back(static_cast<float>(delta[c]));
            }
        }
        Var preds = nn::gather_flat(delta_flat, idx);
        add_component("rpn_box",
                      nn::smooth_l1_mean(preds, Tensor::from({(int)targets.size()}, targets)),
                      config_.w_rpn_box);
    } else {
        g.components["rpn_box"] = 0.0;
    }

    // --- second stage
    std::vector<Proposal> proposals =
        decode_proposals(anchors, std::vector<float>(obj_flat->value.store->begin(),
                                                     obj_flat->value.store->end()),
                         std::vector<float>(delta_flat->value.store->begin(),
                                            delta_flat->value.store->end()),
                         patch_shape_vec, config_.train_pre_nms, config_.train_post_nms);
    if (config_.append_gt_proposals)
        for (const Box& gt : sample.gt_boxes) proposals.push_back(Proposal{gt, 1.0});

    std::vector<Box> proposal_boxes;
    for (const Proposal& p : proposals) proposal_boxes.push_back(p.box);
    HeadTargets head_targets =
        assign_head_targets(proposal_boxes, sample.gt_boxes, config_.proposal_match_iou);

    std::vector<int> positive_rows;
    for (std::size_t p = 0; p < proposal_boxes.size(); ++p)
        if (head_targets.is_positive[p]) positive_rows.push_back(static_cast<int>(p));
    positive_rows = seeded_subsample(std::move(positive_rows), config_.roi_positive_cap,
                                     sample_rng);
    g.had_positives = !positive_rows.empty();

    if (!positive_rows.empty()) {
        std::vector<Box> roi_boxes;
        std::vector<int> roi_gt;
        for (int row : positive_rows) {
            roi_boxes.push_back(proposal_boxes[row]);
            roi_gt.push_back(head_targets.matched_gt[row]);
        }
        Var features = roi_trunk(bind, pyramid, roi_boxes);
        const int r = static_cast<int>(roi_boxes.size());

        Var grading_out = apply_fc(bind, grading_fc_, features);
        if (config_.grading_head == GradingHead::kClassifier) {
            std::vector<int> labels;
            for (int gidx : roi_gt) labels.push_back(sample.grading_bins[gidx] - 1);
            add_component("grading", nn::softmax_ce_mean(grading_out, labels), config_.w_grading);
        } else {
            std::vector<float> targets;
            for (int gidx : roi_gt)
                targets.push_back(static_cast<float>(sample.grading_scores[gidx]));
            add_component("grading",
                          nn::smooth_l1_mean(nn::reshape(grading_out, {r}),
                                             Tensor::from({r}, targets)),
                          config_.w_grading);
        }

        Var box_out = apply_fc(bind, box_fc_, features);
        std::vector<float> box_targets;
        for (std::size_t k = 0; k < roi_boxes.size(); ++k) {
            const auto delta = encode_box_delta(sample.gt_boxes[roi_gt[k]], roi_boxes[k],
                                                config_.delta_std());
            for (double v : delta) box_targets.push_back(static_cast<float>(v));
        }
        add_component("box_refine",
                      nn::smooth_l1_mean(box_out, Tensor::from({r, config_.box_dim()},
                                                               box_targets)),
                      config_.w_box);

        // Mask loss on rois whose matched object carries an instance mask.
        std::vector<Var> mask_logit_rows;
        std::vector<float> mask_targets;
        for (std::size_t k = 0; k < roi_boxes.size(); ++k) {
            const int gidx = roi_gt[k];
            if (sample.mask_instances.empty() || sample.mask_instances[gidx] <= 0 ||
                !sample.scene)
                continue;
            const int level = assign_pyramid_level(roi_boxes[k]);
            Var pooled = pool_on_level(bind, pyramid, roi_boxes[k], level, config_.pool_mask);
            std::vector<int> sp(pooled->value.shape.begin() + 2, pooled->value.shape.end());
            std::vector<int> merged = {pooled->value.dim(1)};
            merged.insert(merged.end(), sp.begin(), sp.end());
            Var m = nn::reshape(pooled, merged);
            m = nn::relu(apply_norm(bind, mask_norm1_, apply_conv(bind, mask_conv1_, m)));
            m = nn::relu(apply_norm(bind, mask_norm2_, apply_conv(bind, mask_conv2_, m)));
            m = apply_conv(bind, mask_logits_, m);
            mask_logit_rows.push_back(nn::reshape(m, {1, (int)m->value.count()}));

            // Nearest-sampled instance mask over the roi, in scene coordinates.
            const Box& roi = roi_boxes[k];
            const LabelVolume& labels = sample.scene->labels;
            const int instance = sample.mask_instances[gidx];
            if (config_.dims == 3) {
                const int pd = config_.pool_mask[2], ph = config_.pool_mask[0],
                          pw = config_.pool_mask[1];
                for (int z = 0; z < pd; ++z)
                    for (int y = 0; y < ph; ++y)
                        for (int x = 0; x < pw; ++x) {
                            const double sz = roi.lo[0] + (z + 0.5) * roi.extent(0) / pd +
                                              sample.origin[0];
                            const double sy = roi.lo[1] + (y + 0.5) * roi.extent(1) / ph +
                                              sample.origin[1];
                            const double sx = roi.lo[2] + (x + 0.5) * roi.extent(2) / pw +
                                              sample.origin[2];
                            const int iz = std::clamp((int)sz, 0, labels.shape[0] - 1);
                            const int iy = std::clamp((int)sy, 0, labels.shape[1] - 1);
                            const int ix = std::clamp((int)sx, 0, labels.shape[2] - 1);
                            mask_targets.push_back(labels.at3(iz, iy, ix) == instance ? 1.0f
                                                                                      : 0.0f);
                        }
            } else {
                // 2D roi; the source labels are 3D when training slice-wise.
                const bool slice_wise = labels.dims() == 3;
                const int oy_axis = slice_wise ? 1 : 0;
                const int ph = config_.pool_mask[0], pw = config_.pool_mask[1];
                const int slice =
                    slice_wise ? std::clamp(static_cast<int>(sample.origin[0]), 0,
                                            labels.shape[0] - 1)
                               : 0;
                for (int y = 0; y < ph; ++y)
                    for (int x = 0; x < pw; ++x) {
                        const double sy = roi.lo[0] + (y + 0.5) * roi.extent(0) / ph +
                                          sample.origin[oy_axis];
                        const double sx = roi.lo[1] + (x + 0.5) * roi.extent(1) / pw +
                                          sample.origin[oy_axis + 1];
                        const int iy = std::clamp((int)sy, 0, labels.shape[oy_axis] - 1);
                        const int ix = std::clamp((int)sx, 0, labels.shape[oy_axis + 1] - 1);
                        const bool inside = slice_wise ? labels.at3(slice, iy, ix) == instance
                                                       : labels.at2(iy, ix) == instance;
                        mask_targets.push_back(inside ? 1.0f : 0.0f);
                    }
            }
        }
        if (!mask_logit_rows.empty()) {
            Var logits = mask_logit_rows.size() == 1 ? mask_logit_rows[0]
                                                     : nn::concat_rows(mask_logit_rows);
            add_component("mask",
                          nn::bce_with_logits_mean(
                              logits, Tensor::from({(int)mask_targets.size()}, mask_targets)
                                          .reshaped(logits->value.shape)),
                          config_.w_mask);
        } else {
            g.components["mask"] = 0.0;
        }
    } else {
        g.components["grading"] = 0.0;
        g.components["box_refine"] = 0.0;
        g.components["mask"] = 0.0;
        g.grading_flagged_zero = true;
    }

    LossBreakdown out;
    out.components = g.components;
    out.had_positives = g.had_positives;
    out.grading_flagged_zero = g.grading_flagged_zero;
    for (const auto& [name, value] : g.components) out.total += value;
    require<NumericError>(std::isfinite(out.total), "training loss is not finite");

    if (!weighted_terms.empty()) {
        Var total = nn::sum_scalars(weighted_terms);
        nn::backward(total);
        bind.add_grads_to(grad_acc);
    }
    return out;
}

LossBreakdown Detector::loss_components(const SampleTargets& sample) const {
    std::map<const Param*, Tensor> scratch;
    return train_step_sample(sample, scratch);
}

// --- inference ----------------------------------------------------------------------

namespace {

Tensor volume_to_tensor(const Volume& patch) {
    std::vector<int> shape;
    shape.push_back(1);
    shape.insert(shape.end(), patch.shape.begin(), patch.shape.end());
    return Tensor::from(shape, patch.data);
}

}  // namespace

std::vector<std::vector<int>> Detector::pyramid_shapes(const std::vector<int>& input_shape) const {
    auto conv_out = [](int n, int k, int s, int p) { return (n + 2 * p - k) / s + 1; };
    std::vector<int> cur = input_shape;
    const int dims = config_.dims;
    // stem: stride 2 in-plane, 1 in z.
    for (int a = 0; a < dims; ++a) {
        const bool z_axis = dims == 3 && a == 0;
        cur[a] = conv_out(cur[a], 3, z_axis ? 1 : 2, 1);
    }
    std::vector<std::vector<int>> shapes;
    for (int k = 0; k < config_.level_count(); ++k) {
        for (int a = 0; a < dims; ++a) {
            const bool z_axis = dims == 3 && a == 0;
            const int sz = z_axis ? config_.stage_z_strides[k] : 2;
            cur[a] = conv_out(cur[a], 3, sz, 1);
        }
        shapes.push_back(cur);
    }
    return shapes;
}

std::vector<Proposal> Detector::propose(const Volume& patch, bool train_counts) const {
    Binder bind(false);
    Tensor input = volume_to_tensor(patch);
    Pyramid pyramid = forward_pyramid(bind, input);
    RpnOut rpn = forward_rpn(bind, pyramid);

    std::vector<std::vector<int>> level_spatial;
    std::vector<float> obj_values, delta_values;
    for (std::size_t k = 0; k < rpn.obj_logits.size(); ++k) {
        const Tensor& o = rpn.obj_logits[k]->value;
        const Tensor& d = rpn.deltas[k]->value;
        level_spatial.emplace_back(o.shape.begin() + 1, o.shape.end());
        obj_values.insert(obj_values.end(), o.store->begin(), o.store->end());
        delta_values.insert(delta_values.end(), d.store->begin(), d.store->end());
    }
    AnchorSet anchors = make_anchors(level_spatial);
    return decode_proposals(anchors, obj_values, delta_values, patch.shape,
                            train_counts ? config_.train_pre_nms : config_.eval_pre_nms,
                            train_counts ? config_.train_post_nms : config_.eval_post_nms);
}

std::vector<double> Detector::rpn_objectness(const Volume& patch) const {
    Binder bind(false);
    Tensor input = volume_to_tensor(patch);
    Pyramid pyramid = forward_pyramid(bind, input);
    RpnOut rpn = forward_rpn(bind, pyramid);
    std::vector<double> out;
    for (const Var& o : rpn.obj_logits)
        for (float v : *o->value.store) out.push_back(1.0 / (1.0 + std::exp(-(double)v)));
    return out;
}

std::vector<Detection> Detector::predict(const Volume& patch) const {
    Binder bind(false);
    Tensor input = volume_to_tensor(patch);
    Pyramid pyramid = forward_pyramid(bind, input);
    RpnOut rpn = forward_rpn(bind, pyramid);

    std::vector<std::vector<int>> level_spatial;
    std::vector<float> obj_values, delta_values;
    for (std::size_t k = 0; k < rpn.obj_logits.size(); ++k) {
        const Tensor& o = rpn.obj_logits[k]->value;
        const Tensor& d = rpn.deltas[k]->value;
        level_spatial.emplace_back(o.shape.begin() + 1, o.shape.end());
        obj_values.insert(obj_values.end(), o.store->begin(), o.store->end());
        delta_values.insert(delta_values.end(), d.store->begin(), d.store->end());
    }
    AnchorSet anchors = make_anchors(level_spatial);
    std::vector<Proposal> proposals = decode_proposals(
        anchors, obj_values, delta_values, patch.shape, config_.eval_pre_nms,
        config_.eval_post_nms);

    std::vector<Proposal> kept;
    for (const Proposal& p : proposals)
        if (p.objectness >= config_.detection_min_objectness) kept.push_back(p);
    if (kept.empty()) return {};

    std::vector<Box> boxes;
    for (const Proposal& p : kept) boxes.push_back(p.box);
    Var features = roi_trunk(bind, pyramid, boxes);

    const int r = static_cast<int>(boxes.size());
    Tensor grading = apply_fc(bind, grading_fc_, features)->value;
    Tensor deltas = apply_fc(bind, box_fc_, features)->value;

    Box bounds;
    bounds.dims = config_.dims;
    for (int a = 0; a < config_.dims; ++a) {
        bounds.lo[a] = 0;
        bounds.hi[a] = patch.shape[a];
    }

    const int bd = config_.box_dim();
    std::vector<Box> refined(r);
    std::vector<double> scores(r);
    for (int i = 0; i < r; ++i) {
        std::vector<double> delta(bd);
        for (int c = 0; c < bd; ++c) delta[c] = deltas.data()[i * bd + c];
        refined[i] = clip_box(decode_box_delta(delta, boxes[i], config_.delta_std()), bounds);
        for (int a = 0; a < config_.dims; ++a)
            if (refined[i].extent(a) < 1e-3) refined[i] = boxes[i];
        scores[i] = kept[i].objectness;
    }

    // Final NMS is keyed on first-stage objectness for both head variants.
    std::vector<int> keep = nms(refined, scores, config_.detection_nms_iou);
    if (static_cast<int>(keep.size()) > config_.detection_max_instances)
        keep.resize(config_.detection_max_instances);

    Tensor probs;
    if (config_.grading_head == GradingHead::kClassifier)
        probs = nn::softmax_rows_value(grading);

    std::vector<Detection> detections;
    detections.reserve(keep.size());
    for (int i : keep) {
        Detection det;
        det.box = refined[i];
        det.objectness = scores[i];
        if (config_.grading_head == GradingHead::kClassifier) {
            det.probs.assign(probs.data() + static_cast<long>(i) * config_.class_count,
                             probs.data() + static_cast<long>(i + 1) * config_.class_count);
        } else {
            det.score = grading.data()[i];
        }
        detections.push_back(std::move(det));
    }
    return detections;
}

}  // namespace regdet::model
