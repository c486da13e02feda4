#pragma once

#include <memory>
#include <vector>

#include "regdet/annotations.hpp"
#include "regdet/model/detector.hpp"

namespace regdet::infer {

// Axis mirroring with its own inverse (mirror transforms are involutions).
struct ViewTransform {
    std::vector<bool> flip;  // per volume axis

    Volume apply(const Volume& v) const;
    Box apply_box(const Box& box, const std::vector<int>& shape) const;
    Box invert_box(const Box& box, const std::vector<int>& shape) const {
        return apply_box(box, shape);  // involution
    }
};

// Identity plus three in-plane mirrors (x, y, x+y); z is never mirrored.
std::vector<ViewTransform> mirror_views(int dims);

struct ClusterConfig {
    double iou_thresh = 0.5;
    int min_cluster_size = 1;
};

// Greedy objectness-seeded clustering; cluster members are consumed and
// consolidated into one detection whose coordinates, objectness, and grading
// are objectness-weighted means over the cluster.
std::vector<Detection> weighted_box_clustering(std::vector<Detection> detections,
                                               const ClusterConfig& config);

// Links same-scene 2D detections on adjacent slices (IoU above the z-link
// threshold) into chains and emits one 3D box per chain spanning the chain's
// slice range.
std::vector<Detection> consolidate_2d_to_3d(const std::vector<Detection>& slice_detections,
                                            double z_link_iou);

struct EnsembleConfig {
    ClusterConfig cluster;
    double z_link_iou = 0.3;
    double final_nms_iou = 0.25;
    int max_instances = 50;
};

// Full test-time pipeline on one scene: members x mirror views, inverse
// mapping, weighted box clustering, optional 2D->3D consolidation for
// slice-wise models, and a final objectness-keyed NMS.
std::vector<Detection> run_ensemble(const Volume& scene_volume,
                                    const std::vector<const model::Detector*>& members,
                                    const EnsembleConfig& config);

// Single-model single-view prediction on a scene of any rank; slice-wise
// models get their per-slice boxes consolidated along z.
std::vector<Detection> predict_volume(const model::Detector& detector, const Volume& volume,
                                      double z_link_iou = 0.3);

}  // namespace regdet::infer
