#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "regdet/annotations.hpp"
#include "regdet/binning.hpp"
#include "regdet/geometry.hpp"

namespace regdet::evalm {

// Per-detection match outcome, ordered by (confidence desc, input index asc).
struct MatchEntry {
    double confidence = 0.0;
    bool tp_detection = false;  // matched an unmatched GT with IoU > threshold
    bool tp_graded = false;     // additionally predicted the correct category bin
    int matched_gt = -1;
    int det_index = -1;
};

struct MatchResult {
    std::vector<MatchEntry> entries;
    std::vector<bool> gt_matched;
    int gt_count = 0;
};

// Greedy confidence-ordered matching with one-to-one GT assignment. A
// detection is a detection-TP if its IoU with some still-unmatched GT exceeds
// `iou_thresh` (strict >); it is additionally a graded-TP if its predicted
// bin equals the GT's category. With `require_bin` false the graded flag
// mirrors the detection flag.
MatchResult match(const std::vector<Detection>& detections,
                  const std::vector<RoiAnnotation>& gts, double iou_thresh,
                  const BinningScheme& scheme, bool require_bin = true);

struct MetricValue {
    double value = 0.0;
    bool defined = false;
};

// Exact area under the precision-envelope/recall curve of the
// confidence-ranked TP/FP sequence. `use_graded` switches between the
// detection-TP flags (AP) and graded-TP flags (AVP). Undefined when
// total_gt == 0.
MetricValue average_precision(std::vector<MatchEntry> pooled, int total_gt,
                              bool use_graded = false);

// (# graded TP) / (# detection TP); undefined without any detection-TP.
MetricValue bin_accuracy(const std::vector<MatchEntry>& pooled);

struct Aggregate {
    double mean = 0.0;
    double stddev = 0.0;
    bool stddev_defined = false;
};

// Arithmetic mean and population standard deviation over folds; with fewer
// than two folds the deviation is flagged absent.
Aggregate aggregate_folds(const std::vector<double>& fold_values);

// Pooled metrics for one fold of a test set.
struct FoldMetrics {
    MetricValue ap10;
    MetricValue avp10;
    MetricValue bin_acc;
    long gt_count = 0;
    long detection_count = 0;
    long tp_count = 0;
    long graded_tp_count = 0;
};

// Table-shaped summary over folds: per-fold values plus mean +/- std.
struct MetricsReport {
    std::vector<FoldMetrics> folds;
    Aggregate ap10;
    Aggregate avp10;
    Aggregate bin_acc;
};

// Scores one fold: matches per scene, pools entries over scenes, computes
// AP10 / AVP10 / bin accuracy.
FoldMetrics score_fold(const std::map<std::string, std::vector<Detection>>& detections_by_scene,
                       const std::map<std::string, std::vector<RoiAnnotation>>& gts_by_scene,
                       const BinningScheme& scheme, double iou_thresh = 0.1);

MetricsReport summarize_folds(const std::vector<FoldMetrics>& folds);

// JSON-lines interchange (one detection per line: scene_id, box, confidence,
// grading, optional slice/fold/member/view).
void write_detections_jsonl(const std::string& path, const std::vector<Detection>& detections);
std::vector<Detection> read_detections_jsonl(const std::string& path);

// Ground-truth interchange: scene_id, box, score per line.
std::vector<std::pair<std::string, RoiAnnotation>> read_gt_jsonl(const std::string& path,
                                                                 const BinningScheme& scheme);

}  // namespace regdet::evalm
