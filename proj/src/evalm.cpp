#include "regdet/evalm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

namespace regdet::evalm {

using nlohmann::json;

MatchResult match(const std::vector<Detection>& detections,
                  const std::vector<RoiAnnotation>& gts, double iou_thresh,
                  const BinningScheme& scheme, bool require_bin) {
    MatchResult result;
    result.gt_count = static_cast<int>(gts.size());
    result.gt_matched.assign(gts.size(), false);

    std::vector<int> order(detections.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (detections[a].objectness != detections[b].objectness)
            return detections[a].objectness > detections[b].objectness;
        return a < b;
    });

    result.entries.reserve(detections.size());
    for (int idx : order) {
        const Detection& det = detections[idx];
        MatchEntry entry;
        entry.confidence = det.objectness;
        entry.det_index = idx;

        double best_iou = iou_thresh;
        int best_gt = -1;
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (result.gt_matched[g]) continue;
            const double v = iou(det.box, gts[g].box);
            if (v > best_iou) {
                best_iou = v;
                best_gt = static_cast<int>(g);
            }
        }
        if (best_gt >= 0) {
            result.gt_matched[best_gt] = true;
            entry.tp_detection = true;
            entry.matched_gt = best_gt;
            if (require_bin)
                entry.tp_graded = det.predicted_bin(scheme) == gts[best_gt].category;
            else
                entry.tp_graded = true;
        }
        result.entries.push_back(entry);
    }
    return result;
}

MetricValue average_precision(std::vector<MatchEntry> pooled, int total_gt, bool use_graded) {
    if (total_gt <= 0) return {0.0, false};
    std::stable_sort(pooled.begin(), pooled.end(), [](const MatchEntry& a, const MatchEntry& b) {
        return a.confidence > b.confidence;
    });

    const std::size_t n = pooled.size();
    if (n == 0) return {0.0, true};

    std::vector<double> precision(n), recall(n);
    int tp = 0;
    for (std::size_t k = 0; k < n; ++k) {
        const bool is_tp = use_graded ? pooled[k].tp_graded : pooled[k].tp_detection;
        if (is_tp) ++tp;
        precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
        recall[k] = static_cast<double>(tp) / static_cast<double>(total_gt);
    }

    // Precision envelope: max precision at any recall >= the current one.
    std::vector<double> envelope(n);
    double run = 0.0;
    for (std::size_t k = n; k-- > 0;) {
        run = std::max(run, precision[k]);
        envelope[k] = run;
    }

    double ap = 0.0;
    double prev_recall = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        if (recall[k] > prev_recall) {
            ap += (recall[k] - prev_recall) * envelope[k];
            prev_recall = recall[k];
        }
    }
    return {ap, true};
}

MetricValue bin_accuracy(const std::vector<MatchEntry>& pooled) {
    long tps = 0, graded = 0;
    for (const MatchEntry& e : pooled) {
        if (e.tp_detection) {
            ++tps;
            if (e.tp_graded) ++graded;
        }
    }
    if (tps == 0) return {0.0, false};
    return {static_cast<double>(graded) / static_cast<double>(tps), true};
}

Aggregate aggregate_folds(const std::vector<double>& fold_values) {
    require<ConfigError>(!fold_values.empty(), "aggregate_folds: no fold values");
    Aggregate out;
    out.mean = std::accumulate(fold_values.begin(), fold_values.end(), 0.0) /
               static_cast<double>(fold_values.size());
    if (fold_values.size() >= 2) {
        double ss = 0.0;
        for (double v : fold_values) ss += (v - out.mean) * (v - out.mean);
        out.stddev = std::sqrt(ss / static_cast<double>(fold_values.size()));
        out.stddev_defined = true;
    }
    return out;
}

FoldMetrics score_fold(const std::map<std::string, std::vector<Detection>>& detections_by_scene,
                       const std::map<std::string, std::vector<RoiAnnotation>>& gts_by_scene,
                       const BinningScheme& scheme, double iou_thresh) {
    FoldMetrics fold;
    std::vector<MatchEntry> pooled;
    int total_gt = 0;
    for (const auto& [scene_id, gts] : gts_by_scene) {
        static const std::vector<Detection> kNoDetections;
        auto it = detections_by_scene.find(scene_id);
        const std::vector<Detection>& dets = it == detections_by_scene.end() ? kNoDetections
                                                                             : it->second;
        MatchResult m = match(dets, gts, iou_thresh, scheme);
        total_gt += m.gt_count;
        pooled.insert(pooled.end(), m.entries.begin(), m.entries.end());
    }
    fold.gt_count = total_gt;
    fold.detection_count = static_cast<long>(pooled.size());
    for (const MatchEntry& e : pooled) {
        fold.tp_count += e.tp_detection ? 1 : 0;
        fold.graded_tp_count += e.tp_graded ? 1 : 0;
    }
    fold.ap10 = average_precision(pooled, total_gt, false);
    fold.avp10 = average_precision(pooled, total_gt, true);
    fold.bin_acc = bin_accuracy(pooled);
    return fold;
}

MetricsReport summarize_folds(const std::vector<FoldMetrics>& folds) {
    MetricsReport report;
    report.folds = folds;
    std::vector<double> ap, avp, acc;
    for (const FoldMetrics& f : folds) {
        if (f.ap10.defined) ap.push_back(f.ap10.value);
        if (f.avp10.defined) avp.push_back(f.avp10.value);
        if (f.bin_acc.defined) acc.push_back(f.bin_acc.value);
    }
    if (!ap.empty()) report.ap10 = aggregate_folds(ap);
    if (!avp.empty()) report.avp10 = aggregate_folds(avp);
    if (!acc.empty()) report.bin_acc = aggregate_folds(acc);
    return report;
}

namespace {

json box_to_json(const Box& b) {
    json lo = json::array(), hi = json::array();
    for (int a = 0; a < b.dims; ++a) {
        lo.push_back(b.lo[a]);
        hi.push_back(b.hi[a]);
    }
    return json{{"lo", lo}, {"hi", hi}};
}

Box box_from_json(const json& j) {
    const auto& lo = j.at("lo");
    const auto& hi = j.at("hi");
    require<DataError>(lo.size() == hi.size() && (lo.size() == 2 || lo.size() == 3),
                       "box: lo/hi must both have 2 or 3 coordinates");
    Box b;
    b.dims = static_cast<int>(lo.size());
    for (int a = 0; a < b.dims; ++a) {
        b.lo[a] = lo[a].get<double>();
        b.hi[a] = hi[a].get<double>();
    }
    return b;
}

}  // namespace

void write_detections_jsonl(const std::string& path, const std::vector<Detection>& detections) {
    std::ofstream out(path);
    require<IoError>(out.good(), "cannot open for writing: ", path);
    for (const Detection& d : detections) {
        json j{{"scene_id", d.scene_id},
               {"box", box_to_json(d.box)},
               {"confidence", d.objectness}};
        if (d.has_probs())
            j["probs"] = d.probs;
        else
            j["score"] = d.score;
        if (d.slice >= 0) j["slice"] = d.slice;
        if (d.fold >= 0) j["fold"] = d.fold;
        out << j.dump() << "\n";
    }
    require<IoError>(out.good(), "write failed: ", path);
}

std::vector<Detection> read_detections_jsonl(const std::string& path) {
    std::ifstream in(path);
    require<IoError>(in.good(), "cannot open detections file: ", path);
    std::vector<Detection> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            fail<DataError>("bad JSON at ", path, ":", line_no, ": ", e.what());
        }
        Detection d;
        d.scene_id = j.at("scene_id").get<std::string>();
        d.box = box_from_json(j.at("box"));
        d.objectness = j.at("confidence").get<double>();
        if (j.contains("probs"))
            d.probs = j["probs"].get<std::vector<double>>();
        else
            d.score = j.at("score").get<double>();
        if (j.contains("slice")) d.slice = j["slice"].get<int>();
        if (j.contains("fold")) d.fold = j["fold"].get<int>();
        out.push_back(std::move(d));
    }
    return out;
}

std::vector<std::pair<std::string, RoiAnnotation>> read_gt_jsonl(const std::string& path,
                                                                 const BinningScheme& scheme) {
    std::ifstream in(path);
    require<IoError>(in.good(), "cannot open ground-truth file: ", path);
    std::vector<std::pair<std::string, RoiAnnotation>> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            fail<DataError>("bad JSON at ", path, ":", line_no, ": ", e.what());
        }
        RoiAnnotation ann;
        ann.box = box_from_json(j.at("box"));
        ann.exact_score = j.at("score").get<double>();
        ann.rater_scores = {ann.exact_score};
        ann.category = scheme.bin_index(ann.exact_score);
        out.emplace_back(j.at("scene_id").get<std::string>(), std::move(ann));
    }
    return out;
}

}  // namespace regdet::evalm
