// Python bindings for the core operations: losses, binning, metrics, toy
// generation, dataset access, clustering, and the experiment entry points.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "regdet/experiment.hpp"
#include "regdet/losses.hpp"
#include "regdet/toy.hpp"

namespace py = pybind11;
using namespace regdet;

namespace {

Box box_from_list(const std::vector<double>& lo, const std::vector<double>& hi) {
    require<ConfigError>(lo.size() == hi.size() && (lo.size() == 2 || lo.size() == 3),
                         "box: lo/hi must both have 2 or 3 coordinates");
    Box b;
    b.dims = static_cast<int>(lo.size());
    for (int a = 0; a < b.dims; ++a) {
        b.lo[a] = lo[a];
        b.hi[a] = hi[a];
    }
    return b;
}

Detection detection_from_dict(const py::dict& d) {
    Detection det;
    det.box = box_from_list(d["lo"].cast<std::vector<double>>(),
                            d["hi"].cast<std::vector<double>>());
    det.objectness = d["confidence"].cast<double>();
    if (d.contains("score")) det.score = d["score"].cast<double>();
    if (d.contains("probs")) det.probs = d["probs"].cast<std::vector<double>>();
    if (d.contains("slice")) det.slice = d["slice"].cast<int>();
    if (d.contains("scene_id")) det.scene_id = d["scene_id"].cast<std::string>();
    return det;
}

py::dict detection_to_dict(const Detection& det) {
    py::dict d;
    std::vector<double> lo(det.box.lo.begin(), det.box.lo.begin() + det.box.dims);
    std::vector<double> hi(det.box.hi.begin(), det.box.hi.begin() + det.box.dims);
    d["lo"] = lo;
    d["hi"] = hi;
    d["confidence"] = det.objectness;
    if (det.has_probs())
        d["probs"] = det.probs;
    else
        d["score"] = det.score;
    if (det.slice >= 0) d["slice"] = det.slice;
    if (!det.scene_id.empty()) d["scene_id"] = det.scene_id;
    return d;
}

RoiAnnotation gt_from_dict(const py::dict& d, const BinningScheme& scheme) {
    RoiAnnotation a;
    a.box = box_from_list(d["lo"].cast<std::vector<double>>(),
                          d["hi"].cast<std::vector<double>>());
    a.exact_score = d["score"].cast<double>();
    a.rater_scores = {a.exact_score};
    a.category = scheme.bin_index(a.exact_score);
    return a;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Joint detection and ordinal grading toolkit (C++ core)";

    py::register_exception<ConfigError>(m, "ConfigError");
    py::register_exception<DataError>(m, "DataError");
    py::register_exception<NumericError>(m, "NumericError");

    // --- losses
    m.def("softmax", &losses::softmax, py::arg("logits"));
    m.def("cross_entropy", &losses::cross_entropy, py::arg("logits"), py::arg("target_index"));
    m.def("cross_entropy_grad", &losses::cross_entropy_grad, py::arg("logits"),
          py::arg("target_index"));
    m.def("smooth_l1", &losses::smooth_l1, py::arg("prediction"), py::arg("target"));
    m.def("smooth_l1_grad", &losses::smooth_l1_grad, py::arg("prediction"), py::arg("target"));
    m.def(
        "mine_hard_negatives",
        [](const std::vector<double>& scores, int n_positives, double ratio,
           std::uint64_t seed) {
            RandomStream rng(seed);
            return losses::mine_hard_negatives(scores, n_positives, ratio, rng);
        },
        py::arg("candidate_scores"), py::arg("n_positives"), py::arg("ratio") = 3.0,
        py::arg("seed") = 0);

    // --- binning and box math
    m.def(
        "bin_index",
        [](const std::vector<double>& centers, double score) {
            return BinningScheme(centers).bin_index(score);
        },
        py::arg("centers"), py::arg("score"), "1-based bin of a continuous score");
    m.def(
        "bin_edges",
        [](const std::vector<double>& centers) { return BinningScheme(centers).edges(); },
        py::arg("centers"));
    m.def(
        "iou",
        [](const std::vector<double>& lo_a, const std::vector<double>& hi_a,
           const std::vector<double>& lo_b, const std::vector<double>& hi_b) {
            return iou(box_from_list(lo_a, hi_a), box_from_list(lo_b, hi_b));
        },
        py::arg("lo_a"), py::arg("hi_a"), py::arg("lo_b"), py::arg("hi_b"));

    // --- metrics
    m.def(
        "score_detections",
        [](const std::vector<py::dict>& detections, const std::vector<py::dict>& ground_truth,
           const std::vector<double>& centers, double iou_thresh) {
            const BinningScheme scheme(centers);
            std::map<std::string, std::vector<Detection>> dets;
            std::map<std::string, std::vector<RoiAnnotation>> gts;
            for (const auto& d : detections) {
                Detection det = detection_from_dict(d);
                dets[det.scene_id].push_back(std::move(det));
            }
            for (const auto& g : ground_truth) {
                const std::string scene =
                    g.contains("scene_id") ? g["scene_id"].cast<std::string>() : "";
                gts[scene].push_back(gt_from_dict(g, scheme));
            }
            const auto fold = evalm::score_fold(dets, gts, scheme, iou_thresh);
            py::dict out;
            out["ap10"] = fold.ap10.defined ? py::cast(fold.ap10.value) : py::none();
            out["avp10"] = fold.avp10.defined ? py::cast(fold.avp10.value) : py::none();
            out["bin_accuracy"] =
                fold.bin_acc.defined ? py::cast(fold.bin_acc.value) : py::none();
            out["gt_count"] = fold.gt_count;
            out["detection_count"] = fold.detection_count;
            out["tp_count"] = fold.tp_count;
            return out;
        },
        py::arg("detections"), py::arg("ground_truth"), py::arg("centers"),
        py::arg("iou_thresh") = 0.1,
        "Pooled AP10/AVP10/bin accuracy over scene-keyed detections");
    m.def(
        "aggregate_folds",
        [](const std::vector<double>& values) {
            const auto agg = evalm::aggregate_folds(values);
            py::dict out;
            out["mean"] = agg.mean;
            out["std"] = agg.stddev_defined ? py::cast(agg.stddev) : py::none();
            return out;
        },
        py::arg("fold_values"));

    // --- ensembling primitives
    m.def(
        "weighted_box_clustering",
        [](const std::vector<py::dict>& detections, double iou_thresh, int min_cluster_size) {
            std::vector<Detection> dets;
            for (const auto& d : detections) dets.push_back(detection_from_dict(d));
            infer::ClusterConfig cfg;
            cfg.iou_thresh = iou_thresh;
            cfg.min_cluster_size = min_cluster_size;
            std::vector<py::dict> out;
            for (const auto& det : infer::weighted_box_clustering(std::move(dets), cfg))
                out.push_back(detection_to_dict(det));
            return out;
        },
        py::arg("detections"), py::arg("iou_thresh") = 0.5, py::arg("min_cluster_size") = 1);
    m.def(
        "consolidate_2d_to_3d",
        [](const std::vector<py::dict>& detections, double z_link_iou) {
            std::vector<Detection> dets;
            for (const auto& d : detections) dets.push_back(detection_from_dict(d));
            std::vector<py::dict> out;
            for (const auto& det : infer::consolidate_2d_to_3d(dets, z_link_iou))
                out.push_back(detection_to_dict(det));
            return out;
        },
        py::arg("detections"), py::arg("z_link_iou") = 0.3);

    // --- toy data and datasets
    m.def(
        "generate_toy_dataset",
        [](const std::string& out_dir, int n_train, int n_val, int n_test,
           const std::string& config_json) {
            toy::ToyConfig config;
            if (!config_json.empty())
                config = io::toy_config_from_json(nlohmann::json::parse(config_json));
            config.validate();
            io::Manifest manifest;
            manifest.seed = config.seed;
            manifest.bin_centers = config.canonical_radii;
            manifest.score_min = 0.5;
            manifest.toy_config = config;
            const int total = n_train + n_val + n_test;
            io::write_manifest(out_dir, manifest);
            for (int i = 0; i < total; ++i) {
                Scene scene = toy::generate_scene(config, i);
                io::write_scene(out_dir, scene);
                manifest.scene_ids.push_back(scene.id);
                manifest.splits[i < n_train ? "train"
                                            : (i < n_train + n_val ? "val" : "test")]
                    .push_back(scene.id);
            }
            io::write_manifest(out_dir, manifest);
            return total;
        },
        py::arg("out_dir"), py::arg("n_train"), py::arg("n_val"), py::arg("n_test"),
        py::arg("config_json") = std::string());
    m.def(
        "sample_noisy_radius",
        [](double radius, double divisor, std::uint64_t seed) {
            RandomStream rng(seed);
            return toy::sample_noisy_radius(radius, divisor, rng);
        },
        py::arg("radius"), py::arg("noise_divisor") = 6.0, py::arg("seed") = 0);
    m.def(
        "scene_summary",
        [](const std::string& dataset_dir, const std::string& scene_id) {
            io::DatasetStore store(dataset_dir);
            const auto scene = store.load_scene(scene_id);
            py::dict out;
            out["shape"] = scene->volume.shape;
            std::vector<py::dict> anns;
            for (const auto& a : scene->annotations) {
                py::dict ja;
                ja["lo"] = std::vector<double>(a.box.lo.begin(), a.box.lo.begin() + a.box.dims);
                ja["hi"] = std::vector<double>(a.box.hi.begin(), a.box.hi.begin() + a.box.dims);
                ja["exact_score"] = a.exact_score;
                ja["category"] = a.category;
                anns.push_back(ja);
            }
            out["annotations"] = anns;
            return out;
        },
        py::arg("dataset_dir"), py::arg("scene_id"));
    m.def(
        "make_cv_splits",
        [](const std::vector<std::string>& ids, int folds, std::uint64_t seed) {
            const auto plan = pipeline::make_cv_splits(ids, folds, seed);
            std::vector<py::dict> out;
            for (const auto& fold : plan.folds) {
                py::dict f;
                f["train"] = fold.train;
                f["val"] = fold.val;
                f["test"] = fold.test;
                out.push_back(f);
            }
            return out;
        },
        py::arg("scene_ids"), py::arg("folds") = 5, py::arg("seed") = 1);

    // --- experiment entry points
    m.def(
        "train",
        [](const std::string& dataset_dir, const std::string& config_json,
           const std::string& run_dir) {
            io::DatasetStore store(dataset_dir);
            const auto cfg =
                exp::ExperimentConfig::from_json(nlohmann::json::parse(config_json));
            const auto record = exp::train(cfg, store, exp::splits_from_store(store), run_dir);
            return record.to_json().dump();
        },
        py::arg("dataset_dir"), py::arg("config_json"), py::arg("run_dir"),
        py::call_guard<py::gil_scoped_release>());
    m.def(
        "evaluate",
        [](const std::string& dataset_dir, const std::string& config_json,
           const std::string& run_dir) {
            io::DatasetStore store(dataset_dir);
            const auto cfg =
                exp::ExperimentConfig::from_json(nlohmann::json::parse(config_json));
            const auto record =
                exp::RunRecord::load(run_dir + std::string("/run.json"));
            const auto result = exp::evaluate(cfg, store, exp::splits_from_store(store).test,
                                              record, run_dir);
            return result.to_json().dump();
        },
        py::arg("dataset_dir"), py::arg("config_json"), py::arg("run_dir"),
        py::call_guard<py::gil_scoped_release>());
}
