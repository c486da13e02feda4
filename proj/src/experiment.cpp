#include "regdet/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include "regdet/nn/blas.hpp"
#include "regdet/png_io.hpp"

namespace regdet::exp {

namespace fs = std::filesystem;
using nlohmann::json;

// --- config -------------------------------------------------------------------

void ExperimentConfig::validate() const {
    require<ConfigError>(dims == 2 || dims == 3, "experiment: dims must be 2 or 3");
    require<ConfigError>(epochs > 0 && batches_per_epoch > 0 && batch_size > 0,
                         "experiment: schedule values must be positive");
    require<ConfigError>(learning_rate > 0, "experiment: learning rate must be positive");
    require<ConfigError>(static_cast<int>(crop_shape.size()) == dims,
                         "experiment: crop_shape rank must equal dims");
    require<ConfigError>(fg_probability >= 0 && fg_probability <= 1,
                         "experiment: fg_probability must lie in [0, 1]");
    require<ConfigError>(workers >= 1, "experiment: workers must be >= 1");
    require<ConfigError>(top_k_checkpoints >= 1, "experiment: top_k_checkpoints must be >= 1");
    detector.validate();
}

json ExperimentConfig::to_json() const {
    return json{{"variant", model::to_string(variant)},
                {"dims", dims},
                {"epochs", epochs},
                {"batches_per_epoch", batches_per_epoch},
                {"batch_size", batch_size},
                {"learning_rate", learning_rate},
                {"crop_shape", crop_shape},
                {"fg_probability", fg_probability},
                {"seed", seed},
                {"workers", workers},
                {"top_k_checkpoints", top_k_checkpoints},
                {"val_interval", val_interval},
                {"val_max_scenes", val_max_scenes},
                {"eval_iou", eval_iou},
                {"detector", detector.to_json()},
                {"ensemble",
                 json{{"cluster_iou", ensemble.cluster.iou_thresh},
                      {"min_cluster_size", ensemble.cluster.min_cluster_size},
                      {"z_link_iou", ensemble.z_link_iou},
                      {"final_nms_iou", ensemble.final_nms_iou},
                      {"max_instances", ensemble.max_instances}}}};
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    ExperimentConfig c;
    try {
        if (j.contains("variant"))
            c.variant = model::grading_head_from_string(j["variant"].get<std::string>());
        c.dims = j.value("dims", c.dims);
        c.epochs = j.value("epochs", c.epochs);
        c.batches_per_epoch = j.value("batches_per_epoch", c.batches_per_epoch);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        if (j.contains("crop_shape")) c.crop_shape = j["crop_shape"].get<std::vector<int>>();
        c.fg_probability = j.value("fg_probability", c.fg_probability);
        c.seed = j.value("seed", c.seed);
        c.workers = j.value("workers", c.workers);
        c.top_k_checkpoints = j.value("top_k_checkpoints", c.top_k_checkpoints);
        c.val_interval = j.value("val_interval", c.val_interval);
        c.val_max_scenes = j.value("val_max_scenes", c.val_max_scenes);
        c.eval_iou = j.value("eval_iou", c.eval_iou);
        if (j.contains("detector"))
            c.detector = model::DetectorConfig::from_json(j["detector"]);
        if (j.contains("ensemble")) {
            const json& e = j["ensemble"];
            c.ensemble.cluster.iou_thresh = e.value("cluster_iou", c.ensemble.cluster.iou_thresh);
            c.ensemble.cluster.min_cluster_size =
                e.value("min_cluster_size", c.ensemble.cluster.min_cluster_size);
            c.ensemble.z_link_iou = e.value("z_link_iou", c.ensemble.z_link_iou);
            c.ensemble.final_nms_iou = e.value("final_nms_iou", c.ensemble.final_nms_iou);
            c.ensemble.max_instances = e.value("max_instances", c.ensemble.max_instances);
        }
    } catch (const json::exception& e) {
        fail<ConfigError>("bad experiment config: ", e.what());
    }
    c.detector.dims = c.dims;
    c.detector.grading_head = c.variant;
    return c;
}

// --- records -------------------------------------------------------------------

json RunRecord::to_json() const {
    json epochs_json = json::array();
    for (const EpochRecord& e : epochs) {
        epochs_json.push_back(json{{"epoch", e.epoch},
                                   {"mean_total", e.mean_total},
                                   {"mean_components", e.mean_components},
                                   {"val_avp10", e.val_avp10},
                                   {"val_ap10", e.val_ap10},
                                   {"validated", e.validated},
                                   {"wall_seconds", e.wall_seconds}});
    }
    return json{{"run_dir", run_dir},
                {"variant", variant},
                {"seed", seed},
                {"config_digest", config_digest},
                {"batch_digest", batch_digest},
                {"epochs", epochs_json},
                {"checkpoints", checkpoints},
                {"accessed_scenes", accessed_scenes},
                {"wall_seconds", wall_seconds},
                {"aborted", aborted},
                {"abort_reason", abort_reason}};
}

RunRecord RunRecord::from_json(const json& j) {
    RunRecord r;
    r.run_dir = j.value("run_dir", "");
    r.variant = j.value("variant", "");
    r.seed = j.value("seed", 0ULL);
    r.config_digest = j.value("config_digest", "");
    r.batch_digest = j.value("batch_digest", "");
    for (const json& e : j.value("epochs", json::array())) {
        EpochRecord er;
        er.epoch = e.value("epoch", 0);
        er.mean_total = e.value("mean_total", 0.0);
        if (e.contains("mean_components"))
            er.mean_components = e["mean_components"].get<std::map<std::string, double>>();
        er.val_avp10 = e.value("val_avp10", 0.0);
        er.val_ap10 = e.value("val_ap10", 0.0);
        er.validated = e.value("validated", false);
        er.wall_seconds = e.value("wall_seconds", 0.0);
        r.epochs.push_back(std::move(er));
    }
    r.checkpoints = j.value("checkpoints", std::vector<std::string>{});
    r.accessed_scenes = j.value("accessed_scenes", std::vector<std::string>{});
    r.wall_seconds = j.value("wall_seconds", 0.0);
    r.aborted = j.value("aborted", false);
    r.abort_reason = j.value("abort_reason", "");
    return r;
}

void RunRecord::save(const std::string& path) const {
    std::ofstream out(path);
    require<IoError>(out.good(), "cannot write run record: ", path);
    out << to_json().dump(2) << "\n";
}

RunRecord RunRecord::load(const std::string& path) {
    std::ifstream in(path);
    require<IoError>(in.good(), "cannot open run record: ", path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        fail<DataError>("malformed run record ", path, ": ", e.what());
    }
    return from_json(j);
}

// --- hashing -------------------------------------------------------------------

std::uint64_t fnv1a_bytes(const void* data, std::size_t len, std::uint64_t h) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

namespace {

std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

std::uint64_t hash_sample(const model::SampleTargets& s, std::uint64_t h) {
    h = fnv1a_bytes(s.patch.data(), s.patch.size() * sizeof(float), h);
    for (const Box& b : s.gt_boxes) {
        h = fnv1a_bytes(b.lo.data(), sizeof(b.lo), h);
        h = fnv1a_bytes(b.hi.data(), sizeof(b.hi), h);
    }
    if (!s.grading_scores.empty())
        h = fnv1a_bytes(s.grading_scores.data(), s.grading_scores.size() * sizeof(double), h);
    if (!s.grading_bins.empty())
        h = fnv1a_bytes(s.grading_bins.data(), s.grading_bins.size() * sizeof(int), h);
    return h;
}

// --- batch assembly ---------------------------------------------------------------

model::SampleTargets build_sample(const std::shared_ptr<const Scene>& scene,
                                  const ExperimentConfig& config, const BinningScheme& scheme,
                                  RandomStream& rng) {
    pipeline::PatchSample patch =
        pipeline::sample_patch(scene, config.crop_shape, config.fg_probability, rng);

    model::SampleTargets sample;
    std::vector<int> tensor_shape{1};
    tensor_shape.insert(tensor_shape.end(), patch.patch.shape.begin(), patch.patch.shape.end());
    sample.patch = nn::Tensor::from(tensor_shape, patch.patch.data);
    sample.scene = patch.scene;
    sample.origin = patch.origin;
    for (const RoiAnnotation& ann : patch.annotations) {
        const pipeline::TrainingTarget target =
            pipeline::sample_training_target(ann, scheme, rng);
        sample.gt_boxes.push_back(ann.box);
        sample.grading_scores.push_back(target.score);
        sample.grading_bins.push_back(target.bin);
        sample.mask_instances.push_back(ann.mask_instance);
    }
    sample.sample_seed = rng.next_u64();
    return sample;
}

evalm::FoldMetrics quick_validate(const model::Detector& detector,
                                  const io::DatasetStore& store,
                                  const std::vector<std::string>& ids,
                                  const ExperimentConfig& config) {
    std::map<std::string, std::vector<Detection>> dets;
    std::map<std::string, std::vector<RoiAnnotation>> gts;
    for (const std::string& id : ids) {
        auto scene = store.load_scene(id);
        std::vector<Detection> scene_dets =
            infer::predict_volume(detector, scene->volume, config.ensemble.z_link_iou);
        for (Detection& d : scene_dets) d.scene_id = id;
        dets[id] = std::move(scene_dets);
        gts[id] = scene->annotations;
    }
    return evalm::score_fold(dets, gts, store.manifest().binning(), config.eval_iou);
}

}  // namespace

// --- training -----------------------------------------------------------------------

SplitSelection splits_from_store(const io::DatasetStore& store) {
    SplitSelection s;
    s.train = store.split("train");
    s.val = store.split("val");
    s.test = store.split("test");
    return s;
}

SplitSelection splits_from_plan(const pipeline::SplitPlan& plan, int fold) {
    require<ConfigError>(fold >= 0 && fold < static_cast<int>(plan.folds.size()),
                         "fold ", fold, " outside plan with ", plan.folds.size(), " folds");
    SplitSelection s;
    s.train = plan.folds[fold].train;
    s.val = plan.folds[fold].val;
    s.test = plan.folds[fold].test;
    return s;
}

RunRecord train(const ExperimentConfig& config, const io::DatasetStore& store,
                const SplitSelection& splits, const std::string& run_dir) {
    config.validate();
    fs::create_directories(run_dir);

    const auto t_start = std::chrono::steady_clock::now();
    const BinningScheme scheme = store.manifest().binning();

    model::DetectorConfig det_cfg = config.detector;
    det_cfg.dims = config.dims;
    det_cfg.grading_head = config.variant;
    det_cfg.class_count = scheme.category_count();
    det_cfg.init_seed = derive_seed(config.seed, 0x30DE1);
    model::Detector detector(det_cfg);

    const std::vector<std::string>& train_ids = splits.train;
    const std::vector<std::string>& val_ids = splits.val;
    require<ConfigError>(!train_ids.empty(), "training split is empty");

    store.reset_access_log();

    nn::Adam optimizer(config.learning_rate);
    // Sample-level parallelism; keep BLAS single-threaded underneath.
    nn::limit_blas_threads(config.workers > 1 ? 1 : 2);

    RandomStream data_rng(derive_seed(config.seed, 0xDA7A));
    std::uint64_t batch_hash = 14695981039346656037ULL;

    RunRecord record;
    record.run_dir = run_dir;
    record.variant = model::to_string(config.variant);
    record.seed = config.seed;
    record.config_digest = hex64(fnv1a_bytes(config.to_json().dump().data(),
                                             config.to_json().dump().size()));

    // (avp, ap, epoch) of retained checkpoints, best first.
    struct CkptEntry {
        double avp, ap;
        int epoch;
        std::string path;
    };
    std::vector<CkptEntry> top;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto t_epoch = std::chrono::steady_clock::now();
        double total_sum = 0.0;
        std::map<std::string, double> component_sums;

        for (int batch = 0; batch < config.batches_per_epoch; ++batch) {
            std::vector<model::SampleTargets> samples;
            samples.reserve(config.batch_size);
            for (int i = 0; i < config.batch_size; ++i) {
                const auto& id = train_ids[static_cast<std::size_t>(
                    data_rng.uniform_int(0, static_cast<int64_t>(train_ids.size()) - 1))];
                samples.push_back(build_sample(store.load_scene(id), config, scheme, data_rng));
                batch_hash = hash_sample(samples.back(), batch_hash);
            }

            const int workers = std::min(config.workers, config.batch_size);
            std::vector<std::map<const nn::Param*, nn::Tensor>> worker_grads(workers);
            std::vector<std::vector<model::LossBreakdown>> worker_losses(workers);
            std::vector<std::exception_ptr> worker_errors(workers);
            std::vector<std::thread> pool;
            auto run_chunk = [&](int w) {
                try {
                    const int begin =
                        static_cast<int>(static_cast<long>(config.batch_size) * w / workers);
                    const int end = static_cast<int>(static_cast<long>(config.batch_size) *
                                                     (w + 1) / workers);
                    for (int i = begin; i < end; ++i)
                        worker_losses[w].push_back(
                            detector.train_step_sample(samples[i], worker_grads[w]));
                } catch (...) {
                    worker_errors[w] = std::current_exception();
                }
            };
            for (int w = 1; w < workers; ++w) pool.emplace_back(run_chunk, w);
            run_chunk(0);
            for (std::thread& t : pool) t.join();
            for (int w = 0; w < workers; ++w) {
                if (!worker_errors[w]) continue;
                try {
                    std::rethrow_exception(worker_errors[w]);
                } catch (const std::exception& e) {
                    record.aborted = true;
                    record.abort_reason =
                        cat("epoch ", epoch, " batch ", batch, ": ", e.what());
                    record.save((fs::path(run_dir) / "run.json").string());
                    throw;
                }
            }

            // Deterministic reduction in worker order.
            std::map<const nn::Param*, nn::Tensor> grads = std::move(worker_grads[0]);
            for (int w = 1; w < workers; ++w) {
                for (auto& [param, g] : worker_grads[w]) {
                    auto it = grads.find(param);
                    if (it == grads.end())
                        grads.emplace(param, std::move(g));
                    else
                        nn::axpy(1.0f, g, it->second);
                }
            }
            const float inv_batch = 1.0f / static_cast<float>(config.batch_size);
            for (auto& [param, g] : grads)
                for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] *= inv_batch;

            double batch_total = 0.0;
            for (const auto& wl : worker_losses) {
                for (const model::LossBreakdown& lb : wl) {
                    batch_total += lb.total;
                    for (const auto& [name, v] : lb.components) component_sums[name] += v;
                }
            }
            batch_total /= config.batch_size;
            total_sum += batch_total;
            if (!std::isfinite(batch_total)) {
                record.aborted = true;
                record.abort_reason = cat("non-finite loss in epoch ", epoch, " batch ", batch);
                record.save((fs::path(run_dir) / "run.json").string());
                fail<NumericError>(record.abort_reason);
            }

            optimizer.step(grads);
        }

        EpochRecord er;
        er.epoch = epoch;
        er.mean_total = total_sum / config.batches_per_epoch;
        const double n_samples = static_cast<double>(config.batches_per_epoch) *
                                 config.batch_size;
        for (const auto& [name, v] : component_sums) er.mean_components[name] = v / n_samples;

        if (epoch % config.val_interval == 0 || epoch == config.epochs) {
            std::vector<std::string> ids = val_ids;
            if (config.val_max_scenes > 0 &&
                static_cast<int>(ids.size()) > config.val_max_scenes)
                ids.resize(config.val_max_scenes);
            const evalm::FoldMetrics vm = quick_validate(detector, store, ids, config);
            er.val_avp10 = vm.avp10.defined ? vm.avp10.value : 0.0;
            er.val_ap10 = vm.ap10.defined ? vm.ap10.value : 0.0;
            er.validated = true;

            const std::string ckpt_path =
                (fs::path(run_dir) / cat("ckpt_epoch", epoch, ".rdck")).string();
            json meta{{"epoch", epoch},
                      {"val_avp10", er.val_avp10},
                      {"val_ap10", er.val_ap10},
                      {"variant", record.variant},
                      {"seed", config.seed}};
            model::save_checkpoint(ckpt_path, detector, meta);
            top.push_back(CkptEntry{er.val_avp10, er.val_ap10, epoch, ckpt_path});
            std::stable_sort(top.begin(), top.end(), [](const CkptEntry& a, const CkptEntry& b) {
                if (a.avp != b.avp) return a.avp > b.avp;
                if (a.ap != b.ap) return a.ap > b.ap;
                return a.epoch < b.epoch;
            });
            while (static_cast<int>(top.size()) > config.top_k_checkpoints) {
                fs::remove(top.back().path);
                top.pop_back();
            }
        }
        er.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_epoch).count();
        record.epochs.push_back(std::move(er));
    }

    for (const CkptEntry& e : top) record.checkpoints.push_back(e.path);
    record.batch_digest = hex64(batch_hash);
    for (const std::string& id : store.accessed_ids()) record.accessed_scenes.push_back(id);
    record.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    record.save((fs::path(run_dir) / "run.json").string());
    return record;
}

// --- evaluation ----------------------------------------------------------------------

json EvaluationResult::to_json() const {
    json j{{"detections_file", detections_path},
           {"gt_count", metrics.gt_count},
           {"detection_count", metrics.detection_count},
           {"tp_count", metrics.tp_count},
           {"graded_tp_count", metrics.graded_tp_count}};
    if (metrics.ap10.defined) j["ap10"] = metrics.ap10.value;
    if (metrics.avp10.defined) j["avp10"] = metrics.avp10.value;
    if (metrics.bin_acc.defined) j["bin_accuracy"] = metrics.bin_acc.value;
    return j;
}

EvaluationResult evaluate(const ExperimentConfig& config, const io::DatasetStore& store,
                          const std::vector<std::string>& test_ids, const RunRecord& run,
                          const std::string& out_dir) {
    require<ConfigError>(!run.checkpoints.empty(), "evaluate: run has no checkpoints");
    fs::create_directories(out_dir);

    std::vector<model::LoadedCheckpoint> loaded;
    std::vector<const model::Detector*> members;
    for (const std::string& path : run.checkpoints) {
        loaded.push_back(model::load_checkpoint(path));
        members.push_back(loaded.back().detector.get());
    }

    const std::vector<std::string>& ids = test_ids;
    std::map<std::string, std::vector<Detection>> dets_by_scene;
    std::map<std::string, std::vector<RoiAnnotation>> gts_by_scene;
    std::vector<Detection> all_dets;
    for (const std::string& id : ids) {
        auto scene = store.load_scene(id);
        std::vector<Detection> dets =
            infer::run_ensemble(scene->volume, members, config.ensemble);
        for (Detection& d : dets) d.scene_id = id;
        gts_by_scene[id] = scene->annotations;
        all_dets.insert(all_dets.end(), dets.begin(), dets.end());
        dets_by_scene[id] = std::move(dets);
    }

    EvaluationResult result;
    result.metrics =
        evalm::score_fold(dets_by_scene, gts_by_scene, store.manifest().binning(),
                          config.eval_iou);
    result.detections_path = (fs::path(out_dir) / "detections.jsonl").string();
    evalm::write_detections_jsonl(result.detections_path, all_dets);

    std::ofstream rep(fs::path(out_dir) / "report.json");
    require<IoError>(rep.good(), "cannot write evaluation report in ", out_dir);
    rep << result.to_json().dump(2) << "\n";
    return result;
}

// --- comparison ----------------------------------------------------------------------

json ComparisonOutcome::to_json() const {
    json reps_json = json::array();
    for (const ComparisonRep& rep : reps) {
        auto fold_json = [](const evalm::FoldMetrics& m) {
            json j{{"gt_count", m.gt_count},
                   {"detection_count", m.detection_count},
                   {"tp_count", m.tp_count}};
            if (m.ap10.defined) j["ap10"] = m.ap10.value;
            if (m.avp10.defined) j["avp10"] = m.avp10.value;
            if (m.bin_acc.defined) j["bin_accuracy"] = m.bin_acc.value;
            return j;
        };
        reps_json.push_back(json{{"seed", rep.seed},
                                 {"regressor", fold_json(rep.regressor)},
                                 {"classifier", fold_json(rep.classifier)},
                                 {"batch_digests_match", rep.batch_digests_match}});
    }
    auto agg_json = [](const evalm::MetricsReport& r) {
        return json{{"avp10_mean", r.avp10.mean},
                    {"avp10_std", r.avp10.stddev},
                    {"ap10_mean", r.ap10.mean},
                    {"ap10_std", r.ap10.stddev},
                    {"bin_accuracy_mean", r.bin_acc.mean},
                    {"bin_accuracy_std", r.bin_acc.stddev}};
    };
    return json{{"reps", reps_json},
                {"regressor", agg_json(regressor_summary)},
                {"classifier", agg_json(classifier_summary)}};
}

ComparisonOutcome compare(const ExperimentConfig& base, const io::DatasetStore& store,
                          const SplitSelection& splits, const std::string& out_dir, int reps) {
    require<ConfigError>(reps >= 1, "compare: need at least one repetition");
    fs::create_directories(out_dir);

    ComparisonOutcome outcome;
    std::vector<evalm::FoldMetrics> reg_folds, cls_folds;
    for (int rep = 0; rep < reps; ++rep) {
        ComparisonRep entry;
        entry.seed = base.seed + static_cast<std::uint64_t>(rep);

        for (model::GradingHead variant :
             {model::GradingHead::kRegressor, model::GradingHead::kClassifier}) {
            ExperimentConfig cfg = base;
            cfg.seed = entry.seed;
            cfg.variant = variant;
            cfg.detector.grading_head = variant;
            const std::string name = model::to_string(variant);
            const std::string run_dir =
                (fs::path(out_dir) / cat("rep", rep) / name).string();
            RunRecord run = train(cfg, store, splits, run_dir);
            EvaluationResult eval = evaluate(cfg, store, splits.test, run, run_dir);
            if (variant == model::GradingHead::kRegressor) {
                entry.regressor = eval.metrics;
                entry.regressor_run = std::move(run);
            } else {
                entry.classifier = eval.metrics;
                entry.classifier_run = std::move(run);
            }
        }
        entry.batch_digests_match =
            entry.regressor_run.batch_digest == entry.classifier_run.batch_digest;
        reg_folds.push_back(entry.regressor);
        cls_folds.push_back(entry.classifier);
        outcome.reps.push_back(std::move(entry));
    }
    outcome.regressor_summary = evalm::summarize_folds(reg_folds);
    outcome.classifier_summary = evalm::summarize_folds(cls_folds);

    std::ofstream out(fs::path(out_dir) / "comparison.json");
    require<IoError>(out.good(), "cannot write comparison.json in ", out_dir);
    out << outcome.to_json().dump(2) << "\n";

    std::ofstream table(fs::path(out_dir) / "table.txt");
    table << format_results_table({{"regressor", outcome.regressor_summary},
                                   {"classifier", outcome.classifier_summary}});
    return outcome;
}

std::string format_results_table(
    const std::vector<std::pair<std::string, evalm::MetricsReport>>& rows) {
    std::ostringstream os;
    os << std::left << std::setw(14) << "head" << std::setw(18) << "AVP10" << std::setw(18)
       << "AP10" << std::setw(18) << "Bin Accuracy" << "\n";
    auto cell = [](const evalm::Aggregate& a) {
        std::ostringstream c;
        c << std::fixed << std::setprecision(3) << a.mean;
        if (a.stddev_defined)
            c << " +/- " << std::fixed << std::setprecision(3) << a.stddev;
        return c.str();
    };
    for (const auto& [name, report] : rows) {
        os << std::left << std::setw(14) << name << std::setw(18) << cell(report.avp10)
           << std::setw(18) << cell(report.ap10) << std::setw(18) << cell(report.bin_acc)
           << "\n";
    }
    return os.str();
}

// --- figures -------------------------------------------------------------------------

namespace {

void draw_box(std::vector<std::uint8_t>& rgb, int width, int height, const Box& box2d,
              std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    const int y0 = std::clamp(static_cast<int>(std::lround(box2d.lo[0])), 0, height - 1);
    const int x0 = std::clamp(static_cast<int>(std::lround(box2d.lo[1])), 0, width - 1);
    const int y1 = std::clamp(static_cast<int>(std::lround(box2d.hi[0])) - 1, 0, height - 1);
    const int x1 = std::clamp(static_cast<int>(std::lround(box2d.hi[1])) - 1, 0, width - 1);
    auto set = [&](int y, int x) {
        auto* px = &rgb[(static_cast<std::size_t>(y) * width + x) * 3];
        px[0] = r;
        px[1] = g;
        px[2] = b;
    };
    for (int x = x0; x <= x1; ++x) {
        set(y0, x);
        set(y1, x);
    }
    for (int y = y0; y <= y1; ++y) {
        set(y, x0);
        set(y, x1);
    }
}

Box to_plane(const Box& box) {
    if (box.dims == 2) return box;
    return Box::make2d(box.lo[1], box.lo[2], box.hi[1], box.hi[2]);
}

}  // namespace

void render_overlay(const Scene& scene, const std::vector<Detection>& variant_a,
                    const std::vector<Detection>& variant_b, const std::string& path) {
    const Volume& vol = scene.volume;
    const bool is3d = vol.dims() == 3;
    const int height = is3d ? vol.shape[1] : vol.shape[0];
    const int width = is3d ? vol.shape[2] : vol.shape[1];
    const int mid_z = is3d ? vol.shape[0] / 2 : 0;

    float vmin = vol.data.empty() ? 0.0f : vol.data[0];
    float vmax = vmin;
    for (float v : vol.data) {
        vmin = std::min(vmin, v);
        vmax = std::max(vmax, v);
    }
    const float span = std::max(1e-6f, vmax - vmin);

    std::vector<std::uint8_t> rgb(static_cast<std::size_t>(width) * height * 3);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const float v = is3d ? vol.at3(mid_z, y, x) : vol.at2(y, x);
            const auto g = static_cast<std::uint8_t>(
                std::clamp((v - vmin) / span * 255.0f, 0.0f, 255.0f));
            auto* px = &rgb[(static_cast<std::size_t>(y) * width + x) * 3];
            px[0] = px[1] = px[2] = g;
        }
    }

    for (const RoiAnnotation& ann : scene.annotations)
        draw_box(rgb, width, height, to_plane(ann.box), 0, 220, 0);
    for (const Detection& det : variant_a)
        draw_box(rgb, width, height, to_plane(det.box), 230, 40, 40);
    for (const Detection& det : variant_b)
        draw_box(rgb, width, height, to_plane(det.box), 60, 90, 235);

    io::write_png_rgb(path, width, height, rgb);
}

}  // namespace regdet::exp
