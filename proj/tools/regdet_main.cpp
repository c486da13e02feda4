// Command-line entry point: dataset generation, split planning, training,
// evaluation, external-detection scoring, reporting, and paired comparisons.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "regdet/experiment.hpp"
#include "regdet/toy.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace regdet;

namespace {

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    require<ConfigError>(in.good(), "cannot open config file: ", path);
    try {
        json j;
        in >> j;
        return j;
    } catch (const json::exception& e) {
        fail<ConfigError>("malformed JSON in ", path, ": ", e.what());
    }
}

exp::ExperimentConfig load_experiment_config(const std::string& path) {
    return exp::ExperimentConfig::from_json(read_json_file(path));
}

exp::SplitSelection resolve_splits(const io::DatasetStore& store, const std::string& splits_path,
                                   int fold) {
    if (splits_path.empty()) return exp::splits_from_store(store);
    return exp::splits_from_plan(pipeline::read_split_plan(splits_path), fold);
}

int cmd_generate_toy(const std::string& config_path, const std::string& out_dir, int n_train,
                     int n_val, int n_test) {
    toy::ToyConfig config;
    if (!config_path.empty()) {
        json j = read_json_file(config_path);
        config = io::toy_config_from_json(j.contains("toy") ? j["toy"] : j);
    }
    config.validate();

    io::Manifest manifest;
    manifest.seed = config.seed;
    manifest.bin_centers = config.canonical_radii;
    manifest.rater_count = 1;
    manifest.score_min = 0.5;
    manifest.toy_config = config;

    const int total = n_train + n_val + n_test;
    io::write_manifest(out_dir, manifest);  // placeholder until lists are final
    for (int i = 0; i < total; ++i) {
        Scene scene = toy::generate_scene(config, i);
        io::write_scene(out_dir, scene);
        manifest.scene_ids.push_back(scene.id);
        const char* split = i < n_train ? "train" : (i < n_train + n_val ? "val" : "test");
        manifest.splits[split].push_back(scene.id);
        if ((i + 1) % 100 == 0)
            std::cout << "generated " << (i + 1) << "/" << total << " scenes\n";
    }
    io::write_manifest(out_dir, manifest);
    std::cout << "wrote " << total << " scenes to " << out_dir << "\n";
    return 0;
}

int cmd_split(const std::string& dataset, int folds, std::uint64_t seed,
              const std::string& out_path) {
    io::DatasetStore store(dataset);
    pipeline::SplitPlan plan = pipeline::make_cv_splits(store.manifest().scene_ids, folds, seed);
    const std::string path =
        out_path.empty() ? (fs::path(dataset) / "splits.json").string() : out_path;
    pipeline::write_split_plan(path, plan);
    std::cout << "wrote " << folds << "-fold split plan to " << path << "\n";
    return 0;
}

int cmd_train(const std::string& dataset, const std::string& config_path,
              const std::string& variant, const std::string& run_dir,
              const std::string& splits_path, int fold) {
    io::DatasetStore store(dataset);
    exp::ExperimentConfig config = load_experiment_config(config_path);
    if (!variant.empty()) {
        config.variant = model::grading_head_from_string(variant);
        config.detector.grading_head = config.variant;
    }
    exp::SplitSelection splits = resolve_splits(store, splits_path, fold);
    exp::RunRecord record = exp::train(config, store, splits, run_dir);
    std::cout << "trained " << record.variant << " for " << record.epochs.size()
              << " epochs; best checkpoints:\n";
    for (const std::string& c : record.checkpoints) std::cout << "  " << c << "\n";
    return 0;
}

int cmd_evaluate(const std::string& dataset, const std::string& config_path,
                 const std::string& run_dir, const std::string& out_dir,
                 const std::string& splits_path, int fold) {
    io::DatasetStore store(dataset);
    exp::ExperimentConfig config = load_experiment_config(config_path);
    exp::RunRecord run = exp::RunRecord::load((fs::path(run_dir) / "run.json").string());
    exp::SplitSelection splits = resolve_splits(store, splits_path, fold);
    const std::string out = out_dir.empty() ? run_dir : out_dir;
    exp::EvaluationResult result = exp::evaluate(config, store, splits.test, run, out);
    std::cout << result.to_json().dump(2) << "\n";
    return 0;
}

int cmd_score(const std::string& detections_path, const std::string& gt_path,
              const std::string& centers_csv, double iou_thresh, const std::string& out_path) {
    std::vector<double> centers;
    std::stringstream ss(centers_csv);
    for (std::string tok; std::getline(ss, tok, ',');)
        if (!tok.empty()) centers.push_back(std::stod(tok));
    const BinningScheme scheme(centers);

    std::vector<Detection> detections = evalm::read_detections_jsonl(detections_path);
    auto gt_pairs = evalm::read_gt_jsonl(gt_path, scheme);

    std::map<std::string, std::vector<RoiAnnotation>> gts;
    for (auto& [scene_id, ann] : gt_pairs) gts[scene_id].push_back(ann);

    // Group by fold when detections carry fold metadata; otherwise pool.
    std::map<int, std::map<std::string, std::vector<Detection>>> by_fold;
    for (Detection& d : detections) by_fold[std::max(0, d.fold)][d.scene_id].push_back(d);
    if (by_fold.empty()) by_fold[0] = {};

    std::vector<evalm::FoldMetrics> folds;
    for (auto& [fold, dets] : by_fold)
        folds.push_back(evalm::score_fold(dets, gts, scheme, iou_thresh));
    evalm::MetricsReport report = evalm::summarize_folds(folds);

    json folds_json = json::array();
    for (const auto& f : folds) {
        json jf{{"gt_count", f.gt_count},
                {"detection_count", f.detection_count},
                {"tp_count", f.tp_count}};
        if (f.ap10.defined) jf["ap10"] = f.ap10.value;
        if (f.avp10.defined) jf["avp10"] = f.avp10.value;
        if (f.bin_acc.defined) jf["bin_accuracy"] = f.bin_acc.value;
        folds_json.push_back(jf);
    }
    json out{{"folds", folds_json},
             {"ap10_mean", report.ap10.mean},
             {"avp10_mean", report.avp10.mean},
             {"bin_accuracy_mean", report.bin_acc.mean}};
    if (report.ap10.stddev_defined) {
        out["ap10_std"] = report.ap10.stddev;
        out["avp10_std"] = report.avp10.stddev;
        out["bin_accuracy_std"] = report.bin_acc.stddev;
    }
    if (!out_path.empty()) {
        std::ofstream f(out_path);
        require<IoError>(f.good(), "cannot write report: ", out_path);
        f << out.dump(2) << "\n";
    }
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_report(const std::string& comparison_dir, const std::string& dataset,
               const std::string& out_dir, int max_figures) {
    const json comparison = read_json_file((fs::path(comparison_dir) / "comparison.json").string());
    fs::create_directories(out_dir);

    // Machine-readable table.
    json table = json::array();
    for (const char* variant : {"regressor", "classifier"}) {
        const json& v = comparison.at(variant);
        table.push_back(json{{"head", variant},
                             {"avp10", v.value("avp10_mean", 0.0)},
                             {"avp10_std", v.value("avp10_std", 0.0)},
                             {"ap10", v.value("ap10_mean", 0.0)},
                             {"ap10_std", v.value("ap10_std", 0.0)},
                             {"bin_accuracy", v.value("bin_accuracy_mean", 0.0)},
                             {"bin_accuracy_std", v.value("bin_accuracy_std", 0.0)}});
    }
    {
        std::ofstream f(fs::path(out_dir) / "table.json");
        require<IoError>(f.good(), "cannot write table.json in ", out_dir);
        f << table.dump(2) << "\n";
    }

    // Plain-text table in the standard column order.
    std::ostringstream text;
    text << std::left << std::setw(14) << "head" << std::setw(18) << "AVP10" << std::setw(18)
         << "AP10" << std::setw(18) << "Bin Accuracy" << "\n";
    for (const json& row : table) {
        auto cell = [&](const char* key, const char* std_key) {
            std::ostringstream c;
            c << std::fixed << std::setprecision(3) << row.value(key, 0.0) << " +/- "
              << row.value(std_key, 0.0);
            return c.str();
        };
        text << std::left << std::setw(14) << row.value("head", "") << std::setw(18)
             << cell("avp10", "avp10_std") << std::setw(18) << cell("ap10", "ap10_std")
             << std::setw(18) << cell("bin_accuracy", "bin_accuracy_std") << "\n";
    }
    {
        std::ofstream f(fs::path(out_dir) / "table.txt");
        f << text.str();
    }
    std::cout << text.str();

    // Overlay figures from the first repetition's detections.
    if (!dataset.empty() && max_figures > 0) {
        io::DatasetStore store(dataset);
        auto load_dets = [&](const std::string& variant) {
            const std::string path =
                (fs::path(comparison_dir) / "rep0" / variant / "detections.jsonl").string();
            std::map<std::string, std::vector<Detection>> by_scene;
            if (fs::exists(path))
                for (Detection& d : evalm::read_detections_jsonl(path))
                    by_scene[d.scene_id].push_back(d);
            return by_scene;
        };
        auto reg = load_dets("regressor");
        auto cls = load_dets("classifier");
        const auto& test_ids = store.split("test");
        const fs::path fig_dir = fs::path(out_dir) / "figures";
        fs::create_directories(fig_dir);
        int made = 0;
        for (const std::string& id : test_ids) {
            if (made >= max_figures) break;
            auto scene = store.load_scene(id);
            exp::render_overlay(*scene, reg[id], cls[id],
                                (fig_dir / (id + ".png")).string());
            ++made;
        }
        std::cout << "wrote " << made << " overlay figures to " << fig_dir.string() << "\n";
    }
    return 0;
}

int cmd_compare(const std::string& dataset, const std::string& config_path,
                const std::string& out_dir, int reps, const std::string& splits_path, int fold) {
    io::DatasetStore store(dataset);
    exp::ExperimentConfig config = load_experiment_config(config_path);
    exp::SplitSelection splits = resolve_splits(store, splits_path, fold);
    exp::ComparisonOutcome outcome = exp::compare(config, store, splits, out_dir, reps);
    std::cout << exp::format_results_table({{"regressor", outcome.regressor_summary},
                                            {"classifier", outcome.classifier_summary}});
    for (const auto& rep : outcome.reps)
        require<DataError>(rep.batch_digests_match,
                           "paired runs consumed different batches (seed ", rep.seed, ")");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"regdet: joint detection and ordinal grading toolkit"};
    app.require_subcommand(1);

    // generate-toy
    std::string gt_config, gt_out = "toy_dataset";
    int n_train = 1500, n_val = 0, n_test = 1000;
    auto* gen = app.add_subcommand("generate-toy", "Generate the synthetic cylinder benchmark");
    gen->add_option("--config", gt_config, "Toy config JSON");
    gen->add_option("--out", gt_out, "Output dataset directory")->required();
    gen->add_option("--n-train", n_train, "Training scene count");
    gen->add_option("--n-val", n_val, "Validation scene count");
    gen->add_option("--n-test", n_test, "Held-out test scene count");

    // split
    std::string sp_dataset, sp_out;
    int sp_folds = 5;
    std::uint64_t sp_seed = 1;
    auto* split = app.add_subcommand("split", "Create a cross-validation split plan");
    split->add_option("--dataset", sp_dataset)->required();
    split->add_option("--folds", sp_folds);
    split->add_option("--seed", sp_seed);
    split->add_option("--out", sp_out, "Plan path (default <dataset>/splits.json)");

    // train
    std::string tr_dataset, tr_config, tr_variant, tr_out = "run", tr_splits;
    int tr_fold = 0;
    auto* tr = app.add_subcommand("train", "Train one detector variant");
    tr->add_option("--dataset", tr_dataset)->required();
    tr->add_option("--config", tr_config)->required();
    tr->add_option("--variant", tr_variant, "regressor|classifier (overrides config)");
    tr->add_option("--out", tr_out, "Run directory");
    tr->add_option("--splits", tr_splits, "Optional split plan JSON");
    tr->add_option("--fold", tr_fold, "Fold index into the split plan");

    // evaluate
    std::string ev_dataset, ev_config, ev_run, ev_out, ev_splits;
    int ev_fold = 0;
    auto* ev = app.add_subcommand("evaluate", "Ensemble-evaluate a finished run");
    ev->add_option("--dataset", ev_dataset)->required();
    ev->add_option("--config", ev_config)->required();
    ev->add_option("--run", ev_run, "Run directory")->required();
    ev->add_option("--out", ev_out, "Output directory (default run dir)");
    ev->add_option("--splits", ev_splits);
    ev->add_option("--fold", ev_fold);

    // score
    std::string sc_dets, sc_gt, sc_centers = "4,8,12,16,20", sc_out;
    double sc_iou = 0.1;
    auto* sc = app.add_subcommand("score", "Score externally produced detections");
    sc->add_option("--detections", sc_dets)->required();
    sc->add_option("--gt", sc_gt)->required();
    sc->add_option("--centers", sc_centers, "Comma-separated bin centers");
    sc->add_option("--iou", sc_iou, "Matching IoU threshold");
    sc->add_option("--out", sc_out, "Report JSON path");

    // report
    std::string rp_comparison, rp_dataset, rp_out = "report";
    int rp_figures = 4;
    auto* rp = app.add_subcommand("report", "Render tables and figures for a comparison");
    rp->add_option("--comparison", rp_comparison, "Comparison output directory")->required();
    rp->add_option("--dataset", rp_dataset, "Dataset for overlay figures");
    rp->add_option("--out", rp_out);
    rp->add_option("--figures", rp_figures, "Max overlay figures");

    // compare
    std::string cp_dataset, cp_config, cp_out = "comparison", cp_splits;
    int cp_reps = 3, cp_fold = 0;
    auto* cp = app.add_subcommand("compare", "Paired regressor-vs-classifier comparison");
    cp->add_option("--dataset", cp_dataset)->required();
    cp->add_option("--config", cp_config)->required();
    cp->add_option("--out", cp_out);
    cp->add_option("--reps", cp_reps, "Paired repetitions");
    cp->add_option("--splits", cp_splits);
    cp->add_option("--fold", cp_fold);

    try {
        app.parse(argc, argv);
        if (gen->parsed()) return cmd_generate_toy(gt_config, gt_out, n_train, n_val, n_test);
        if (split->parsed()) return cmd_split(sp_dataset, sp_folds, sp_seed, sp_out);
        if (tr->parsed())
            return cmd_train(tr_dataset, tr_config, tr_variant, tr_out, tr_splits, tr_fold);
        if (ev->parsed())
            return cmd_evaluate(ev_dataset, ev_config, ev_run, ev_out, ev_splits, ev_fold);
        if (sc->parsed()) return cmd_score(sc_dets, sc_gt, sc_centers, sc_iou, sc_out);
        if (rp->parsed()) return cmd_report(rp_comparison, rp_dataset, rp_out, rp_figures);
        if (cp->parsed())
            return cmd_compare(cp_dataset, cp_config, cp_out, cp_reps, cp_splits, cp_fold);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
