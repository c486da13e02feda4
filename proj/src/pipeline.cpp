#include "regdet/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

namespace regdet::pipeline {

using nlohmann::json;

SplitPlan make_cv_splits(std::vector<std::string> scene_ids, int folds, std::uint64_t seed) {
    require<ConfigError>(folds >= 2, "make_cv_splits: need at least 2 folds");
    require<ConfigError>(static_cast<int>(scene_ids.size()) >= folds,
                         "make_cv_splits: fewer scenes (", scene_ids.size(), ") than folds (",
                         folds, ")");

    RandomStream rng(derive_seed(seed, 0x5917ULL));
    // Fisher-Yates with our own stream so the plan is reproducible anywhere.
    for (std::size_t i = scene_ids.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1));
        std::swap(scene_ids[i - 1], scene_ids[j]);
    }

    const int n = static_cast<int>(scene_ids.size());
    std::vector<int> chunk_begin(folds + 1, 0);
    for (int f = 0; f <= folds; ++f)
        chunk_begin[f] = static_cast<int>(static_cast<long long>(n) * f / folds);

    auto chunk = [&](int f) {
        f = (f % folds + folds) % folds;
        return std::vector<std::string>(scene_ids.begin() + chunk_begin[f],
                                        scene_ids.begin() + chunk_begin[f + 1]);
    };

    SplitPlan plan;
    for (int f = 0; f < folds; ++f) {
        SplitPlan::Fold fold;
        fold.test = chunk(f);
        fold.val = chunk(f + 1);
        for (int g = 0; g < folds; ++g) {
            if (g == f || g == (f + 1) % folds) continue;
            const auto part = chunk(g);
            fold.train.insert(fold.train.end(), part.begin(), part.end());
        }
        plan.folds.push_back(std::move(fold));
    }
    return plan;
}

void write_split_plan(const std::string& path, const SplitPlan& plan) {
    json folds = json::array();
    for (const auto& fold : plan.folds)
        folds.push_back(json{{"train", fold.train}, {"val", fold.val}, {"test", fold.test}});
    std::ofstream out(path);
    require<IoError>(out.good(), "cannot write split plan: ", path);
    out << json{{"folds", folds}}.dump(2) << "\n";
}

SplitPlan read_split_plan(const std::string& path) {
    std::ifstream in(path);
    require<IoError>(in.good(), "cannot open split plan: ", path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        fail<DataError>("malformed split plan ", path, ": ", e.what());
    }
    SplitPlan plan;
    for (const auto& jf : j.at("folds")) {
        SplitPlan::Fold fold;
        fold.train = jf.at("train").get<std::vector<std::string>>();
        fold.val = jf.at("val").get<std::vector<std::string>>();
        fold.test = jf.at("test").get<std::vector<std::string>>();
        plan.folds.push_back(std::move(fold));
    }
    return plan;
}

TrainingTarget sample_training_target(const RoiAnnotation& annotation,
                                      const BinningScheme& scheme, RandomStream& rng) {
    require<DataError>(!annotation.rater_scores.empty(),
                       "sample_training_target: annotation has no rater scores");
    const auto& scores = annotation.rater_scores;
    const std::size_t pick =
        scores.size() == 1
            ? 0
            : static_cast<std::size_t>(rng.uniform_int(0, static_cast<int64_t>(scores.size()) - 1));
    TrainingTarget target;
    target.score = scores[pick];
    target.bin = scheme.bin_index(target.score);
    return target;
}

namespace {

// Slice-wise sampling: a 2D crop lifted out of one z slice of a 3D scene.
// Annotations are kept when their z interval covers the slice and at least
// half their in-plane box area lies inside the crop.
PatchSample sample_slice_patch(const std::shared_ptr<const Scene>& scene,
                               const std::vector<int>& crop_shape, double fg_probability,
                               RandomStream& rng) {
    const Volume& vol = scene->volume;
    const int depth = vol.shape[0], height = vol.shape[1], width = vol.shape[2];
    for (int a = 0; a < 2; ++a)
        require<ConfigError>(crop_shape[a] > 0 && crop_shape[a] <= vol.shape[a + 1],
                             "sample_patch: slice crop axis ", a, " (", crop_shape[a],
                             ") exceeds volume extent ", vol.shape[a + 1]);

    const auto& anns = scene->noisy_annotations;
    int slice;
    double oy, ox;
    const bool want_fg = !anns.empty() && rng.uniform() < fg_probability;
    if (want_fg) {
        const auto pick =
            static_cast<std::size_t>(rng.uniform_int(0, static_cast<int64_t>(anns.size()) - 1));
        const Box& b = anns[pick].box;
        slice = static_cast<int>(rng.uniform_int(static_cast<int>(b.lo[0]),
                                                 std::max(static_cast<int>(b.lo[0]),
                                                          static_cast<int>(b.hi[0]) - 1)));
        slice = std::clamp(slice, 0, depth - 1);
        const double jy = rng.uniform(-crop_shape[0] / 8.0, crop_shape[0] / 8.0);
        const double jx = rng.uniform(-crop_shape[1] / 8.0, crop_shape[1] / 8.0);
        oy = std::floor(std::clamp(b.center(1) - crop_shape[0] / 2.0 + jy, 0.0,
                                   static_cast<double>(height - crop_shape[0])));
        ox = std::floor(std::clamp(b.center(2) - crop_shape[1] / 2.0 + jx, 0.0,
                                   static_cast<double>(width - crop_shape[1])));
    } else {
        slice = static_cast<int>(rng.uniform_int(0, depth - 1));
        oy = static_cast<double>(rng.uniform_int(0, height - crop_shape[0]));
        ox = static_cast<double>(rng.uniform_int(0, width - crop_shape[1]));
    }

    PatchSample sample;
    sample.scene_id = scene->id;
    sample.scene = scene;
    sample.origin = {static_cast<double>(slice), oy, ox};
    sample.patch = Volume(crop_shape);
    for (int y = 0; y < crop_shape[0]; ++y)
        for (int x = 0; x < crop_shape[1]; ++x)
            sample.patch.at2(y, x) =
                vol.at3(slice, static_cast<int>(oy) + y, static_cast<int>(ox) + x);

    const Box crop2d = Box::make2d(oy, ox, oy + crop_shape[0], ox + crop_shape[1]);
    for (const RoiAnnotation& ann : anns) {
        if (slice < ann.box.lo[0] || slice >= ann.box.hi[0]) continue;
        const Box plane = Box::make2d(ann.box.lo[1], ann.box.lo[2], ann.box.hi[1], ann.box.hi[2]);
        if (coverage(plane, crop2d) < 0.5) continue;
        RoiAnnotation kept = ann;
        kept.box = translate(clip_box(plane, crop2d), {-oy, -ox, 0.0});
        sample.annotations.push_back(std::move(kept));
    }
    return sample;
}

}  // namespace

PatchSample sample_patch(const std::shared_ptr<const Scene>& scene,
                         const std::vector<int>& crop_shape, double fg_probability,
                         RandomStream& rng) {
    const Volume& vol = scene->volume;
    const int dims = vol.dims();
    if (dims == 3 && crop_shape.size() == 2)
        return sample_slice_patch(scene, crop_shape, fg_probability, rng);
    require<ConfigError>(static_cast<int>(crop_shape.size()) == dims,
                         "sample_patch: crop rank differs from volume rank");
    for (int a = 0; a < dims; ++a)
        require<ConfigError>(crop_shape[a] > 0 && crop_shape[a] <= vol.shape[a],
                             "sample_patch: crop axis ", a, " (", crop_shape[a],
                             ") exceeds volume extent ", vol.shape[a]);

    std::array<double, 3> origin{0.0, 0.0, 0.0};
    const bool want_fg = !scene->noisy_annotations.empty() && rng.uniform() < fg_probability;
    if (want_fg) {
        const auto& anns = scene->noisy_annotations;
        const auto pick = static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<int64_t>(anns.size()) - 1));
        for (int a = 0; a < dims; ++a) {
            const double jitter = rng.uniform(-crop_shape[a] / 8.0, crop_shape[a] / 8.0);
            double o = anns[pick].box.center(a) - crop_shape[a] / 2.0 + jitter;
            origin[a] = std::clamp(o, 0.0, static_cast<double>(vol.shape[a] - crop_shape[a]));
            origin[a] = std::floor(origin[a]);
        }
    } else {
        for (int a = 0; a < dims; ++a)
            origin[a] = static_cast<double>(rng.uniform_int(0, vol.shape[a] - crop_shape[a]));
    }

    PatchSample sample;
    sample.scene_id = scene->id;
    sample.scene = scene;
    sample.origin = origin;
    sample.patch = Volume(crop_shape);
    sample.patch.spacing = vol.spacing;

    const int oz = dims == 3 ? static_cast<int>(origin[0]) : 0;
    const int oy = static_cast<int>(origin[dims == 3 ? 1 : 0]);
    const int ox = static_cast<int>(origin[dims == 3 ? 2 : 1]);
    if (dims == 3) {
        for (int z = 0; z < crop_shape[0]; ++z)
            for (int y = 0; y < crop_shape[1]; ++y)
                for (int x = 0; x < crop_shape[2]; ++x)
                    sample.patch.at3(z, y, x) = vol.at3(oz + z, oy + y, ox + x);
    } else {
        for (int y = 0; y < crop_shape[0]; ++y)
            for (int x = 0; x < crop_shape[1]; ++x)
                sample.patch.at2(y, x) = vol.at2(oy + y, ox + x);
    }

    Box crop_box;
    crop_box.dims = dims;
    for (int a = 0; a < dims; ++a) {
        crop_box.lo[a] = origin[a];
        crop_box.hi[a] = origin[a] + crop_shape[a];
    }
    std::array<double, 3> shift{};
    for (int a = 0; a < dims; ++a) shift[a] = -origin[a];

    for (const RoiAnnotation& ann : scene->noisy_annotations) {
        if (coverage(ann.box, crop_box) < 0.5) continue;
        RoiAnnotation kept = ann;
        kept.box = translate(clip_box(ann.box, crop_box), shift);
        sample.annotations.push_back(std::move(kept));
    }
    return sample;
}

void validate_multi_rater(const Scene& scene, int expected_raters) {
    for (std::size_t k = 0; k < scene.noisy_annotations.size(); ++k) {
        const RoiAnnotation& ann = scene.noisy_annotations[k];
        require<DataError>(static_cast<int>(ann.rater_scores.size()) == expected_raters,
                           "scene ", scene.id, " annotation ", k, ": rater count ",
                           ann.rater_scores.size(), " differs from dataset-wide count ",
                           expected_raters);
        if (expected_raters > 1) {
            const double mean =
                std::accumulate(ann.rater_scores.begin(), ann.rater_scores.end(), 0.0) /
                static_cast<double>(ann.rater_scores.size());
            require<DataError>(std::abs(mean - ann.exact_score) < 1e-9, "scene ", scene.id,
                               " annotation ", k, ": exact_score ", ann.exact_score,
                               " is not the rater mean ", mean);
        }
    }
}

io::DatasetStore ingest_external(const std::string& directory) {
    io::DatasetStore store(directory);
    const int raters = store.manifest().rater_count;
    require<DataError>(raters >= 1, "external dataset declares no raters");
    for (const std::string& id : store.manifest().scene_ids)
        validate_multi_rater(*store.load_scene(id), raters);
    store.reset_access_log();
    return store;
}

}  // namespace regdet::pipeline
