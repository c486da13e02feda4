#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "regdet/model/checkpoint.hpp"
#include "regdet/model/detector.hpp"
#include "regdet/toy.hpp"

using namespace regdet;
using model::Detector;
using model::DetectorConfig;
using model::GradingHead;

namespace {

DetectorConfig small_config(GradingHead head = GradingHead::kRegressor) {
    DetectorConfig cfg;
    cfg.dims = 2;
    cfg.grading_head = head;
    cfg.class_count = 5;
    cfg.stage_channels = {8, 12, 16, 16};
    cfg.fpn_channels = 8;
    cfg.rpn_feature_maps = 16;
    cfg.head_fc_dim = 32;
    cfg.mask_head_channels = 8;
    cfg.init_seed = 77;
    return cfg;
}

Volume toy_patch(std::uint64_t seed = 3, int objects = 1) {
    toy::ToyConfig config;
    config.volume_shape = {128, 128};
    config.min_objects = config.max_objects = objects;
    config.seed = seed;
    return toy::generate_scene(config, 0).volume;
}

model::SampleTargets sample_from_scene(const Scene& scene, const BinningScheme& scheme) {
    model::SampleTargets s;
    std::vector<int> shape{1};
    shape.insert(shape.end(), scene.volume.shape.begin(), scene.volume.shape.end());
    s.patch = nn::Tensor::from(shape, scene.volume.data);
    for (const auto& ann : scene.noisy_annotations) {
        s.gt_boxes.push_back(ann.box);
        s.grading_scores.push_back(ann.rater_scores[0]);
        s.grading_bins.push_back(scheme.bin_index(ann.rater_scores[0]));
        s.mask_instances.push_back(ann.mask_instance);
    }
    s.scene = std::make_shared<Scene>(scene);
    s.sample_seed = 99;
    return s;
}

}  // namespace

TEST_CASE("pyramid shapes: 128x128 input maps to 32/16/8/4 grids") {
    Detector det(small_config());
    const auto shapes = det.pyramid_shapes({128, 128});
    REQUIRE(shapes.size() == 4);
    CHECK(shapes[0] == std::vector<int>{32, 32});
    CHECK(shapes[1] == std::vector<int>{16, 16});
    CHECK(shapes[2] == std::vector<int>{8, 8});
    CHECK(shapes[3] == std::vector<int>{4, 4});

    // The real forward pass honors the same contract.
    const Volume patch = toy_patch();
    const auto obj = det.rpn_objectness(patch);
    const int anchors_per_cell = 2;  // two scales, one ratio
    const int cells = 32 * 32 + 16 * 16 + 8 * 8 + 4 * 4;
    CHECK(static_cast<int>(obj.size()) == anchors_per_cell * cells);
}

TEST_CASE("3D pyramid shapes thin out z as configured") {
    DetectorConfig cfg = small_config();
    cfg.dims = 3;
    const Detector det(cfg);
    const auto shapes = det.pyramid_shapes({8, 64, 64});
    REQUIRE(shapes.size() == 4);
    CHECK(shapes[0] == std::vector<int>{8, 16, 16});
    CHECK(shapes[1] == std::vector<int>{4, 8, 8});
    CHECK(shapes[2] == std::vector<int>{2, 4, 4});
    CHECK(shapes[3] == std::vector<int>{1, 2, 2});
}

TEST_CASE("eval-mode forward is deterministic") {
    Detector det(small_config());
    const Volume patch = toy_patch();
    const auto a = det.predict(patch);
    const auto b = det.predict(patch);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].objectness == b[i].objectness);
        CHECK(a[i].box.lo == b[i].box.lo);
        CHECK(a[i].score == b[i].score);
    }
}

TEST_CASE("untrained objectness distribution centers near one half") {
    Detector det(small_config());
    const auto obj = det.rpn_objectness(toy_patch());
    REQUIRE(obj.size() >= 1000);
    double mean = 0;
    for (double v : obj) mean += v;
    mean /= static_cast<double>(obj.size());
    CHECK(mean > 0.3);
    CHECK(mean < 0.7);
}

TEST_CASE("box delta encode/decode round-trip") {
    RandomStream rng(21);
    const std::vector<double> std_dev{0.1, 0.1, 0.2, 0.2};
    for (int t = 0; t < 100; ++t) {
        const double ay = rng.uniform(0, 80), ax = rng.uniform(0, 80);
        const Box anchor = Box::make2d(ay, ax, ay + rng.uniform(4, 30), ax + rng.uniform(4, 30));
        const double by = rng.uniform(0, 80), bx = rng.uniform(0, 80);
        const Box target = Box::make2d(by, bx, by + rng.uniform(4, 30), bx + rng.uniform(4, 30));
        const auto delta = model::encode_box_delta(target, anchor, std_dev);
        const Box back = model::decode_box_delta(delta, anchor, std_dev);
        for (int a = 0; a < 2; ++a) {
            CHECK(back.lo[a] == doctest::Approx(target.lo[a]).epsilon(1e-5));
            CHECK(back.hi[a] == doctest::Approx(target.hi[a]).epsilon(1e-5));
        }
    }
    // Zero deltas decode to the anchor itself.
    const Box anchor = Box::make2d(10, 10, 26, 26);
    const Box same = model::decode_box_delta({0, 0, 0, 0}, anchor, std_dev);
    CHECK(same.lo[0] == doctest::Approx(10.0));
    CHECK(same.hi[1] == doctest::Approx(26.0));
}

TEST_CASE("nms keeps the higher-scoring duplicate") {
    const std::vector<Box> boxes{Box::make2d(0, 0, 10, 10), Box::make2d(0, 0, 10, 10)};
    SUBCASE("first wins on score") {
        const auto keep = model::nms(boxes, {0.9, 0.8}, 0.5);
        REQUIRE(keep.size() == 1);
        CHECK(keep[0] == 0);
    }
    SUBCASE("order flips with the scores") {
        const auto keep = model::nms(boxes, {0.7, 0.95}, 0.5);
        REQUIRE(keep.size() == 1);
        CHECK(keep[0] == 1);
    }
    SUBCASE("output is a subset in score order") {
        std::vector<Box> more = boxes;
        more.push_back(Box::make2d(40, 40, 50, 50));
        const auto keep = model::nms(more, {0.5, 0.6, 0.55}, 0.5);
        REQUIRE(keep.size() == 2);
        CHECK(keep[0] == 1);
        CHECK(keep[1] == 2);
    }
}

TEST_CASE("assign_head_targets: threshold and argmax rules") {
    const Box gt = Box::make2d(0, 0, 10, 10);
    SUBCASE("identical proposal is positive") {
        const auto t = model::assign_head_targets({gt}, {gt}, 0.3);
        CHECK(t.is_positive[0]);
        CHECK(t.matched_gt[0] == 0);
    }
    SUBCASE("IoU 0.29 stays background at the 0.3 threshold") {
        const Box p = Box::make2d(0, 0, 2.9, 10);  // IoU = 29/100
        const auto t = model::assign_head_targets({p}, {gt}, 0.3);
        CHECK(!t.is_positive[0]);
    }
    SUBCASE("IoU exactly 0.3 is positive") {
        const Box p = Box::make2d(0, 0, 3.0, 10);
        const auto t = model::assign_head_targets({p}, {gt}, 0.3);
        CHECK(t.is_positive[0]);
    }
    SUBCASE("argmax over two overlapping GTs") {
        const Box gt2 = Box::make2d(0, 4, 10, 14);
        const Box p = Box::make2d(0, 3, 10, 13);  // closer to gt2
        const auto t = model::assign_head_targets({p}, {gt, gt2}, 0.3);
        REQUIRE(t.is_positive[0]);
        CHECK(t.matched_gt[0] == 1);
    }
}

TEST_CASE("head variants differ only in the grading namespace") {
    Detector reg(small_config(GradingHead::kRegressor));
    Detector cls(small_config(GradingHead::kClassifier));
    const auto sig_reg = reg.parameter_signature();
    const auto sig_cls = cls.parameter_signature();
    REQUIRE(sig_reg.size() == sig_cls.size());

    std::map<std::string, std::vector<int>> map_reg(sig_reg.begin(), sig_reg.end());
    std::map<std::string, std::vector<int>> map_cls(sig_cls.begin(), sig_cls.end());
    std::set<std::string> diff;
    for (const auto& [name, shape] : map_reg) {
        auto it = map_cls.find(name);
        if (it == map_cls.end() || it->second != shape) diff.insert(name);
    }
    for (const auto& [name, shape] : map_cls) {
        auto it = map_reg.find(name);
        if (it == map_reg.end() || it->second != shape) diff.insert(name);
    }
    CHECK(!diff.empty());
    for (const std::string& name : diff)
        CHECK(name.rfind("heads.grading.", 0) == 0);

    // Parameter counts of every shared branch agree.
    auto branch_count = [](const auto& sig, const std::string& prefix) {
        long n = 0;
        for (const auto& [name, shape] : sig) {
            if (name.rfind(prefix, 0) != 0) continue;
            long c = 1;
            for (int d : shape) c *= d;
            n += c;
        }
        return n;
    };
    for (const std::string prefix : {"backbone.", "fpn.", "rpn.", "heads.box.", "heads.mask.",
                                     "heads.fc"})
        CHECK(branch_count(sig_reg, prefix) == branch_count(sig_cls, prefix));

    // Shared parameters are initialized identically across variants.
    auto reg_params = reg.parameters();
    auto cls_params = cls.parameters();
    for (std::size_t i = 0; i < reg_params.size(); ++i) {
        if (reg_params[i]->name.rfind("heads.grading.", 0) == 0) continue;
        REQUIRE(reg_params[i]->name == cls_params[i]->name);
        CHECK(*reg_params[i]->value.store == *cls_params[i]->value.store);
    }
}

TEST_CASE("grading head output shapes follow the variant") {
    const Volume patch = toy_patch(5);
    Detector reg(small_config(GradingHead::kRegressor));
    Detector cls(small_config(GradingHead::kClassifier));
    const auto dets_reg = reg.predict(patch);
    const auto dets_cls = cls.predict(patch);
    for (const auto& d : dets_reg) CHECK(!d.has_probs());
    for (const auto& d : dets_cls) {
        REQUIRE(d.probs.size() == 5);
        double sum = 0;
        for (double p : d.probs) sum += p;
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
    }
}

TEST_CASE("loss components: empty GT leaves only mined RPN background") {
    Detector det(small_config());
    toy::ToyConfig config;
    config.volume_shape = {128, 128};
    config.min_objects = config.max_objects = 0;
    const Scene scene = toy::generate_scene(config, 0);
    const auto sample = sample_from_scene(scene, config.binning());
    const auto loss = det.loss_components(sample);
    CHECK(loss.grading_flagged_zero);
    CHECK(!loss.had_positives);
    CHECK(loss.components.at("rpn_obj_bg") > 0.0);
    CHECK(loss.components.at("rpn_obj_fg") == 0.0);
    CHECK(loss.components.at("rpn_box") == 0.0);
    CHECK(loss.components.at("grading") == 0.0);
    CHECK(loss.components.at("box_refine") == 0.0);
    CHECK(loss.components.at("mask") == 0.0);
}

TEST_CASE("loss components: nonnegative and finite over random scenes") {
    Detector det(small_config(GradingHead::kClassifier));
    toy::ToyConfig config;
    config.volume_shape = {128, 128};
    config.seed = 31;
    for (int s = 0; s < 8; ++s) {
        const Scene scene = toy::generate_scene(config, s);
        auto sample = sample_from_scene(scene, config.binning());
        sample.sample_seed = 1000 + s;
        const auto loss = det.loss_components(sample);
        CHECK(std::isfinite(loss.total));
        for (const auto& [name, v] : loss.components) {
            CHECK(v >= 0.0);
            CHECK(std::isfinite(v));
        }
        CHECK(loss.had_positives);
        CHECK(loss.components.at("grading") > 0.0);
        CHECK(loss.components.at("mask") > 0.0);
    }
}

TEST_CASE("loss components: doubling the grading weight doubles that component") {
    toy::ToyConfig config;
    config.volume_shape = {128, 128};
    config.seed = 17;
    const Scene scene = toy::generate_scene(config, 1);

    DetectorConfig base = small_config();
    DetectorConfig doubled = base;
    doubled.w_grading = 2.0;
    Detector det_a(base), det_b(doubled);
    const auto sample = sample_from_scene(scene, config.binning());
    const auto la = det_a.loss_components(sample);
    const auto lb = det_b.loss_components(sample);
    CHECK(lb.components.at("grading") ==
          doctest::Approx(2.0 * la.components.at("grading")).epsilon(1e-6));
    CHECK(lb.components.at("rpn_box") == doctest::Approx(la.components.at("rpn_box")));
}

namespace regdet::model {

// Test-only hook into the private pyramid pass.
struct DetectorAccess {
    static double pyramid_readout(const Detector& det, const nn::Tensor& patch,
                                  const std::vector<double>& weights, nn::Tensor* input_grad) {
        nn::Binder bind(input_grad != nullptr);
        nn::Var input = nn::make_leaf(patch.clone(), input_grad != nullptr);
        const auto pyramid = det.forward_pyramid(bind, input);
        double value = 0.0;
        std::size_t w = 0;
        std::vector<nn::Var> terms;
        for (const nn::Var& level : pyramid.levels) {
            nn::Tensor row = nn::Tensor::zeros({1, static_cast<int>(level->value.size())});
            for (std::size_t i = 0; i < level->value.size(); ++i, ++w)
                row.data()[i] = static_cast<float>(weights[w % weights.size()]);
            for (std::size_t i = 0; i < level->value.size(); ++i)
                value += row.data()[i] * static_cast<double>(level->value.data()[i]);
            terms.push_back(nn::reshape(
                nn::linear(nn::reshape(level, {1, static_cast<int>(level->value.size())}),
                           nn::make_leaf(row, false), nn::make_leaf(nn::Tensor::zeros({1}), false)),
                {1}));
        }
        if (input_grad) {
            nn::backward(nn::sum_scalars(terms));
            *input_grad = input->grad;
        }
        return value;
    }
};

}  // namespace regdet::model

namespace dblref {

// Double-precision reference forward of the tiny backbone used by the
// finite-difference oracle below. Independent of the float engine.
struct Map {
    int c = 0, h = 0, w = 0;
    std::vector<double> v;
    double& at(int ch, int y, int x) { return v[(static_cast<std::size_t>(ch) * h + y) * w + x]; }
    double at(int ch, int y, int x) const {
        return v[(static_cast<std::size_t>(ch) * h + y) * w + x];
    }
};

Map conv(const Map& x, const std::vector<float>& wdata, const std::vector<float>& bdata, int f,
         int k, int stride, int pad) {
    Map out;
    out.c = f;
    out.h = (x.h + 2 * pad - k) / stride + 1;
    out.w = (x.w + 2 * pad - k) / stride + 1;
    out.v.assign(static_cast<std::size_t>(f) * out.h * out.w, 0.0);
    for (int of = 0; of < f; ++of)
        for (int oy = 0; oy < out.h; ++oy)
            for (int ox = 0; ox < out.w; ++ox) {
                double acc = bdata[of];
                for (int c = 0; c < x.c; ++c)
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx) {
                            const int iy = oy * stride - pad + ky;
                            const int ix = ox * stride - pad + kx;
                            if (iy < 0 || iy >= x.h || ix < 0 || ix >= x.w) continue;
                            acc += static_cast<double>(
                                       wdata[((static_cast<std::size_t>(of) * x.c + c) * k + ky) *
                                                 k +
                                             kx]) *
                                   x.at(c, iy, ix);
                        }
                out.at(of, oy, ox) = acc;
            }
    return out;
}

Map group_norm(const Map& x, const std::vector<float>& gamma, const std::vector<float>& beta,
               int groups, double eps = 1e-5) {
    Map out = x;
    const int cpg = x.c / groups;
    const std::size_t spatial = static_cast<std::size_t>(x.h) * x.w;
    const std::size_t m = cpg * spatial;
    for (int g = 0; g < groups; ++g) {
        double mean = 0;
        for (std::size_t i = 0; i < m; ++i) mean += x.v[g * m + i];
        mean /= static_cast<double>(m);
        double var = 0;
        for (std::size_t i = 0; i < m; ++i) {
            const double d = x.v[g * m + i] - mean;
            var += d * d;
        }
        var /= static_cast<double>(m);
        const double istd = 1.0 / std::sqrt(var + eps);
        for (int cc = 0; cc < cpg; ++cc) {
            const int ch = g * cpg + cc;
            for (std::size_t i = 0; i < spatial; ++i) {
                const double xh = (x.v[ch * spatial + i] - mean) * istd;
                out.v[ch * spatial + i] = gamma[ch] * xh + beta[ch];
            }
        }
    }
    return out;
}

Map relu(Map x) {
    for (double& v : x.v) v = v > 0 ? v : 0;
    return x;
}

Map add(const Map& a, const Map& b) {
    Map out = a;
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += b.v[i];
    return out;
}

Map upsample_to(const Map& x, int th, int tw) {
    Map out;
    out.c = x.c;
    out.h = th;
    out.w = tw;
    out.v.assign(static_cast<std::size_t>(x.c) * th * tw, 0.0);
    for (int c = 0; c < x.c; ++c)
        for (int y = 0; y < th; ++y)
            for (int xx = 0; xx < tw; ++xx)
                out.at(c, y, xx) =
                    x.at(c, std::min(x.h - 1, y * x.h / th), std::min(x.w - 1, xx * x.w / tw));
    return out;
}

}  // namespace dblref

TEST_CASE("backbone input gradient matches a double-precision FD oracle") {
    // Tiny two-level detector so an 8x8 input yields non-empty maps.
    DetectorConfig cfg = small_config();
    cfg.stage_channels = {6, 8};
    Detector det(cfg);

    std::map<std::string, const nn::Tensor*> params;
    for (nn::Param* p : det.parameters()) params[p->name] = &p->value;
    auto fdata = [&](const std::string& name) -> const std::vector<float>& {
        REQUIRE(params.count(name));
        return *params.at(name)->store;
    };
    auto gn_groups = [&](int channels) {
        int g = std::min(cfg.gn_groups, channels);
        while (channels % g != 0) --g;
        return g;
    };

    // Reference pyramid replicating the backbone wiring in double precision.
    auto reference = [&](const std::vector<double>& input,
                         const std::vector<double>& weights) {
        dblref::Map x{1, 8, 8, input};
        auto block = [&](dblref::Map v, const std::string& prefix, int ch) {
            v = dblref::relu(dblref::group_norm(
                dblref::conv(v, fdata(prefix + ".down.conv.w"), fdata(prefix + ".down.conv.b"),
                             ch, 3, 2, 1),
                fdata(prefix + ".down.gn.gamma"), fdata(prefix + ".down.gn.beta"),
                gn_groups(ch)));
            dblref::Map h = dblref::relu(dblref::group_norm(
                dblref::conv(v, fdata(prefix + ".block.conv1.w"), fdata(prefix + ".block.conv1.b"),
                             ch, 3, 1, 1),
                fdata(prefix + ".block.gn1.gamma"), fdata(prefix + ".block.gn1.beta"),
                gn_groups(ch)));
            h = dblref::group_norm(
                dblref::conv(h, fdata(prefix + ".block.conv2.w"), fdata(prefix + ".block.conv2.b"),
                             ch, 3, 1, 1),
                fdata(prefix + ".block.gn2.gamma"), fdata(prefix + ".block.gn2.beta"),
                gn_groups(ch));
            return dblref::relu(dblref::add(v, h));
        };
        x = dblref::relu(dblref::group_norm(
            dblref::conv(x, fdata("backbone.stem.conv.w"), fdata("backbone.stem.conv.b"), 6, 3, 2,
                         1),
            fdata("backbone.stem.gn.gamma"), fdata("backbone.stem.gn.beta"), gn_groups(6)));
        dblref::Map s0 = block(x, "backbone.stage0", 6);
        dblref::Map s1 = block(s0, "backbone.stage1", 8);
        dblref::Map lat0 =
            dblref::conv(s0, fdata("fpn.lateral0.w"), fdata("fpn.lateral0.b"), 8, 1, 1, 0);
        dblref::Map lat1 =
            dblref::conv(s1, fdata("fpn.lateral1.w"), fdata("fpn.lateral1.b"), 8, 1, 1, 0);
        dblref::Map p1 =
            dblref::conv(lat1, fdata("fpn.output1.w"), fdata("fpn.output1.b"), 8, 3, 1, 1);
        dblref::Map top0 = dblref::add(lat0, dblref::upsample_to(lat1, lat0.h, lat0.w));
        dblref::Map p0 =
            dblref::conv(top0, fdata("fpn.output0.w"), fdata("fpn.output0.b"), 8, 3, 1, 1);
        double value = 0.0;
        std::size_t w = 0;
        for (const dblref::Map* level : {&p0, &p1})
            for (double v : level->v) value += weights[w++ % weights.size()] * v;
        return value;
    };

    RandomStream rng(41);
    std::vector<double> base(64);
    for (double& v : base) v = rng.normal(0, 1);
    std::vector<double> weights(64);
    for (double& w : weights) w = rng.normal(0, 1);

    nn::Tensor base_f = nn::Tensor::zeros({1, 8, 8});
    for (int i = 0; i < 64; ++i) base_f.data()[i] = static_cast<float>(base[i]);

    // The float engine forward agrees with the double reference.
    nn::Tensor grad;
    const double engine_value =
        model::DetectorAccess::pyramid_readout(det, base_f, weights, &grad);
    const double ref_value = reference(base, weights);
    CHECK(std::abs(engine_value - ref_value) /
              std::max({std::abs(engine_value), std::abs(ref_value), 1.0}) <
          1e-4);
    REQUIRE(grad.defined());

    // Central differences on the double reference; 1e-3 relative agreement.
    int checked = 0;
    for (int probe = 0; probe < 16; ++probe) {
        const int idx = static_cast<int>(rng.uniform_int(0, 63));
        const double h = 1e-4;
        std::vector<double> vp = base, vm = base;
        vp[idx] += h;
        vm[idx] -= h;
        const double fd = (reference(vp, weights) - reference(vm, weights)) / (2 * h);
        const double an = grad.data()[idx];
        if (std::abs(fd) < 1e-3 && std::abs(an) < 1e-3) continue;  // dead probe
        CHECK(std::abs(fd - an) / std::max({std::abs(fd), std::abs(an)}) < 1e-3);
        ++checked;
    }
    CHECK(checked >= 8);
}

TEST_CASE("roi pooling is translation-consistent across integer strides") {
    DetectorConfig cfg = small_config();
    Detector det(cfg);
    // Build a feature-space check directly with roi_align: shifting the box
    // and the map content together by one cell leaves the pooled output
    // unchanged.
    RandomStream rng(43);
    nn::Tensor feat = nn::Tensor::zeros({1, 12, 12});
    for (int y = 2; y < 8; ++y)
        for (int x = 2; x < 8; ++x)
            feat.data()[y * 12 + x] = static_cast<float>(rng.normal(0, 1));
    nn::Tensor shifted = nn::Tensor::zeros({1, 12, 12});
    for (int y = 0; y < 11; ++y)
        for (int x = 0; x < 11; ++x)
            shifted.data()[(y + 1) * 12 + (x + 1)] = feat.data()[y * 12 + x];

    const Box box = Box::make2d(2.3, 2.7, 7.1, 7.6);
    const Box moved = Box::make2d(3.3, 3.7, 8.1, 8.6);
    auto a = nn::roi_align2d(nn::make_leaf(feat, false), {box}, 5, 5, 2);
    auto b = nn::roi_align2d(nn::make_leaf(shifted, false), {moved}, 5, 5, 2);
    for (std::size_t i = 0; i < a->value.size(); ++i)
        CHECK(a->value.data()[i] == doctest::Approx(b->value.data()[i]).epsilon(1e-5));
}

TEST_CASE("checkpoint round-trip preserves predictions") {
    namespace fs = std::filesystem;
    Detector det(small_config(GradingHead::kClassifier));
    const Volume patch = toy_patch(11);
    const auto before = det.predict(patch);

    const std::string path = "/tmp/regdet_test_ckpt.rdck";
    model::save_checkpoint(path, det, {{"epoch", 3}});
    auto loaded = model::load_checkpoint(path);
    CHECK(loaded.metadata.at("epoch") == 3);
    CHECK(loaded.detector->config().grading_head == GradingHead::kClassifier);
    const auto after = loaded.detector->predict(patch);
    REQUIRE(after.size() == before.size());
    for (std::size_t i = 0; i < before.size(); ++i) {
        CHECK(after[i].objectness == doctest::Approx(before[i].objectness).epsilon(1e-7));
        CHECK(after[i].box.lo[0] == doctest::Approx(before[i].box.lo[0]).epsilon(1e-6));
    }
    fs::remove(path);
}

TEST_CASE("proposal machinery: empty scene still proposes, predictions can be empty") {
    DetectorConfig cfg = small_config();
    cfg.detection_min_objectness = 1.1;  // nothing can pass
    Detector det(cfg);
    const auto dets = det.predict(toy_patch(13));
    CHECK(dets.empty());
}
