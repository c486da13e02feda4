#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "regdet/evalm.hpp"
#include "regdet/random.hpp"

using namespace regdet;

namespace {

const BinningScheme kRadii({4, 8, 12, 16, 20});

Detection make_det(const Box& box, double conf, double score) {
    Detection d;
    d.box = box;
    d.objectness = conf;
    d.score = score;
    return d;
}

RoiAnnotation make_gt(const Box& box, double score, const BinningScheme& scheme) {
    RoiAnnotation a;
    a.box = box;
    a.exact_score = score;
    a.rater_scores = {score};
    a.category = scheme.bin_index(score);
    return a;
}

// Brute-force AP straight from the definition: enumerate every prefix of the
// ranked list, compute precision/recall from scratch, and integrate the
// recall increments against the max precision at or beyond each recall.
double oracle_ap(const std::vector<std::pair<double, bool>>& ranked_conf_tp, int total_gt) {
    std::vector<std::pair<double, bool>> ranked = ranked_conf_tp;
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    const int n = static_cast<int>(ranked.size());
    double ap = 0.0;
    double prev_recall = 0.0;
    for (int k = 0; k < n; ++k) {
        int tp_k = 0;
        for (int i = 0; i <= k; ++i) tp_k += ranked[i].second ? 1 : 0;
        const double recall = static_cast<double>(tp_k) / total_gt;
        if (!ranked[k].second || recall <= prev_recall) continue;
        // Max precision over all prefixes with recall >= this one.
        double best_prec = 0.0;
        for (int j = 0; j < n; ++j) {
            int tp_j = 0;
            for (int i = 0; i <= j; ++i) tp_j += ranked[i].second ? 1 : 0;
            if (static_cast<double>(tp_j) / total_gt >= recall)
                best_prec = std::max(best_prec, static_cast<double>(tp_j) / (j + 1));
        }
        ap += (recall - prev_recall) * best_prec;
        prev_recall = recall;
    }
    return ap;
}

// Literal greedy matcher used as an independent check.
struct OracleMatch {
    std::vector<bool> tp_det, tp_graded;
};

OracleMatch oracle_match(const std::vector<Detection>& dets,
                         const std::vector<RoiAnnotation>& gts, double thresh,
                         const BinningScheme& scheme) {
    OracleMatch out;
    out.tp_det.assign(dets.size(), false);
    out.tp_graded.assign(dets.size(), false);
    std::vector<bool> taken(gts.size(), false);
    std::vector<std::size_t> order;
    std::vector<bool> used(dets.size(), false);
    for (std::size_t pick = 0; pick < dets.size(); ++pick) {
        int best = -1;
        for (std::size_t i = 0; i < dets.size(); ++i) {
            if (used[i]) continue;
            if (best < 0 || dets[i].objectness > dets[best].objectness) best = static_cast<int>(i);
        }
        used[best] = true;
        order.push_back(best);
    }
    for (std::size_t o : order) {
        double best_iou = thresh;
        int best_gt = -1;
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (taken[g]) continue;
            const double v = iou(dets[o].box, gts[g].box);
            if (v > best_iou) {
                best_iou = v;
                best_gt = static_cast<int>(g);
            }
        }
        if (best_gt >= 0) {
            taken[best_gt] = true;
            out.tp_det[o] = true;
            out.tp_graded[o] = dets[o].predicted_bin(scheme) == gts[best_gt].category;
        }
    }
    return out;
}

}  // namespace

TEST_CASE("bin_value: centers map to their own bins") {
    for (int k = 0; k < 5; ++k)
        CHECK(kRadii.bin_index(kRadii.centers()[k]) == k + 1);
}

TEST_CASE("bin_value: midpoint edges with right-closed rule") {
    CHECK(kRadii.bin_index(9.9) == 2);    // below the 10.0 edge -> center 8
    CHECK(kRadii.bin_index(10.0) == 3);   // exactly on the edge -> center 12
    CHECK(kRadii.bin_index(-100.0) == 1);  // clamps low
    CHECK(kRadii.bin_index(1e6) == 5);     // clamps high
    CHECK_THROWS_AS(kRadii.bin_index(std::nan("")), NumericError);
}

TEST_CASE("iou: identity, disjoint, and a hand-computed overlap") {
    const Box a = Box::make2d(0, 0, 2, 2);
    const Box b = Box::make2d(0, 1, 2, 3);
    CHECK(iou(a, a) == doctest::Approx(1.0));
    CHECK(iou(a, Box::make2d(10, 10, 12, 12)) == 0.0);
    CHECK(iou(a, b) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    // Rasterized cell-count oracle on a fine grid.
    int inter = 0, uni = 0;
    const int grid = 300;
    for (int gy = 0; gy < grid; ++gy) {
        for (int gx = 0; gx < grid; ++gx) {
            const double y = 3.0 * (gy + 0.5) / grid, x = 3.0 * (gx + 0.5) / grid;
            const bool in_a = y >= 0 && y < 2 && x >= 0 && x < 2;
            const bool in_b = y >= 0 && y < 2 && x >= 1 && x < 3;
            inter += in_a && in_b;
            uni += in_a || in_b;
        }
    }
    CHECK(iou(a, b) == doctest::Approx(static_cast<double>(inter) / uni).epsilon(0.01));
    CHECK(iou(a, b) == doctest::Approx(iou(b, a)));
    CHECK_THROWS_AS(iou(a, Box::make3d(0, 0, 0, 1, 1, 1)), DataError);
}

TEST_CASE("match: exact hit is both detection-TP and graded-TP") {
    const Box box = Box::make2d(10, 10, 20, 20);
    const std::vector<RoiAnnotation> gts{make_gt(box, 12.0, kRadii)};
    SUBCASE("correct bin") {
        const auto res = evalm::match({make_det(box, 0.9, 11.5)}, gts, 0.1, kRadii);
        REQUIRE(res.entries.size() == 1);
        CHECK(res.entries[0].tp_detection);
        CHECK(res.entries[0].tp_graded);
    }
    SUBCASE("adjacent bin is detection-TP only") {
        const auto res = evalm::match({make_det(box, 0.9, 15.0)}, gts, 0.1, kRadii);
        CHECK(res.entries[0].tp_detection);
        CHECK(!res.entries[0].tp_graded);
    }
}

TEST_CASE("match: second detection on a consumed GT becomes an FP") {
    const Box box = Box::make2d(0, 0, 10, 10);
    const std::vector<RoiAnnotation> gts{make_gt(box, 8.0, kRadii)};
    const std::vector<Detection> dets{make_det(box, 0.9, 8.0), make_det(box, 0.8, 8.0)};
    const auto res = evalm::match(dets, gts, 0.1, kRadii);
    REQUIRE(res.entries.size() == 2);
    CHECK(res.entries[0].confidence == 0.9);
    CHECK(res.entries[0].tp_detection);
    CHECK(!res.entries[1].tp_detection);
}

TEST_CASE("average_precision: hand-checked sequences") {
    SUBCASE("all TPs, all GTs found") {
        std::vector<evalm::MatchEntry> pooled(2);
        pooled[0] = {0.9, true, true, 0, 0};
        pooled[1] = {0.8, true, true, 1, 1};
        CHECK(evalm::average_precision(pooled, 2).value == doctest::Approx(1.0));
    }
    SUBCASE("TP, FP, TP with two GTs gives 5/6") {
        std::vector<evalm::MatchEntry> pooled(3);
        pooled[0] = {0.9, true, true, 0, 0};
        pooled[1] = {0.8, false, false, -1, 1};
        pooled[2] = {0.7, true, true, 1, 2};
        CHECK(evalm::average_precision(pooled, 2).value ==
              doctest::Approx(5.0 / 6.0).epsilon(1e-12));
    }
    SUBCASE("AVP is zero when every bin is wrong") {
        std::vector<evalm::MatchEntry> pooled(2);
        pooled[0] = {0.9, true, false, 0, 0};
        pooled[1] = {0.8, true, false, 1, 1};
        CHECK(evalm::average_precision(pooled, 2, true).value == 0.0);
        CHECK(evalm::average_precision(pooled, 2, false).value == doctest::Approx(1.0));
    }
    SUBCASE("zero GTs is flagged undefined") {
        CHECK(!evalm::average_precision({}, 0).defined);
    }
}

TEST_CASE("average_precision: invariant under rank-preserving confidence rescaling") {
    RandomStream rng(101);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<evalm::MatchEntry> pooled;
        const int n = 1 + static_cast<int>(rng.uniform_int(0, 6));
        const int gt = 1 + static_cast<int>(rng.uniform_int(0, 3));
        int tp_budget = gt;
        for (int i = 0; i < n; ++i) {
            evalm::MatchEntry e;
            e.confidence = rng.uniform();
            e.tp_detection = tp_budget > 0 && rng.uniform() < 0.5;
            if (e.tp_detection) --tp_budget;
            e.tp_graded = e.tp_detection && rng.uniform() < 0.7;
            pooled.push_back(e);
        }
        const double base = evalm::average_precision(pooled, gt).value;
        for (auto& e : pooled) e.confidence = 0.3 * e.confidence + 0.05;
        CHECK(evalm::average_precision(pooled, gt).value == doctest::Approx(base).epsilon(1e-12));
    }
}

TEST_CASE("bin_accuracy: counting") {
    std::vector<evalm::MatchEntry> pooled(4);
    pooled[0] = {0.9, true, true, 0, 0};
    pooled[1] = {0.8, true, false, 1, 1};
    pooled[2] = {0.7, true, false, 2, 2};
    pooled[3] = {0.6, false, false, -1, 3};
    CHECK(evalm::bin_accuracy(pooled).value == doctest::Approx(1.0 / 3.0));
    CHECK(!evalm::bin_accuracy({}).defined);
}

TEST_CASE("aggregate_folds: population statistics and the absent-std flag") {
    const auto a = evalm::aggregate_folds({0.5, 0.5, 0.5, 0.5, 0.5});
    CHECK(a.mean == doctest::Approx(0.5));
    CHECK(a.stddev == doctest::Approx(0.0));
    const auto b = evalm::aggregate_folds({0.0, 1.0});
    CHECK(b.mean == doctest::Approx(0.5));
    CHECK(b.stddev == doctest::Approx(0.5));
    const auto c = evalm::aggregate_folds({0.7});
    CHECK(!c.stddev_defined);
}

TEST_CASE("metric oracle equivalence on random small instances") {
    RandomStream rng(2024);
    int avp_le_ap_checked = 0;
    for (int trial = 0; trial < 500; ++trial) {
        const int n_gt = static_cast<int>(rng.uniform_int(1, 3));
        const int n_det = static_cast<int>(rng.uniform_int(0, 5));
        std::vector<RoiAnnotation> gts;
        for (int g = 0; g < n_gt; ++g) {
            const double y = rng.uniform(0, 80), x = rng.uniform(0, 80);
            const double h = rng.uniform(4, 20), w = rng.uniform(4, 20);
            gts.push_back(make_gt(Box::make2d(y, x, y + h, x + w),
                                  kRadii.centers()[rng.uniform_int(0, 4)], kRadii));
        }
        std::vector<Detection> dets;
        for (int d = 0; d < n_det; ++d) {
            // Half the detections perturb a GT box, half are random.
            Box box;
            if (rng.uniform() < 0.5) {
                const Box& gt_box = gts[rng.uniform_int(0, n_gt - 1)].box;
                const double jy = rng.uniform(-6, 6), jx = rng.uniform(-6, 6);
                box = Box::make2d(gt_box.lo[0] + jy, gt_box.lo[1] + jx, gt_box.hi[0] + jy,
                                  gt_box.hi[1] + jx);
            } else {
                const double y = rng.uniform(0, 80), x = rng.uniform(0, 80);
                box = Box::make2d(y, x, y + rng.uniform(4, 20), x + rng.uniform(4, 20));
            }
            dets.push_back(make_det(box, rng.uniform(), kRadii.centers()[rng.uniform_int(0, 4)] +
                                                            rng.uniform(-3, 3)));
        }

        const auto res = evalm::match(dets, gts, 0.1, kRadii);
        const auto oracle = oracle_match(dets, gts, 0.1, kRadii);
        for (const auto& e : res.entries) {
            CHECK(e.tp_detection == oracle.tp_det[e.det_index]);
            CHECK(e.tp_graded == oracle.tp_graded[e.det_index]);
        }

        std::vector<std::pair<double, bool>> det_seq, graded_seq;
        for (const auto& e : res.entries) {
            det_seq.emplace_back(e.confidence, e.tp_detection);
            graded_seq.emplace_back(e.confidence, e.tp_graded);
        }
        const double ap = evalm::average_precision(res.entries, n_gt, false).value;
        const double avp = evalm::average_precision(res.entries, n_gt, true).value;
        CHECK(ap == doctest::Approx(oracle_ap(det_seq, n_gt)).epsilon(1e-12));
        CHECK(avp == doctest::Approx(oracle_ap(graded_seq, n_gt)).epsilon(1e-12));
        CHECK(avp <= ap + 1e-12);
        ++avp_le_ap_checked;

        // Oracle bin accuracy by direct counting.
        int tp = 0, graded = 0;
        for (std::size_t i = 0; i < dets.size(); ++i) {
            tp += oracle.tp_det[i] ? 1 : 0;
            graded += oracle.tp_graded[i] ? 1 : 0;
        }
        const auto acc = evalm::bin_accuracy(res.entries);
        if (tp == 0)
            CHECK(!acc.defined);
        else
            CHECK(acc.value == doctest::Approx(static_cast<double>(graded) / tp).epsilon(1e-12));
    }
    CHECK(avp_le_ap_checked == 500);
}

TEST_CASE("detections interchange files round-trip") {
    std::vector<Detection> dets;
    Detection a = make_det(Box::make2d(1, 2, 11, 12), 0.75, 9.5);
    a.scene_id = "scene_3";
    a.fold = 2;
    dets.push_back(a);
    Detection b;
    b.box = Box::make3d(0, 1, 2, 4, 11, 12);
    b.objectness = 0.5;
    b.probs = {0.1, 0.2, 0.3, 0.2, 0.2};
    b.scene_id = "scene_4";
    dets.push_back(b);

    const std::string path = "/tmp/regdet_test_dets.jsonl";
    evalm::write_detections_jsonl(path, dets);
    const auto back = evalm::read_detections_jsonl(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0].scene_id == "scene_3");
    CHECK(back[0].objectness == doctest::Approx(0.75));
    CHECK(back[0].score == doctest::Approx(9.5));
    CHECK(back[0].fold == 2);
    CHECK(back[1].probs.size() == 5);
    CHECK(back[1].box.dims == 3);
}
