#include "regdet/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>

namespace regdet::infer {

Volume ViewTransform::apply(const Volume& v) const {
    require<ConfigError>(flip.size() == v.shape.size(), "view transform rank mismatch");
    Volume out = v;
    const int dims = v.dims();
    if (dims == 2) {
        const int h = v.shape[0], w = v.shape[1];
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                out.at2(y, x) = v.at2(flip[0] ? h - 1 - y : y, flip[1] ? w - 1 - x : x);
    } else {
        const int d = v.shape[0], h = v.shape[1], w = v.shape[2];
        for (int z = 0; z < d; ++z)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    out.at3(z, y, x) = v.at3(flip[0] ? d - 1 - z : z, flip[1] ? h - 1 - y : y,
                                             flip[2] ? w - 1 - x : x);
    }
    return out;
}

Box ViewTransform::apply_box(const Box& box, const std::vector<int>& shape) const {
    Box out = box;
    for (int a = 0; a < box.dims; ++a) {
        if (!flip[a]) continue;
        out.lo[a] = shape[a] - box.hi[a];
        out.hi[a] = shape[a] - box.lo[a];
    }
    return out;
}

std::vector<ViewTransform> mirror_views(int dims) {
    require<ConfigError>(dims == 2 || dims == 3, "mirror_views: dims must be 2 or 3");
    std::vector<ViewTransform> views;
    if (dims == 2) {
        views.push_back(ViewTransform{{false, false}});
        views.push_back(ViewTransform{{false, true}});
        views.push_back(ViewTransform{{true, false}});
        views.push_back(ViewTransform{{true, true}});
    } else {
        views.push_back(ViewTransform{{false, false, false}});
        views.push_back(ViewTransform{{false, false, true}});
        views.push_back(ViewTransform{{false, true, false}});
        views.push_back(ViewTransform{{false, true, true}});
    }
    return views;
}

namespace {

// Deterministic seed order: objectness desc, then member, view, input index.
std::vector<int> seed_order(const std::vector<Detection>& dets) {
    std::vector<int> order(dets.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (dets[a].objectness != dets[b].objectness) return dets[a].objectness > dets[b].objectness;
        if (dets[a].member != dets[b].member) return dets[a].member < dets[b].member;
        if (dets[a].view != dets[b].view) return dets[a].view < dets[b].view;
        return a < b;
    });
    return order;
}

Detection consolidate_cluster(const std::vector<Detection>& dets, const std::vector<int>& members) {
    Detection out = dets[members.front()];
    double wsum = 0.0;
    const int dims = out.box.dims;
    std::vector<double> lo(dims, 0.0), hi(dims, 0.0);
    double obj = 0.0, score = 0.0;
    std::vector<double> probs;
    for (int idx : members) {
        const Detection& d = dets[idx];
        const double w = std::max(1e-12, d.objectness);
        wsum += w;
        for (int a = 0; a < dims; ++a) {
            lo[a] += w * d.box.lo[a];
            hi[a] += w * d.box.hi[a];
        }
        obj += w * d.objectness;
        score += w * d.score;
        if (d.has_probs()) {
            if (probs.empty()) probs.assign(d.probs.size(), 0.0);
            for (std::size_t k = 0; k < d.probs.size(); ++k) probs[k] += w * d.probs[k];
        }
    }
    for (int a = 0; a < dims; ++a) {
        out.box.lo[a] = lo[a] / wsum;
        out.box.hi[a] = hi[a] / wsum;
    }
    out.objectness = obj / wsum;
    out.score = score / wsum;
    if (!probs.empty()) {
        for (double& p : probs) p /= wsum;
        out.probs = probs;
    }
    return out;
}

}  // namespace

std::vector<Detection> weighted_box_clustering(std::vector<Detection> detections,
                                               const ClusterConfig& config) {
    require<ConfigError>(config.iou_thresh > 0.0 && config.iou_thresh < 1.0,
                         "weighted_box_clustering: iou threshold must lie in (0, 1)");
    std::vector<Detection> out;
    std::vector<bool> used(detections.size(), false);
    const std::vector<int> order = seed_order(detections);
    for (int seed : order) {
        if (used[seed]) continue;
        std::vector<int> cluster{seed};
        used[seed] = true;
        for (int other : order) {
            if (used[other]) continue;
            if (iou(detections[seed].box, detections[other].box) > config.iou_thresh) {
                used[other] = true;
                cluster.push_back(other);
            }
        }
        if (static_cast<int>(cluster.size()) < config.min_cluster_size) continue;
        out.push_back(consolidate_cluster(detections, cluster));
    }
    return out;
}

std::vector<Detection> consolidate_2d_to_3d(const std::vector<Detection>& slice_detections,
                                            double z_link_iou) {
    for (const Detection& d : slice_detections) {
        require<DataError>(d.slice >= 0, "consolidate_2d_to_3d: detection without slice index");
        require<DataError>(d.box.dims == 2, "consolidate_2d_to_3d: expected 2D boxes");
    }
    const int n = static_cast<int>(slice_detections.size());

    // Union-find over adjacency links.
    std::vector<int> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int a) {
        while (parent[a] != a) a = parent[a] = parent[parent[a]];
        return a;
    };
    auto unite = [&](int a, int b) { parent[find(a)] = find(b); };

    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const Detection& a = slice_detections[i];
            const Detection& b = slice_detections[j];
            if (a.scene_id != b.scene_id) continue;
            if (std::abs(a.slice - b.slice) != 1) continue;
            if (iou(a.box, b.box) > z_link_iou) unite(i, j);
        }
    }

    std::map<int, std::vector<int>> chains;
    for (int i = 0; i < n; ++i) chains[find(i)].push_back(i);

    std::vector<Detection> out;
    for (const auto& [root, members] : chains) {
        double wsum = 0.0, y0 = 0, x0 = 0, y1 = 0, x1 = 0, obj = 0, score = 0;
        std::vector<double> probs;
        int z_min = slice_detections[members.front()].slice;
        int z_max = z_min;
        for (int idx : members) {
            const Detection& d = slice_detections[idx];
            const double w = std::max(1e-12, d.objectness);
            wsum += w;
            y0 += w * d.box.lo[0];
            x0 += w * d.box.lo[1];
            y1 += w * d.box.hi[0];
            x1 += w * d.box.hi[1];
            obj += w * d.objectness;
            score += w * d.score;
            if (d.has_probs()) {
                if (probs.empty()) probs.assign(d.probs.size(), 0.0);
                for (std::size_t k = 0; k < d.probs.size(); ++k) probs[k] += w * d.probs[k];
            }
            z_min = std::min(z_min, d.slice);
            z_max = std::max(z_max, d.slice);
        }
        Detection det = slice_detections[members.front()];
        det.box = Box::make3d(z_min, y0 / wsum, x0 / wsum, z_max + 1.0, y1 / wsum, x1 / wsum);
        det.objectness = obj / wsum;
        det.score = score / wsum;
        if (!probs.empty()) {
            for (double& p : probs) p /= wsum;
            det.probs = probs;
        }
        det.slice = -1;
        out.push_back(std::move(det));
    }
    return out;
}

namespace {

std::vector<Detection> predict_scene(const model::Detector& detector, const Volume& volume,
                                     int member_id) {
    const int model_dims = detector.config().dims;
    std::vector<Detection> pooled;
    const std::vector<ViewTransform> views = mirror_views(volume.dims());

    if (model_dims == static_cast<int>(volume.dims())) {
        for (std::size_t v = 0; v < views.size(); ++v) {
            Volume transformed = views[v].apply(volume);
            for (Detection det : detector.predict(transformed)) {
                det.box = views[v].invert_box(det.box, volume.shape);
                det.member = member_id;
                det.view = static_cast<int>(v);
                pooled.push_back(std::move(det));
            }
        }
        return pooled;
    }

    // Slice-wise 2D model over a 3D volume.
    require<ConfigError>(model_dims == 2 && volume.dims() == 3,
                         "run_ensemble: model/volume dimensionality mismatch");
    const std::vector<ViewTransform> views2d = mirror_views(2);
    const int depth = volume.shape[0];
    const std::vector<int> slice_shape{volume.shape[1], volume.shape[2]};
    for (int z = 0; z < depth; ++z) {
        Volume slice(slice_shape);
        std::copy_n(volume.data.begin() + static_cast<std::size_t>(z) * slice.element_count(),
                    slice.element_count(), slice.data.begin());
        for (std::size_t v = 0; v < views2d.size(); ++v) {
            Volume transformed = views2d[v].apply(slice);
            for (Detection det : detector.predict(transformed)) {
                det.box = views2d[v].invert_box(det.box, slice_shape);
                det.member = member_id;
                det.view = static_cast<int>(v);
                det.slice = z;
                pooled.push_back(std::move(det));
            }
        }
    }
    return pooled;
}

}  // namespace

std::vector<Detection> predict_volume(const model::Detector& detector, const Volume& volume,
                                      double z_link_iou) {
    const int model_dims = detector.config().dims;
    if (model_dims == volume.dims()) return detector.predict(volume);
    require<ConfigError>(model_dims == 2 && volume.dims() == 3,
                         "predict_volume: model/volume dimensionality mismatch");
    const int depth = volume.shape[0];
    const std::vector<int> slice_shape{volume.shape[1], volume.shape[2]};
    std::vector<Detection> pooled;
    for (int z = 0; z < depth; ++z) {
        Volume slice(slice_shape);
        std::copy_n(volume.data.begin() + static_cast<std::size_t>(z) * slice.element_count(),
                    slice.element_count(), slice.data.begin());
        for (Detection det : detector.predict(slice)) {
            det.slice = z;
            pooled.push_back(std::move(det));
        }
    }
    return consolidate_2d_to_3d(pooled, z_link_iou);
}

std::vector<Detection> run_ensemble(const Volume& scene_volume,
                                    const std::vector<const model::Detector*>& members,
                                    const EnsembleConfig& config) {
    require<ConfigError>(!members.empty(), "run_ensemble: no ensemble members");
    const model::DetectorConfig& first = members.front()->config();
    for (const model::Detector* m : members) {
        require<ConfigError>(m->config().dims == first.dims &&
                                 m->config().grading_head == first.grading_head &&
                                 m->config().class_count == first.class_count,
                             "run_ensemble: ensemble members disagree on detector config");
    }

    std::vector<Detection> pooled;
    for (std::size_t m = 0; m < members.size(); ++m) {
        auto dets = predict_scene(*members[m], scene_volume, static_cast<int>(m));
        pooled.insert(pooled.end(), dets.begin(), dets.end());
    }

    const bool slice_wise = first.dims == 2 && scene_volume.dims() == 3;
    std::vector<Detection> consolidated;
    if (slice_wise) {
        // Cluster within each slice, then chain along z.
        std::map<int, std::vector<Detection>> by_slice;
        for (Detection& d : pooled) by_slice[d.slice].push_back(std::move(d));
        std::vector<Detection> clustered;
        for (auto& [slice, dets] : by_slice) {
            for (Detection d : weighted_box_clustering(std::move(dets), config.cluster)) {
                d.slice = slice;
                clustered.push_back(std::move(d));
            }
        }
        consolidated = consolidate_2d_to_3d(clustered, config.z_link_iou);
    } else {
        consolidated = weighted_box_clustering(std::move(pooled), config.cluster);
    }

    std::vector<Box> boxes;
    std::vector<double> scores;
    for (const Detection& d : consolidated) {
        boxes.push_back(d.box);
        scores.push_back(d.objectness);
    }
    std::vector<int> keep = model::nms(boxes, scores, config.final_nms_iou);
    if (static_cast<int>(keep.size()) > config.max_instances) keep.resize(config.max_instances);

    std::vector<Detection> out;
    out.reserve(keep.size());
    for (int k : keep) out.push_back(consolidated[k]);
    return out;
}

}  // namespace regdet::infer
