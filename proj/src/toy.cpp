#include "regdet/toy.hpp"

#include <algorithm>
#include <cmath>

namespace regdet::toy {

namespace {
constexpr int kPlacementAttempts = 500;

enum StreamTag : std::uint64_t { kGeometryStream = 0, kLabelNoiseStream = 1 };
}  // namespace

void ToyConfig::validate() const {
    require<ConfigError>(volume_shape.size() == 2 || volume_shape.size() == 3,
                         "toy config: volume_shape must have 2 or 3 axes");
    for (int d : volume_shape) require<ConfigError>(d > 0, "toy config: non-positive volume axis");
    require<ConfigError>(canonical_radii.size() == 5, "toy config: expected 5 canonical radii");
    for (std::size_t k = 1; k < canonical_radii.size(); ++k)
        require<ConfigError>(canonical_radii[k - 1] < canonical_radii[k],
                             "toy config: canonical radii must be strictly increasing");
    require<ConfigError>(canonical_radii.front() > 0, "toy config: radii must be positive");
    require<ConfigError>(
        belt_intensity > std::min(background_intensity, core_intensity) &&
            belt_intensity < std::max(background_intensity, core_intensity),
        "toy config: belt intensity must lie strictly between background and core");
    require<ConfigError>(min_objects >= 0 && max_objects >= min_objects,
                         "toy config: bad objects_per_scene range");
    require<ConfigError>(noise_divisor > 0, "toy config: noise divisor must be > 0");
    require<ConfigError>(pixel_noise_std >= 0, "toy config: negative pixel noise");
    if (volume_shape.size() == 3)
        require<ConfigError>(min_axis_extent >= 1 && max_axis_extent >= min_axis_extent,
                             "toy config: bad axis extent range");
}

double sample_noisy_radius(double radius, double noise_divisor, RandomStream& rng) {
    require<ConfigError>(radius > 0, "sample_noisy_radius: radius must be > 0, got ", radius);
    if (!std::isfinite(noise_divisor)) return radius;
    const double sigma = radius / noise_divisor;
    double draw = rng.normal(radius, sigma);
    while (draw <= 0.5) draw = rng.normal(radius, sigma);
    return draw;
}

Box rasterize_cylinder(const CylinderSpec& spec, const ToyConfig& config, int instance_id,
                       Volume& field, LabelVolume& labels) {
    const int dims = config.dims();
    const double r = spec.exact_radius;
    const double sigma = std::isfinite(config.noise_divisor) ? r / config.noise_divisor : 0.0;
    const int h = field.shape[dims == 3 ? 1 : 0];
    const int w = field.shape[dims == 3 ? 2 : 1];

    const double reach = r + sigma;
    require<DataError>(spec.cy - reach >= 0 && spec.cy + reach <= h && spec.cx - reach >= 0 &&
                           spec.cx + reach <= w,
                       "rasterize_cylinder: cylinder at (", spec.cy, ", ", spec.cx,
                       ") with radius ", r, " exceeds volume bounds");

    const int y0 = static_cast<int>(std::floor(spec.cy - reach));
    const int y1 = static_cast<int>(std::ceil(spec.cy + reach));
    const int x0 = static_cast<int>(std::floor(spec.cx - reach));
    const int x1 = static_cast<int>(std::ceil(spec.cx + reach));

    int my0 = h, my1 = -1, mx0 = w, mx1 = -1;
    const int z_begin = dims == 3 ? spec.z_begin : 0;
    const int z_end = dims == 3 ? spec.z_end : 1;

    for (int y = std::max(0, y0); y < std::min(h, y1 + 1); ++y) {
        for (int x = std::max(0, x0); x < std::min(w, x1 + 1); ++x) {
            const double dy = (y + 0.5) - spec.cy;
            const double dx = (x + 0.5) - spec.cx;
            const double d = std::sqrt(dy * dy + dx * dx);
            float value;
            if (d <= r - sigma)
                value = static_cast<float>(config.core_intensity);
            else if (d <= r + sigma)
                value = static_cast<float>(config.belt_intensity);
            else
                continue;
            const bool in_mask = d <= r;
            for (int z = z_begin; z < z_end; ++z) {
                if (dims == 3) {
                    field.at3(z, y, x) = std::max(field.at3(z, y, x), value);
                    if (in_mask) labels.at3(z, y, x) = static_cast<std::int16_t>(instance_id);
                } else {
                    field.at2(y, x) = std::max(field.at2(y, x), value);
                    if (in_mask) labels.at2(y, x) = static_cast<std::int16_t>(instance_id);
                }
            }
            if (in_mask) {
                my0 = std::min(my0, y);
                my1 = std::max(my1, y);
                mx0 = std::min(mx0, x);
                mx1 = std::max(mx1, x);
            }
        }
    }
    require<DataError>(my1 >= my0, "rasterize_cylinder: empty mask for radius ", r);

    if (dims == 3)
        return Box::make3d(z_begin, my0, mx0, z_end, my1 + 1.0, mx1 + 1.0);
    return Box::make2d(my0, mx0, my1 + 1.0, mx1 + 1.0);
}

namespace {

bool boxes_separated(const Box& a, const Box& b, double gap) {
    for (int ax = 0; ax < a.dims; ++ax)
        if (a.hi[ax] + gap <= b.lo[ax] || b.hi[ax] + gap <= a.lo[ax]) return true;
    return false;
}

}  // namespace

Scene generate_scene(const ToyConfig& config, int scene_index) {
    config.validate();
    const int dims = config.dims();
    RandomStream geom = RandomStream::derived(config.seed, scene_index, kGeometryStream);
    RandomStream noise = RandomStream::derived(config.effective_label_noise_seed(), scene_index,
                                               kLabelNoiseStream);
    const BinningScheme scheme = config.binning();

    Scene scene;
    scene.id = cat("scene_", scene_index);
    scene.volume = Volume(config.volume_shape, static_cast<float>(config.background_intensity));
    scene.labels = LabelVolume(config.volume_shape);

    const int h = config.volume_shape[dims == 3 ? 1 : 0];
    const int w = config.volume_shape[dims == 3 ? 2 : 1];
    const int depth = dims == 3 ? config.volume_shape[0] : 1;

    const int n_objects =
        static_cast<int>(geom.uniform_int(config.min_objects, config.max_objects));

    std::vector<CylinderSpec> specs;
    std::vector<Box> claimed;
    for (int obj = 0; obj < n_objects; ++obj) {
        const int radius_idx =
            static_cast<int>(geom.uniform_int(0, static_cast<int>(config.canonical_radii.size()) - 1));
        const double r = config.canonical_radii[radius_idx];
        const double sigma = std::isfinite(config.noise_divisor) ? r / config.noise_divisor : 0.0;
        const double margin = r + sigma + config.placement_margin;
        require<DataError>(2 * margin < h && 2 * margin < w, "generate_scene(", scene.id,
                           "): volume too small for radius ", r);

        CylinderSpec spec;
        spec.exact_radius = r;
        spec.category = scheme.bin_index(r);
        bool placed = false;
        for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
            spec.cy = geom.uniform(margin, h - margin);
            spec.cx = geom.uniform(margin, w - margin);
            if (dims == 3) {
                const int extent = static_cast<int>(geom.uniform_int(
                    config.min_axis_extent, std::min(config.max_axis_extent, depth)));
                spec.z_begin = static_cast<int>(geom.uniform_int(0, depth - extent));
                spec.z_end = spec.z_begin + extent;
            }
            Box candidate = dims == 3 ? Box::make3d(spec.z_begin, spec.cy - r, spec.cx - r,
                                                    spec.z_end, spec.cy + r, spec.cx + r)
                                      : Box::make2d(spec.cy - r, spec.cx - r, spec.cy + r,
                                                    spec.cx + r);
            placed = true;
            for (const Box& other : claimed) {
                if (!boxes_separated(candidate, other, 1.0)) {
                    placed = false;
                    break;
                }
            }
            if (placed) claimed.push_back(candidate);
        }
        require<DataError>(placed, "generate_scene(", scene.id, "): failed to place object ", obj,
                           " after ", kPlacementAttempts, " attempts");
        specs.push_back(spec);
    }

    std::vector<Box> mask_boxes;
    for (std::size_t k = 0; k < specs.size(); ++k)
        mask_boxes.push_back(rasterize_cylinder(specs[k], config, static_cast<int>(k) + 1,
                                                scene.volume, scene.labels));

    if (config.pixel_noise_std > 0) {
        for (float& v : scene.volume.data)
            v += static_cast<float>(geom.normal(0.0, config.pixel_noise_std));
    }

    // Label noise is drawn last, from its own stream: the image and the exact
    // annotations are a function of the geometry stream alone.
    for (std::size_t k = 0; k < specs.size(); ++k) {
        CylinderSpec& spec = specs[k];
        spec.annotated_radius = sample_noisy_radius(spec.exact_radius, config.noise_divisor, noise);
        spec.annotated_category = scheme.bin_index(spec.annotated_radius);

        RoiAnnotation exact;
        exact.box = mask_boxes[k];
        exact.rater_scores = {spec.exact_radius};
        exact.exact_score = spec.exact_radius;
        exact.category = spec.category;
        exact.mask_instance = static_cast<int>(k) + 1;

        RoiAnnotation noisy = exact;
        noisy.rater_scores = {spec.annotated_radius};
        noisy.category = spec.annotated_category;

        scene.annotations.push_back(std::move(exact));
        scene.noisy_annotations.push_back(std::move(noisy));
    }
    return scene;
}

}  // namespace regdet::toy
