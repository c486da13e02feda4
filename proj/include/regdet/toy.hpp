#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "regdet/annotations.hpp"
#include "regdet/binning.hpp"
#include "regdet/random.hpp"

namespace regdet::toy {

// Synthetic cylinder benchmark configuration. 2D profiles use a [H, W]
// volume shape (objects become disks); 3D profiles use [D, H, W] with
// cylinders extruded along z.
struct ToyConfig {
    std::vector<int> volume_shape{8, 320, 320};
    std::vector<double> canonical_radii{4.0, 8.0, 12.0, 16.0, 20.0};
    double noise_divisor = 6.0;  // sigma = r / noise_divisor
    double background_intensity = 0.0;
    double belt_intensity = 0.5;
    double core_intensity = 1.0;
    int min_objects = 1;
    int max_objects = 2;
    int min_axis_extent = 4;  // z extent range, 3D only
    int max_axis_extent = 8;
    double pixel_noise_std = 0.05;
    double placement_margin = 2.0;
    std::uint64_t seed = 1;
    std::uint64_t label_noise_seed = 0;  // 0: reuse `seed`

    std::uint64_t effective_label_noise_seed() const {
        return label_noise_seed == 0 ? seed : label_noise_seed;
    }

    int dims() const { return static_cast<int>(volume_shape.size()); }
    BinningScheme binning() const { return BinningScheme(canonical_radii); }
    void validate() const;
};

// One placed cylinder, prior to rasterization. Center coordinates follow the
// volume axis order; cz/axis extent are ignored in 2D.
struct CylinderSpec {
    double cy = 0.0, cx = 0.0;
    int z_begin = 0, z_end = 1;
    double exact_radius = 0.0;
    double annotated_radius = 0.0;
    int category = 0;            // 1-based bin of exact_radius
    int annotated_category = 0;  // 1-based bin of annotated_radius
};

// Draws Normal(r, r/noise_divisor), redrawing until the result exceeds
// half a voxel. A non-finite divisor yields the exact radius.
double sample_noisy_radius(double radius, double noise_divisor, RandomStream& rng);

// Paints one cylinder into `field` (max blend) and its instance id into
// `labels`. Voxels at in-plane distance d from the axis get core intensity
// for d <= r - sigma, belt intensity for r - sigma < d <= r + sigma; the
// instance mask covers d <= r. Returns the rasterized mask's bounding box.
Box rasterize_cylinder(const CylinderSpec& spec, const ToyConfig& config, int instance_id,
                       Volume& field, LabelVolume& labels);

// Deterministic function of (config.seed, scene_index). Geometry and pixel
// noise come from one random stream, annotated radii from a second, so label
// noise can be re-rolled without touching the imagery.
Scene generate_scene(const ToyConfig& config, int scene_index);

}  // namespace regdet::toy
