#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "regdet/dataset_io.hpp"
#include "regdet/toy.hpp"

using namespace regdet;

namespace {

toy::ToyConfig desk_config() {
    toy::ToyConfig c;
    c.volume_shape = {128, 128};
    c.min_objects = 1;
    c.max_objects = 2;
    c.seed = 99;
    return c;
}

double normal_cdf(double x) { return 0.5 * (1.0 + std::erf(x / std::sqrt(2.0))); }

}  // namespace

TEST_CASE("sample_noisy_radius: moment estimation over 1e5 seeded draws") {
    RandomStream rng(7);
    const int n = 100000;
    double sum = 0.0, sum_sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double d = toy::sample_noisy_radius(12.0, 6.0, rng);
        sum += d;
        sum_sq += d * d;
    }
    const double mean = sum / n;
    const double stddev = std::sqrt(sum_sq / n - mean * mean);
    CHECK(std::abs(mean - 12.0) < 0.05);
    CHECK(std::abs(stddev - 2.0) < 0.04);
}

TEST_CASE("sample_noisy_radius: degenerate noise returns the exact radius") {
    RandomStream rng(9);
    CHECK(toy::sample_noisy_radius(6.0, std::numeric_limits<double>::infinity(), rng) == 6.0);
}

TEST_CASE("sample_noisy_radius: rejects non-positive radii and stays above half a voxel") {
    RandomStream rng(11);
    CHECK_THROWS_AS(toy::sample_noisy_radius(0.0, 6.0, rng), ConfigError);
    CHECK_THROWS_AS(toy::sample_noisy_radius(-3.0, 6.0, rng), ConfigError);
    for (int i = 0; i < 20000; ++i)
        CHECK(toy::sample_noisy_radius(1.0, 1.0, rng) > 0.5);  // heavy truncation regime
}

TEST_CASE("sample_noisy_radius: off-bin rate matches the Gaussian tail integral") {
    // Width-4 bins around r = 20 (finite on both sides), half-width 2.
    const BinningScheme scheme({4, 8, 12, 16, 20, 24});
    const double sigma = 20.0 / 6.0;
    RandomStream rng(13);
    const int n = 100000;
    int off = 0;
    for (int i = 0; i < n; ++i)
        if (scheme.bin_index(toy::sample_noisy_radius(20.0, 6.0, rng)) != scheme.bin_index(20.0))
            ++off;
    const double expected = 2.0 * (1.0 - normal_cdf(2.0 / sigma));
    CHECK(expected == doctest::Approx(0.548).epsilon(0.01));
    CHECK(std::abs(off / static_cast<double>(n) - expected) < 0.01);
}

TEST_CASE("rasterize_cylinder: three-band rule against a brute-force oracle") {
    toy::ToyConfig config = desk_config();
    config.pixel_noise_std = 0.0;
    Volume field(config.volume_shape, static_cast<float>(config.background_intensity));
    LabelVolume labels(config.volume_shape);
    toy::CylinderSpec spec;
    spec.cy = 64.5;
    spec.cx = 64.5;
    spec.exact_radius = 8.0;
    const Box box = toy::rasterize_cylinder(spec, config, 1, field, labels);

    const double sigma = 8.0 / 6.0;
    for (int y = 0; y < 128; ++y) {
        for (int x = 0; x < 128; ++x) {
            const double d = std::hypot(y + 0.5 - spec.cy, x + 0.5 - spec.cx);
            float expected;
            if (d <= 8.0 - sigma)
                expected = 1.0f;
            else if (d <= 8.0 + sigma)
                expected = 0.5f;
            else
                expected = 0.0f;
            CHECK(field.at2(y, x) == expected);
            CHECK((labels.at2(y, x) == 1) == (d <= 8.0));
        }
    }

    // A voxel at in-plane distance exactly 7 falls in the belt.
    // (64.5, 71.5) is 7.0 from the center; 8 - 4/3 < 7 <= 8 + 4/3.
    CHECK(field.at2(64, 71) == 0.5f);

    // Box equals the mask bounding box exactly.
    int my0 = 128, my1 = -1, mx0 = 128, mx1 = -1;
    for (int y = 0; y < 128; ++y)
        for (int x = 0; x < 128; ++x)
            if (labels.at2(y, x) == 1) {
                my0 = std::min(my0, y);
                my1 = std::max(my1, y);
                mx0 = std::min(mx0, x);
                mx1 = std::max(mx1, x);
            }
    CHECK(box.lo[0] == doctest::Approx(my0));
    CHECK(box.lo[1] == doctest::Approx(mx0));
    CHECK(box.hi[0] == doctest::Approx(my1 + 1.0));
    CHECK(box.hi[1] == doctest::Approx(mx1 + 1.0));
}

TEST_CASE("rasterize_cylinder: vanishing belt yields a two-valued field") {
    toy::ToyConfig config = desk_config();
    config.noise_divisor = std::numeric_limits<double>::infinity();
    config.pixel_noise_std = 0.0;
    Volume field(config.volume_shape, 0.0f);
    LabelVolume labels(config.volume_shape);
    toy::CylinderSpec spec;
    spec.cy = 40.0;
    spec.cx = 50.0;
    spec.exact_radius = 12.0;
    toy::rasterize_cylinder(spec, config, 1, field, labels);
    for (float v : field.data) CHECK((v == 0.0f || v == 1.0f));
}

TEST_CASE("rasterize_cylinder: mean rasterized disk area approaches pi.r^2") {
    toy::ToyConfig config = desk_config();
    RandomStream rng(17);
    double total = 0.0;
    const int trials = 64;
    for (int t = 0; t < trials; ++t) {
        Volume field(config.volume_shape, 0.0f);
        LabelVolume labels(config.volume_shape);
        toy::CylinderSpec spec;
        spec.cy = rng.uniform(30, 90);
        spec.cx = rng.uniform(30, 90);
        spec.exact_radius = 8.0;
        toy::rasterize_cylinder(spec, config, 1, field, labels);
        int count = 0;
        for (auto v : labels.data) count += v == 1;
        total += count;
    }
    const double expected = 3.14159265358979 * 64.0;
    CHECK(std::abs(total / trials - expected) < 0.01 * expected);
}

TEST_CASE("rasterize_cylinder: out-of-bounds placement names the problem") {
    toy::ToyConfig config = desk_config();
    Volume field(config.volume_shape, 0.0f);
    LabelVolume labels(config.volume_shape);
    toy::CylinderSpec spec;
    spec.cy = 2.0;
    spec.cx = 64.0;
    spec.exact_radius = 8.0;
    CHECK_THROWS_AS(toy::rasterize_cylinder(spec, config, 1, field, labels), DataError);
}

TEST_CASE("generate_scene: deterministic in (seed, scene_index)") {
    const toy::ToyConfig config = desk_config();
    const Scene a = toy::generate_scene(config, 5);
    const Scene b = toy::generate_scene(config, 5);
    CHECK(a.volume.data == b.volume.data);
    CHECK(a.labels.data == b.labels.data);
    REQUIRE(a.annotations.size() == b.annotations.size());
    for (std::size_t k = 0; k < a.annotations.size(); ++k) {
        CHECK(a.annotations[k].exact_score == b.annotations[k].exact_score);
        CHECK(a.noisy_annotations[k].rater_scores == b.noisy_annotations[k].rater_scores);
    }
    const Scene c = toy::generate_scene(config, 6);
    CHECK(a.volume.data != c.volume.data);
}

TEST_CASE("generate_scene: fixed object count and paired annotation lists") {
    toy::ToyConfig config = desk_config();
    config.min_objects = config.max_objects = 1;
    const Scene scene = toy::generate_scene(config, 0);
    CHECK(scene.annotations.size() == 1);
    CHECK(scene.noisy_annotations.size() == 1);
    // Identical boxes, differing only in score/category fields.
    CHECK(scene.annotations[0].box.lo == scene.noisy_annotations[0].box.lo);
    CHECK(scene.annotations[0].box.hi == scene.noisy_annotations[0].box.hi);
    CHECK(scene.annotations[0].mask_instance == scene.noisy_annotations[0].mask_instance);
}

TEST_CASE("generate_scene: canonical radii appear uniformly") {
    toy::ToyConfig config = desk_config();
    std::map<double, int> counts;
    int total = 0;
    for (int s = 0; s < 200; ++s) {
        const Scene scene = toy::generate_scene(config, s);
        for (const auto& ann : scene.annotations) {
            counts[ann.exact_score]++;
            ++total;
        }
    }
    REQUIRE(counts.size() == 5);
    for (const auto& [radius, count] : counts)
        CHECK(std::abs(count / static_cast<double>(total) - 0.2) < 0.06);
}

TEST_CASE("generate_scene: adjacent-bin confusions dominate") {
    toy::ToyConfig config = desk_config();
    config.seed = 1234;
    int total = 0, within_one = 0;
    for (int s = 0; total < 500; ++s) {
        const Scene scene = toy::generate_scene(config, s);
        for (std::size_t k = 0; k < scene.annotations.size(); ++k) {
            const int d = std::abs(scene.annotations[k].category -
                                   scene.noisy_annotations[k].category);
            ++total;
            within_one += d <= 1;
        }
    }
    CHECK(within_one / static_cast<double>(total) >= 0.9);
}

TEST_CASE("generate_scene: exact boxes tightly enclose masks and objects never overlap") {
    toy::ToyConfig config = desk_config();
    config.max_objects = 3;
    for (int s = 0; s < 20; ++s) {
        const Scene scene = toy::generate_scene(config, s);
        for (std::size_t k = 0; k < scene.annotations.size(); ++k) {
            const auto& ann = scene.annotations[k];
            int my0 = 1 << 20, my1 = -1, mx0 = 1 << 20, mx1 = -1;
            for (int y = 0; y < 128; ++y)
                for (int x = 0; x < 128; ++x)
                    if (scene.labels.at2(y, x) == ann.mask_instance) {
                        my0 = std::min(my0, y);
                        my1 = std::max(my1, y);
                        mx0 = std::min(mx0, x);
                        mx1 = std::max(mx1, x);
                    }
            CHECK(ann.box.lo[0] == doctest::Approx(my0));
            CHECK(ann.box.lo[1] == doctest::Approx(mx0));
            CHECK(ann.box.hi[0] == doctest::Approx(my1 + 1.0));
            CHECK(ann.box.hi[1] == doctest::Approx(mx1 + 1.0));
            for (std::size_t j = 0; j < k; ++j)
                CHECK(iou(ann.box, scene.annotations[j].box) == 0.0);
        }
    }
}

TEST_CASE("generate_scene: label noise stream leaves imagery and exact labels untouched") {
    toy::ToyConfig a = desk_config();
    toy::ToyConfig b = desk_config();
    b.label_noise_seed = 4242;  // different noise stream, same geometry stream
    for (int s = 0; s < 5; ++s) {
        const Scene sa = toy::generate_scene(a, s);
        const Scene sb = toy::generate_scene(b, s);
        CHECK(sa.volume.data == sb.volume.data);
        REQUIRE(sa.annotations.size() == sb.annotations.size());
        bool any_noise_differs = false;
        for (std::size_t k = 0; k < sa.annotations.size(); ++k) {
            CHECK(sa.annotations[k].exact_score == sb.annotations[k].exact_score);
            CHECK(sa.annotations[k].box.lo == sb.annotations[k].box.lo);
            any_noise_differs |= sa.noisy_annotations[k].rater_scores !=
                                 sb.noisy_annotations[k].rater_scores;
        }
        CHECK(any_noise_differs);
    }
}

TEST_CASE("generate_scene: 3D volumes carry z extents") {
    toy::ToyConfig config;
    config.volume_shape = {8, 160, 160};
    config.min_objects = config.max_objects = 2;
    config.seed = 3;
    const Scene scene = toy::generate_scene(config, 0);
    REQUIRE(scene.annotations.size() == 2);
    for (const auto& ann : scene.annotations) {
        CHECK(ann.box.dims == 3);
        CHECK(ann.box.extent(0) >= config.min_axis_extent);
        CHECK(ann.box.hi[0] <= 8.0);
    }
}

TEST_CASE("dataset round-trip: volumes, annotations, config") {
    namespace fs = std::filesystem;
    const std::string dir = "/tmp/regdet_test_dataset";
    fs::remove_all(dir);

    toy::ToyConfig config = desk_config();
    std::vector<Scene> scenes;
    io::Manifest manifest;
    manifest.seed = config.seed;
    manifest.bin_centers = config.canonical_radii;
    manifest.score_min = 0.5;
    manifest.toy_config = config;
    for (int s = 0; s < 3; ++s) {
        scenes.push_back(toy::generate_scene(config, s));
        manifest.scene_ids.push_back(scenes.back().id);
    }
    manifest.splits["train"] = {manifest.scene_ids[0], manifest.scene_ids[1]};
    manifest.splits["test"] = {manifest.scene_ids[2]};
    io::write_dataset(dir, scenes, manifest);

    io::DatasetStore store(dir);
    CHECK(store.manifest().scene_ids.size() == 3);
    CHECK(store.manifest().toy_config.has_value());
    for (const Scene& original : scenes) {
        const auto loaded = store.load_scene(original.id);
        CHECK(loaded->volume.data == original.volume.data);
        CHECK(loaded->volume.shape == original.volume.shape);
        CHECK(loaded->labels.data == original.labels.data);
        REQUIRE(loaded->annotations.size() == original.annotations.size());
        for (std::size_t k = 0; k < original.annotations.size(); ++k) {
            CHECK(loaded->annotations[k].exact_score ==
                  doctest::Approx(original.annotations[k].exact_score));
            CHECK(loaded->annotations[k].category == original.annotations[k].category);
            CHECK(loaded->noisy_annotations[k].rater_scores ==
                  original.noisy_annotations[k].rater_scores);
            CHECK(loaded->annotations[k].box.lo == original.annotations[k].box.lo);
        }
    }
    CHECK(store.accessed_ids().size() == 3);
}

TEST_CASE("dataset read errors are descriptive") {
    namespace fs = std::filesystem;
    const std::string dir = "/tmp/regdet_test_dataset_err";
    fs::remove_all(dir);

    SUBCASE("missing manifest names the file") {
        fs::create_directories(dir);
        CHECK_THROWS_WITH_AS((void)io::DatasetStore(std::string(dir)),
                             doctest::Contains("manifest.json"), IoError);
    }

    SUBCASE("tampered category fails validation") {
        toy::ToyConfig config = desk_config();
        io::Manifest manifest;
        manifest.seed = config.seed;
        manifest.bin_centers = config.canonical_radii;
        manifest.score_min = 0.5;
        Scene scene = toy::generate_scene(config, 0);
        manifest.scene_ids = {scene.id};
        io::write_dataset(dir, {scene}, manifest);

        const std::string ann_path = dir + "/scenes/" + scene.id + ".ann.jsonl";
        std::ifstream in(ann_path);
        std::string line;
        std::getline(in, line);
        in.close();
        auto pos = line.find("\"category\":");
        REQUIRE(pos != std::string::npos);
        line.replace(pos, 12, "\"category\":9");
        // Rewrite only the first annotation line.
        std::ofstream out(ann_path);
        out << line << "\n";
        out.close();

        io::DatasetStore store(dir);
        CHECK_THROWS_AS((void)store.load_scene(scene.id), DataError);
    }

    SUBCASE("truncated volume payload is a shape mismatch") {
        toy::ToyConfig config = desk_config();
        io::Manifest manifest;
        manifest.seed = config.seed;
        manifest.bin_centers = config.canonical_radii;
        manifest.score_min = 0.5;
        Scene scene = toy::generate_scene(config, 0);
        manifest.scene_ids = {scene.id};
        io::write_dataset(dir, {scene}, manifest);

        const std::string vol_path = dir + "/scenes/" + scene.id + ".vol";
        fs::resize_file(vol_path, fs::file_size(vol_path) - 64);
        io::DatasetStore store(dir);
        CHECK_THROWS_WITH_AS((void)store.load_scene(scene.id),
                             doctest::Contains("shorter than header shape"), IoError);
    }
}
