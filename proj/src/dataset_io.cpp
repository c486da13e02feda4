#include "regdet/dataset_io.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace regdet::io {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "volume container assumes a little-endian host");

namespace {

constexpr char kVolumeMagic[] = "REGDETVOL1\n";
constexpr std::size_t kMagicLen = sizeof(kVolumeMagic) - 1;

json box_to_json(const Box& b) {
    json lo = json::array(), hi = json::array();
    for (int a = 0; a < b.dims; ++a) {
        lo.push_back(b.lo[a]);
        hi.push_back(b.hi[a]);
    }
    return json{{"lo", lo}, {"hi", hi}};
}

Box box_from_json(const json& j, const std::string& context) {
    const auto& lo = j.at("lo");
    const auto& hi = j.at("hi");
    require<DataError>(lo.size() == hi.size() && (lo.size() == 2 || lo.size() == 3), context,
                       ": box lo/hi must both have 2 or 3 coordinates");
    Box b;
    b.dims = static_cast<int>(lo.size());
    for (int a = 0; a < b.dims; ++a) {
        b.lo[a] = lo[a].get<double>();
        b.hi[a] = hi[a].get<double>();
    }
    require<DataError>(b.valid(), context, ": degenerate box");
    return b;
}

void write_raw(const std::string& path, const std::string& dtype,
               const std::vector<int>& shape, const std::vector<double>& spacing,
               const void* payload, std::size_t payload_bytes) {
    std::ofstream out(path, std::ios::binary);
    require<IoError>(out.good(), "cannot open for writing: ", path);
    json header{{"dtype", dtype}, {"shape", shape}};
    header["spacing"] = spacing.empty() ? std::vector<double>(shape.size(), 1.0) : spacing;
    const std::string header_str = header.dump();
    const std::uint32_t header_len = static_cast<std::uint32_t>(header_str.size());
    out.write(kVolumeMagic, kMagicLen);
    out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
    out.write(header_str.data(), header_str.size());
    out.write(static_cast<const char*>(payload), payload_bytes);
    require<IoError>(out.good(), "write failed: ", path);
}

json read_raw_header(std::ifstream& in, const std::string& path) {
    char magic[kMagicLen];
    in.read(magic, kMagicLen);
    require<IoError>(in.good() && std::memcmp(magic, kVolumeMagic, kMagicLen) == 0,
                     "malformed volume header (bad magic): ", path);
    std::uint32_t header_len = 0;
    in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
    require<IoError>(in.good() && header_len > 0 && header_len < (1u << 20),
                     "malformed volume header (bad length): ", path);
    std::string header_str(header_len, '\0');
    in.read(header_str.data(), header_len);
    require<IoError>(in.good(), "malformed volume header (truncated): ", path);
    try {
        return json::parse(header_str);
    } catch (const json::exception& e) {
        fail<IoError>("malformed volume header (bad JSON) in ", path, ": ", e.what());
    }
}

template <typename T>
std::vector<T> read_payload(std::ifstream& in, const std::string& path,
                            const std::vector<int>& shape) {
    std::size_t count = 1;
    for (int d : shape) {
        require<IoError>(d > 0, "bad shape in volume header: ", path);
        count *= static_cast<std::size_t>(d);
    }
    std::vector<T> data(count);
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(count * sizeof(T)));
    require<IoError>(in.good(), "volume payload shorter than header shape in ", path);
    char extra;
    in.read(&extra, 1);
    require<IoError>(in.eof(), "volume payload longer than header shape in ", path);
    return data;
}

}  // namespace

void write_volume(const std::string& path, const Volume& volume) {
    write_raw(path, "float32", volume.shape, volume.spacing, volume.data.data(),
              volume.data.size() * sizeof(float));
}

Volume read_volume(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require<IoError>(in.good(), "cannot open volume file: ", path);
    const json header = read_raw_header(in, path);
    require<IoError>(header.value("dtype", "") == "float32", "expected float32 volume in ", path);
    Volume v;
    v.shape = header.at("shape").get<std::vector<int>>();
    v.spacing = header.value("spacing", std::vector<double>(v.shape.size(), 1.0));
    v.data = read_payload<float>(in, path, v.shape);
    return v;
}

void write_labels(const std::string& path, const LabelVolume& labels) {
    write_raw(path, "int16", labels.shape, {}, labels.data.data(),
              labels.data.size() * sizeof(std::int16_t));
}

LabelVolume read_labels(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require<IoError>(in.good(), "cannot open label file: ", path);
    const json header = read_raw_header(in, path);
    require<IoError>(header.value("dtype", "") == "int16", "expected int16 labels in ", path);
    LabelVolume l;
    l.shape = header.at("shape").get<std::vector<int>>();
    l.data = read_payload<std::int16_t>(in, path, l.shape);
    return l;
}

json toy_config_to_json(const toy::ToyConfig& c) {
    return json{{"volume_shape", c.volume_shape},
                {"canonical_radii", c.canonical_radii},
                {"noise_divisor", c.noise_divisor},
                {"background_intensity", c.background_intensity},
                {"belt_intensity", c.belt_intensity},
                {"core_intensity", c.core_intensity},
                {"min_objects", c.min_objects},
                {"max_objects", c.max_objects},
                {"min_axis_extent", c.min_axis_extent},
                {"max_axis_extent", c.max_axis_extent},
                {"pixel_noise_std", c.pixel_noise_std},
                {"placement_margin", c.placement_margin},
                {"seed", c.seed},
                {"label_noise_seed", c.label_noise_seed}};
}

toy::ToyConfig toy_config_from_json(const json& j) {
    toy::ToyConfig c;
    try {
        if (j.contains("volume_shape")) c.volume_shape = j["volume_shape"].get<std::vector<int>>();
        if (j.contains("canonical_radii"))
            c.canonical_radii = j["canonical_radii"].get<std::vector<double>>();
        c.noise_divisor = j.value("noise_divisor", c.noise_divisor);
        c.background_intensity = j.value("background_intensity", c.background_intensity);
        c.belt_intensity = j.value("belt_intensity", c.belt_intensity);
        c.core_intensity = j.value("core_intensity", c.core_intensity);
        c.min_objects = j.value("min_objects", c.min_objects);
        c.max_objects = j.value("max_objects", c.max_objects);
        c.min_axis_extent = j.value("min_axis_extent", c.min_axis_extent);
        c.max_axis_extent = j.value("max_axis_extent", c.max_axis_extent);
        c.pixel_noise_std = j.value("pixel_noise_std", c.pixel_noise_std);
        c.placement_margin = j.value("placement_margin", c.placement_margin);
        c.seed = j.value("seed", c.seed);
        c.label_noise_seed = j.value("label_noise_seed", c.label_noise_seed);
    } catch (const json::exception& e) {
        fail<ConfigError>("bad toy config: ", e.what());
    }
    c.validate();
    return c;
}

void write_manifest(const std::string& directory, const Manifest& manifest) {
    fs::create_directories(directory);
    json j{{"format", "regdet-dataset"},
           {"version", 1},
           {"seed", manifest.seed},
           {"bin_centers", manifest.bin_centers},
           {"rater_count", manifest.rater_count},
           {"score_min", manifest.score_min},
           {"scenes", manifest.scene_ids},
           {"splits", manifest.splits}};
    if (manifest.score_max) j["score_max"] = *manifest.score_max;
    if (manifest.toy_config) j["toy_config"] = toy_config_to_json(*manifest.toy_config);
    std::ofstream out(fs::path(directory) / "manifest.json");
    require<IoError>(out.good(), "cannot write manifest in ", directory);
    out << j.dump(2) << "\n";
}

Manifest read_manifest(const std::string& directory) {
    const fs::path path = fs::path(directory) / "manifest.json";
    std::ifstream in(path);
    require<IoError>(in.good(), "missing dataset manifest: ", path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        fail<IoError>("malformed manifest ", path.string(), ": ", e.what());
    }
    require<DataError>(j.value("format", "") == "regdet-dataset", "not a dataset manifest: ",
                       path.string());
    Manifest m;
    m.seed = j.value("seed", 0ULL);
    m.bin_centers = j.at("bin_centers").get<std::vector<double>>();
    m.rater_count = j.value("rater_count", 1);
    m.score_min = j.value("score_min", 0.0);
    if (j.contains("score_max")) m.score_max = j["score_max"].get<double>();
    m.scene_ids = j.at("scenes").get<std::vector<std::string>>();
    if (j.contains("splits"))
        m.splits = j["splits"].get<std::map<std::string, std::vector<std::string>>>();
    if (j.contains("toy_config")) m.toy_config = toy_config_from_json(j["toy_config"]);
    return m;
}

void write_scene(const std::string& directory, const Scene& scene) {
    const fs::path scenes_dir = fs::path(directory) / "scenes";
    fs::create_directories(scenes_dir);
    write_volume((scenes_dir / (scene.id + ".vol")).string(), scene.volume);

    bool any_mask = false;
    for (const RoiAnnotation& a : scene.annotations) any_mask |= a.mask_instance > 0;
    if (any_mask) write_labels((scenes_dir / (scene.id + ".seg")).string(), scene.labels);

    require<DataError>(scene.annotations.size() == scene.noisy_annotations.size(),
                       "scene ", scene.id, ": exact/noisy annotation lists differ in length");
    std::ofstream out(scenes_dir / (scene.id + ".ann.jsonl"));
    require<IoError>(out.good(), "cannot write annotations for scene ", scene.id);
    for (std::size_t k = 0; k < scene.annotations.size(); ++k) {
        const RoiAnnotation& exact = scene.annotations[k];
        const RoiAnnotation& noisy = scene.noisy_annotations[k];
        json j{{"box", box_to_json(exact.box)},
               {"mask_instance", exact.mask_instance},
               {"exact_score", exact.exact_score},
               {"category", exact.category},
               {"rater_scores", noisy.rater_scores},
               {"rater_category", noisy.category}};
        out << j.dump() << "\n";
    }
    require<IoError>(out.good(), "write failed for scene ", scene.id);
}

Scene read_scene(const std::string& directory, const std::string& scene_id,
                 const Manifest& manifest) {
    const fs::path scenes_dir = fs::path(directory) / "scenes";
    const BinningScheme scheme = manifest.binning();

    Scene scene;
    scene.id = scene_id;
    scene.volume = read_volume((scenes_dir / (scene_id + ".vol")).string());
    const fs::path seg_path = scenes_dir / (scene_id + ".seg");
    if (fs::exists(seg_path)) {
        scene.labels = read_labels(seg_path.string());
        require<DataError>(scene.labels.shape == scene.volume.shape,
                           "scene ", scene_id, ": label shape differs from volume shape");
    }

    const fs::path ann_path = scenes_dir / (scene_id + ".ann.jsonl");
    std::ifstream in(ann_path);
    require<IoError>(in.good(), "missing annotation file: ", ann_path.string());
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            fail<DataError>("bad JSON at ", ann_path.string(), ":", line_no, ": ", e.what());
        }
        const std::string context = cat(scene_id, " annotation ", line_no);

        RoiAnnotation exact;
        exact.box = box_from_json(j.at("box"), context);
        require<DataError>(exact.box.dims == scene.volume.dims(), context,
                           ": box dimensionality differs from volume");
        exact.mask_instance = j.value("mask_instance", 0);
        exact.exact_score = j.at("exact_score").get<double>();
        exact.category = j.at("category").get<int>();
        require<DataError>(scheme.contains_bin(exact.category), context, ": category ",
                           exact.category, " outside 1..", scheme.category_count());
        require<DataError>(exact.category == scheme.bin_index(exact.exact_score), context,
                           ": category does not match the binning of exact_score");
        exact.rater_scores = {exact.exact_score};

        RoiAnnotation noisy = exact;
        noisy.rater_scores = j.at("rater_scores").get<std::vector<double>>();
        require<DataError>(!noisy.rater_scores.empty(), context, ": empty rater_scores");
        for (double s : noisy.rater_scores) {
            require<DataError>(s >= manifest.score_min &&
                                   (!manifest.score_max || s <= *manifest.score_max),
                               context, ": rater score ", s, " outside the configured range");
        }
        noisy.category = j.value("rater_category", scheme.bin_index(noisy.rater_scores[0]));
        require<DataError>(scheme.contains_bin(noisy.category), context, ": rater_category ",
                           noisy.category, " outside 1..", scheme.category_count());

        scene.annotations.push_back(std::move(exact));
        scene.noisy_annotations.push_back(std::move(noisy));
    }
    return scene;
}

void write_dataset(const std::string& directory, const std::vector<Scene>& scenes,
                   const Manifest& manifest) {
    write_manifest(directory, manifest);
    for (const Scene& scene : scenes) write_scene(directory, scene);
}

DatasetStore::DatasetStore(std::string directory)
    : directory_(std::move(directory)),
      manifest_(read_manifest(directory_)),
      mutex_(std::make_unique<std::mutex>()) {}

std::shared_ptr<const Scene> DatasetStore::load_scene(const std::string& id) const {
    std::lock_guard<std::mutex> lock(*mutex_);
    accessed_.insert(id);
    auto it = cache_.find(id);
    if (it != cache_.end()) return it->second;
    auto scene = std::make_shared<Scene>(read_scene(directory_, id, manifest_));
    cache_[id] = scene;
    return scene;
}

std::set<std::string> DatasetStore::accessed_ids() const {
    std::lock_guard<std::mutex> lock(*mutex_);
    return accessed_;
}

void DatasetStore::reset_access_log() const {
    std::lock_guard<std::mutex> lock(*mutex_);
    accessed_.clear();
}

const std::vector<std::string>& DatasetStore::split(const std::string& name) const {
    auto it = manifest_.splits.find(name);
    require<ConfigError>(it != manifest_.splits.end(), "dataset has no split named '", name, "'");
    return it->second;
}

}  // namespace regdet::io
