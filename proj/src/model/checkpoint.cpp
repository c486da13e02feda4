#include "regdet/model/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace regdet::model {

using nlohmann::json;

namespace {
constexpr char kMagic[] = "REGDETCKPT1\n";
constexpr std::size_t kMagicLen = sizeof(kMagic) - 1;
}  // namespace

void save_checkpoint(const std::string& path, Detector& detector, const json& metadata) {
    json params = json::array();
    std::size_t total = 0;
    for (const nn::Param* p : detector.parameters()) {
        params.push_back(json{{"name", p->name}, {"shape", p->value.shape}});
        total += p->value.size();
    }
    json header{{"version", 1},
                {"config", detector.config().to_json()},
                {"metadata", metadata},
                {"params", params}};
    const std::string header_str = header.dump();

    std::ofstream out(path, std::ios::binary);
    require<IoError>(out.good(), "cannot write checkpoint: ", path);
    const std::uint32_t header_len = static_cast<std::uint32_t>(header_str.size());
    out.write(kMagic, kMagicLen);
    out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
    out.write(header_str.data(), header_str.size());
    for (nn::Param* p : detector.parameters())
        out.write(reinterpret_cast<const char*>(p->value.data()),
                  static_cast<std::streamsize>(p->value.size() * sizeof(float)));
    require<IoError>(out.good(), "checkpoint write failed: ", path, " (", total, " values)");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require<IoError>(in.good(), "cannot open checkpoint: ", path);
    char magic[kMagicLen];
    in.read(magic, kMagicLen);
    require<IoError>(in.good() && std::memcmp(magic, kMagic, kMagicLen) == 0,
                     "not a checkpoint file: ", path);
    std::uint32_t header_len = 0;
    in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
    require<IoError>(in.good() && header_len > 0 && header_len < (1u << 24),
                     "corrupt checkpoint header: ", path);
    std::string header_str(header_len, '\0');
    in.read(header_str.data(), header_len);
    require<IoError>(in.good(), "truncated checkpoint header: ", path);

    json header;
    try {
        header = json::parse(header_str);
    } catch (const json::exception& e) {
        fail<IoError>("corrupt checkpoint header in ", path, ": ", e.what());
    }

    LoadedCheckpoint loaded;
    loaded.detector = std::make_unique<Detector>(DetectorConfig::from_json(header.at("config")));
    loaded.metadata = header.value("metadata", json::object());

    auto params = loaded.detector->parameters();
    const json& table = header.at("params");
    require<DataError>(table.size() == params.size(), "checkpoint ", path, " carries ",
                       table.size(), " parameters, model expects ", params.size());
    for (std::size_t k = 0; k < params.size(); ++k) {
        const std::string name = table[k].at("name").get<std::string>();
        const auto shape = table[k].at("shape").get<std::vector<int>>();
        require<DataError>(name == params[k]->name, "checkpoint parameter order mismatch at ",
                           name, " vs ", params[k]->name);
        require<DataError>(shape == params[k]->value.shape, "checkpoint shape mismatch for ",
                           name);
        in.read(reinterpret_cast<char*>(params[k]->value.data()),
                static_cast<std::streamsize>(params[k]->value.size() * sizeof(float)));
        require<IoError>(in.good(), "truncated checkpoint payload at ", name, " in ", path);
    }
    return loaded;
}

}  // namespace regdet::model
