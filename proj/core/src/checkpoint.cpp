#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "gfm/dataset.hpp"
#include "gfm/model.hpp"
#include "json.hpp"

namespace gfm {

using nlohmann::json;

namespace {

constexpr int kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint blobs assume a little-endian host");

json config_to_json(const FusionConfig& c) {
  json j;
  j["attention_mode"] = attention_mode_name(c.attention_mode);
  j["performer_features"] = c.performer_features;
  j["redraw_features"] = c.redraw_features;
  j["use_fusion"] = c.use_fusion;
  j["use_graph_sim"] = c.use_graph_sim;
  j["use_node_sim"] = c.use_node_sim;
  return j;
}

FusionConfig config_from_json(const json& j) {
  static const std::vector<std::string> keys{"attention_mode", "performer_features", "redraw_features",
                                             "use_fusion",     "use_graph_sim",      "use_node_sim"};
  if (!j.is_object()) throw CheckpointError("checkpoint config must be an object");
  for (const auto& [k, v] : j.items()) {
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) {
      throw CheckpointError("unknown checkpoint config key '" + k + "'");
    }
  }
  FusionConfig c;
  try {
    c.attention_mode = parse_attention_mode(j.at("attention_mode").get<std::string>());
    c.performer_features = j.at("performer_features").get<std::size_t>();
    c.redraw_features = j.at("redraw_features").get<bool>();
    c.use_fusion = j.at("use_fusion").get<bool>();
    c.use_graph_sim = j.at("use_graph_sim").get<bool>();
    c.use_node_sim = j.at("use_node_sim").get<bool>();
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("checkpoint config: ") + e.what());
  }
  return c;
}

std::filesystem::path blob_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".bin");
}

}  // namespace

std::string fusion_config_json(const FusionConfig& config) { return config_to_json(config).dump(); }

void save_checkpoint(const GfmModel& model, const std::filesystem::path& path) {
  json manifest;
  manifest["version"] = kVersion;
  manifest["f0"] = model.feature_dim();
  manifest["seed"] = model.seed();
  manifest["config"] = config_to_json(model.config());
  manifest["blob"] = blob_path(path).filename().string();
  json entries = json::array();
  std::string blob;
  for (const auto& [name, t] : model.state()) {
    json e;
    e["name"] = name;
    e["shape"] = t.shape();
    e["offset"] = blob.size();
    entries.push_back(e);
    const auto values = t.data();
    const std::size_t start = blob.size();
    blob.resize(start + values.size() * sizeof(double));
    std::memcpy(blob.data() + start, values.data(), values.size() * sizeof(double));
  }
  manifest["tensors"] = entries;
  write_file_atomic(blob_path(path), blob);
  write_file_atomic(path, manifest.dump(2) + "\n");
}

GfmModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw CheckpointError("checkpoint " + path.string() + ": " + e.what());
  }
  try {
    for (const auto& [k, v] : manifest.items()) {
      if (k != "version" && k != "f0" && k != "seed" && k != "config" && k != "blob" && k != "tensors") {
        throw CheckpointError("unknown checkpoint key '" + k + "'");
      }
    }
    if (manifest.at("version").get<int>() != kVersion) {
      throw CheckpointError("unsupported checkpoint version " + manifest.at("version").dump());
    }
    GfmModel model(manifest.at("f0").get<std::size_t>(), config_from_json(manifest.at("config")),
                   manifest.at("seed").get<std::uint64_t>());
    const auto blob_file = path.parent_path() / manifest.at("blob").get<std::string>();
    std::ifstream bin(blob_file, std::ios::binary);
    if (!bin) throw CheckpointError("cannot open checkpoint blob " + blob_file.string());
    std::stringstream buf;
    buf << bin.rdbuf();
    const std::string blob = buf.str();

    std::vector<std::pair<std::string, Tensor>> state;
    std::size_t expected_offset = 0;
    for (const auto& e : manifest.at("tensors")) {
      const auto name = e.at("name").get<std::string>();
      const auto shape = e.at("shape").get<Shape>();
      const auto offset = e.at("offset").get<std::size_t>();
      if (offset != expected_offset) {
        throw CheckpointError("tensor '" + name + "' at offset " + std::to_string(offset) + ", expected " +
                              std::to_string(expected_offset));
      }
      std::size_t count = 1;
      for (auto d : shape) count *= d;
      if (offset + count * sizeof(double) > blob.size()) {
        throw CheckpointError("checkpoint blob too short for tensor '" + name + "'");
      }
      std::vector<double> values(count);
      std::memcpy(values.data(), blob.data() + offset, count * sizeof(double));
      expected_offset = offset + count * sizeof(double);
      state.emplace_back(name, Tensor(shape, std::move(values)));
    }
    if (expected_offset != blob.size()) {
      throw CheckpointError("checkpoint blob has " + std::to_string(blob.size() - expected_offset) +
                            " trailing bytes");
    }
    model.load_state(state);
    return model;
  } catch (const json::exception& e) {
    throw CheckpointError("checkpoint " + path.string() + ": " + e.what());
  } catch (const DimensionError& e) {
    throw CheckpointError("checkpoint " + path.string() + ": " + e.what());
  }
}

}  // namespace gfm
