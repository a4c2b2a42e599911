#include "seltune/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "json.hpp"

namespace seltune {

namespace {

using nlohmann::json;

json config_to_json(const ModelConfig& cfg) {
  return json{{"vocab_size", cfg.vocab_size},
              {"max_positions", cfg.max_positions},
              {"n_layers", cfg.n_layers},
              {"n_heads", cfg.n_heads},
              {"d_model", cfg.d_model},
              {"d_ff", cfg.d_ff},
              {"layer_norm_eps", cfg.layer_norm_eps},
              {"n_classes", cfg.n_classes},
              {"dropout_rate", cfg.dropout_rate}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig cfg;
  cfg.vocab_size = j.at("vocab_size").get<int64_t>();
  cfg.max_positions = j.at("max_positions").get<int64_t>();
  cfg.n_layers = j.at("n_layers").get<int64_t>();
  cfg.n_heads = j.at("n_heads").get<int64_t>();
  cfg.d_model = j.at("d_model").get<int64_t>();
  cfg.d_ff = j.at("d_ff").get<int64_t>();
  cfg.layer_norm_eps = j.at("layer_norm_eps").get<double>();
  cfg.n_classes = j.at("n_classes").get<int64_t>();
  cfg.dropout_rate = j.at("dropout_rate").get<double>();
  return cfg;
}

void write_u32_le(std::ostream& os, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64_le(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

uint32_t read_u32_le(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

uint64_t read_u64_le(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

struct Header {
  json metadata;
  std::streampos data_start;
};

Header read_header(std::ifstream& in, const std::string& path) {
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw std::runtime_error("checkpoint `" + path +
                             "`: bad magic, not a GPT2CKPT file");
  const uint32_t version = read_u32_le(in);
  if (!in || version != kCheckpointVersion)
    throw std::runtime_error("checkpoint `" + path +
                             "`: unsupported version " +
                             std::to_string(version) + " (expected " +
                             std::to_string(kCheckpointVersion) + ")");
  const uint64_t meta_len = read_u64_le(in);
  std::string meta(meta_len, '\0');
  in.read(meta.data(), static_cast<std::streamsize>(meta_len));
  if (!in)
    throw std::runtime_error("checkpoint `" + path +
                             "`: truncated metadata block");
  Header h;
  try {
    h.metadata = json::parse(meta);
  } catch (const json::exception& e) {
    throw std::runtime_error("checkpoint `" + path +
                             "`: invalid metadata: " + e.what());
  }
  h.data_start = in.tellg();
  return h;
}

}  // namespace

void save_checkpoint(const ParameterStore& params, const ModelConfig& cfg,
                     const std::string& path) {
  if (path.empty())
    throw std::invalid_argument("save_checkpoint: empty output path");
  const auto expected = expected_shapes(cfg);

  json index = json::array();
  uint64_t offset = 0;
  for (const auto& [name, shape] : expected) {
    const auto& t = params.at(name);
    if (t.shape() != shape)
      throw std::runtime_error("save_checkpoint: tensor `" + name +
                               "` has shape " + shape_str(t.shape()) +
                               ", expected " + shape_str(shape));
    index.push_back(json{{"name", name},
                         {"shape", shape},
                         {"offset", offset},
                         {"dtype", "f32"}});
    offset += static_cast<uint64_t>(t.numel()) * sizeof(float);
  }
  json meta{{"config", config_to_json(cfg)}, {"tensors", index}};
  const std::string meta_str = meta.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw std::runtime_error("save_checkpoint: cannot open `" + path +
                             "` for writing");
  out.write(kCheckpointMagic, 8);
  write_u32_le(out, kCheckpointVersion);
  write_u64_le(out, meta_str.size());
  out.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));
  for (const auto& [name, shape] : expected) {
    const auto& vals = params.at(name).values();
    out.write(reinterpret_cast<const char*>(vals.data()),
              static_cast<std::streamsize>(vals.size() * sizeof(float)));
  }
  out.flush();
  if (!out)
    throw std::runtime_error("save_checkpoint: write to `" + path +
                             "` failed");
}

ParameterStore load_checkpoint(const std::string& path,
                               const ModelConfig& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error("checkpoint `" + path + "`: cannot open file");
  Header h = read_header(in, path);

  struct Entry {
    Shape shape;
    uint64_t offset;
  };
  std::map<std::string, Entry> index;
  for (const auto& e : h.metadata.at("tensors")) {
    Entry entry;
    entry.shape = e.at("shape").get<Shape>();
    entry.offset = e.at("offset").get<uint64_t>();
    if (e.at("dtype").get<std::string>() != "f32")
      throw std::runtime_error("checkpoint `" + path + "`: tensor `" +
                               e.at("name").get<std::string>() +
                               "` has unsupported dtype " +
                               e.at("dtype").get<std::string>());
    index.emplace(e.at("name").get<std::string>(), std::move(entry));
  }

  ParameterStore store;
  for (const auto& [name, shape] : expected_shapes(expected)) {
    auto it = index.find(name);
    if (it == index.end())
      throw std::runtime_error("checkpoint `" + path +
                               "`: missing tensor `" + name + "`");
    if (it->second.shape != shape)
      throw std::runtime_error("checkpoint `" + path + "`: tensor `" + name +
                               "` has shape " + shape_str(it->second.shape) +
                               ", expected " + shape_str(shape));
    std::vector<float> vals(static_cast<size_t>(shape_numel(shape)));
    in.seekg(h.data_start + static_cast<std::streamoff>(it->second.offset));
    in.read(reinterpret_cast<char*>(vals.data()),
            static_cast<std::streamsize>(vals.size() * sizeof(float)));
    if (!in)
      throw std::runtime_error("checkpoint `" + path +
                               "`: truncated data for tensor `" + name + "`");
    store.tensors.emplace(
        name, Tensor::from_values(shape, std::move(vals), /*requires_grad=*/true));
  }
  return store;
}

ModelConfig read_checkpoint_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error("checkpoint `" + path + "`: cannot open file");
  Header h = read_header(in, path);
  return config_from_json(h.metadata.at("config"));
}

}  // namespace seltune
