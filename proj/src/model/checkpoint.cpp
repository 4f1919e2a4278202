#include "lsinet/model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>

#include "lsinet/errors.hpp"

namespace lsinet::model {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint IO assumes a little-endian host");

constexpr char kMagic[8] = {'L', 'S', 'I', 'N', 'E', 'T', 'C', 'K'};
constexpr std::uint64_t kMaxMetadata = 64ull << 20;

template <typename V>
void put(std::ostream& out, V value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(V));
}

class Reader {
 public:
  Reader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  template <typename V>
  V get(const char* what) {
    V value{};
    bytes(reinterpret_cast<char*>(&value), sizeof(V), what);
    return value;
  }

  void bytes(char* dst, std::size_t count, const char* what) {
    in_.read(dst, static_cast<std::streamsize>(count));
    if (static_cast<std::size_t>(in_.gcount()) != count) {
      throw LoadError(source_ + ": truncated checkpoint while reading " + what);
    }
  }

  const std::string& source() const { return source_; }

 private:
  std::istream& in_;
  std::string source_;
};

template <typename T>
constexpr DType dtype_of() {
  return sizeof(T) == 4 ? DType::float32 : DType::float64;
}

}  // namespace

const StoredArray* Checkpoint::find(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

nlohmann::json to_json(const ModelConfig& c) {
  return {
      {"history_length", c.patch.history_length},
      {"patch_length", c.patch.patch_length},
      {"stride", c.patch.stride},
      {"num_patches", c.patch.num_patches},
      {"embed_dim", c.patch.embed_dim},
      {"horizon", c.horizon},
      {"heads", c.heads},
      {"stack", c.stack},
      {"mlp_hidden", c.mlp_hidden},
      {"time_invariant_hidden", c.time_invariant_hidden},
      {"integration_depth", c.integration_depth},
      {"memory_dim", c.memory.memory_dim},
      {"encoder_hidden", c.memory.encoder_hidden},
      {"predictor_hidden", c.memory.predictor_hidden},
      {"temperature", c.temperature},
      {"no_msim", c.no_msim},
      {"dense_gates", c.dense_gates},
      {"degree_normalize", c.degree_normalize},
  };
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig c;
    c.patch.history_length = j.at("history_length").get<std::size_t>();
    c.patch.patch_length = j.at("patch_length").get<std::size_t>();
    c.patch.stride = j.at("stride").get<std::size_t>();
    c.patch.num_patches = j.at("num_patches").get<std::size_t>();
    c.patch.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.horizon = j.at("horizon").get<std::size_t>();
    c.heads = j.at("heads").get<std::size_t>();
    c.stack = j.at("stack").get<std::size_t>();
    c.mlp_hidden = j.at("mlp_hidden").get<std::size_t>();
    c.time_invariant_hidden = j.at("time_invariant_hidden").get<std::size_t>();
    c.integration_depth = j.at("integration_depth").get<std::size_t>();
    c.memory.num_patches = c.patch.num_patches;
    c.memory.memory_dim = j.at("memory_dim").get<std::size_t>();
    c.memory.encoder_hidden = j.at("encoder_hidden").get<std::vector<std::size_t>>();
    c.memory.predictor_hidden = j.at("predictor_hidden").get<std::size_t>();
    c.temperature = j.at("temperature").get<double>();
    c.no_msim = j.at("no_msim").get<bool>();
    c.dense_gates = j.at("dense_gates").get<bool>();
    c.degree_normalize = j.at("degree_normalize").get<bool>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("invalid model config in checkpoint: ") + e.what());
  }
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const LsiNet<T>& model,
                     nlohmann::json metadata) {
  metadata["model"] = to_json(model.config());
  const std::string meta = metadata.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw LoadError("cannot open " + path.string() + " for writing");
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, meta.size());
  out.write(meta.data(), static_cast<std::streamsize>(meta.size()));

  const auto params = model.parameters();
  put<std::uint64_t>(out, params.size());
  for (const auto& p : params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(dtype_of<T>()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.tensor.rank()));
    for (std::size_t d : p.tensor.shape()) put<std::uint64_t>(out, d);
    auto data = p.tensor.data();
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(T)));
  }
  if (!out) throw LoadError("failed writing checkpoint " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint " + path.string());
  Reader r(in, path.string());

  char magic[8];
  r.bytes(magic, sizeof(magic), "magic");
  if (std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    throw LoadError(path.string() + " is not an LSINet checkpoint");
  }
  Checkpoint ck;
  ck.version = r.get<std::uint32_t>("version");
  if (ck.version != kCheckpointVersion) {
    throw LoadError(path.string() + ": unsupported checkpoint version " +
                    std::to_string(ck.version));
  }
  const auto meta_len = r.get<std::uint64_t>("metadata length");
  if (meta_len > kMaxMetadata) throw LoadError(path.string() + ": metadata too large");
  std::string meta(meta_len, '\0');
  r.bytes(meta.data(), meta.size(), "metadata");
  try {
    ck.metadata = nlohmann::json::parse(meta);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(path.string() + ": corrupt metadata: " + e.what());
  }

  const auto count = r.get<std::uint64_t>("array count");
  for (std::uint64_t i = 0; i < count; ++i) {
    StoredArray a;
    const auto name_len = r.get<std::uint32_t>("name length");
    if (name_len > 4096) throw LoadError(path.string() + ": corrupt array name");
    a.name.resize(name_len);
    r.bytes(a.name.data(), name_len, "array name");
    const auto tag = r.get<std::uint8_t>("dtype");
    if (tag > 1) throw LoadError(path.string() + ": unknown dtype for " + a.name);
    a.dtype = static_cast<DType>(tag);
    const auto rank = r.get<std::uint32_t>("rank");
    if (rank > 8) throw LoadError(path.string() + ": corrupt rank for " + a.name);
    for (std::uint32_t d = 0; d < rank; ++d) {
      a.shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>("dims")));
    }
    const std::size_t numel = ad::shape_numel(a.shape);
    if (numel > (std::size_t{1} << 32)) throw LoadError(path.string() + ": array too large");
    a.values.resize(numel);
    if (a.dtype == DType::float32) {
      std::vector<float> raw(numel);
      r.bytes(reinterpret_cast<char*>(raw.data()), numel * sizeof(float), a.name.c_str());
      std::copy(raw.begin(), raw.end(), a.values.begin());
    } else {
      r.bytes(reinterpret_cast<char*>(a.values.data()), numel * sizeof(double), a.name.c_str());
    }
    ck.arrays.push_back(std::move(a));
  }
  return ck;
}

template <typename T>
void load_parameters(const Checkpoint& checkpoint, LsiNet<T>& model) {
  auto params = model.parameters();
  std::set<std::string> expected;
  for (auto& p : params) {
    expected.insert(p.name);
    const StoredArray* a = checkpoint.find(p.name);
    if (a == nullptr) throw LoadError("checkpoint is missing parameter " + p.name);
    if (a->shape != p.tensor.shape()) {
      throw LoadError("parameter " + p.name + " has shape " + shape_to_string(a->shape) +
                      " in the checkpoint, model expects " + shape_to_string(p.tensor.shape()));
    }
    auto dst = p.tensor.mutable_data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(a->values[i]);
  }
  for (const auto& a : checkpoint.arrays) {
    if (!expected.count(a.name)) throw LoadError("checkpoint has unknown parameter " + a.name);
  }
}

template <typename T>
LsiNet<T> load_model(const Checkpoint& checkpoint) {
  if (!checkpoint.metadata.contains("model")) {
    throw LoadError("checkpoint metadata has no model config");
  }
  LsiNet<T> model(model_config_from_json(checkpoint.metadata.at("model")), 0);
  load_parameters(checkpoint, model);
  return model;
}

template void save_checkpoint(const std::filesystem::path&, const LsiNet<float>&, nlohmann::json);
template void save_checkpoint(const std::filesystem::path&, const LsiNet<double>&,
                              nlohmann::json);
template void load_parameters(const Checkpoint&, LsiNet<float>&);
template void load_parameters(const Checkpoint&, LsiNet<double>&);
template LsiNet<float> load_model(const Checkpoint&);
template LsiNet<double> load_model(const Checkpoint&);

}  // namespace lsinet::model
