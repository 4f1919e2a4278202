#pragma once

// Binary checkpoint layout (little-endian):
//
//   "LSINETCK"                       8-byte magic
//   u32   format version
//   u64   metadata length, then that many bytes of JSON
//   u64   array count
//   per array:
//     u32 name length, name bytes
//     u8  dtype (0 = float32, 1 = float64)
//     u32 rank, rank x u64 dims
//     numel x dtype values
//
// The metadata holds the model config under "model" and whatever else the
// writer adds (run config, recorded metrics).

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "lsinet/autodiff/tensor.hpp"
#include "lsinet/model/lsinet.hpp"

namespace lsinet::model {

inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class DType : std::uint8_t { float32 = 0, float64 = 1 };

struct StoredArray {
  std::string name;
  ad::Shape shape;
  DType dtype = DType::float32;
  std::vector<double> values;  // exact for both dtypes
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  nlohmann::json metadata;
  std::vector<StoredArray> arrays;

  const StoredArray* find(const std::string& name) const;
};

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Writes parameters and metadata; metadata["model"] is set from the model.
template <typename T>
void save_checkpoint(const std::filesystem::path& path, const LsiNet<T>& model,
                     nlohmann::json metadata = nlohmann::json::object());

Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Copies every stored array into the parameter of the same name. Throws
/// LoadError on a missing, extra or mis-shaped array.
template <typename T>
void load_parameters(const Checkpoint& checkpoint, LsiNet<T>& model);

/// Builds a model from the stored config and loads its parameters.
template <typename T>
LsiNet<T> load_model(const Checkpoint& checkpoint);

}  // namespace lsinet::model
