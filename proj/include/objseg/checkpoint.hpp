#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "objseg/layers.hpp"

namespace objseg {

struct CheckpointTensor {
  std::string name;
  std::array<int, 4> shape{0, 0, 0, 0};
  std::vector<double> data;
};

// Binary layout, little-endian:
//   "OBJSEGCK" | u32 version | u64 len, config JSON | u64 count |
//   count x (u32 len, name | 4 x i32 shape | float64 data)
struct Checkpoint {
  nlohmann::json config;
  std::vector<CheckpointTensor> tensors;

  const CheckpointTensor* find(std::string_view name) const;
};

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& config,
                     const nn::ParamList<T>& params);

// Throws IoError on unreadable or malformed files.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies tensors into `params`. With an empty prefix every parameter must be
// present with a matching shape and no extra tensors may remain; otherwise
// only parameters whose names start with `prefix` are loaded (all of them
// must be present). Throws ConfigError on mismatch. Returns the count loaded.
template <typename T>
size_t apply_checkpoint(const Checkpoint& ckpt, const nn::ParamList<T>& params, std::string_view prefix = {});

}  // namespace objseg
