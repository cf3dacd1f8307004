#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "btsnet/layers.hpp"
#include "btsnet/optimizer.hpp"

namespace btsnet {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Header of a checkpoint file.
struct CheckpointInfo {
  std::uint32_t version = kCheckpointVersion;
  int scalar_bytes = 4;  // 4 for float32, 8 for float64
  nlohmann::json config;
  std::int64_t epoch = 0;
  std::int64_t adam_step = 0;
};

// Layout (little-endian): "BTSNETCK", u32 version, u32 scalar bytes,
// u64 + config JSON text, i64 epoch, i64 Adam step, u64 entry count, then per
// entry: u8 kind (0 parameter, 1 buffer, 2 Adam m, 3 Adam v), u32 + name,
// 4 x i32 shape, raw scalars.

/// Writes parameters, buffers and (when given) Adam moments.
template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Module<T>& model,
                     const Adam<T>* optimizer, const CheckpointInfo& info);

/// Reads only the header.
CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);

/// Restores every parameter and buffer of `model` (names and shapes must match
/// exactly) and, when given, the optimizer moments. Throws ItemizedError
/// listing missing, unexpected and mis-shaped entries.
template <typename T>
CheckpointInfo load_checkpoint(const std::filesystem::path& path, Module<T>& model,
                               Adam<T>* optimizer);

}  // namespace btsnet
