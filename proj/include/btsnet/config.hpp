#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "btsnet/data.hpp"
#include "btsnet/loss.hpp"
#include "btsnet/network.hpp"

namespace btsnet {

/// Environment variable naming the default dataset root.
inline constexpr const char* kDataRootEnv = "BTSNET_DATA_ROOT";

enum class Precision { kFloat32, kFloat64 };

std::string to_string(Precision p);
Precision parse_precision(const std::string& s);

struct OptimizerConfig {
  double lr = 1e-4;
  int lr_drop_epoch = 60;
  double lr_drop_factor = 10.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int batch_size = 10;
  int epochs = 100;
  bool augment = true;      // horizontal flips
  int checkpoint_every = 0; // epochs; 0 keeps only the final checkpoint

  bool operator==(const OptimizerConfig&) const = default;
};

struct DataConfig {
  /// "synthetic" or "directory".
  std::string source = "synthetic";
  /// Directory dataset; empty falls back to $BTSNET_DATA_ROOT/<name>.
  std::filesystem::path root;
  std::string name;
  bool depth_near_is_high = true;
  int synthetic_count = 8;
  std::uint64_t synthetic_seed = 7;
  int synthetic_h = 64;
  int synthetic_w = 64;

  bool operator==(const DataConfig&) const = default;
};

/// Everything an experiment needs; mirrors the JSON schema documented in the
/// README.
struct TrainConfig {
  Scale scale = Scale::kTiny;
  std::uint64_t seed = 1;
  Precision precision = Precision::kFloat32;
  OptimizerConfig train;
  NetworkConfig network = NetworkConfig::tiny();
  /// Saliency maps written or evaluated: any of "c", "r", "d".
  std::vector<std::string> outputs{"c"};
  LossWeights lambdas;
  RgbNormalization rgb_norm;
  DataConfig data;

  /// Defaults for the given scale (network widths, input size).
  static TrainConfig defaults(Scale s);
  void validate() const;
  /// Resolved dataset location; throws ConfigError when neither the config
  /// nor the environment names one.
  DatasetSpec dataset_spec(Split split) const;
  int input_h() const { return network.backbone.input_h; }
  int input_w() const { return network.backbone.input_w; }
};

nlohmann::json to_json(const TrainConfig& cfg);
/// Missing keys keep the scale defaults; unknown keys are rejected.
TrainConfig config_from_json(const nlohmann::json& j);
TrainConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const TrainConfig& cfg);

/// Dotted paths whose values differ between two JSON documents.
std::vector<std::string> json_diff(const nlohmann::json& a, const nlohmann::json& b);

/// Subset of the config that determines parameter shapes and numerics.
nlohmann::json architecture_json(const TrainConfig& cfg);

}  // namespace btsnet
