#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "btsnet/config.hpp"
#include "btsnet/metrics.hpp"

namespace btsnet {

enum class AblationSuite { kDirections, kAttentionOrder, kDecoder };

std::string to_string(AblationSuite s);
AblationSuite parse_ablation_suite(const std::string& s);

/// Row labels in table order.
const std::vector<std::string>& ablation_labels(AblationSuite s);

struct AblationVariant {
  std::string label;
  TrainConfig config;
  std::string output = "c";  // evaluated saliency map
};

/// The suite's variants derived from `base`; everything except the switched
/// component is left as in `base`.
std::vector<AblationVariant> ablation_variants(AblationSuite suite, const TrainConfig& base);

struct AblationRow {
  std::string label;
  metrics::MetricsReport report;
  double final_train_loss = 0;
  /// Decoder suite only: counts of the evaluated decoder path at the run's
  /// scale and at FULL scale.
  std::optional<std::size_t> parameters;
  std::optional<std::size_t> parameters_full;
};

struct AblationReport {
  AblationSuite suite;
  std::vector<AblationRow> rows;
};

/// Trains every variant from the same seed on the config's training data and
/// evaluates it on the test split. Variants with identical architecture share
/// one training run.
AblationReport run_ablation(AblationSuite suite, const TrainConfig& base,
                            const std::function<void(const std::string&)>& log = {});

nlohmann::json ablation_json(const AblationReport& r);
std::string ablation_table(const AblationReport& r);

}  // namespace btsnet
