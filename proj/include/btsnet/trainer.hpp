#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "btsnet/checkpoint.hpp"
#include "btsnet/config.hpp"
#include "btsnet/metrics.hpp"

namespace btsnet {

/// Raised when a batch produces a NaN or infinite loss.
class NonFiniteLossError : public std::runtime_error {
 public:
  NonFiniteLossError(int epoch, std::vector<std::string> stems);
  const std::vector<std::string>& stems() const { return stems_; }

 private:
  std::vector<std::string> stems_;
};

struct EpochRecord {
  int epoch = 0;  // 0-based
  double lr = 0;
  double loss = 0;  // mean over the epoch's batches
};

struct TrainResult {
  std::vector<EpochRecord> epochs;
  std::vector<double> step_losses;
  std::filesystem::path checkpoint;  // empty when nothing was written
};

struct TrainOptions {
  /// Checkpoints go here (final.ckpt plus epoch_NNNN.ckpt every
  /// `checkpoint_every` epochs); empty disables writing.
  std::filesystem::path out_dir;
  /// Continue from this checkpoint's epoch and optimizer state.
  std::filesystem::path resume;
  /// Called after every epoch; the default prints nothing.
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Training or evaluation samples named by the config (synthetic scenes or a
/// directory dataset). Synthetic test data uses a shifted seed.
std::vector<Sample> load_samples(const TrainConfig& cfg, Split split);

/// Trains a freshly initialized network (seeded by cfg.seed) with Adam on the
/// three-way loss and returns the trained model.
template <typename T>
TrainResult train(const TrainConfig& cfg, const std::vector<Sample>& samples, BtsNet<T>& net,
                  const TrainOptions& options = {});

/// Builds the network with the config's seed.
template <typename T>
std::unique_ptr<BtsNet<T>> build_network(const TrainConfig& cfg);

/// Loads a checkpoint into a network built from `cfg`. Throws ConfigError
/// naming divergent keys when the stored architecture differs from `cfg`.
template <typename T>
std::unique_ptr<BtsNet<T>> restore_network(const TrainConfig& cfg,
                                           const std::filesystem::path& checkpoint);

/// Eval-mode saliency maps of one preprocessed sample.
template <typename T>
DecoderOutput<T> predict(BtsNet<T>& net, const Sample& sample, const RgbNormalization& norm);

/// Writes 8-bit maps at each sample's original resolution. With the single
/// output "c" the file is <stem>.png; otherwise <stem>_<o>.png per output.
template <typename T>
std::vector<std::filesystem::path> infer(BtsNet<T>& net, const TrainConfig& cfg,
                                         const std::vector<Sample>& samples,
                                         const std::filesystem::path& out_dir);

/// Metrics of one output ("c", "r" or "d") over preprocessed samples.
template <typename T>
metrics::MetricsReport evaluate_model(BtsNet<T>& net, const TrainConfig& cfg,
                                      const std::vector<Sample>& samples,
                                      const std::string& output = "c");

/// Mean eval-mode total loss over preprocessed samples.
template <typename T>
double evaluate_loss(BtsNet<T>& net, const TrainConfig& cfg, const std::vector<Sample>& samples);

/// Checks the stored architecture against `cfg`; throws ConfigError listing
/// the differing keys.
void require_compatible(const TrainConfig& cfg, const CheckpointInfo& info);

}  // namespace btsnet
