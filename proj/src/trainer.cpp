#include "btsnet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "btsnet/errors.hpp"
#include "btsnet/image_io.hpp"

namespace btsnet {

namespace {

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ", ") + s;
  return out;
}

std::vector<Sample> preprocess_all(const std::vector<Sample>& samples, const TrainConfig& cfg) {
  std::vector<Sample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(preprocess(s, cfg.input_h(), cfg.input_w()));
  return out;
}

template <typename T>
const Var<T>& pick(const DecoderOutput<T>& o, const std::string& which) {
  if (which == "c") return o.s_c;
  if (which == "r") return o.s_r;
  if (which == "d") return o.s_d;
  throw ConfigError("unknown output '" + which + "' (expected c, r or d)");
}

std::string epoch_name(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%04d.ckpt", epoch);
  return buf;
}

}  // namespace

NonFiniteLossError::NonFiniteLossError(int epoch, std::vector<std::string> stems)
    : std::runtime_error("non-finite loss in epoch " + std::to_string(epoch + 1) +
                         " on batch [" + join(stems) + "]"),
      stems_(std::move(stems)) {}

std::vector<Sample> load_samples(const TrainConfig& cfg, Split split) {
  if (cfg.data.source == "synthetic") {
    const std::uint64_t seed = cfg.data.synthetic_seed + (split == Split::kTest ? 1000 : 0);
    return synthetic_dataset(cfg.data.synthetic_count, seed, cfg.data.synthetic_h,
                             cfg.data.synthetic_w);
  }
  return load_dataset(cfg.dataset_spec(split));
}

void require_compatible(const TrainConfig& cfg, const CheckpointInfo& info) {
  TrainConfig stored;
  try {
    stored = config_from_json(info.config);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("checkpoint carries an unreadable config: ") + e.what());
  }
  const auto keys = json_diff(architecture_json(stored), architecture_json(cfg));
  if (!keys.empty()) {
    throw ConfigError("checkpoint does not match the config; divergent keys: " + join(keys));
  }
}

template <typename T>
std::unique_ptr<BtsNet<T>> build_network(const TrainConfig& cfg) {
  Initializer init(cfg.seed);
  return std::make_unique<BtsNet<T>>(cfg.network, init);
}

template <typename T>
std::unique_ptr<BtsNet<T>> restore_network(const TrainConfig& cfg,
                                           const std::filesystem::path& checkpoint) {
  require_compatible(cfg, read_checkpoint_info(checkpoint));
  auto net = build_network<T>(cfg);
  load_checkpoint<T>(checkpoint, *net, nullptr);
  return net;
}

template <typename T>
TrainResult train(const TrainConfig& cfg, const std::vector<Sample>& samples, BtsNet<T>& net,
                  const TrainOptions& options) {
  cfg.validate();
  if (samples.empty()) throw PreconditionError("no training samples");
  const std::vector<Sample> prepared = preprocess_all(samples, cfg);
  Adam<T> adam(net.named_parameters(), cfg.train.beta1, cfg.train.beta2, cfg.train.eps);

  int start_epoch = 0;
  if (!options.resume.empty()) {
    const CheckpointInfo info = read_checkpoint_info(options.resume);
    require_compatible(cfg, info);
    load_checkpoint<T>(options.resume, net, &adam);
    start_epoch = static_cast<int>(info.epoch);
  }

  CheckpointInfo info;
  info.config = to_json(cfg);
  info.scalar_bytes = sizeof(T);

  TrainResult result;
  const int n = static_cast<int>(prepared.size());
  const int bs = std::min(cfg.train.batch_size, n);
  for (int epoch = start_epoch; epoch < cfg.train.epochs; ++epoch) {
    const double lr =
        scheduled_lr(cfg.train.lr, epoch, cfg.train.lr_drop_epoch, cfg.train.lr_drop_factor);
    // Each epoch owns its RNG stream so resumed runs replay identically.
    std::seed_seq seq{static_cast<std::uint64_t>(cfg.seed), static_cast<std::uint64_t>(epoch)};
    std::mt19937_64 rng(seq);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    net.set_training(true);
    double epoch_loss = 0;
    int batches = 0;
    for (int start = 0; start < n; start += bs) {
      std::vector<Sample> items;
      for (int i = start; i < std::min(n, start + bs); ++i) {
        const Sample& s = prepared[order[i]];
        items.push_back(cfg.train.augment ? preprocess_train(s, cfg.input_h(), cfg.input_w(), rng)
                                          : s);
      }
      const Batch<T> batch = make_batch<T>(items, cfg.rgb_norm);
      adam.zero_grad();
      const NetworkOutput<T> out = net.forward(Var<T>(batch.rgb), Var<T>(batch.depth));
      const Var<T> loss = total_loss(out.saliency, batch.gt, cfg.lambdas);
      const double value = static_cast<double>(loss.value()[0]);
      if (!std::isfinite(value)) throw NonFiniteLossError(epoch, batch.stems);
      loss.backward();
      adam.step(lr);
      result.step_losses.push_back(value);
      epoch_loss += value;
      ++batches;
    }
    EpochRecord rec{epoch, lr, epoch_loss / batches};
    result.epochs.push_back(rec);
    if (options.on_epoch) options.on_epoch(rec);

    info.epoch = epoch + 1;
    if (!options.out_dir.empty() && cfg.train.checkpoint_every > 0 &&
        (epoch + 1) % cfg.train.checkpoint_every == 0) {
      save_checkpoint<T>(options.out_dir / epoch_name(epoch + 1), net, &adam, info);
    }
  }
  if (!options.out_dir.empty()) {
    info.epoch = std::max<std::int64_t>(info.epoch, start_epoch);
    result.checkpoint = options.out_dir / "final.ckpt";
    save_checkpoint<T>(result.checkpoint, net, &adam, info);
  }
  net.set_training(false);
  return result;
}

template <typename T>
DecoderOutput<T> predict(BtsNet<T>& net, const Sample& sample, const RgbNormalization& norm) {
  NoGradGuard guard;
  const bool was_training = net.training();
  net.set_training(false);
  const Batch<T> batch = make_batch<T>(std::span<const Sample>(&sample, 1), norm);
  DecoderOutput<T> out = net.forward(Var<T>(batch.rgb), Var<T>(batch.depth)).saliency;
  net.set_training(was_training);
  return out;
}

template <typename T>
std::vector<std::filesystem::path> infer(BtsNet<T>& net, const TrainConfig& cfg,
                                         const std::vector<Sample>& samples,
                                         const std::filesystem::path& out_dir) {
  std::vector<std::filesystem::path> written;
  const bool suffixed = cfg.outputs != std::vector<std::string>{"c"};
  for (const auto& raw : samples) {
    const Sample s = preprocess(raw, cfg.input_h(), cfg.input_w());
    const DecoderOutput<T> out = predict(net, s, cfg.rgb_norm);
    for (const auto& which : cfg.outputs) {
      const Tensor<T>& map = pick(out, which).value();
      Image img;
      img.rows = map.h();
      img.cols = map.w();
      img.channels = 1;
      img.values.resize(map.size());
      for (std::size_t i = 0; i < map.size(); ++i) img.values[i] = static_cast<float>(map[i]);
      img = resize_image(img, raw.rgb.h(), raw.rgb.w(), false);
      const auto path = out_dir / (raw.stem + (suffixed ? "_" + which : "") + ".png");
      write_image8(path, img);
      written.push_back(path);
    }
  }
  return written;
}

template <typename T>
metrics::MetricsReport evaluate_model(BtsNet<T>& net, const TrainConfig& cfg,
                                      const std::vector<Sample>& samples,
                                      const std::string& output) {
  std::vector<metrics::ImageMetrics> rows;
  for (const auto& raw : samples) {
    const Sample s = preprocess(raw, cfg.input_h(), cfg.input_w());
    const DecoderOutput<T> out = predict(net, s, cfg.rgb_norm);
    rows.push_back(metrics::evaluate_pair(metrics::Plane::from_tensor(pick(out, output).value()),
                                          metrics::Plane::from_tensor(s.gt), s.stem));
  }
  return metrics::aggregate(std::move(rows));
}

template <typename T>
double evaluate_loss(BtsNet<T>& net, const TrainConfig& cfg, const std::vector<Sample>& samples) {
  double acc = 0;
  for (const auto& raw : samples) {
    const Sample s = preprocess(raw, cfg.input_h(), cfg.input_w());
    const DecoderOutput<T> out = predict(net, s, cfg.rgb_norm);
    NoGradGuard guard;
    acc += static_cast<double>(total_loss(out, s.gt.cast<T>(), cfg.lambdas).value()[0]);
  }
  return samples.empty() ? 0.0 : acc / samples.size();
}

#define BTSNET_INSTANTIATE_TRAINER(T)                                                        \
  template std::unique_ptr<BtsNet<T>> build_network<T>(const TrainConfig&);                 \
  template std::unique_ptr<BtsNet<T>> restore_network<T>(const TrainConfig&,                \
                                                         const std::filesystem::path&);     \
  template TrainResult train<T>(const TrainConfig&, const std::vector<Sample>&, BtsNet<T>&, \
                                const TrainOptions&);                                        \
  template DecoderOutput<T> predict<T>(BtsNet<T>&, const Sample&, const RgbNormalization&); \
  template std::vector<std::filesystem::path> infer<T>(                                      \
      BtsNet<T>&, const TrainConfig&, const std::vector<Sample>&, const std::filesystem::path&); \
  template metrics::MetricsReport evaluate_model<T>(BtsNet<T>&, const TrainConfig&,         \
                                                    const std::vector<Sample>&,             \
                                                    const std::string&);                    \
  template double evaluate_loss<T>(BtsNet<T>&, const TrainConfig&, const std::vector<Sample>&);

BTSNET_INSTANTIATE_TRAINER(float)
BTSNET_INSTANTIATE_TRAINER(double)

}  // namespace btsnet
