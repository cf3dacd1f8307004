#include "btsnet/ablation.hpp"

#include <iomanip>
#include <map>
#include <sstream>

#include "btsnet/audit.hpp"
#include "btsnet/errors.hpp"
#include "btsnet/trainer.hpp"

namespace btsnet {

std::string to_string(AblationSuite s) {
  switch (s) {
    case AblationSuite::kDirections: return "directions";
    case AblationSuite::kAttentionOrder: return "attention_order";
    case AblationSuite::kDecoder: return "decoder";
  }
  return "?";
}

AblationSuite parse_ablation_suite(const std::string& s) {
  if (s == "directions") return AblationSuite::kDirections;
  if (s == "attention_order") return AblationSuite::kAttentionOrder;
  if (s == "decoder") return AblationSuite::kDecoder;
  throw ConfigError("unknown ablation suite '" + s +
                    "' (expected directions, attention_order, decoder)");
}

const std::vector<std::string>& ablation_labels(AblationSuite s) {
  static const std::vector<std::string> kDirections = {"None", "R←D", "R→D", "R↔D", "R↔D + Res"};
  static const std::vector<std::string> kOrders = {"Only SA", "CA-SA", "SA-CA"};
  static const std::vector<std::string> kDecoders = {"U-net", "GD-D", "GD-R", "GD-C"};
  switch (s) {
    case AblationSuite::kDirections: return kDirections;
    case AblationSuite::kAttentionOrder: return kOrders;
    case AblationSuite::kDecoder: return kDecoders;
  }
  return kDirections;
}

std::vector<AblationVariant> ablation_variants(AblationSuite suite, const TrainConfig& base) {
  std::vector<AblationVariant> out;
  auto add = [&](std::string label, auto&& edit, std::string output = "c") {
    AblationVariant v{std::move(label), base, std::move(output)};
    edit(v.config);
    v.config.outputs = {v.output};
    out.push_back(std::move(v));
  };
  switch (suite) {
    case AblationSuite::kDirections: {
      const std::vector<std::pair<Direction, bool>> rows = {
          {Direction::kNone, false},
          {Direction::kDepthToRgb, false},
          {Direction::kRgbToDepth, false},
          {Direction::kBidirectional, false},
          {Direction::kBidirectional, true}};
      for (std::size_t i = 0; i < rows.size(); ++i) {
        add(ablation_labels(suite)[i], [&](TrainConfig& c) {
          c.network.bts.direction = rows[i].first;
          c.network.bts.residual = rows[i].second;
        });
      }
      break;
    }
    case AblationSuite::kAttentionOrder: {
      const std::vector<AttentionOrder> rows = {AttentionOrder::kSaOnly, AttentionOrder::kCaThenSa,
                                                AttentionOrder::kSaThenCa};
      for (std::size_t i = 0; i < rows.size(); ++i) {
        add(ablation_labels(suite)[i],
            [&](TrainConfig& c) { c.network.bts.attention_order = rows[i]; });
      }
      break;
    }
    case AblationSuite::kDecoder: {
      add("U-net", [](TrainConfig& c) { c.network.decoder.kind = DecoderKind::kUnet; });
      add("GD-D", [](TrainConfig& c) { c.network.decoder.kind = DecoderKind::kGroup; }, "d");
      add("GD-R", [](TrainConfig& c) { c.network.decoder.kind = DecoderKind::kGroup; }, "r");
      add("GD-C", [](TrainConfig& c) { c.network.decoder.kind = DecoderKind::kGroup; }, "c");
      break;
    }
  }
  return out;
}

namespace {

std::size_t decoder_path_count(const Decoder<float>& d, const std::string& label) {
  if (label == "U-net") return d.unet_parameter_count();
  if (label == "GD-D") return d.gd_d_parameter_count();
  if (label == "GD-R") return d.gd_r_parameter_count();
  return d.gd_c_parameter_count();
}

template <typename T>
AblationRow evaluate_variant(const AblationVariant& v, const std::vector<Sample>& test_set,
                             BtsNet<T>& net, double final_loss) {
  AblationRow row;
  row.label = v.label;
  row.report = evaluate_model<T>(net, v.config, test_set, v.output);
  row.final_train_loss = final_loss;
  return row;
}

template <typename T>
std::vector<AblationRow> run_all(const std::vector<AblationVariant>& variants,
                                 const std::vector<Sample>& train_set,
                                 const std::vector<Sample>& test_set,
                                 const std::function<void(const std::string&)>& log) {
  std::map<std::string, std::pair<std::unique_ptr<BtsNet<T>>, double>> trained;
  std::vector<AblationRow> rows;
  for (const auto& v : variants) {
    const std::string key = architecture_json(v.config).dump();
    auto it = trained.find(key);
    if (it == trained.end()) {
      if (log) log("training " + v.label);
      auto net = build_network<T>(v.config);
      const TrainResult r = train<T>(v.config, train_set, *net);
      it = trained.emplace(key, std::make_pair(std::move(net), r.epochs.back().loss)).first;
    } else if (log) {
      log(v.label + " shares the trained model of an earlier row");
    }
    rows.push_back(evaluate_variant<T>(v, test_set, *it->second.first, it->second.second));
  }
  return rows;
}

}  // namespace

AblationReport run_ablation(AblationSuite suite, const TrainConfig& base,
                            const std::function<void(const std::string&)>& log) {
  base.validate();
  const auto variants = ablation_variants(suite, base);
  const std::vector<Sample> train_set = load_samples(base, Split::kTrain);
  const std::vector<Sample> test_set = load_samples(base, Split::kTest);
  AblationReport report{suite, {}};
  report.rows = base.precision == Precision::kFloat64
                    ? run_all<double>(variants, train_set, test_set, log)
                    : run_all<float>(variants, train_set, test_set, log);
  if (suite == AblationSuite::kDecoder) {
    Initializer zeros(0, true);
    for (std::size_t i = 0; i < variants.size(); ++i) {
      const TrainConfig& c = variants[i].config;
      Decoder<float> at_scale(c.network.backbone.level_channels(), c.network.decoder, zeros);
      report.rows[i].parameters = decoder_path_count(at_scale, variants[i].label);
      NetworkConfig full = NetworkConfig::full();
      full.decoder.kind = c.network.decoder.kind;
      Decoder<float> at_full(full.backbone.level_channels(), full.decoder, zeros);
      report.rows[i].parameters_full = decoder_path_count(at_full, variants[i].label);
    }
  }
  return report;
}

nlohmann::json ablation_json(const AblationReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    nlohmann::json j = {{"label", row.label},
                        {"s_alpha", row.report.s_alpha},
                        {"f_beta_max", row.report.f_beta_max},
                        {"e_xi_max", row.report.e_xi_max},
                        {"mae", row.report.mae},
                        {"final_train_loss", row.final_train_loss}};
    if (row.parameters) j["parameters"] = *row.parameters;
    if (row.parameters_full) j["parameters_full_scale"] = *row.parameters_full;
    rows.push_back(j);
  }
  return {{"suite", to_string(r.suite)}, {"rows", rows}};
}

std::string ablation_table(const AblationReport& r) {
  std::vector<std::pair<std::string, metrics::MetricsReport>> rows;
  for (const auto& row : r.rows) rows.emplace_back(row.label, row.report);
  std::string table = metrics::report_table(rows);
  if (r.suite != AblationSuite::kDecoder) return table;
  // Append the parameter columns line by line.
  std::istringstream in(table);
  std::ostringstream out;
  std::string line;
  int index = -2;
  while (std::getline(in, line)) {
    out << line;
    if (index == -2) {
      out << "   Params  Params(FULL)";
    } else if (index == -1) {
      out << std::string(24, '-');
    } else if (index < static_cast<int>(r.rows.size())) {
      const auto& row = r.rows[index];
      out << std::setw(9) << (row.parameters ? std::to_string(*row.parameters) : "-")
          << std::setw(14) << (row.parameters_full ? format_millions(*row.parameters_full) : "-");
    }
    out << '\n';
    ++index;
  }
  return out.str();
}

}  // namespace btsnet
