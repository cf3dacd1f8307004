#include "btsnet/config.hpp"

#include <array>
#include <charconv>
#include <cstdlib>
#include <string>
#include <fstream>
#include <set>

#include "btsnet/errors.hpp"

namespace btsnet {

using nlohmann::json;

std::string to_string(Precision p) { return p == Precision::kFloat32 ? "float32" : "float64"; }

Precision parse_precision(const std::string& s) {
  if (s == "float32") return Precision::kFloat32;
  if (s == "float64") return Precision::kFloat64;
  throw ConfigError("unknown precision '" + s + "' (expected float32 or float64)");
}

TrainConfig TrainConfig::defaults(Scale s) {
  TrainConfig c;
  c.scale = s;
  c.network = NetworkConfig::for_scale(s);
  if (s == Scale::kFull) {
    c.data.source = "directory";
  }
  return c;
}

void TrainConfig::validate() const {
  std::vector<std::string> problems;
  if (!(train.lr > 0)) problems.push_back("train.lr must be positive");
  if (train.epochs < 1) problems.push_back("train.epochs must be at least 1");
  if (train.batch_size < 1) problems.push_back("train.batch_size must be at least 1");
  if (!(train.lr_drop_factor > 0)) problems.push_back("train.lr_drop_factor must be positive");
  if (train.checkpoint_every < 0) problems.push_back("train.checkpoint_every must be >= 0");
  if (!(train.beta1 >= 0 && train.beta1 < 1 && train.beta2 >= 0 && train.beta2 < 1)) {
    problems.push_back("train.beta1 and train.beta2 must lie in [0, 1)");
  }
  if (lambdas.lambda_c < 0 || lambdas.lambda_r < 0 || lambdas.lambda_d < 0) {
    problems.push_back("loss lambdas must be nonnegative");
  }
  if (network.decoder.k < 1) problems.push_back("decoder.k must be positive");
  for (const auto& o : outputs) {
    if (o != "c" && o != "r" && o != "d") {
      problems.push_back("decoder.outputs entries must be c, r or d (got '" + o + "')");
    }
  }
  if (outputs.empty()) problems.push_back("decoder.outputs must not be empty");
  if (data.source != "synthetic" && data.source != "directory") {
    problems.push_back("data.source must be synthetic or directory");
  }
  if (data.synthetic_count < 1) problems.push_back("data.synthetic.count must be >= 1");
  for (float sd : rgb_norm.stddev) {
    if (!(sd > 0)) problems.push_back("rgb_normalization.std entries must be positive");
  }
  try {
    network.backbone.validate();
  } catch (const ConfigError& e) {
    problems.push_back(e.what());
  }
  if (!problems.empty()) throw ItemizedError(problems);
}

DatasetSpec TrainConfig::dataset_spec(Split split) const {
  DatasetSpec spec;
  spec.split = split;
  spec.name = data.name;
  spec.depth_near_is_high = data.depth_near_is_high;
  if (!data.root.empty()) {
    spec.root = data.root;
  } else {
    const char* env = std::getenv(kDataRootEnv);
    if (!env || !*env) {
      throw ConfigError(std::string("no data.root configured and ") + kDataRootEnv +
                        " is not set");
    }
    spec.root = std::filesystem::path(env) / data.name;
  }
  spec.root /= to_string(split);
  return spec;
}

namespace {

// Shortest decimal that reads back as the same float, so 0.485f prints as 0.485.
std::array<double, 3> shortest(const std::array<float, 3>& v) {
  std::array<double, 3> out{};
  for (int i = 0; i < 3; ++i) {
    char buf[32];
    const auto end = std::to_chars(buf, buf + sizeof buf, v[i]).ptr;
    out[i] = std::strtod(std::string(buf, end).c_str(), nullptr);
  }
  return out;
}

}  // namespace

json to_json(const TrainConfig& c) {
  const BackboneConfig& b = c.network.backbone;
  json j;
  j["scale"] = to_string(c.scale);
  j["seed"] = c.seed;
  j["precision"] = to_string(c.precision);
  j["train"] = {{"lr", c.train.lr},
                {"lr_drop_epoch", c.train.lr_drop_epoch},
                {"lr_drop_factor", c.train.lr_drop_factor},
                {"beta1", c.train.beta1},
                {"beta2", c.train.beta2},
                {"eps", c.train.eps},
                {"batch_size", c.train.batch_size},
                {"epochs", c.train.epochs},
                {"augment", c.train.augment},
                {"checkpoint_every", c.train.checkpoint_every}};
  j["bts"] = {{"direction", to_string(c.network.bts.direction)},
              {"residual", c.network.bts.residual},
              {"attention_order", to_string(c.network.bts.attention_order)},
              {"enabled", c.network.with_bts}};
  j["backbone"] = {{"stage_channels", b.stage_channels},
                   {"stage_strides", b.stage_strides},
                   {"blocks", b.blocks},
                   {"stem_kernel", b.stem_kernel},
                   {"input_size", {b.input_h, b.input_w}},
                   {"aspp_rates", b.aspp_rates},
                   {"aspp_branch_width", b.aspp_branch_width}};
  j["decoder"] = {{"kind", to_string(c.network.decoder.kind)},
                  {"k", c.network.decoder.k},
                  {"outputs", c.outputs}};
  j["loss"] = {{"lambda_c", c.lambdas.lambda_c},
               {"lambda_r", c.lambdas.lambda_r},
               {"lambda_d", c.lambdas.lambda_d}};
  j["rgb_normalization"] = {{"mean", shortest(c.rgb_norm.mean)}, {"std", shortest(c.rgb_norm.stddev)}};
  j["data"] = {{"source", c.data.source},
               {"root", c.data.root.string()},
               {"name", c.data.name},
               {"depth_near_is_high", c.data.depth_near_is_high},
               {"synthetic",
                {{"count", c.data.synthetic_count},
                 {"seed", c.data.synthetic_seed},
                 {"size", {c.data.synthetic_h, c.data.synthetic_w}}}}};
  return j;
}

namespace {

// Reads an optional key, recording its path so unknown keys can be reported.
class Reader {
 public:
  Reader(const json& j, std::string path, std::vector<std::string>& problems)
      : j_(j), path_(std::move(path)), problems_(problems) {
    if (!j_.is_object()) problems_.push_back((path_.empty() ? "config" : path_) + " must be an object");
  }

  template <typename V>
  void get(const char* key, V& out) {
    seen_.insert(key);
    if (!j_.is_object() || !j_.contains(key)) return;
    try {
      out = j_.at(key).get<V>();
    } catch (const json::exception& e) {
      problems_.push_back(name(key) + ": " + e.what());
    }
  }

  template <typename F>
  void section(const char* key, F&& fn) {
    seen_.insert(key);
    if (!j_.is_object() || !j_.contains(key)) return;
    Reader child(j_.at(key), name(key), problems_);
    fn(child);
    child.finish();
  }

  void finish() {
    if (!j_.is_object()) return;
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) problems_.push_back("unknown config key '" + name(key.c_str()) + "'");
    }
  }

  std::string name(const char* key) const { return path_.empty() ? key : path_ + "." + key; }
  std::vector<std::string>& problems() { return problems_; }

 private:
  const json& j_;
  std::string path_;
  std::vector<std::string>& problems_;
  std::set<std::string> seen_;
};

template <typename E, typename P>
void get_enum(Reader& r, const char* key, E& out, P parse) {
  std::string s;
  bool present = false;
  r.get(key, s);
  present = !s.empty();
  if (!present) return;
  try {
    out = parse(s);
  } catch (const ConfigError& e) {
    r.problems().push_back(r.name(key) + ": " + e.what());
  }
}

}  // namespace

TrainConfig config_from_json(const json& j) {
  std::vector<std::string> problems;
  std::string scale_name = "tiny";
  if (j.is_object() && j.contains("scale") && j["scale"].is_string()) {
    scale_name = j["scale"].get<std::string>();
  }
  Scale scale;
  try {
    scale = parse_scale(scale_name);
  } catch (const ConfigError& e) {
    throw ItemizedError({std::string("scale: ") + e.what()});
  }
  TrainConfig c = TrainConfig::defaults(scale);
  Reader root(j, "", problems);
  root.get("scale", scale_name);
  root.get("seed", c.seed);
  get_enum(root, "precision", c.precision, parse_precision);
  root.section("train", [&](Reader& r) {
    r.get("lr", c.train.lr);
    r.get("lr_drop_epoch", c.train.lr_drop_epoch);
    r.get("lr_drop_factor", c.train.lr_drop_factor);
    r.get("beta1", c.train.beta1);
    r.get("beta2", c.train.beta2);
    r.get("eps", c.train.eps);
    r.get("batch_size", c.train.batch_size);
    r.get("epochs", c.train.epochs);
    r.get("augment", c.train.augment);
    r.get("checkpoint_every", c.train.checkpoint_every);
  });
  root.section("bts", [&](Reader& r) {
    get_enum(r, "direction", c.network.bts.direction, parse_direction);
    r.get("residual", c.network.bts.residual);
    get_enum(r, "attention_order", c.network.bts.attention_order, parse_attention_order);
    r.get("enabled", c.network.with_bts);
  });
  BackboneConfig& b = c.network.backbone;
  root.section("backbone", [&](Reader& r) {
    r.get("stage_channels", b.stage_channels);
    r.get("stage_strides", b.stage_strides);
    r.get("blocks", b.blocks);
    r.get("stem_kernel", b.stem_kernel);
    std::array<int, 2> size{b.input_h, b.input_w};
    r.get("input_size", size);
    b.input_h = size[0];
    b.input_w = size[1];
    r.get("aspp_rates", b.aspp_rates);
    r.get("aspp_branch_width", b.aspp_branch_width);
  });
  root.section("decoder", [&](Reader& r) {
    get_enum(r, "kind", c.network.decoder.kind, parse_decoder_kind);
    r.get("k", c.network.decoder.k);
    r.get("outputs", c.outputs);
  });
  root.section("loss", [&](Reader& r) {
    r.get("lambda_c", c.lambdas.lambda_c);
    r.get("lambda_r", c.lambdas.lambda_r);
    r.get("lambda_d", c.lambdas.lambda_d);
  });
  root.section("rgb_normalization", [&](Reader& r) {
    r.get("mean", c.rgb_norm.mean);
    r.get("std", c.rgb_norm.stddev);
  });
  root.section("data", [&](Reader& r) {
    r.get("source", c.data.source);
    std::string root_path = c.data.root.string();
    r.get("root", root_path);
    c.data.root = root_path;
    r.get("name", c.data.name);
    r.get("depth_near_is_high", c.data.depth_near_is_high);
    r.section("synthetic", [&](Reader& s) {
      s.get("count", c.data.synthetic_count);
      s.get("seed", c.data.synthetic_seed);
      std::array<int, 2> size{c.data.synthetic_h, c.data.synthetic_w};
      s.get("size", size);
      c.data.synthetic_h = size[0];
      c.data.synthetic_w = size[1];
    });
  });
  root.finish();
  if (!problems.empty()) throw ItemizedError(problems);
  c.validate();
  return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

void save_config(const std::filesystem::path& path, const TrainConfig& cfg) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config " + path.string());
  out << to_json(cfg).dump(2) << '\n';
}

namespace {

void diff_into(const json& a, const json& b, const std::string& path,
               std::vector<std::string>& out) {
  if (a.is_object() && b.is_object()) {
    std::set<std::string> keys;
    for (const auto& [k, v] : a.items()) keys.insert(k);
    for (const auto& [k, v] : b.items()) keys.insert(k);
    for (const auto& k : keys) {
      const std::string child = path.empty() ? k : path + "." + k;
      if (!a.contains(k) || !b.contains(k)) {
        out.push_back(child);
      } else {
        diff_into(a.at(k), b.at(k), child, out);
      }
    }
    return;
  }
  if (a != b) out.push_back(path.empty() ? "<root>" : path);
}

}  // namespace

std::vector<std::string> json_diff(const json& a, const json& b) {
  std::vector<std::string> out;
  diff_into(a, b, "", out);
  return out;
}

json architecture_json(const TrainConfig& cfg) {
  const json full = to_json(cfg);
  json j;
  j["scale"] = full["scale"];
  j["precision"] = full["precision"];
  j["bts"] = full["bts"];
  j["backbone"] = full["backbone"];
  j["backbone"].erase("input_size");
  j["decoder"] = {{"kind", full["decoder"]["kind"]}, {"k", full["decoder"]["k"]}};
  return j;
}

}  // namespace btsnet
