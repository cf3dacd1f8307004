#include "btsnet/audit.hpp"

#include <cstdio>
#include <sstream>

namespace btsnet {

ParameterAudit audit_parameters(Scale scale, const BtsConfig& bts) {
  const NetworkConfig cfg = NetworkConfig::for_scale(scale);
  Initializer init(0, true);
  ParameterAudit a;
  a.scale = scale;
  {
    Encoder<float> with(cfg.backbone, bts, init, true);
    a.encoder_with_bts = with.parameter_count();
  }
  {
    Encoder<float> without(cfg.backbone, bts, init, false);
    a.encoder_without_bts = without.parameter_count();
  }
  a.bts_delta = a.encoder_with_bts - a.encoder_without_bts;
  const auto levels = cfg.backbone.level_channels();
  {
    Decoder<float> group(levels, cfg.decoder, init);
    a.unify = group.unify_parameter_count();
    a.gd_c = group.gd_c_parameter_count();
    a.gd_r = group.gd_r_parameter_count();
    a.gd_d = group.gd_d_parameter_count();
    a.network_total = a.encoder_with_bts + group.parameter_count();
  }
  {
    DecoderConfig unet_cfg = cfg.decoder;
    unet_cfg.kind = DecoderKind::kUnet;
    Decoder<float> unet(levels, unet_cfg, init);
    a.unet = unet.unet_parameter_count();
  }
  a.gd_c_over_unet = a.unet ? static_cast<double>(a.gd_c) / a.unet : 0.0;
  return a;
}

nlohmann::json audit_json(const ParameterAudit& a) {
  return {{"scale", to_string(a.scale)},
          {"encoder_with_bts", a.encoder_with_bts},
          {"encoder_without_bts", a.encoder_without_bts},
          {"bts_delta", a.bts_delta},
          {"unify", a.unify},
          {"gd_c", a.gd_c},
          {"gd_r", a.gd_r},
          {"gd_d", a.gd_d},
          {"unet", a.unet},
          {"network_total", a.network_total},
          {"gd_c_over_unet", a.gd_c_over_unet}};
}

std::string format_millions(std::size_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2fM", static_cast<double>(n) / 1e6);
  return buf;
}

std::string audit_table(const ParameterAudit& a) {
  std::ostringstream out;
  char line[128];
  auto row = [&](const char* name, std::size_t n) {
    std::snprintf(line, sizeof line, "%-24s %12zu  %9s\n", name, n, format_millions(n).c_str());
    out << line;
  };
  out << "Component (" << to_string(a.scale) << ")         Parameters   Millions\n";
  out << std::string(48, '-') << '\n';
  row("encoder without BTS", a.encoder_without_bts);
  row("encoder with BTS", a.encoder_with_bts);
  row("BTS delta", a.bts_delta);
  row("unify (shared)", a.unify);
  row("U-net", a.unet);
  row("GD-D", a.gd_d);
  row("GD-R", a.gd_r);
  row("GD-C", a.gd_c);
  row("network total", a.network_total);
  std::snprintf(line, sizeof line, "%-24s %12.4f\n", "GD-C / U-net", a.gd_c_over_unet);
  out << line;
  return out.str();
}

}  // namespace btsnet
