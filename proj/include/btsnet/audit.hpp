#pragma once

#include <cstddef>
#include <string>

#include <json.hpp>

#include "btsnet/network.hpp"

namespace btsnet {

/// Trainable-scalar counts per component. Decoder counts exclude the shared
/// channel-unification BConvs, reported separately as `unify`.
struct ParameterAudit {
  Scale scale = Scale::kFull;
  std::size_t encoder_with_bts = 0;
  std::size_t encoder_without_bts = 0;
  std::size_t bts_delta = 0;
  std::size_t unify = 0;
  std::size_t gd_c = 0;
  std::size_t gd_r = 0;
  std::size_t gd_d = 0;
  std::size_t unet = 0;
  std::size_t network_total = 0;  // group decoder, with BTS
  double gd_c_over_unet = 0;
};

/// Builds the components with zero weights and counts their parameters.
ParameterAudit audit_parameters(Scale scale, const BtsConfig& bts = {});

nlohmann::json audit_json(const ParameterAudit& a);
std::string audit_table(const ParameterAudit& a);

/// 12.3456789M-style rendering.
std::string format_millions(std::size_t n);

}  // namespace btsnet
