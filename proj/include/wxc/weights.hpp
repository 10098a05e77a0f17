#pragma once

#include <map>

#include "wxc/catalog.hpp"

namespace wxc {

/// Per-channel loss weight = parameter weight x level weight. Surface
/// channels have level weight 1; vertical level weights are linear in
/// nominal pressure, normalized so the lowest level weighs 1.
struct WeightTable {
  std::vector<double> weights;  // [C]

  void validate() const {
    for (double w : weights) require(w > 0.0, "weight table: nonpositive weight");
  }
};

namespace detail {
inline const std::map<std::string, double>& surface_weight_map() {
  static const std::map<std::string, double> m = {
      {"U10M", 1.0},     {"V10M", 1.0},  {"SLP", 0.1},    {"T2M", 0.1},    {"QV2M", 0.01}, {"PS", 0.01},
      {"TS", 0.01},      {"TQI", 0.01},  {"TQL", 0.01},   {"TQV", 0.01},   {"GWETROOT", 0.01},
      {"LAI", 0.01},     {"EFLUX", 0.01},{"HFLUX", 0.01}, {"Z0M", 0.01},   {"LWGEM", 0.01},
      {"LWGAB", 0.01},   {"LWTUP", 0.01},{"SWGNT", 0.01}, {"SWTNT", 0.01}};
  return m;
}
inline const std::map<std::string, double>& vertical_weight_map() {
  // H, OMEGA, T, U, V weigh 1; cloud-family and PL weigh 0.1. QV is not
  // named in the source lists; it is treated as a standard variable (1).
  static const std::map<std::string, double> m = {{"U", 1.0},     {"V", 1.0},  {"OMEGA", 1.0}, {"T", 1.0},
                                                  {"H", 1.0},     {"QV", 1.0}, {"CLOUD", 0.1}, {"PL", 0.1},
                                                  {"QI", 0.1},    {"QL", 0.1}};
  return m;
}
}  // namespace detail

inline WeightTable make_weight_table(const VariableCatalog& cat) {
  WeightTable out;
  std::vector<std::string> unmapped;
  for (const auto& name : cat.surface_vars) {
    auto it = detail::surface_weight_map().find(name);
    if (it == detail::surface_weight_map().end()) {
      unmapped.push_back(name);
      out.weights.push_back(1.0);
    } else {
      out.weights.push_back(it->second);
    }
  }
  const double max_p = cat.levels_hpa.empty() ? 1.0 : cat.levels_hpa.front();
  for (const auto& name : cat.vertical_vars) {
    auto it = detail::vertical_weight_map().find(name);
    const double pw = it == detail::vertical_weight_map().end() ? 0.0 : it->second;
    if (it == detail::vertical_weight_map().end()) unmapped.push_back(name);
    for (double p : cat.levels_hpa) out.weights.push_back(pw * p / max_p);
  }
  if (!unmapped.empty()) {
    std::string msg = "weight table: unmapped variables:";
    for (const auto& n : unmapped) msg += " " + n;
    fail(msg);
  }
  out.validate();
  return out;
}

inline WeightTable uniform_weight_table(int64_t channels) {
  WeightTable t;
  t.weights.assign(static_cast<size_t>(channels), 1.0);
  return t;
}

}  // namespace wxc
