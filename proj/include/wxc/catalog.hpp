#pragma once

#include <string>
#include <vector>

#include "wxc/tensor.hpp"

namespace wxc {

/// Ordered variable lists; the ordering fixes channel indices everywhere
/// downstream: surface channels first, then vertical variables blocked by
/// variable with levels innermost.
struct VariableCatalog {
  std::vector<std::string> surface_vars;
  std::vector<std::string> vertical_vars;
  std::vector<double> levels_hpa;
  std::vector<std::string> static_vars;

  int64_t channels() const {
    return static_cast<int64_t>(surface_vars.size() + vertical_vars.size() * levels_hpa.size());
  }
  int64_t n_statics() const { return static_cast<int64_t>(static_vars.size()); }

  void validate() const {
    require(!surface_vars.empty() || !vertical_vars.empty(), "catalog: no variables");
    for (size_t i = 1; i < levels_hpa.size(); ++i) {
      require(levels_hpa[i] < levels_hpa[i - 1], "catalog: level pressures must be strictly decreasing");
    }
    require(vertical_vars.empty() || !levels_hpa.empty(), "catalog: vertical variables need levels");
  }

  /// Channel name, e.g. "U10M" or "T@700hPa".
  std::string channel_name(int64_t c) const {
    const int64_t ns = static_cast<int64_t>(surface_vars.size());
    if (c < ns) return surface_vars[static_cast<size_t>(c)];
    const int64_t v = (c - ns) / static_cast<int64_t>(levels_hpa.size());
    const int64_t l = (c - ns) % static_cast<int64_t>(levels_hpa.size());
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%g", levels_hpa[static_cast<size_t>(l)]);
    return vertical_vars[static_cast<size_t>(v)] + "@" + buf + "hPa";
  }

  /// Index of a surface variable, or -1.
  int64_t surface_index(const std::string& name) const {
    for (size_t i = 0; i < surface_vars.size(); ++i) {
      if (surface_vars[i] == name) return static_cast<int64_t>(i);
    }
    return -1;
  }
};

/// The MERRA-2 variable set used at full scale: 20 surface + 10 vertical
/// variables on 14 levels = 160 channels.
inline VariableCatalog paper_catalog() {
  VariableCatalog c;
  c.surface_vars = {"U10M", "V10M",  "T2M",   "QV2M",  "PS",    "SLP",   "TS",    "TQI",   "TQL",   "TQV",
                    "GWETROOT", "LAI", "EFLUX", "HFLUX", "Z0M", "LWGEM", "LWGAB", "LWTUP", "SWGNT", "SWTNT"};
  c.vertical_vars = {"U", "V", "OMEGA", "T", "QV", "PL", "H", "CLOUD", "QI", "QL"};
  c.levels_hpa = {985, 970, 925, 850, 700, 600, 525, 412, 288, 245, 208, 150, 109, 48};
  c.static_vars = {"PHIS", "FRLAND", "FROCEAN", "FRACI"};
  c.validate();
  return c;
}

/// Desk-scale set: 3 surface + 2 vertical x 3 levels = 9 channels.
inline VariableCatalog desk_catalog() {
  VariableCatalog c;
  c.surface_vars = {"U10M", "V10M", "SLP"};
  c.vertical_vars = {"T", "U"};
  c.levels_hpa = {985, 500, 48};
  c.static_vars = {"PHIS", "FRLAND", "FROCEAN", "FRACI"};
  c.validate();
  return c;
}

}  // namespace wxc
