#pragma once

#include "wxc/container.hpp"
#include "wxc/rng.hpp"

namespace wxc {

/// One traveling spatial Fourier mode of a synthetic channel.
struct SynthMode {
  double amp;
  int kx, ky;
  double phase;
  double omega_per_hour;  // zonal phase speed (advecting modes)
};

/// Per-channel recipe, fully determined by (seed, channel index) so tests
/// can recompute the injected signal analytically.
struct SynthChannelParams {
  double base;
  double annual_amp, annual_phase;
  double diurnal_amp, diurnal_phase;
  std::vector<SynthMode> texture;    // static spatial modes (incl. high wavenumbers)
  std::vector<SynthMode> advecting;  // modes drifting in longitude

  double cycle_value(const DateTime& t) const {
    const double doy = 2.0 * M_PI * static_cast<double>(t.day_of_year() - 1) / 365.25;
    const double hod = 2.0 * M_PI * t.hour_of_day() / 24.0;
    return annual_amp * std::cos(doy + annual_phase) + diurnal_amp * std::cos(hod + diurnal_phase);
  }
};

struct StormSpec {
  bool enabled = false;
  double lat0 = 15.0, lon0 = 210.0;
  double dlat_per_hour = 0.15, dlon_per_hour = -0.5;
  double depth = 25.0;       // SLP deficit at the center
  double radius_deg = 8.0;   // gaussian e-folding radius
  double wind_peak = 30.0;   // 10 m wind bump
  double hours = 0.0;        // 0 = entire dataset span
};

struct SyntheticConfig {
  VariableCatalog catalog;
  GridSpec grid;
  int start_year = 2000;
  int n_years = 1;
  int cadence_hours = 6;
  double annual_amp = 1.0;
  double diurnal_amp = 1.0;
  double texture_amp = 0.6;
  double anomaly_amp = 0.5;
  double noise_amp = 0.05;
  StormSpec storm;
};

inline SynthChannelParams derive_channel_params(uint64_t seed, int64_t channel, const SyntheticConfig& cfg) {
  Rng rng(derive_seed(seed, 0xC0FFEE, static_cast<uint64_t>(channel)));
  SynthChannelParams p;
  p.base = rng.normal(0.0, 2.0);
  p.annual_amp = cfg.annual_amp * rng.uniform(0.5, 1.0);
  p.annual_phase = rng.uniform(0.0, 2.0 * M_PI);
  p.diurnal_amp = cfg.diurnal_amp * rng.uniform(0.5, 1.0);
  p.diurnal_phase = rng.uniform(0.0, 2.0 * M_PI);
  const int64_t w = cfg.grid.w;
  // low-wavenumber background plus high-wavenumber texture
  for (int m = 0; m < 6; ++m) {
    SynthMode mode;
    mode.kx = static_cast<int>(1 + rng.uniform_int(3));
    mode.ky = static_cast<int>(rng.uniform_int(3)) - 1;
    mode.amp = cfg.texture_amp * rng.uniform(0.3, 1.0) / (1.0 + m * 0.3);
    mode.phase = rng.uniform(0.0, 2.0 * M_PI);
    mode.omega_per_hour = 0.0;
    p.texture.push_back(mode);
  }
  for (int m = 0; m < 5; ++m) {
    SynthMode mode;
    mode.kx = static_cast<int>(w / 6 + rng.uniform_int(std::max<int64_t>(1, w / 3 - w / 6)));
    mode.ky = static_cast<int>(rng.uniform_int(5)) - 2;
    mode.amp = cfg.texture_amp * 0.4 * rng.uniform(0.3, 1.0);
    mode.phase = rng.uniform(0.0, 2.0 * M_PI);
    mode.omega_per_hour = 0.0;
    p.texture.push_back(mode);
  }
  // advecting anomaly: all modes of a channel share one zonal drift speed
  const double cells_per_hour = rng.uniform(0.2, 0.4);
  for (int m = 0; m < 4; ++m) {
    SynthMode mode;
    mode.kx = static_cast<int>(1 + rng.uniform_int(4));
    mode.ky = static_cast<int>(rng.uniform_int(3)) - 1;
    mode.amp = cfg.anomaly_amp * rng.uniform(0.5, 1.0) / (1.0 + m * 0.4);
    mode.phase = rng.uniform(0.0, 2.0 * M_PI);
    mode.omega_per_hour = 2.0 * M_PI * mode.kx * cells_per_hour / static_cast<double>(w);
    p.advecting.push_back(mode);
  }
  return p;
}

namespace detail {

inline void add_mode(Tensor& field, int64_t h, int64_t w, const SynthMode& m, double hours_elapsed) {
  // cos(ax + by + c) expanded through per-axis tables
  const double a = 2.0 * M_PI * m.kx / static_cast<double>(w);
  const double b = 2.0 * M_PI * m.ky / static_cast<double>(h);
  const double c = m.phase - m.omega_per_hour * hours_elapsed;
  std::vector<double> cx(static_cast<size_t>(w)), sx(static_cast<size_t>(w));
  std::vector<double> cy(static_cast<size_t>(h)), sy(static_cast<size_t>(h));
  for (int64_t x = 0; x < w; ++x) {
    cx[static_cast<size_t>(x)] = std::cos(a * x + c);
    sx[static_cast<size_t>(x)] = std::sin(a * x + c);
  }
  for (int64_t y = 0; y < h; ++y) {
    cy[static_cast<size_t>(y)] = std::cos(b * y);
    sy[static_cast<size_t>(y)] = std::sin(b * y);
  }
  for (int64_t y = 0; y < h; ++y) {
    double* row = field.data() + y * w;
    for (int64_t x = 0; x < w; ++x) {
      row[x] += m.amp * (cx[static_cast<size_t>(x)] * cy[static_cast<size_t>(y)] -
                         sx[static_cast<size_t>(x)] * sy[static_cast<size_t>(y)]);
    }
  }
}

inline double wrap_lon_delta(double d) {
  while (d > 180.0) d -= 360.0;
  while (d < -180.0) d += 360.0;
  return d;
}

}  // namespace detail

/// Storm center at a given elapsed time.
inline std::pair<double, double> storm_center(const StormSpec& s, double hours_elapsed) {
  double lat = s.lat0 + s.dlat_per_hour * hours_elapsed;
  double lon = s.lon0 + s.dlon_per_hour * hours_elapsed;
  lon = std::fmod(std::fmod(lon, 360.0) + 360.0, 360.0);
  return {lat, lon};
}

/// Deterministic synthetic reanalysis: per channel a sum of base value,
/// annual+diurnal cycle, static texture modes, zonally advecting anomaly
/// modes and seeded noise; optional moving low in the SLP channel.
inline DatasetContainer generate_synthetic(const fs::path& dir, uint64_t seed, const SyntheticConfig& cfg) {
  cfg.catalog.validate();
  cfg.grid.validate();
  const int64_t h = cfg.grid.h, w = cfg.grid.w;
  const int64_t nc = cfg.catalog.channels();

  // statics: smooth seeded fields squashed into valid ranges
  StaticFields statics;
  statics.grid = cfg.grid;
  const int64_t s_geo = cfg.catalog.n_statics();
  statics.fields = Tensor({s_geo, h, w});
  {
    Rng srng(derive_seed(seed, 0x57A71C5));
    for (int64_t si = 0; si < s_geo; ++si) {
      Tensor f({h, w});
      for (int m = 0; m < 5; ++m) {
        SynthMode mode{1.0 / (1 + m), static_cast<int>(1 + srng.uniform_int(4)),
                       static_cast<int>(srng.uniform_int(3)) - 1, srng.uniform(0.0, 2 * M_PI), 0.0};
        detail::add_mode(f, h, w, mode, 0.0);
      }
      const std::string& name = cfg.catalog.static_vars[static_cast<size_t>(si)];
      for (int64_t i = 0; i < h * w; ++i) {
        if (name == "PHIS") {
          f[i] = std::max(0.0, f[i]) * 2000.0;  // elevation-like
        } else {
          f[i] = 1.0 / (1.0 + std::exp(-2.0 * f[i]));  // fraction in [0,1]
        }
      }
      std::copy(f.data(), f.data() + h * w, statics.fields.data() + si * h * w);
    }
  }

  DatasetContainer out = DatasetContainer::create(dir, cfg.catalog, cfg.grid, std::move(statics));

  std::vector<SynthChannelParams> params;
  for (int64_t c = 0; c < nc; ++c) params.push_back(derive_channel_params(seed, c, cfg));
  const int64_t slp = cfg.catalog.surface_index("SLP");
  require(!cfg.storm.enabled || slp >= 0, "generate_synthetic: storm mode needs an SLP surface channel");
  const int64_t u10 = cfg.catalog.surface_index("U10M");
  const int64_t v10 = cfg.catalog.surface_index("V10M");

  const DateTime start = DateTime::from_ymdh(cfg.start_year, 1, 1, 0);
  const DateTime end = DateTime::from_ymdh(cfg.start_year + cfg.n_years, 1, 1, 0);

  int64_t index = 0;
  for (DateTime t = start; t < end; t = t.plus_hours(cfg.cadence_hours), ++index) {
    const double hours_elapsed = static_cast<double>(t.unix_seconds() - start.unix_seconds()) / 3600.0;
    GriddedState s;
    s.timestamp = t;
    s.grid = cfg.grid;
    s.values = Tensor({nc, h, w});
    Rng noise(derive_seed(seed, 0x4015E, static_cast<uint64_t>(index)));
    for (int64_t c = 0; c < nc; ++c) {
      const SynthChannelParams& p = params[static_cast<size_t>(c)];
      Tensor field({h, w});
      field.fill(p.base + p.cycle_value(t));
      for (const auto& m : p.texture) detail::add_mode(field, h, w, m, hours_elapsed);
      for (const auto& m : p.advecting) detail::add_mode(field, h, w, m, hours_elapsed);
      if (cfg.noise_amp > 0.0) {
        for (int64_t i = 0; i < h * w; ++i) field[i] += noise.normal(0.0, cfg.noise_amp);
      }
      std::copy(field.data(), field.data() + h * w, s.values.data() + c * h * w);
    }
    if (cfg.storm.enabled && (cfg.storm.hours <= 0.0 || hours_elapsed <= cfg.storm.hours)) {
      const auto [clat, clon] = storm_center(cfg.storm, hours_elapsed);
      double* slp_f = s.values.data() + slp * h * w;
      for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
          const double dlat = cfg.grid.lat(y) - clat;
          const double dlon = detail::wrap_lon_delta(cfg.grid.lon(x) - clon);
          const double r2 = (dlat * dlat + dlon * dlon) / (cfg.storm.radius_deg * cfg.storm.radius_deg);
          const double g = std::exp(-0.5 * r2);
          slp_f[y * w + x] -= cfg.storm.depth * g;
          if (u10 >= 0) s.values[u10 * h * w + y * w + x] += cfg.storm.wind_peak * g * (-dlat / cfg.storm.radius_deg);
          if (v10 >= 0) s.values[v10 * h * w + y * w + x] += cfg.storm.wind_peak * g * (dlon / cfg.storm.radius_deg);
        }
      }
    }
    out.append(s);
  }
  out.finalize();
  return out;
}

}  // namespace wxc
