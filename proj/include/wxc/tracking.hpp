#pragma once

#include <fstream>
#include <optional>

#include "wxc/grid.hpp"
#include "wxc/timeutil.hpp"

namespace wxc {

constexpr double kEarthRadiusKm = 6371.0;

inline double wrap_lon180(double lon) {
  while (lon >= 180.0) lon -= 360.0;
  while (lon < -180.0) lon += 360.0;
  return lon;
}

/// Haversine great-circle distance in km.
inline double great_circle_km(double lat_a, double lon_a, double lat_b, double lon_b) {
  require(std::abs(lat_a) <= 90.0 && std::abs(lat_b) <= 90.0, "great_circle_km: latitude out of range");
  const double pa = lat_a * M_PI / 180.0, pb = lat_b * M_PI / 180.0;
  const double dphi = pb - pa;
  const double dlam = (lon_b - lon_a) * M_PI / 180.0;
  const double s1 = std::sin(dphi / 2.0), s2 = std::sin(dlam / 2.0);
  const double h = s1 * s1 + std::cos(pa) * std::cos(pb) * s2 * s2;
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

/// One cyclone position/intensity fix.
struct TrackFix {
  DateTime time;
  double lat = 0.0;
  double lon = 0.0;  // normalized to [-180, 180)
  double mslp = 0.0;
  double wind = 0.0;
  bool on_boundary = false;

  void normalize() {
    lon = wrap_lon180(lon);
    require(lat >= -90.0 && lat <= 90.0, "track fix: latitude out of range");
  }
};

/// Radius-constrained minimum-following tracker: at each frame the fix is
/// the MSLP minimum within `search_radius_km` (great-circle) of the
/// previous fix; the wind maximum is taken over the same disc. An empty
/// search disc terminates the track; minima on the latitude boundary are
/// flagged.
inline std::vector<TrackFix> track_cyclone(const std::vector<Tensor>& mslp_frames,
                                           const std::vector<DateTime>& times, const GridSpec& grid,
                                           const TrackFix& init, double search_radius_km = 450.0,
                                           const std::vector<Tensor>* wind_frames = nullptr) {
  require(mslp_frames.size() == times.size(), "track_cyclone: frame/time count mismatch");
  require(init.lat >= grid.lat(0) - 1e-9 && init.lat <= grid.lat(grid.h - 1) + 1e-9,
          "track_cyclone: initial fix outside the grid");
  std::vector<TrackFix> track;
  double prev_lat = init.lat, prev_lon = init.lon;
  for (size_t f = 0; f < mslp_frames.size(); ++f) {
    const Tensor& field = mslp_frames[f];
    require(field.dim(0) == grid.h && field.dim(1) == grid.w, "track_cyclone: frame shape mismatch");
    double best = std::numeric_limits<double>::infinity();
    int64_t best_y = -1, best_x = -1;
    double wind_max = 0.0;
    for (int64_t y = 0; y < grid.h; ++y) {
      for (int64_t x = 0; x < grid.w; ++x) {
        const double d = great_circle_km(prev_lat, prev_lon, grid.lat(y), grid.lon(x));
        if (d > search_radius_km) continue;
        const double v = field.at(y, x);
        if (v < best) {
          best = v;
          best_y = y;
          best_x = x;
        }
        if (wind_frames != nullptr) {
          wind_max = std::max(wind_max, (*wind_frames)[f].at(y, x));
        }
      }
    }
    if (best_y < 0) break;  // empty disc: track terminated
    TrackFix fix;
    fix.time = times[f];
    fix.lat = grid.lat(best_y);
    fix.lon = wrap_lon180(grid.lon(best_x));
    fix.mslp = best;
    fix.wind = wind_max;
    fix.on_boundary = best_y == 0 || best_y == grid.h - 1;
    track.push_back(fix);
    prev_lat = fix.lat;
    prev_lon = fix.lon;
  }
  return track;
}

/// Per-fix, per-lead errors against a reference track, linearly
/// interpolated in time to the model fix times.
struct TrackErrors {
  std::vector<int64_t> lead_hours;
  std::vector<double> track_km, mslp_abs, wind_abs;

  double mean_track_km() const {
    double s = 0.0;
    for (double v : track_km) s += v;
    return track_km.empty() ? 0.0 : s / static_cast<double>(track_km.size());
  }
};

inline TrackErrors track_errors(const std::vector<TrackFix>& model_track, const std::vector<TrackFix>& reference) {
  require(!model_track.empty() && reference.size() >= 2, "track_errors: need non-empty tracks");
  const int64_t r0 = reference.front().time.unix_seconds();
  const int64_t r1 = reference.back().time.unix_seconds();
  TrackErrors out;
  const int64_t t0 = model_track.front().time.unix_seconds();
  for (const auto& fix : model_track) {
    const int64_t t = fix.time.unix_seconds();
    require(t >= r0 && t <= r1, "track_errors: model fix time outside the reference range");
    size_t i = 1;
    while (i < reference.size() - 1 && reference[i].time.unix_seconds() < t) ++i;
    const auto& a = reference[i - 1];
    const auto& b = reference[i];
    const double span = static_cast<double>(b.time.unix_seconds() - a.time.unix_seconds());
    const double u = span > 0 ? static_cast<double>(t - a.time.unix_seconds()) / span : 0.0;
    const double rlat = a.lat + u * (b.lat - a.lat);
    double dlon = wrap_lon180(b.lon - a.lon);
    const double rlon = wrap_lon180(a.lon + u * dlon);
    const double rmslp = a.mslp + u * (b.mslp - a.mslp);
    const double rwind = a.wind + u * (b.wind - a.wind);
    out.lead_hours.push_back((t - t0) / 3600);
    out.track_km.push_back(great_circle_km(fix.lat, fix.lon, rlat, rlon));
    out.mslp_abs.push_back(std::abs(fix.mslp - rmslp));
    out.wind_abs.push_back(std::abs(fix.wind - rwind));
  }
  return out;
}

// --- track CSV (timestamp, lat, lon, mslp_hPa, wind_ms) ----------------------

inline void write_track_csv(const std::string& path, const std::vector<TrackFix>& track) {
  std::ofstream f(path, std::ios::trunc);
  require(f.good(), "cannot write track csv: " + path);
  f << "timestamp,lat,lon,mslp_hPa,wind_ms\n";
  for (const auto& fix : track) {
    f << fix.time.iso() << "," << fix.lat << "," << fix.lon << "," << fix.mslp << "," << fix.wind << "\n";
  }
}

inline std::vector<TrackFix> read_track_csv(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), "cannot read track csv: " + path);
  std::vector<TrackFix> out;
  std::string line;
  std::getline(f, line);  // header
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    TrackFix fix;
    char ts[64];
    const int n = std::sscanf(line.c_str(), "%63[^,],%lf,%lf,%lf,%lf", ts, &fix.lat, &fix.lon, &fix.mslp, &fix.wind);
    require(n == 5, "malformed track csv line: " + line);
    fix.time = DateTime::parse_iso(ts);
    fix.normalize();
    out.push_back(fix);
  }
  return out;
}

}  // namespace wxc
