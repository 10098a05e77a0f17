#pragma once

#include "wxc/catalog.hpp"
#include "wxc/tensor.hpp"
#include "wxc/timeutil.hpp"

namespace wxc {

/// Regular lat/lon grid. Longitude is the periodic axis and must cover
/// 360 degrees; latitude runs pole to pole in row order.
struct GridSpec {
  int64_t h = 0, w = 0;
  double lat0 = 0.0, dlat = 0.0;
  double lon0 = 0.0, dlon = 0.0;

  double lat(int64_t row) const { return lat0 + dlat * static_cast<double>(row); }
  double lon(int64_t col) const { return lon0 + dlon * static_cast<double>(col); }

  void validate() const {
    require(h > 0 && w > 0, "grid: empty grid");
    require(std::abs(dlon * static_cast<double>(w) - 360.0) < 1e-9, "grid: longitude axis must cover 360 degrees");
    require(std::abs(lat(0)) <= 90.0 + 1e-9 && std::abs(lat(h - 1)) <= 90.0 + 1e-9, "grid: latitude out of range");
  }

  bool operator==(const GridSpec& o) const {
    return h == o.h && w == o.w && lat0 == o.lat0 && dlat == o.dlat && lon0 == o.lon0 && dlon == o.dlon;
  }
};

/// Equal-angle grid centered inside [-90, 90] x [0, 360).
inline GridSpec make_global_grid(int64_t h, int64_t w) {
  GridSpec g;
  g.h = h;
  g.w = w;
  g.dlat = 180.0 / static_cast<double>(h);
  g.lat0 = -90.0 + g.dlat / 2.0;
  g.dlon = 360.0 / static_cast<double>(w);
  g.lon0 = 0.0;
  g.validate();
  return g;
}

/// One timestamped multichannel state in physical units.
struct GriddedState {
  Tensor values;  // [C, H, W]
  DateTime timestamp;
  GridSpec grid;

  void validate(const VariableCatalog& cat) const {
    require(values.ndim() == 3, "state: expected [C,H,W]");
    require(values.dim(0) == cat.channels(), "state: channel count mismatch");
    require(values.dim(1) == grid.h && values.dim(2) == grid.w, "state: grid shape mismatch");
    require(values.all_finite(), "state: NaN/Inf at " + timestamp.iso());
  }
};

/// Geophysical statics plus the 4 broadcast time channels.
struct StaticFields {
  Tensor fields;  // [S_geo, H, W]
  GridSpec grid;

  /// [S_geo + 4, H, W]: statics followed by cos/sin(doy), cos/sin(hod).
  Tensor with_time(const DateTime& t) const {
    const int64_t s = fields.dim(0), h = fields.dim(1), w = fields.dim(2);
    Tensor out({s + 4, h, w});
    std::copy(fields.data(), fields.data() + s * h * w, out.data());
    const TimeEncoding enc = time_encoding_of(t);
    const double vals[4] = {enc.cos_doy, enc.sin_doy, enc.cos_hod, enc.sin_hod};
    for (int64_t k = 0; k < 4; ++k) {
      double* p = out.data() + (s + k) * h * w;
      for (int64_t i = 0; i < h * w; ++i) p[i] = vals[k];
    }
    return out;
  }

  int64_t context_channels() const { return fields.dim(0) + 4; }
};

}  // namespace wxc
