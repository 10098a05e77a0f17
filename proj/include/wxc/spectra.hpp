#pragma once

#include "wxc/tensor.hpp"

namespace wxc {

/// One-sided zonal power spectrum: per-row DFT along longitude, squared
/// magnitudes averaged over latitude rows. Normalized so the spectrum sums
/// to the row-mean of mean(f^2) (Parseval), i.e. variance + mean^2.
inline std::vector<double> zonal_power_spectrum(const Tensor& field) {
  require(field.ndim() == 2, "zonal_power_spectrum: expected [H,W]");
  const int64_t h = field.dim(0), w = field.dim(1);
  require(w >= 2, "zonal_power_spectrum: need at least two longitudes");
  const int64_t k_max = w / 2;
  std::vector<double> power(static_cast<size_t>(k_max + 1), 0.0);
  std::vector<double> cs(static_cast<size_t>(w)), sn(static_cast<size_t>(w));
  for (int64_t k = 0; k <= k_max; ++k) {
    for (int64_t x = 0; x < w; ++x) {
      const double a = -2.0 * M_PI * static_cast<double>(k) * static_cast<double>(x) / static_cast<double>(w);
      cs[static_cast<size_t>(x)] = std::cos(a);
      sn[static_cast<size_t>(x)] = std::sin(a);
    }
    double acc = 0.0;
    for (int64_t r = 0; r < h; ++r) {
      const double* row = field.data() + r * w;
      double re = 0.0, im = 0.0;
      for (int64_t x = 0; x < w; ++x) {
        re += row[x] * cs[static_cast<size_t>(x)];
        im += row[x] * sn[static_cast<size_t>(x)];
      }
      acc += re * re + im * im;
    }
    const bool shared = k == 0 || (w % 2 == 0 && k == k_max);  // DC and Nyquist are their own mirror
    power[static_cast<size_t>(k)] = (shared ? 1.0 : 2.0) * acc / (static_cast<double>(h) * static_cast<double>(w * w));
  }
  return power;
}

/// L2 distance in log power over the top third of wavenumbers; the
/// spectral-fidelity score used to compare downscaling outputs.
inline double log_power_distance_top_third(const std::vector<double>& a, const std::vector<double>& b) {
  require(a.size() == b.size() && !a.empty(), "log_power_distance: size mismatch");
  const size_t k0 = a.size() - a.size() / 3;
  double acc = 0.0;
  for (size_t k = k0; k < a.size(); ++k) {
    const double la = std::log10(std::max(a[k], 1e-30));
    const double lb = std::log10(std::max(b[k], 1e-30));
    acc += (la - lb) * (la - lb);
  }
  return std::sqrt(acc);
}

}  // namespace wxc
