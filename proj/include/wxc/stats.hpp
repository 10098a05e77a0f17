#pragma once

#include "wxc/climatology.hpp"
#include "wxc/container.hpp"

namespace wxc {

constexpr double kSigmaFloor = 1e-4;
constexpr double kSigmaCeil = 1e4;
constexpr double kSigmaCFloor = 1e-7;
constexpr double kSigmaCCeil = 1e7;

/// Per-channel normalization constants. sigma is clamped to
/// [1e-4, 1e4] and sigma_c to [1e-7, 1e7]; both strictly positive.
struct NormStats {
  std::vector<double> mu;
  std::vector<double> sigma;
  std::vector<double> sigma_c;  // empty until anomaly stats are computed

  int64_t channels() const { return static_cast<int64_t>(mu.size()); }

  void save(const fs::path& dir) const {
    fs::create_directories(dir);
    json m;
    m["dtype"] = "float32le";
    m["channels"] = channels();
    m["has_sigma_c"] = !sigma_c.empty();
    write_json(dir / "manifest.json", m);
    write_f32(dir / "mu.f32", mu.data(), channels());
    write_f32(dir / "sigma.f32", sigma.data(), channels());
    if (!sigma_c.empty()) write_f32(dir / "sigma_c.f32", sigma_c.data(), channels());
  }

  static NormStats load(const fs::path& dir) {
    const json m = read_json(dir / "manifest.json");
    const int64_t c = m.at("channels").get<int64_t>();
    NormStats s;
    s.mu.resize(static_cast<size_t>(c));
    s.sigma.resize(static_cast<size_t>(c));
    read_f32(dir / "mu.f32", s.mu.data(), c);
    read_f32(dir / "sigma.f32", s.sigma.data(), c);
    if (m.at("has_sigma_c").get<bool>()) {
      s.sigma_c.resize(static_cast<size_t>(c));
      read_f32(dir / "sigma_c.f32", s.sigma_c.data(), c);
    }
    return s;
  }
};

namespace detail {
struct Moments {
  std::vector<double> sum, sumsq;
  int64_t count = 0;
};

inline void accumulate_channel_moments(const Tensor& values, Moments& m) {
  const int64_t c = values.dim(0), hw = values.dim(1) * values.dim(2);
  if (m.sum.empty()) {
    m.sum.assign(static_cast<size_t>(c), 0.0);
    m.sumsq.assign(static_cast<size_t>(c), 0.0);
  }
  for (int64_t ci = 0; ci < c; ++ci) {
    const double* p = values.data() + ci * hw;
    double s = 0.0, q = 0.0;
    for (int64_t i = 0; i < hw; ++i) {
      s += p[i];
      q += p[i] * p[i];
    }
    m.sum[static_cast<size_t>(ci)] += s;
    m.sumsq[static_cast<size_t>(ci)] += q;
  }
  m.count += hw;
}
}  // namespace detail

/// Per-channel mean and population std across all pixels and timestamps.
inline NormStats compute_norm_stats(const DatasetContainer& data) {
  require(data.size() > 0, "compute_norm_stats: empty dataset");
  detail::Moments m;
  for (int64_t i = 0; i < data.size(); ++i) {
    detail::accumulate_channel_moments(data.state(i).values, m);
  }
  NormStats out;
  const size_t c = m.sum.size();
  out.mu.resize(c);
  out.sigma.resize(c);
  const double n = static_cast<double>(m.count);
  for (size_t ci = 0; ci < c; ++ci) {
    const double mean = m.sum[ci] / n;
    const double var = std::max(0.0, m.sumsq[ci] / n - mean * mean);
    out.mu[ci] = mean;
    out.sigma[ci] = std::clamp(std::sqrt(var), kSigmaFloor, kSigmaCeil);
  }
  return out;
}

/// Population std of the anomaly X_t - C_t per channel, clamped.
inline std::vector<double> compute_anomaly_stats(const DatasetContainer& data, const Climatology& clim) {
  require(data.size() > 0, "compute_anomaly_stats: empty dataset");
  detail::Moments m;
  for (int64_t i = 0; i < data.size(); ++i) {
    GriddedState s = data.state(i);
    const Tensor c = clim.lookup(s.timestamp);  // throws if the slot is missing
    for (int64_t k = 0; k < s.values.numel(); ++k) s.values[k] -= c[k];
    detail::accumulate_channel_moments(s.values, m);
  }
  std::vector<double> sigma_c(m.sum.size());
  const double n = static_cast<double>(m.count);
  for (size_t ci = 0; ci < sigma_c.size(); ++ci) {
    const double mean = m.sum[ci] / n;
    const double var = std::max(0.0, m.sumsq[ci] / n - mean * mean);
    sigma_c[ci] = std::clamp(std::sqrt(var), kSigmaCFloor, kSigmaCCeil);
  }
  return sigma_c;
}

inline Tensor normalize(const Tensor& values, const NormStats& stats) {
  require(values.ndim() == 3 && values.dim(0) == stats.channels(), "normalize: channel count mismatch");
  const int64_t hw = values.dim(1) * values.dim(2);
  Tensor out = values;
  for (int64_t c = 0; c < stats.channels(); ++c) {
    double* p = out.data() + c * hw;
    const double mu = stats.mu[static_cast<size_t>(c)];
    const double inv = 1.0 / stats.sigma[static_cast<size_t>(c)];
    for (int64_t i = 0; i < hw; ++i) p[i] = (p[i] - mu) * inv;
  }
  return out;
}

inline Tensor denormalize(const Tensor& values, const NormStats& stats) {
  require(values.ndim() == 3 && values.dim(0) == stats.channels(), "denormalize: channel count mismatch");
  const int64_t hw = values.dim(1) * values.dim(2);
  Tensor out = values;
  for (int64_t c = 0; c < stats.channels(); ++c) {
    double* p = out.data() + c * hw;
    const double mu = stats.mu[static_cast<size_t>(c)];
    const double s = stats.sigma[static_cast<size_t>(c)];
    for (int64_t i = 0; i < hw; ++i) p[i] = p[i] * s + mu;
  }
  return out;
}

}  // namespace wxc
