#pragma once

#include <iostream>
#include <optional>

#include "wxc/container.hpp"

namespace wxc {

/// Symmetric 2nd-order polynomial window: w(d) proportional to
/// 1 - (d/(half+1))^2 for d in {-half..half}, normalized to sum 1.
inline std::vector<double> climatology_window_weights(int window_days) {
  require(window_days >= 1 && window_days % 2 == 1, "climatology window length must be odd");
  const int half = window_days / 2;
  std::vector<double> w(static_cast<size_t>(window_days));
  double sum = 0.0;
  for (int d = -half; d <= half; ++d) {
    const double x = static_cast<double>(d) / static_cast<double>(half + 1);
    w[static_cast<size_t>(d + half)] = 1.0 - x * x;
    sum += w[static_cast<size_t>(d + half)];
  }
  for (double& v : w) v /= sum;
  return w;
}

/// Day-of-year x hour-of-day climate record C_t: for each slot the
/// multi-year mean, smoothed across the day axis with the polynomial
/// window, wrapping around the year boundary. Day 366 aliases day 365.
class Climatology {
 public:
  static constexpr int kDays = 365;

  Climatology() = default;
  Climatology(VariableCatalog catalog, GridSpec grid, int slots_per_day)
      : catalog_(std::move(catalog)), grid_(grid), slots_per_day_(slots_per_day) {
    require(slots_per_day >= 1 && 24 % slots_per_day == 0, "slots_per_day must divide 24");
    table_.assign(static_cast<size_t>(n_slots() * channels() * grid_.h * grid_.w), 0.0f);
    slot_samples_.assign(static_cast<size_t>(n_slots()), 0);
  }

  int64_t n_slots() const { return static_cast<int64_t>(kDays) * slots_per_day_; }
  int64_t channels() const { return catalog_.channels(); }
  int slots_per_day() const { return slots_per_day_; }
  const VariableCatalog& catalog() const { return catalog_; }
  const GridSpec& grid() const { return grid_; }
  int window_days() const { return window_days_; }
  int years() const { return years_; }

  /// Raw samples aggregated into one smoothed slot (years x window days
  /// under full coverage).
  int64_t samples_per_pixel(int day, int hour_slot) const {
    const std::vector<double> w = climatology_window_weights(window_days_);
    const int half = window_days_ / 2;
    int64_t total = 0;
    for (int j = -half; j <= half; ++j) {
      const int d = ((day - 1 + j) % kDays + kDays) % kDays;
      total += slot_samples_[static_cast<size_t>(d * slots_per_day_ + hour_slot)];
    }
    return total;
  }

  std::optional<int> slot_of(const DateTime& t) const {
    const double hod = t.hour_of_day();
    const int hours_per_slot = 24 / slots_per_day_;
    const double slot_f = hod / hours_per_slot;
    const int slot = static_cast<int>(slot_f);
    if (slot_f != static_cast<double>(slot)) return std::nullopt;
    int day = t.day_of_year();
    if (day > kDays) day = kDays;  // leap day aliases day 365
    return (day - 1) * slots_per_day_ + slot;
  }

  std::optional<Tensor> try_lookup(const DateTime& t) const {
    const auto slot = slot_of(t);
    if (!slot) return std::nullopt;
    const int64_t n = channels() * grid_.h * grid_.w;
    Tensor out({channels(), grid_.h, grid_.w});
    const float* src = table_.data() + static_cast<int64_t>(*slot) * n;
    for (int64_t i = 0; i < n; ++i) out[i] = static_cast<double>(src[i]);
    return out;
  }

  Tensor lookup(const DateTime& t) const {
    auto r = try_lookup(t);
    require(r.has_value(), "climatology: no entry for timestamp " + t.iso());
    return std::move(*r);
  }

  // --- serialization (same container style as datasets) ---

  void save(const fs::path& dir) const {
    fs::create_directories(dir);
    json m;
    m["dtype"] = "float32le";
    m["catalog"] = catalog_to_json(catalog_);
    m["grid"] = grid_to_json(grid_);
    m["slots_per_day"] = slots_per_day_;
    m["window_days"] = window_days_;
    m["years"] = years_;
    m["weight_polynomial"] = "w(d) ~ 1 - (d/(half+1))^2, normalized";
    m["slot_samples"] = slot_samples_;
    m["payload_bytes"] = static_cast<int64_t>(table_.size()) * 4;
    write_json(dir / "manifest.json", m);
    std::ofstream f(dir / "table.f32", std::ios::binary | std::ios::trunc);
    require(f.good(), "cannot write climatology table");
    f.write(reinterpret_cast<const char*>(table_.data()), static_cast<std::streamsize>(table_.size() * 4));
  }

  static Climatology load(const fs::path& dir) {
    const json m = read_json(dir / "manifest.json");
    Climatology c(catalog_from_json(m.at("catalog")), grid_from_json(m.at("grid")), m.at("slots_per_day").get<int>());
    c.window_days_ = m.at("window_days").get<int>();
    c.years_ = m.at("years").get<int>();
    c.slot_samples_ = m.at("slot_samples").get<std::vector<int64_t>>();
    std::ifstream f(dir / "table.f32", std::ios::binary);
    require(f.good(), "cannot read climatology table");
    f.read(reinterpret_cast<char*>(c.table_.data()), static_cast<std::streamsize>(c.table_.size() * 4));
    require(f.gcount() == static_cast<std::streamsize>(c.table_.size() * 4), "climatology table truncated");
    return c;
  }

  friend Climatology build_climatology(const DatasetContainer&, int, bool);

 private:
  VariableCatalog catalog_;
  GridSpec grid_;
  int slots_per_day_ = 0;
  int window_days_ = 61;
  int years_ = 0;
  std::vector<float> table_;
  std::vector<int64_t> slot_samples_;
};

/// Two-pass build: per-slot multi-year means, then the 61-point rolling
/// polynomial average across the day axis (wrapping the year boundary).
/// Slots without samples are skipped and the window renormalizes over
/// the covered days.
inline Climatology build_climatology(const DatasetContainer& data, int window_days = 61, bool quiet = false) {
  require(data.size() > 0, "build_climatology: empty dataset");
  const auto& ts = data.timestamps();

  // Infer the hour cadence: slots per day from the distinct hours present.
  std::vector<int> hours;
  for (const auto& t : ts) {
    const double h = t.hour_of_day();
    const int hi = static_cast<int>(h);
    require(h == static_cast<double>(hi), "build_climatology: timestamps must align to whole hours");
    if (std::find(hours.begin(), hours.end(), hi) == hours.end()) hours.push_back(hi);
  }
  std::sort(hours.begin(), hours.end());
  const int slots_per_day = static_cast<int>(hours.size());
  require(24 % slots_per_day == 0, "build_climatology: hour slots must divide the day evenly");
  const int hours_per_slot = 24 / slots_per_day;
  for (size_t i = 0; i < hours.size(); ++i) {
    require(hours[i] == static_cast<int>(i) * hours_per_slot, "build_climatology: hour slots must be evenly spaced");
  }

  Climatology clim(data.catalog(), data.grid(), slots_per_day);
  const int64_t n_per_slot = clim.channels() * data.grid().h * data.grid().w;
  const int64_t n_slots = clim.n_slots();

  // Pass 1: per-slot means across years.
  std::vector<double> acc(static_cast<size_t>(n_slots * n_per_slot), 0.0);
  std::vector<int64_t> counts(static_cast<size_t>(n_slots), 0);
  int min_year = ts[0].year(), max_year = ts[0].year();
  for (int64_t i = 0; i < data.size(); ++i) {
    const GriddedState s = data.state(i);
    const auto slot = clim.slot_of(s.timestamp);
    require(slot.has_value(), "build_climatology: timestamp off the slot grid: " + s.timestamp.iso());
    double* dst = acc.data() + static_cast<int64_t>(*slot) * n_per_slot;
    for (int64_t k = 0; k < n_per_slot; ++k) dst[k] += s.values[k];
    counts[static_cast<size_t>(*slot)] += 1;
    min_year = std::min(min_year, s.timestamp.year());
    max_year = std::max(max_year, s.timestamp.year());
  }
  const int64_t covered = static_cast<int64_t>(std::count_if(counts.begin(), counts.end(), [](int64_t c) { return c > 0; }));
  if (covered < n_slots && !quiet) {
    std::cerr << "[wxc] climatology: only " << covered << "/" << n_slots
              << " (day,hour) slots covered; proceeding with available samples\n";
  }
  for (int64_t s = 0; s < n_slots; ++s) {
    if (counts[static_cast<size_t>(s)] > 0) {
      const double inv = 1.0 / static_cast<double>(counts[static_cast<size_t>(s)]);
      double* dst = acc.data() + s * n_per_slot;
      for (int64_t k = 0; k < n_per_slot; ++k) dst[k] *= inv;
    }
  }

  // Pass 2: rolling window across days, per hour slot.
  const std::vector<double> w = climatology_window_weights(window_days);
  const int half = window_days / 2;
  for (int day = 0; day < Climatology::kDays; ++day) {
    for (int hs = 0; hs < slots_per_day; ++hs) {
      const int64_t out_slot = static_cast<int64_t>(day) * slots_per_day + hs;
      float* dst = clim.table_.data() + out_slot * n_per_slot;
      // gather covered window entries
      double wsum = 0.0;
      std::vector<std::pair<int64_t, double>> taps;
      taps.reserve(static_cast<size_t>(window_days));
      for (int j = -half; j <= half; ++j) {
        const int d = ((day + j) % Climatology::kDays + Climatology::kDays) % Climatology::kDays;
        const int64_t s = static_cast<int64_t>(d) * slots_per_day + hs;
        if (counts[static_cast<size_t>(s)] > 0) {
          taps.emplace_back(s, w[static_cast<size_t>(j + half)]);
          wsum += w[static_cast<size_t>(j + half)];
        }
      }
      if (taps.empty()) continue;  // slot stays zero; lookup still total
      for (int64_t k = 0; k < n_per_slot; ++k) {
        double v = 0.0;
        for (const auto& [s, wj] : taps) v += wj * acc[static_cast<size_t>(s * n_per_slot + k)];
        dst[k] = static_cast<float>(v / wsum);
      }
    }
  }

  clim.window_days_ = window_days;
  clim.years_ = max_year - min_year + 1;
  clim.slot_samples_ = counts;
  return clim;
}

}  // namespace wxc
