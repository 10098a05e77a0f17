#include <catch2/catch_amalgamated.hpp>

#include "wxc/climatology.hpp"
#include "wxc/container.hpp"
#include "wxc/stats.hpp"
#include "wxc/synthetic.hpp"

using namespace wxc;

namespace {

VariableCatalog one_channel_catalog() {
  VariableCatalog c;
  c.surface_vars = {"SLP"};
  c.static_vars = {"PHIS", "FRLAND", "FROCEAN", "FRACI"};
  return c;
}

StaticFields zero_statics(const VariableCatalog& cat, const GridSpec& grid) {
  StaticFields s;
  s.grid = grid;
  s.fields = Tensor({cat.n_statics(), grid.h, grid.w});
  return s;
}

DatasetContainer make_dataset(const fs::path& dir, const VariableCatalog& cat, const GridSpec& grid,
                              const std::vector<std::pair<DateTime, double>>& values) {
  auto d = DatasetContainer::create(dir, cat, grid, zero_statics(cat, grid));
  for (const auto& [t, v] : values) {
    GriddedState s;
    s.timestamp = t;
    s.grid = grid;
    s.values = Tensor({cat.channels(), grid.h, grid.w}, v);
    d.append(s);
  }
  d.finalize();
  return d;
}

fs::path tmp_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("wxc_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("catalog channel accounting") {
  const VariableCatalog paper = paper_catalog();
  REQUIRE(paper.channels() == 160);
  REQUIRE(paper.surface_vars.size() == 20);
  REQUIRE(paper.vertical_vars.size() == 10);
  REQUIRE(paper.levels_hpa.size() == 14);
  REQUIRE(paper.channel_name(0) == "U10M");
  REQUIRE(paper.channel_name(20) == "U@985hPa");
  const VariableCatalog desk = desk_catalog();
  REQUIRE(desk.channels() == 9);

  VariableCatalog bad = desk;
  bad.levels_hpa = {48, 500};  // increasing: invalid
  REQUIRE_THROWS(bad.validate());
}

TEST_CASE("norm stats: degenerate and analytic channels") {
  const GridSpec grid = make_global_grid(4, 8);
  const VariableCatalog cat = one_channel_catalog();
  const DateTime t0 = DateTime::from_ymdh(2000, 1, 1, 0);

  SECTION("constant channel clamps sigma to the floor") {
    auto d = make_dataset(tmp_dir("stats_const"), cat, grid, {{t0, 5.0}, {t0.plus_hours(6), 5.0}});
    NormStats s = compute_norm_stats(d);
    REQUIRE(s.mu[0] == 5.0);
    REQUIRE(s.sigma[0] == kSigmaFloor);
  }
  SECTION("two-point distribution") {
    auto d = make_dataset(tmp_dir("stats_two"), cat, grid, {{t0, 1.0}, {t0.plus_hours(6), 3.0}});
    NormStats s = compute_norm_stats(d);
    REQUIRE_THAT(s.mu[0], Catch::Matchers::WithinAbs(2.0, 1e-12));
    REQUIRE_THAT(s.sigma[0], Catch::Matchers::WithinAbs(1.0, 1e-12));
  }
  SECTION("tiny-magnitude channel clamps up to the sigma floor") {
    auto d = make_dataset(tmp_dir("stats_tiny"), cat, grid, {{t0, 1e-26}, {t0.plus_hours(6), -1e-26}});
    NormStats s = compute_norm_stats(d);
    REQUIRE(s.sigma[0] == kSigmaFloor);
  }
  SECTION("empty dataset errors") {
    auto d = make_dataset(tmp_dir("stats_empty"), cat, grid, {});
    REQUIRE_THROWS_WITH(compute_norm_stats(d), Catch::Matchers::ContainsSubstring("empty"));
  }
  SECTION("NaN payload errors with channel and timestamp") {
    auto dir = tmp_dir("stats_nan");
    auto d = make_dataset(dir, cat, grid, {{t0, 1.0}});
    // poison the payload on disk
    std::vector<float> buf(static_cast<size_t>(grid.h * grid.w), std::numeric_limits<float>::quiet_NaN());
    std::ofstream f(dir / "states" / "000000.f32", std::ios::binary | std::ios::trunc);
    f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
    f.close();
    auto reopened = DatasetContainer::open(dir);
    REQUIRE_THROWS_WITH(compute_norm_stats(reopened),
                        Catch::Matchers::ContainsSubstring("SLP") &&
                            Catch::Matchers::ContainsSubstring("2000-01-01T00:00:00Z"));
  }
}

TEST_CASE("normalize and denormalize") {
  const GridSpec grid = make_global_grid(4, 8);
  NormStats s;
  s.mu = {2.0};
  s.sigma = {2.0};
  Tensor x({1, grid.h, grid.w}, 6.0);
  Tensor n = normalize(x, s);
  REQUIRE(n[0] == 2.0);
  Tensor x2({1, grid.h, grid.w}, 2.0);
  REQUIRE(normalize(x2, s)[0] == 0.0);

  // roundtrip on a seeded random field
  Rng rng(5);
  Tensor r({1, grid.h, grid.w});
  rng.fill_normal(r, 3.0, 10.0);
  Tensor round = denormalize(normalize(r, s), s);
  REQUIRE(max_abs_diff(round, r) < 1e-5);

  Tensor bad({2, grid.h, grid.w});
  REQUIRE_THROWS(normalize(bad, s));
}

TEST_CASE("climatology window weights") {
  const auto w = climatology_window_weights(61);
  REQUIRE(w.size() == 61);
  double sum = 0.0;
  for (double v : w) {
    REQUIRE(v >= 0.0);
    sum += v;
  }
  REQUIRE(std::abs(sum - 1.0) < 1e-12);
  for (int d = 0; d < 61; ++d) REQUIRE(w[static_cast<size_t>(d)] == w[static_cast<size_t>(60 - d)]);
  REQUIRE(w[30] > w[0]);
}

TEST_CASE("climatology of a constant dataset is constant") {
  const GridSpec grid = make_global_grid(2, 4);
  const VariableCatalog cat = one_channel_catalog();
  std::vector<std::pair<DateTime, double>> values;
  DateTime t = DateTime::from_ymdh(2001, 1, 1, 0);
  const DateTime end = DateTime::from_ymdh(2002, 1, 1, 0);
  for (; t < end; t = t.plus_hours(12)) values.emplace_back(t, 7.5);
  auto d = make_dataset(tmp_dir("clim_const"), cat, grid, values);
  Climatology clim = build_climatology(d);
  REQUIRE(clim.slots_per_day() == 2);
  Tensor c = clim.lookup(DateTime::from_ymdh(2001, 6, 15, 12));
  for (int64_t i = 0; i < c.numel(); ++i) REQUIRE_THAT(c[i], Catch::Matchers::WithinAbs(7.5, 1e-5));
  // leap day aliases day 365
  REQUIRE_NOTHROW(clim.lookup(DateTime::from_ymdh(2004, 12, 31, 0)));
}

TEST_CASE("climatology sample accounting on a 2-year build") {
  const GridSpec grid = make_global_grid(2, 4);
  const VariableCatalog cat = one_channel_catalog();
  std::vector<std::pair<DateTime, double>> values;
  for (int year = 0; year < 2; ++year) {
    DateTime t = DateTime::from_ymdh(2001 + year, 1, 1, 0);
    const DateTime end = DateTime::from_ymdh(2002 + year, 1, 1, 0);
    for (; t < end; t = t.plus_hours(24)) values.emplace_back(t, 1.0);
  }
  auto d = make_dataset(tmp_dir("clim_counts"), cat, grid, values);
  Climatology clim = build_climatology(d);
  // every slot saw 2 samples (2 years, incl. the leap day aliasing onto 365)
  REQUIRE(clim.samples_per_pixel(100, 0) >= 2 * 61);
  REQUIRE(clim.samples_per_pixel(100, 0) <= 2 * 61 + 2);
}

TEST_CASE("climatology matches the closed-form weighted average (oracle)") {
  // X(doy) = sin(2 pi doy/365) + eps, 5 years, daily cadence
  const GridSpec grid = make_global_grid(2, 4);
  const VariableCatalog cat = one_channel_catalog();
  const double noise_sigma = 0.1;
  const int years = 5;
  Rng noise(99);

  auto dir = tmp_dir("clim_oracle");
  auto d = DatasetContainer::create(dir, cat, grid, zero_statics(cat, grid));
  for (int y = 0; y < years; ++y) {
    DateTime t = DateTime::from_ymdh(2001 + y, 1, 1, 0);
    const DateTime end = DateTime::from_ymdh(2002 + y, 1, 1, 0);
    for (; t < end; t = t.plus_hours(24)) {
      GriddedState s;
      s.timestamp = t;
      s.grid = grid;
      const double base = std::sin(2.0 * M_PI * t.day_of_year() / 365.0);
      s.values = Tensor({1, grid.h, grid.w});
      for (int64_t i = 0; i < s.values.numel(); ++i) s.values[i] = base + noise.normal(0.0, noise_sigma);
      d.append(s);
    }
  }
  d.finalize();
  Climatology clim = build_climatology(d);

  // closed-form oracle: sum_j w_j sin(2 pi (doy+j)/365), averaging the leap
  // alias (day 365 holds both doy 365 and 366 samples in leap years)
  const auto w = climatology_window_weights(61);
  const int check_days[] = {1, 50, 180, 300, 365};
  // propagated noise standard error of the smoothed mean
  double w2 = 0.0;
  for (double v : w) w2 += v * v;
  const double se = noise_sigma * std::sqrt(w2 / years);
  for (int day : check_days) {
    double oracle = 0.0;
    for (int j = -30; j <= 30; ++j) {
      const int dd = ((day - 1 + j) % 365 + 365) % 365 + 1;
      oracle += w[static_cast<size_t>(j + 30)] * std::sin(2.0 * M_PI * dd / 365.0);
    }
    Tensor c = clim.lookup(DateTime::from_ymdh(2001, 1, 1, 0).plus_hours((day - 1) * 24LL));
    // RMS over pixels of the deviation
    double rms = 0.0;
    for (int64_t i = 0; i < c.numel(); ++i) rms += (c[i] - oracle) * (c[i] - oracle);
    rms = std::sqrt(rms / static_cast<double>(c.numel()));
    INFO("day " << day << " oracle " << oracle << " rms dev " << rms << " se " << se);
    REQUIRE(rms < 3.0 * se);
  }
}

TEST_CASE("anomaly stats") {
  const GridSpec grid = make_global_grid(2, 4);
  const VariableCatalog cat = one_channel_catalog();
  std::vector<std::pair<DateTime, double>> values;
  DateTime t = DateTime::from_ymdh(2001, 1, 1, 0);
  const DateTime end = DateTime::from_ymdh(2002, 1, 1, 0);
  for (; t < end; t = t.plus_hours(12)) values.emplace_back(t, 3.25);
  auto d = make_dataset(tmp_dir("anom_const"), cat, grid, values);
  Climatology clim = build_climatology(d);

  SECTION("dataset equal to climatology clamps sigma_c to the floor") {
    auto sc = compute_anomaly_stats(d, clim);
    REQUIRE(sc[0] == Catch::Approx(kSigmaCFloor));
  }
  SECTION("plus-minus one anomaly has sigma_c 1") {
    // overwrite states with clim +/- 1 alternating
    auto dir2 = tmp_dir("anom_pm1");
    auto d2 = DatasetContainer::create(dir2, cat, grid, zero_statics(cat, grid));
    int k = 0;
    for (DateTime u = DateTime::from_ymdh(2001, 1, 1, 0); u < end; u = u.plus_hours(12), ++k) {
      GriddedState s;
      s.timestamp = u;
      s.grid = grid;
      s.values = Tensor({1, grid.h, grid.w}, 3.25 + (k % 2 == 0 ? 1.0 : -1.0));
      d2.append(s);
    }
    d2.finalize();
    auto sc = compute_anomaly_stats(d2, clim);
    REQUIRE_THAT(sc[0], Catch::Matchers::WithinAbs(1.0, 1e-4));
  }
  SECTION("unit-variance noise around climatology gives sigma_c near 1") {
    auto dir3 = tmp_dir("anom_noise");
    auto d3 = DatasetContainer::create(dir3, cat, grid, zero_statics(cat, grid));
    Rng rng(17);
    for (DateTime u = DateTime::from_ymdh(2001, 1, 1, 0); u < end; u = u.plus_hours(12)) {
      GriddedState s;
      s.timestamp = u;
      s.grid = grid;
      s.values = Tensor({1, grid.h, grid.w});
      for (int64_t i = 0; i < s.values.numel(); ++i) s.values[i] = 3.25 + rng.normal();
      d3.append(s);
    }
    d3.finalize();
    auto sc = compute_anomaly_stats(d3, clim);
    REQUIRE(sc[0] > 0.98);
    REQUIRE(sc[0] < 1.02);
  }
  SECTION("missing climatology entry errors") {
    // climatology built at 12-hourly cadence cannot serve 6-hour offsets
    auto dir4 = tmp_dir("anom_missing");
    auto d4 = DatasetContainer::create(dir4, cat, grid, zero_statics(cat, grid));
    GriddedState s;
    s.timestamp = DateTime::from_ymdh(2001, 1, 1, 6);
    s.grid = grid;
    s.values = Tensor({1, grid.h, grid.w}, 1.0);
    d4.append(s);
    d4.finalize();
    REQUIRE_THROWS_WITH(compute_anomaly_stats(d4, clim), Catch::Matchers::ContainsSubstring("no entry"));
  }
}

TEST_CASE("container roundtrip is bit exact") {
  const GridSpec grid = make_global_grid(4, 8);
  const VariableCatalog cat = desk_catalog();
  auto dir = tmp_dir("container_rt");
  StaticFields statics = zero_statics(cat, grid);
  Rng rng(3);
  rng.fill_uniform(statics.fields, 0.0, 1.0);
  auto d = DatasetContainer::create(dir, cat, grid, statics);
  GriddedState s;
  s.timestamp = DateTime::from_ymdh(2010, 7, 1, 3);
  s.grid = grid;
  s.values = Tensor({cat.channels(), grid.h, grid.w});
  for (int64_t i = 0; i < s.values.numel(); ++i) {
    s.values[i] = static_cast<double>(static_cast<float>(rng.normal(0, 5)));  // f32-representable
  }
  d.append(s);
  d.finalize();

  auto d2 = DatasetContainer::open(dir);
  REQUIRE(d2.size() == 1);
  REQUIRE(d2.timestamps()[0] == s.timestamp);
  REQUIRE(max_abs_diff(d2.state(0).values, s.values) == 0.0);
  REQUIRE(max_abs_diff(d2.statics().fields, statics.fields) < 1e-7);
  REQUIRE(d2.catalog().channels() == cat.channels());
}

TEST_CASE("synthetic generator determinism and structure") {
  SyntheticConfig cfg;
  cfg.catalog = desk_catalog();
  cfg.grid = make_global_grid(8, 16);
  cfg.n_years = 1;
  cfg.cadence_hours = 24 * 36;  // sparse: ~11 states, fast
  SECTION("same seed twice is byte-identical") {
    auto a = generate_synthetic(tmp_dir("synth_a"), 7, cfg);
    auto b = generate_synthetic(tmp_dir("synth_b"), 7, cfg);
    REQUIRE(a.size() == b.size());
    for (int64_t i = 0; i < a.size(); ++i) {
      REQUIRE(max_abs_diff(a.state(i).values, b.state(i).values) == 0.0);
    }
    auto c = generate_synthetic(tmp_dir("synth_c"), 8, cfg);
    REQUIRE(max_abs_diff(a.state(0).values, c.state(0).values) > 0.0);
  }
  SECTION("zero amplitudes give constant fields") {
    SyntheticConfig flat = cfg;
    flat.annual_amp = flat.diurnal_amp = flat.texture_amp = flat.anomaly_amp = flat.noise_amp = 0.0;
    auto d = generate_synthetic(tmp_dir("synth_flat"), 7, flat);
    const Tensor v = d.state(0).values;
    const int64_t hw = v.dim(1) * v.dim(2);
    for (int64_t c = 0; c < v.dim(0); ++c) {
      for (int64_t i = 1; i < hw; ++i) REQUIRE(v[c * hw + i] == v[c * hw]);
    }
  }
  SECTION("hour-of-day means reproduce the injected diurnal cycle") {
    SyntheticConfig diurnal = cfg;
    diurnal.cadence_hours = 6;
    diurnal.annual_amp = 0.0;
    diurnal.texture_amp = 0.0;
    diurnal.anomaly_amp = 0.0;
    diurnal.noise_amp = 0.02;
    auto d = generate_synthetic(tmp_dir("synth_diurnal"), 11, diurnal);
    const auto params = derive_channel_params(11, 0, diurnal);
    // mean over all states sharing an hour slot, channel 0, pixel 0
    std::map<int, std::pair<double, int>> by_hour;
    for (int64_t i = 0; i < d.size(); ++i) {
      const auto s = d.state(i);
      by_hour[static_cast<int>(s.timestamp.hour_of_day())].first += s.values[0];
      by_hour[static_cast<int>(s.timestamp.hour_of_day())].second += 1;
    }
    for (const auto& [hour, acc] : by_hour) {
      const double mean = acc.first / acc.second;
      const double expect = params.base + params.diurnal_amp * std::cos(2.0 * M_PI * hour / 24.0 + params.diurnal_phase);
      REQUIRE_THAT(mean, Catch::Matchers::WithinAbs(expect, 0.02));
    }
  }
}
