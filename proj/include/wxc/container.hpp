#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <optional>

#include "wxc/grid.hpp"

namespace wxc {

using json = nlohmann::json;
namespace fs = std::filesystem;

// --- flat float32 payloads -------------------------------------------------

inline void write_f32(const fs::path& path, const double* data, int64_t n) {
  std::vector<float> buf(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) buf[static_cast<size_t>(i)] = static_cast<float>(data[i]);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(f.good(), "cannot open for write: " + path.string());
  f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  require(f.good(), "write failed: " + path.string());
}

inline void read_f32(const fs::path& path, double* data, int64_t n) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), "cannot open for read: " + path.string());
  f.seekg(0, std::ios::end);
  const auto bytes = static_cast<int64_t>(f.tellg());
  require(bytes == n * static_cast<int64_t>(sizeof(float)),
          "payload byte length mismatch for " + path.string() + ": have " + std::to_string(bytes) + ", manifest says " +
              std::to_string(n * 4));
  f.seekg(0);
  std::vector<float> buf(static_cast<size_t>(n));
  f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  require(f.good(), "read failed: " + path.string());
  for (int64_t i = 0; i < n; ++i) data[i] = static_cast<double>(buf[static_cast<size_t>(i)]);
}

inline void write_json(const fs::path& path, const json& j) {
  std::ofstream f(path, std::ios::trunc);
  require(f.good(), "cannot open for write: " + path.string());
  f << j.dump(2) << "\n";
}

inline json read_json(const fs::path& path) {
  std::ifstream f(path);
  require(f.good(), "cannot open for read: " + path.string());
  return json::parse(f);
}

inline uint64_t fnv1a_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), "cannot open for hash: " + path.string());
  uint64_t h = 0xcbf29ce484222325ULL;
  char buf[65536];
  while (f) {
    f.read(buf, sizeof(buf));
    const auto got = f.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

// --- catalog / grid <-> json ----------------------------------------------

inline json catalog_to_json(const VariableCatalog& c) {
  return json{{"surface_vars", c.surface_vars},
              {"vertical_vars", c.vertical_vars},
              {"levels_hpa", c.levels_hpa},
              {"static_vars", c.static_vars}};
}

inline VariableCatalog catalog_from_json(const json& j) {
  VariableCatalog c;
  c.surface_vars = j.at("surface_vars").get<std::vector<std::string>>();
  c.vertical_vars = j.at("vertical_vars").get<std::vector<std::string>>();
  c.levels_hpa = j.at("levels_hpa").get<std::vector<double>>();
  c.static_vars = j.at("static_vars").get<std::vector<std::string>>();
  c.validate();
  return c;
}

inline json grid_to_json(const GridSpec& g) {
  return json{{"h", g.h}, {"w", g.w}, {"lat0", g.lat0}, {"dlat", g.dlat}, {"lon0", g.lon0}, {"dlon", g.dlon}};
}

inline GridSpec grid_from_json(const json& j) {
  GridSpec g;
  g.h = j.at("h").get<int64_t>();
  g.w = j.at("w").get<int64_t>();
  g.lat0 = j.at("lat0").get<double>();
  g.dlat = j.at("dlat").get<double>();
  g.lon0 = j.at("lon0").get<double>();
  g.dlon = j.at("dlon").get<double>();
  g.validate();
  return g;
}

// --- dataset container -----------------------------------------------------

/// Directory-backed dataset: manifest.json plus one flat little-endian
/// float32 file per timestamped state (C-order [C,H,W]), and one statics
/// payload shared by all states.
class DatasetContainer {
 public:
  DatasetContainer() = default;

  static DatasetContainer create(const fs::path& dir, VariableCatalog catalog, GridSpec grid, StaticFields statics) {
    catalog.validate();
    grid.validate();
    fs::create_directories(dir / "states");
    DatasetContainer d;
    d.dir_ = dir;
    d.catalog_ = std::move(catalog);
    d.grid_ = grid;
    d.statics_ = std::move(statics);
    write_f32(dir / "statics.f32", d.statics_.fields.data(), d.statics_.fields.numel());
    d.write_manifest();
    return d;
  }

  static DatasetContainer open(const fs::path& dir) {
    DatasetContainer d;
    d.dir_ = dir;
    const json m = read_json(dir / "manifest.json");
    require(m.at("dtype").get<std::string>() == "float32le", "dataset: unsupported dtype");
    d.catalog_ = catalog_from_json(m.at("catalog"));
    d.grid_ = grid_from_json(m.at("grid"));
    for (const auto& ts : m.at("timestamps")) d.timestamps_.push_back(DateTime::parse_iso(ts.get<std::string>()));
    d.files_ = m.at("files").get<std::vector<std::string>>();
    require(d.files_.size() == d.timestamps_.size(), "dataset: files/timestamps length mismatch");
    const int64_t expect = m.at("payload_bytes").get<int64_t>();
    require(expect == d.catalog_.channels() * d.grid_.h * d.grid_.w * 4, "dataset: manifest payload size inconsistent");
    const int64_t s_geo = static_cast<int64_t>(d.catalog_.static_vars.size());
    d.statics_.grid = d.grid_;
    d.statics_.fields = Tensor({s_geo, d.grid_.h, d.grid_.w});
    read_f32(dir / "statics.f32", d.statics_.fields.data(), d.statics_.fields.numel());
    return d;
  }

  void append(const GriddedState& s) {
    s.validate(catalog_);
    require(s.grid == grid_, "dataset: appended state uses a different grid");
    char name[32];
    std::snprintf(name, sizeof(name), "states/%06zu.f32", timestamps_.size());
    write_f32(dir_ / name, s.values.data(), s.values.numel());
    timestamps_.push_back(s.timestamp);
    files_.emplace_back(name);
  }

  void finalize() { write_manifest(); }

  int64_t size() const { return static_cast<int64_t>(timestamps_.size()); }
  const std::vector<DateTime>& timestamps() const { return timestamps_; }
  const VariableCatalog& catalog() const { return catalog_; }
  const GridSpec& grid() const { return grid_; }
  const StaticFields& statics() const { return statics_; }
  const fs::path& dir() const { return dir_; }

  GriddedState state(int64_t i) const {
    require(i >= 0 && i < size(), "dataset: state index out of range");
    GriddedState s;
    s.timestamp = timestamps_[static_cast<size_t>(i)];
    s.grid = grid_;
    s.values = Tensor({catalog_.channels(), grid_.h, grid_.w});
    read_f32(dir_ / files_[static_cast<size_t>(i)], s.values.data(), s.values.numel());
    if (!s.values.all_finite()) {
      const int64_t hw = grid_.h * grid_.w;
      for (int64_t c = 0; c < catalog_.channels(); ++c) {
        for (int64_t k = 0; k < hw; ++k) {
          if (!std::isfinite(s.values[c * hw + k])) {
            fail("dataset: NaN/Inf in channel " + catalog_.channel_name(c) + " at " + s.timestamp.iso());
          }
        }
      }
    }
    return s;
  }

  /// Index of the state at an exact timestamp, if present.
  std::optional<int64_t> index_at(const DateTime& t) const {
    for (size_t i = 0; i < timestamps_.size(); ++i) {
      if (timestamps_[i] == t) return static_cast<int64_t>(i);
    }
    return std::nullopt;
  }

 private:
  void write_manifest() const {
    json m;
    m["dtype"] = "float32le";
    m["catalog"] = catalog_to_json(catalog_);
    m["grid"] = grid_to_json(grid_);
    m["payload_bytes"] = catalog_.channels() * grid_.h * grid_.w * 4;
    json ts = json::array();
    for (const auto& t : timestamps_) ts.push_back(t.iso());
    m["timestamps"] = std::move(ts);
    m["files"] = files_;
    write_json(dir_ / "manifest.json", m);
  }

  fs::path dir_;
  VariableCatalog catalog_;
  GridSpec grid_;
  StaticFields statics_;
  std::vector<DateTime> timestamps_;
  std::vector<std::string> files_;
};

}  // namespace wxc
