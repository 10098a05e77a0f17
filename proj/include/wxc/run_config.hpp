#pragma once

#include "wxc/model_config.hpp"
#include "wxc/synthetic.hpp"
#include "wxc/trainer.hpp"

namespace wxc {

/// Default configuration document. Paper-scale values where the source
/// states them, desk-scale values otherwise; every key that may appear in
/// a user config exists here (unknown keys are rejected).
inline json default_run_config() {
  json j;
  j["data"] = {
      {"preset", "desk"},  // "desk" | "paper"
      {"grid_h", 24},
      {"grid_w", 48},
      {"start_year", 2000},
      {"n_years", 1},
      {"cadence_hours", 6},
      {"annual_amp", 1.0},
      {"diurnal_amp", 1.0},
      {"texture_amp", 0.6},
      {"anomaly_amp", 0.5},
      {"noise_amp", 0.05},
      {"storm",
       {{"enabled", false},
        {"lat0", 15.0},
        {"lon0", 210.0},
        {"dlat_per_hour", 0.15},
        {"dlon_per_hour", -0.5},
        {"depth", 25.0},
        {"radius_deg", 8.0},
        {"wind_peak", 30.0},
        {"hours", 0.0}}},
  };
  j["model"] = model_config_to_json(desk_model_config());
  j["training"] = {
      {"phase", "phase1"},  // "phase1" | "phase2"
      {"steps", 200},
      {"batch_size", 4},
      {"fixed_sample_count", 0},  // >0: train on that many fixed time indices
      {"mask_ratio", 0.5},
      {"mask_alternation", true},
      {"drop_path_rate", 0.05},
      {"swin_shift_encoder", false},
      {"lead_time_set", json::array({0, 6, 12, 24})},
      {"input_delta_set", json::array({-3, -6, -9, -12})},
      {"rollout_steps", 1},
      {"schedule",
       {{"kind", "warmup_cosine"},  // "warmup_cosine" | "constant"
        {"peak_lr", 1e-4},
        {"final_lr", 1e-5},
        {"warmup_steps", 2500},
        {"total_steps", 100000},
        {"constant_lr", 1e-5}}},
      {"use_variable_weights", true},
      {"lat_weighted_loss", false},
      {"checkpoint_every", 0},
      {"seed_offset", 0},
  };
  j["finetune"] = {
      {"preset", "merra6x"},  // "merra6x" | "cordex12x" | "gwflux"
      {"steps", 400},
      {"batch_size", 4},
      {"lr", 2e-3},
      {"feature_dim", 24},
      {"target_variable", "SLP"},
      {"train_samples", 32},
      {"eval_samples", 8},
      {"gw", {{"in_channels", 12}, {"out_channels", 6}, {"grid_h", 16}, {"grid_w", 32}, {"base_channels", 16},
              {"levels", 3}, {"noise_sigma", 0.05}, {"samples", 12}}},
  };
  j["eval"] = {
      {"ratios", json::array({0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99})},
      {"strategies", json::array({"local", "global"})},
      {"lead_times", json::array({0, 6})},
      {"input_delta", -6},
      {"max_lead_hours", 24},
      {"step_hours", 6},
      {"samples", 4},
      {"lat_weighted", false},
      {"spectra_variable", "SLP"},
      {"spectra_time_index", 0},
      {"track",
       {{"init_lat", 15.0},
        {"init_lon", 210.0},
        {"search_radius_km", 450.0},
        {"start_index", 0},
        {"n_frames", 0},
        {"reference_csv", ""}}},
  };
  return j;
}

/// Merge a user document over the defaults, rejecting unknown keys with
/// the offending dotted path in the error.
inline json merge_config(const json& defaults, const json& user, const std::string& path = "") {
  json out = defaults;
  require(user.is_object(), "config: expected an object at " + (path.empty() ? std::string("<root>") : path));
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key_path = path.empty() ? it.key() : path + "." + it.key();
    if (!defaults.contains(it.key())) {
      fail("config: unknown key '" + key_path + "'");
    }
    if (defaults[it.key()].is_object() && !it.value().is_array()) {
      out[it.key()] = merge_config(defaults[it.key()], it.value(), key_path);
    } else {
      out[it.key()] = it.value();
    }
  }
  return out;
}

/// Load --config (if given) over the defaults.
inline json resolve_run_config(const std::string& config_path) {
  const json defaults = default_run_config();
  if (config_path.empty()) return defaults;
  return merge_config(defaults, read_json(config_path));
}

inline SyntheticConfig synthetic_config_from(const json& data_cfg) {
  SyntheticConfig s;
  const std::string preset = data_cfg.at("preset").get<std::string>();
  if (preset == "paper") {
    s.catalog = paper_catalog();
  } else if (preset == "desk") {
    s.catalog = desk_catalog();
  } else {
    fail("config: unknown data.preset '" + preset + "'");
  }
  s.grid = make_global_grid(data_cfg.at("grid_h").get<int64_t>(), data_cfg.at("grid_w").get<int64_t>());
  s.start_year = data_cfg.at("start_year").get<int>();
  s.n_years = data_cfg.at("n_years").get<int>();
  s.cadence_hours = data_cfg.at("cadence_hours").get<int>();
  s.annual_amp = data_cfg.at("annual_amp").get<double>();
  s.diurnal_amp = data_cfg.at("diurnal_amp").get<double>();
  s.texture_amp = data_cfg.at("texture_amp").get<double>();
  s.anomaly_amp = data_cfg.at("anomaly_amp").get<double>();
  s.noise_amp = data_cfg.at("noise_amp").get<double>();
  const json& st = data_cfg.at("storm");
  s.storm.enabled = st.at("enabled").get<bool>();
  s.storm.lat0 = st.at("lat0").get<double>();
  s.storm.lon0 = st.at("lon0").get<double>();
  s.storm.dlat_per_hour = st.at("dlat_per_hour").get<double>();
  s.storm.dlon_per_hour = st.at("dlon_per_hour").get<double>();
  s.storm.depth = st.at("depth").get<double>();
  s.storm.radius_deg = st.at("radius_deg").get<double>();
  s.storm.wind_peak = st.at("wind_peak").get<double>();
  s.storm.hours = st.at("hours").get<double>();
  return s;
}

inline TrainPhaseConfig phase_config_from(const json& tr) {
  const std::string phase = tr.at("phase").get<std::string>();
  TrainPhaseConfig p = phase == "phase2" ? TrainPhaseConfig::phase2() : TrainPhaseConfig::phase1();
  require(phase == "phase1" || phase == "phase2", "config: unknown training.phase '" + phase + "'");
  p.mask_ratio = tr.at("mask_ratio").get<double>();
  p.mask_alternation = tr.at("mask_alternation").get<bool>();
  p.drop_path_rate = tr.at("drop_path_rate").get<double>();
  p.swin_shift_encoder = tr.at("swin_shift_encoder").get<bool>();
  p.lead_time_set = tr.at("lead_time_set").get<std::vector<int>>();
  p.input_delta_set = tr.at("input_delta_set").get<std::vector<int>>();
  p.rollout_steps = tr.at("rollout_steps").get<int>();
  const json& sch = tr.at("schedule");
  const std::string kind = sch.at("kind").get<std::string>();
  if (kind == "constant") {
    p.schedule = LrSchedule::constant(sch.at("constant_lr").get<double>());
  } else {
    require(kind == "warmup_cosine", "config: unknown schedule.kind '" + kind + "'");
    p.schedule.kind = LrSchedule::Kind::WarmupCosine;
    p.schedule.peak_lr = sch.at("peak_lr").get<double>();
    p.schedule.final_lr = sch.at("final_lr").get<double>();
    p.schedule.warmup_steps = sch.at("warmup_steps").get<int64_t>();
    p.schedule.total_steps = sch.at("total_steps").get<int64_t>();
  }
  p.use_variable_weights = tr.at("use_variable_weights").get<bool>();
  p.lat_weighted_loss = tr.at("lat_weighted_loss").get<bool>();
  return p;
}

}  // namespace wxc
