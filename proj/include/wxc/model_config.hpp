#pragma once

#include <nlohmann/json.hpp>

#include "wxc/grid.hpp"

namespace wxc {

/// Architectural hyperparameters of the encoder-decoder. Blocks alternate
/// local/global attention, starting and ending with local, so block counts
/// must be odd.
struct ModelConfig {
  int64_t grid_h = 0, grid_w = 0;  // pixels
  int64_t patch_h = 2, patch_w = 2;
  int64_t window_h = 0, window_w = 0;  // pixels
  int64_t embed_dim = 0;
  int64_t n_heads = 1;
  double mlp_ratio = 4.0;
  int64_t n_encoder_blocks = 1;
  int64_t n_decoder_blocks = 1;
  double drop_path_rate = 0.0;
  bool swin_shift_encoder = false;
  bool swin_shift_decoder = true;
  bool swin_wrap_lat = true;  // cyclic wrap in latitude for the shift
  int64_t in_channels = 0;       // dynamic inputs, 2 x C
  int64_t context_channels = 0;  // climatology C + statics
  int64_t out_channels = 0;
  std::vector<int> lead_time_set = {0, 6, 12, 24};
  std::vector<int> input_delta_set = {-3, -6, -9, -12};
  int64_t pos_harmonics = 0;  // 0 = auto

  int64_t tokens_h() const { return grid_h / patch_h; }
  int64_t tokens_w() const { return grid_w / patch_w; }
  int64_t window_rows() const { return grid_h / window_h; }
  int64_t window_cols() const { return grid_w / window_w; }
  int64_t n_windows() const { return window_rows() * window_cols(); }
  int64_t win_tokens_h() const { return window_h / patch_h; }
  int64_t win_tokens_w() const { return window_w / patch_w; }
  int64_t tokens_per_window() const { return win_tokens_h() * win_tokens_w(); }
  int64_t n_tokens() const { return n_windows() * tokens_per_window(); }

  int64_t harmonics() const {
    if (pos_harmonics > 0) return pos_harmonics;
    return std::max<int64_t>(1, std::min<int64_t>(32, embed_dim / 4));
  }

  /// true = global attention at this block position.
  static bool block_is_global(int64_t i) { return i % 2 == 1; }
  static int64_t local_blocks(int64_t n) { return (n + 1) / 2; }
  static int64_t global_blocks(int64_t n) { return n / 2; }

  void validate() const {
    require(grid_h > 0 && grid_w > 0, "model: grid unset");
    require(window_h > 0 && window_w > 0 && grid_h % window_h == 0 && grid_w % window_w == 0,
            "model: grid must divide into windows");
    require(patch_h > 0 && patch_w > 0 && window_h % patch_h == 0 && window_w % patch_w == 0,
            "model: windows must divide into tokens");
    require(embed_dim > 0 && n_heads > 0 && embed_dim % n_heads == 0,
            "model: embed_dim must be divisible by n_heads");
    require(n_encoder_blocks >= 1 && n_encoder_blocks % 2 == 1,
            "model: encoder must start and end with local attention (odd block count)");
    require(n_decoder_blocks >= 1 && n_decoder_blocks % 2 == 1,
            "model: decoder must start and end with local attention (odd block count)");
    require(in_channels > 0 && context_channels > 0 && out_channels > 0, "model: channel counts unset");
    require(!lead_time_set.empty() && !input_delta_set.empty(), "model: time sets unset");
    require(drop_path_rate >= 0.0 && drop_path_rate < 1.0, "model: drop_path_rate out of range");
    require(4 * harmonics() <= std::max<int64_t>(embed_dim, 4), "model: too many position harmonics");
  }

  int64_t lead_index(int dt) const {
    for (size_t i = 0; i < lead_time_set.size(); ++i) {
      if (lead_time_set[i] == dt) return static_cast<int64_t>(i);
    }
    fail("lead time " + std::to_string(dt) + " not in configured set");
  }
  int64_t delta_index(int dtau) const {
    for (size_t i = 0; i < input_delta_set.size(); ++i) {
      if (input_delta_set[i] == dtau) return static_cast<int64_t>(i);
    }
    fail("input delta " + std::to_string(dtau) + " not in configured set");
  }
};

/// Exact parameter count from metadata alone plus the analytic
/// transformer-core estimate 12 d^2 (n_enc + n_dec).
struct ParamCount {
  int64_t total = 0;
  double analytic_core = 0.0;
};

inline ParamCount count_parameters(const ModelConfig& cfg) {
  cfg.validate();
  const int64_t d = cfg.embed_dim;
  const int64_t m = static_cast<int64_t>(cfg.mlp_ratio * static_cast<double>(d));
  const int64_t pp = cfg.patch_h * cfg.patch_w;
  int64_t total = 0;
  total += cfg.in_channels * pp * d + d;       // dynamic patch embed
  total += cfg.context_channels * pp * d + d;  // context patch embed
  total += static_cast<int64_t>(cfg.lead_time_set.size()) * d;
  total += static_cast<int64_t>(cfg.input_delta_set.size()) * d;
  total += d;  // mask token
  const int64_t per_block = (2 * d) + (d * 3 * d + 3 * d) + (d * d + d) + (2 * d) + (d * m + m) + (m * d + d);
  total += per_block * (cfg.n_encoder_blocks + cfg.n_decoder_blocks);
  total += 2 * d;  // encoder final norm
  total += 2 * d;  // decoder final norm
  total += d * (cfg.out_channels * pp) + cfg.out_channels * pp;  // output head
  ParamCount out;
  out.total = total;
  out.analytic_core =
      12.0 * static_cast<double>(d) * static_cast<double>(d) * static_cast<double>(cfg.n_encoder_blocks + cfg.n_decoder_blocks);
  return out;
}

inline json model_config_to_json(const ModelConfig& c) {
  return json{{"grid_h", c.grid_h},
              {"grid_w", c.grid_w},
              {"patch_h", c.patch_h},
              {"patch_w", c.patch_w},
              {"window_h", c.window_h},
              {"window_w", c.window_w},
              {"embed_dim", c.embed_dim},
              {"n_heads", c.n_heads},
              {"mlp_ratio", c.mlp_ratio},
              {"n_encoder_blocks", c.n_encoder_blocks},
              {"n_decoder_blocks", c.n_decoder_blocks},
              {"drop_path_rate", c.drop_path_rate},
              {"swin_shift_encoder", c.swin_shift_encoder},
              {"swin_shift_decoder", c.swin_shift_decoder},
              {"swin_wrap_lat", c.swin_wrap_lat},
              {"in_channels", c.in_channels},
              {"context_channels", c.context_channels},
              {"out_channels", c.out_channels},
              {"lead_time_set", c.lead_time_set},
              {"input_delta_set", c.input_delta_set},
              {"pos_harmonics", c.pos_harmonics}};
}

inline ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.grid_h = j.at("grid_h").get<int64_t>();
  c.grid_w = j.at("grid_w").get<int64_t>();
  c.patch_h = j.at("patch_h").get<int64_t>();
  c.patch_w = j.at("patch_w").get<int64_t>();
  c.window_h = j.at("window_h").get<int64_t>();
  c.window_w = j.at("window_w").get<int64_t>();
  c.embed_dim = j.at("embed_dim").get<int64_t>();
  c.n_heads = j.at("n_heads").get<int64_t>();
  c.mlp_ratio = j.at("mlp_ratio").get<double>();
  c.n_encoder_blocks = j.at("n_encoder_blocks").get<int64_t>();
  c.n_decoder_blocks = j.at("n_decoder_blocks").get<int64_t>();
  c.drop_path_rate = j.at("drop_path_rate").get<double>();
  c.swin_shift_encoder = j.at("swin_shift_encoder").get<bool>();
  c.swin_shift_decoder = j.at("swin_shift_decoder").get<bool>();
  c.swin_wrap_lat = j.at("swin_wrap_lat").get<bool>();
  c.in_channels = j.at("in_channels").get<int64_t>();
  c.context_channels = j.at("context_channels").get<int64_t>();
  c.out_channels = j.at("out_channels").get<int64_t>();
  c.lead_time_set = j.at("lead_time_set").get<std::vector<int>>();
  c.input_delta_set = j.at("input_delta_set").get<std::vector<int>>();
  c.pos_harmonics = j.at("pos_harmonics").get<int64_t>();
  c.validate();
  return c;
}

/// Full-scale geometry: 360 x 576 pixels, 2x2 tokens, 30x32 px windows,
/// width 2560, 25+5 blocks, 160 in/out channels.
inline ModelConfig paper_model_config() {
  ModelConfig c;
  c.grid_h = 360;
  c.grid_w = 576;
  c.patch_h = c.patch_w = 2;
  c.window_h = 30;
  c.window_w = 32;
  c.embed_dim = 2560;
  c.n_heads = 16;
  c.mlp_ratio = 4.0;
  c.n_encoder_blocks = 25;
  c.n_decoder_blocks = 5;
  c.drop_path_rate = 0.05;
  c.in_channels = 320;
  c.context_channels = 160 + 8;
  c.out_channels = 160;
  c.validate();
  return c;
}

/// Desk-scale geometry matching desk_catalog(): 24 x 48 grid, 9 channels.
inline ModelConfig desk_model_config() {
  ModelConfig c;
  c.grid_h = 24;
  c.grid_w = 48;
  c.patch_h = c.patch_w = 2;
  c.window_h = 6;
  c.window_w = 8;
  c.embed_dim = 64;
  c.n_heads = 4;
  c.mlp_ratio = 2.0;
  c.n_encoder_blocks = 5;
  c.n_decoder_blocks = 3;
  c.in_channels = 18;
  c.context_channels = 9 + 8;
  c.out_channels = 9;
  c.lead_time_set = {0, 6};
  c.input_delta_set = {-6};
  c.validate();
  return c;
}

}  // namespace wxc
