#pragma once

#include "wxc/model.hpp"
#include "wxc/nn_ops.hpp"
#include "wxc/optim.hpp"

namespace wxc {

// --- data-side operators -----------------------------------------------------

/// Block-mean pooling by `factor`. A single trailing latitude row is
/// trimmed when that makes the grid divisible (361 -> 360).
inline Tensor coarsen(const Tensor& field, int64_t factor) {
  require(field.ndim() == 3, "coarsen: expected [C,H,W]");
  const int64_t c = field.dim(0);
  int64_t h = field.dim(1);
  const int64_t w = field.dim(2);
  require(factor > 0, "coarsen: bad factor");
  if (h % factor != 0 && (h - 1) % factor == 0) h -= 1;
  require(h % factor == 0 && w % factor == 0, "coarsen: grid not divisible by factor");
  const int64_t oh = h / factor, ow = w / factor;
  Tensor out({c, oh, ow});
  const double inv = 1.0 / static_cast<double>(factor * factor);
  for (int64_t ci = 0; ci < c; ++ci) {
    for (int64_t y = 0; y < oh; ++y) {
      for (int64_t x = 0; x < ow; ++x) {
        double s = 0.0;
        for (int64_t dy = 0; dy < factor; ++dy) {
          for (int64_t dx = 0; dx < factor; ++dx) {
            s += field.at(ci, y * factor + dy, x * factor + dx);
          }
        }
        out.at(ci, y, x) = s * inv;
      }
    }
  }
  return out;
}

/// 3x3 uniform smoothing; latitude replicates at the poles, longitude wraps.
inline Tensor smooth3x3(const Tensor& field, bool periodic_lon = true) {
  require(field.ndim() == 3, "smooth3x3: expected [C,H,W]");
  const int64_t c = field.dim(0), h = field.dim(1), w = field.dim(2);
  auto map = ad::make_conv_map(h, w, 3, 3, ad::Pad::Replicate, periodic_lon ? ad::Pad::Wrap : ad::Pad::Replicate);
  Tensor out({c, h, w});
  for (int64_t ci = 0; ci < c; ++ci) {
    const double* in = field.data() + ci * h * w;
    double* o = out.data() + ci * h * w;
    for (int64_t p = 0; p < h * w; ++p) {
      double s = 0.0;
      for (int64_t t = 0; t < 9; ++t) {
        const int32_t src = map->src[static_cast<size_t>(p * 9 + t)];
        s += in[src];
      }
      o[p] = s / 9.0;
    }
  }
  return out;
}

/// Nearest / bilinear grid interpolation baseline, longitude-periodic for
/// global grids. Latitude positions are endpoint-anchored so affine fields
/// upsample exactly.
inline Tensor interpolate_baseline(const Tensor& field, int64_t factor, const std::string& method,
                                   bool periodic_lon = true) {
  require(field.ndim() == 3, "interpolate_baseline: expected [C,H,W]");
  ad::InterpMethod m;
  if (method == "nearest") {
    m = ad::InterpMethod::Nearest;
  } else if (method == "bilinear") {
    m = ad::InterpMethod::Bilinear;
  } else {
    fail("interpolate_baseline: unknown method '" + method + "'");
  }
  const int64_t c = field.dim(0), h = field.dim(1), w = field.dim(2);
  auto plan = ad::make_interp_plan(h, w, h * factor, w * factor, m, periodic_lon);
  Tensor out({c, h * factor, w * factor});
  for (int64_t ci = 0; ci < c; ++ci) {
    ad::apply_interp_plan(*plan, field.data() + ci * h * w, out.data() + ci * plan->out_h * plan->out_w);
  }
  return out;
}

// --- fine-tuning head ---------------------------------------------------------

/// SwinIR-flavored downscaling wrapper around a frozen core: shallow
/// feature extraction and pre-core upsampling, the frozen transformer at
/// patch size `core_patch`, a post-transformer convolution, a residual
/// connection to the shallow features, then learned upsampling stages.
struct DownscaleConfig {
  int64_t coarsen_factor = 6;
  int64_t pre_core_upscale = 2;
  std::vector<int64_t> post_core_upscale = {3};
  int64_t core_patch = 1;
  int64_t core_window_h = 0, core_window_w = 0;  // token-space window at core resolution
  int64_t in_channels = 0;
  int64_t out_channels = 1;
  int64_t feature_dim = 32;
  int64_t coarse_h = 0, coarse_w = 0;
  bool periodic_lon = true;
  bool shift_encoder = true, shift_decoder = true;

  int64_t mid_h() const { return coarse_h * pre_core_upscale; }
  int64_t mid_w() const { return coarse_w * pre_core_upscale; }
  int64_t out_h() const {
    int64_t v = mid_h();
    for (int64_t f : post_core_upscale) v *= f;
    return v;
  }
  int64_t out_w() const {
    int64_t v = mid_w();
    for (int64_t f : post_core_upscale) v *= f;
    return v;
  }

  void validate() const {
    int64_t prod = pre_core_upscale;
    for (int64_t f : post_core_upscale) prod *= f;
    require(prod == coarsen_factor, "downscale: coarsen_factor must equal the product of all upscale factors");
    require(in_channels > 0 && out_channels > 0 && feature_dim > 0, "downscale: channel config unset");
    require(coarse_h > 0 && coarse_w > 0, "downscale: coarse grid unset");
    require(core_window_h > 0 && core_window_w > 0, "downscale: core window unset");
    require(mid_h() % (core_window_h * core_patch) == 0 && mid_w() % (core_window_w * core_patch) == 0,
            "downscale: core grid must divide into windows");
  }
};

/// MERRA-2 preset: 360x576 coarsened 6x to 60x96, upscale 2 / core / 3.
inline DownscaleConfig merra6x_config() {
  DownscaleConfig c;
  c.coarsen_factor = 6;
  c.pre_core_upscale = 2;
  c.post_core_upscale = {3};
  c.core_patch = 1;
  c.coarse_h = 60;
  c.coarse_w = 96;
  c.core_window_h = 15;
  c.core_window_w = 16;
  return c;
}

/// CORDEX preset: 444x444 regional grid coarsened 12x to 37x37,
/// upscale 3 / core / 2 / 2.
inline DownscaleConfig cordex12x_config() {
  DownscaleConfig c;
  c.coarsen_factor = 12;
  c.pre_core_upscale = 3;
  c.post_core_upscale = {2, 2};
  c.core_patch = 1;
  c.coarse_h = 37;
  c.coarse_w = 37;
  c.core_window_h = 3;
  c.core_window_w = 3;
  c.periodic_lon = false;
  return c;
}

class DownscaleModel {
 public:
  DownscaleModel(DownscaleConfig cfg, WxCModel& core, uint64_t seed) : cfg_(std::move(cfg)), core_(core) {
    cfg_.validate();
    core_.freeze_core();
    core_.set_drop_path_rate(0.0);
    const int64_t f = cfg_.feature_dim;
    const int64_t d = core_.config().embed_dim;
    const int64_t pp = cfg_.core_patch * cfg_.core_patch;
    Rng rng(derive_seed(seed, 0xD05C));

    core_layout_cfg_ = core_.config();
    core_layout_cfg_.grid_h = cfg_.mid_h();
    core_layout_cfg_.grid_w = cfg_.mid_w();
    core_layout_cfg_.patch_h = core_layout_cfg_.patch_w = cfg_.core_patch;
    core_layout_cfg_.window_h = cfg_.core_window_h * cfg_.core_patch;
    core_layout_cfg_.window_w = cfg_.core_window_w * cfg_.core_patch;
    layout_ = std::make_unique<TokenLayout>(core_layout_cfg_);

    const ad::Pad lon_pad = cfg_.periodic_lon ? ad::Pad::Wrap : ad::Pad::Replicate;
    map_coarse_ = ad::make_conv_map(cfg_.coarse_h, cfg_.coarse_w, 3, 3, ad::Pad::Replicate, lon_pad);
    map_mid_ = ad::make_conv_map(cfg_.mid_h(), cfg_.mid_w(), 3, 3, ad::Pad::Replicate, lon_pad);

    w_shallow_ = add_param("ds.shallow.w", conv_init(rng, {f, cfg_.in_channels, 3, 3}));
    b_shallow_ = add_param("ds.shallow.b", Tensor({f}));
    pre_plan_ = ad::make_interp_plan(cfg_.coarse_h, cfg_.coarse_w, cfg_.mid_h(), cfg_.mid_w(),
                                     ad::InterpMethod::Bilinear, cfg_.periodic_lon);
    w_pre_ = add_param("ds.pre.w", conv_init(rng, {f, f, 3, 3}));
    b_pre_ = add_param("ds.pre.b", Tensor({f}));
    w_core_in_ = add_param("ds.core_in.w", linear_init(rng, {f * pp, d}));
    b_core_in_ = add_param("ds.core_in.b", Tensor({d}));
    w_core_out_ = add_param("ds.core_out.w", linear_init(rng, {d, f * pp}));
    b_core_out_ = add_param("ds.core_out.b", Tensor({f * pp}));
    w_deep_ = add_param("ds.deep.w", conv_init(rng, {f, f, 3, 3}));
    b_deep_ = add_param("ds.deep.b", Tensor({f}));

    GridSpec mid_grid = regional_grid(cfg_.mid_h(), cfg_.mid_w(), cfg_.periodic_lon);
    pos_ = std::make_shared<Tensor>(fourier_position_encoding(core_layout_cfg_, mid_grid));

    int64_t h = cfg_.mid_h(), w = cfg_.mid_w();
    for (size_t i = 0; i < cfg_.post_core_upscale.size(); ++i) {
      const int64_t fac = cfg_.post_core_upscale[i];
      post_plans_.push_back(ad::make_interp_plan(h, w, h * fac, w * fac, ad::InterpMethod::Bilinear, cfg_.periodic_lon));
      h *= fac;
      w *= fac;
      post_maps_.push_back(ad::make_conv_map(h, w, 3, 3, ad::Pad::Replicate, lon_pad));
      w_post_.push_back(add_param("ds.post" + std::to_string(i) + ".w", conv_init(rng, {f, f, 3, 3})));
      b_post_.push_back(add_param("ds.post" + std::to_string(i) + ".b", Tensor({f})));
    }
    map_head_ = ad::make_conv_map(h, w, 1, 1, ad::Pad::Replicate, lon_pad);
    w_head_ = add_param("ds.head.w", conv_init(rng, {cfg_.out_channels, f, 1, 1}));
    b_head_ = add_param("ds.head.b", Tensor({cfg_.out_channels}));
  }

  const DownscaleConfig& config() const { return cfg_; }
  WxCModel& core() { return core_; }
  std::vector<std::pair<std::string, ad::Var>>& params() { return params_; }

  void zero_grad() {
    for (auto& [n, p] : params_) p->zero_grad();
  }

  /// coarse [B, C_in, h, w] -> high-res [B, C_out, H, W]
  ad::Var forward(const ad::Var& coarse, const TrainMode& tm) {
    require(coarse->value.dim(1) == cfg_.in_channels && coarse->value.dim(2) == cfg_.coarse_h &&
                coarse->value.dim(3) == cfg_.coarse_w,
            "downscale: input shape mismatch");
    ad::Var x = ad::gelu(ad::conv2d(coarse, w_shallow_, b_shallow_, map_coarse_));
    x = ad::upsample(x, pre_plan_);
    ad::Var shallow = ad::conv2d(x, w_pre_, b_pre_, map_mid_);

    // deep path through the frozen core
    ad::Var tokens = ad::linear(ad::patchify(shallow, *layout_), w_core_in_, b_core_in_);
    tokens = ad::add_slot_rows(tokens, pos_);
    tokens = core_.run_core(tokens, *layout_, cfg_.shift_encoder, cfg_.shift_decoder, tm);
    tokens = ad::linear(tokens, w_core_out_, b_core_out_);
    ad::Var deep = ad::unpatchify(tokens, *layout_, cfg_.feature_dim, cfg_.mid_h(), cfg_.mid_w());
    deep = ad::conv2d(deep, w_deep_, b_deep_, map_mid_);

    ad::Var r = ad::add(deep, shallow);
    for (size_t i = 0; i < post_plans_.size(); ++i) {
      r = ad::upsample(r, post_plans_[i]);
      r = ad::gelu(ad::conv2d(r, w_post_[i], b_post_[i], post_maps_[i]));
    }
    return ad::conv2d(r, w_head_, b_head_, map_head_);
  }

  /// Zero the deep path's output-side layers; afterwards the output is a
  /// function of the shallow features alone (residual-wiring check).
  void zero_deep_path() {
    w_core_out_->value.fill(0.0);
    b_core_out_->value.fill(0.0);
    w_deep_->value.fill(0.0);
    b_deep_->value.fill(0.0);
  }

  static GridSpec regional_grid(int64_t h, int64_t w, bool periodic_lon) {
    if (periodic_lon) return make_global_grid(h, w);
    GridSpec g;  // regional box; longitude descriptor still spans 360 for encoding purposes
    g.h = h;
    g.w = w;
    g.dlat = 60.0 / static_cast<double>(h);
    g.lat0 = 30.0 + g.dlat / 2.0;
    g.dlon = 360.0 / static_cast<double>(w);
    g.lon0 = 0.0;
    return g;
  }

 private:
  static Tensor conv_init(Rng& rng, Shape s) {
    Tensor t(std::move(s));
    const double fan_in = static_cast<double>(t.dim(1) * t.dim(2) * t.dim(3));
    rng.fill_normal(t, 0.0, std::sqrt(1.0 / fan_in));
    return t;
  }
  static Tensor linear_init(Rng& rng, Shape s) {
    Tensor t(std::move(s));
    rng.fill_normal(t, 0.0, 0.02);
    return t;
  }
  ad::Var add_param(const std::string& name, Tensor t) {
    ad::Var p = ad::param(std::move(t));
    params_.emplace_back(name, p);
    return p;
  }

  DownscaleConfig cfg_;
  WxCModel& core_;
  ModelConfig core_layout_cfg_;
  std::unique_ptr<TokenLayout> layout_;
  std::vector<std::pair<std::string, ad::Var>> params_;
  ad::Var w_shallow_, b_shallow_, w_pre_, b_pre_, w_core_in_, b_core_in_, w_core_out_, b_core_out_, w_deep_, b_deep_;
  std::vector<ad::Var> w_post_, b_post_;
  ad::Var w_head_, b_head_;
  std::shared_ptr<Tensor> pos_;
  std::shared_ptr<const ad::InterpPlan> pre_plan_;
  std::vector<std::shared_ptr<const ad::InterpPlan>> post_plans_;
  std::shared_ptr<const ad::ConvMap> map_coarse_, map_mid_, map_head_;
  std::vector<std::shared_ptr<const ad::ConvMap>> post_maps_;
};

/// Invariant hook: every core parameter must be non-trainable.
inline void core_grad_guard(WxCModel& core) {
  for (auto& [name, p] : core.params()) {
    if (WxCModel::is_core_param(name)) {
      require(!p->requires_grad, "frozen core parameter is trainable: " + name);
    }
  }
}

/// One fine-tuning update on the head (core gradients are structurally
/// disabled). Plain MSE on the target variables at full resolution.
inline double finetune_downscale_step(DownscaleModel& model, AdamW& opt, const Tensor& coarse_batch,
                                      const Tensor& target_batch, double lr) {
  TrainMode tm{true, nullptr};
  ad::Var out = model.forward(ad::constant(coarse_batch), tm);
  WeightTable wt = uniform_weight_table(out->value.dim(1));
  ad::Var loss = ad::weighted_mse(out, target_batch, wt);
  model.zero_grad();
  core_grad_guard(model.core());
  ad::backward(loss);
  opt.step(model.params(), lr);
  return loss->value[0];
}

}  // namespace wxc
