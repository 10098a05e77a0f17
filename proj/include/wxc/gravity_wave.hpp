#pragma once

#include "wxc/downscale.hpp"
#include "wxc/synthetic.hpp"

namespace wxc {

/// Gravity-wave flux parameterization head: 4 learnable conv blocks with
/// channel progression C, 2C, 4C, 8C (downsampling between blocks) in
/// front of the frozen core, mirrored conv blocks with U-Net skips behind
/// it, and a 1x1 output head. Lead time is fixed to zero (instantaneous
/// flux), so the core runs without time context.
struct GWHeadConfig {
  int64_t in_channels = 488;
  int64_t out_channels = 366;
  int64_t grid_h = 64, grid_w = 128;
  int64_t base_channels = 160;  // C
  int64_t core_window_h = 4, core_window_w = 4;  // tokens, at the pooled grid
  bool periodic_lon = true;

  static constexpr int kDownsamples = 3;  // pools between the 4 pre-core blocks

  int64_t pooled_h() const { return grid_h >> kDownsamples; }
  int64_t pooled_w() const { return grid_w >> kDownsamples; }

  std::vector<int64_t> channel_progression() const {
    return {in_channels, base_channels, 2 * base_channels, 4 * base_channels, 8 * base_channels};
  }

  void validate() const {
    require(in_channels > 0 && out_channels > 0 && base_channels > 0, "gw: channel config unset");
    require(grid_h % (1 << kDownsamples) == 0 && grid_w % (1 << kDownsamples) == 0,
            "gw: grid must divide by 2^3 for the conv pyramid");
    require(pooled_h() % core_window_h == 0 && pooled_w() % core_window_w == 0,
            "gw: pooled grid must divide into core windows");
  }
};

/// Full-scale configuration from the flux-parameterization task:
/// [1, 488, 64, 128] in, [366, 64, 128] out, C = 160.
inline GWHeadConfig gw_paper_config() {
  GWHeadConfig c;
  c.in_channels = 488;
  c.out_channels = 366;
  c.grid_h = 64;
  c.grid_w = 128;
  c.base_channels = 160;
  c.validate();
  return c;
}

class GWModel {
 public:
  GWModel(GWHeadConfig cfg, WxCModel& core, uint64_t seed) : cfg_(cfg), core_(core) {
    cfg_.validate();
    core_.freeze_core();
    core_.set_drop_path_rate(0.0);
    Rng rng(derive_seed(seed, 0x6A77));
    const auto ch = cfg_.channel_progression();
    const int64_t d = core_.config().embed_dim;
    const ad::Pad lon_pad = cfg_.periodic_lon ? ad::Pad::Wrap : ad::Pad::Replicate;

    int64_t h = cfg_.grid_h, w = cfg_.grid_w;
    for (int i = 0; i < 4; ++i) {
      pre_maps_.push_back(ad::make_conv_map(h, w, 3, 3, ad::Pad::Replicate, lon_pad));
      w_pre_.push_back(add_param("gw.pre" + std::to_string(i) + ".w", conv_init(rng, {ch[i + 1], ch[i], 3, 3})));
      b_pre_.push_back(add_param("gw.pre" + std::to_string(i) + ".b", Tensor({ch[i + 1]})));
      pre_h_.push_back(h);
      pre_w_.push_back(w);
      if (i < GWHeadConfig::kDownsamples) {
        h /= 2;
        w /= 2;
      }
    }

    core_layout_cfg_ = core_.config();
    core_layout_cfg_.grid_h = cfg_.pooled_h();
    core_layout_cfg_.grid_w = cfg_.pooled_w();
    core_layout_cfg_.patch_h = core_layout_cfg_.patch_w = 1;
    core_layout_cfg_.window_h = cfg_.core_window_h;
    core_layout_cfg_.window_w = cfg_.core_window_w;
    layout_ = std::make_unique<TokenLayout>(core_layout_cfg_);
    w_core_in_ = add_param("gw.core_in.w", linear_init(rng, {ch[4], d}));
    b_core_in_ = add_param("gw.core_in.b", Tensor({d}));
    w_core_out_ = add_param("gw.core_out.w", linear_init(rng, {d, ch[4]}));
    b_core_out_ = add_param("gw.core_out.b", Tensor({ch[4]}));
    pos_ = std::make_shared<Tensor>(
        fourier_position_encoding(core_layout_cfg_, make_global_grid(cfg_.pooled_h(), cfg_.pooled_w())));

    // mirrored post blocks; block k takes a skip from pre block 3-k
    int64_t ph = cfg_.pooled_h(), pw = cfg_.pooled_w();
    std::vector<int64_t> post_in = {ch[4], ch[3], ch[2], ch[1]};
    std::vector<int64_t> post_out = {ch[3], ch[2], ch[1], ch[1]};
    for (int i = 0; i < 4; ++i) {
      const bool upsampled = i < GWHeadConfig::kDownsamples;
      if (upsampled) {
        post_plans_.push_back(ad::make_interp_plan(ph, pw, ph * 2, pw * 2, ad::InterpMethod::Bilinear,
                                                   cfg_.periodic_lon));
        ph *= 2;
        pw *= 2;
      } else {
        post_plans_.push_back(nullptr);
      }
      const int64_t skip = upsampled ? post_out[static_cast<size_t>(i)] : 0;  // skip concat widths match mirrors
      const int64_t cin = post_in[static_cast<size_t>(i)] + skip;
      post_maps_.push_back(ad::make_conv_map(ph, pw, 3, 3, ad::Pad::Replicate, lon_pad));
      w_post_.push_back(add_param("gw.post" + std::to_string(i) + ".w",
                                  conv_init(rng, {post_out[static_cast<size_t>(i)], cin, 3, 3})));
      b_post_.push_back(add_param("gw.post" + std::to_string(i) + ".b", Tensor({post_out[static_cast<size_t>(i)]})));
    }
    head_map_ = ad::make_conv_map(cfg_.grid_h, cfg_.grid_w, 1, 1, ad::Pad::Replicate, lon_pad);
    w_head_ = add_param("gw.head.w", conv_init(rng, {cfg_.out_channels, ch[1], 1, 1}));
    b_head_ = add_param("gw.head.b", Tensor({cfg_.out_channels}));
  }

  const GWHeadConfig& config() const { return cfg_; }
  WxCModel& core() { return core_; }
  std::vector<std::pair<std::string, ad::Var>>& params() { return params_; }
  const std::vector<int64_t>& last_channel_trace() const { return channel_trace_; }

  void zero_grad() {
    for (auto& [n, p] : params_) p->zero_grad();
  }

  /// [B, C_in, H, W] -> [B, C_out, H, W]
  ad::Var forward(const ad::Var& input, const TrainMode& tm) {
    require(input->value.dim(1) == cfg_.in_channels && input->value.dim(2) == cfg_.grid_h &&
                input->value.dim(3) == cfg_.grid_w,
            "gw: input shape mismatch");
    channel_trace_.clear();
    channel_trace_.push_back(input->value.dim(1));
    std::vector<ad::Var> pre_out;
    ad::Var x = input;
    for (int i = 0; i < 4; ++i) {
      x = ad::gelu(ad::conv2d(x, w_pre_[static_cast<size_t>(i)], b_pre_[static_cast<size_t>(i)],
                              pre_maps_[static_cast<size_t>(i)]));
      channel_trace_.push_back(x->value.dim(1));
      pre_out.push_back(x);
      if (i < GWHeadConfig::kDownsamples) x = ad::avg_pool2d(x, 2);
    }

    ad::Var tokens = ad::linear(ad::patchify(x, *layout_), w_core_in_, b_core_in_);
    tokens = ad::add_slot_rows(tokens, pos_);
    tokens = core_.run_core(tokens, *layout_, false, false, tm);
    tokens = ad::linear(tokens, w_core_out_, b_core_out_);
    x = ad::unpatchify(tokens, *layout_, cfg_.channel_progression()[4], cfg_.pooled_h(), cfg_.pooled_w());

    for (int i = 0; i < 4; ++i) {
      if (post_plans_[static_cast<size_t>(i)] != nullptr) {
        x = ad::upsample(x, post_plans_[static_cast<size_t>(i)]);
        // U-Net skip: pre block (3-i) output at the matching resolution
        x = ad::concat_channels(x, pre_out[static_cast<size_t>(2 - i)]);
      }
      x = ad::gelu(ad::conv2d(x, w_post_[static_cast<size_t>(i)], b_post_[static_cast<size_t>(i)],
                              post_maps_[static_cast<size_t>(i)]));
    }
    return ad::conv2d(x, w_head_, b_head_, head_map_);
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

  GWHeadConfig cfg_;
  WxCModel& core_;
  ModelConfig core_layout_cfg_;
  std::unique_ptr<TokenLayout> layout_;
  std::vector<std::pair<std::string, ad::Var>> params_;
  std::vector<ad::Var> w_pre_, b_pre_, w_post_, b_post_;
  ad::Var w_core_in_, b_core_in_, w_core_out_, b_core_out_, w_head_, b_head_;
  std::shared_ptr<Tensor> pos_;
  std::vector<std::shared_ptr<const ad::ConvMap>> pre_maps_, post_maps_;
  std::vector<std::shared_ptr<const ad::InterpPlan>> post_plans_;
  std::shared_ptr<const ad::ConvMap> head_map_;
  std::vector<int64_t> pre_h_, pre_w_;
  std::vector<int64_t> channel_trace_;
};

/// One head update (core frozen), plain MSE.
inline double finetune_gw_step(GWModel& model, AdamW& opt, const Tensor& input_batch, const Tensor& target_batch,
                               double lr) {
  TrainMode tm{true, nullptr};
  ad::Var out = model.forward(ad::constant(input_batch), tm);
  WeightTable wt = uniform_weight_table(out->value.dim(1));
  ad::Var loss = ad::weighted_mse(out, target_batch, wt);
  model.zero_grad();
  core_grad_guard(model.core());
  ad::backward(loss);
  opt.step(model.params(), lr);
  return loss->value[0];
}

/// Desk-scale synthetic flux task: targets are a known smooth nonlinear
/// functional of the inputs (vertical-shear-modulated terrain response
/// plus a saturating midlevel term) with seeded noise, so a perfectly
/// trained head is bounded below by the injected noise variance.
struct GWTask {
  Tensor inputs;         // [N, C_in, H, W]
  Tensor targets;        // [N, C_out, H, W]
  Tensor targets_clean;  // noise-free targets
  Tensor terrain;        // [H, W]
  double noise_sigma = 0.0;
};

inline GWTask synth_gw_task(uint64_t seed, int64_t n_samples, const GWHeadConfig& cfg, int64_t n_levels = 3,
                            double noise_sigma = 0.05) {
  const int64_t h = cfg.grid_h, w = cfg.grid_w;
  const int64_t vars = cfg.in_channels / n_levels;
  require(vars * n_levels == cfg.in_channels, "synth_gw_task: in_channels must be vars x levels");
  GWTask task;
  task.noise_sigma = noise_sigma;
  task.inputs = Tensor({n_samples, cfg.in_channels, h, w});
  task.targets = Tensor({n_samples, cfg.out_channels, h, w});
  task.targets_clean = Tensor({n_samples, cfg.out_channels, h, w});

  task.terrain = Tensor({h, w});
  {
    Rng trng(derive_seed(seed, 0x7E44A14));
    for (int m = 0; m < 4; ++m) {
      SynthMode mode{0.5 / (1 + m), static_cast<int>(1 + trng.uniform_int(3)),
                     static_cast<int>(trng.uniform_int(3)) - 1, trng.uniform(0.0, 2 * M_PI), 0.0};
      detail::add_mode(task.terrain, h, w, mode, 0.0);
    }
    for (int64_t i = 0; i < h * w; ++i) task.terrain[i] = std::max(0.0, task.terrain[i]);
  }

  Rng noise(derive_seed(seed, 0x6A7701));
  for (int64_t s = 0; s < n_samples; ++s) {
    Rng srng(derive_seed(seed, 0x6A77F0, static_cast<uint64_t>(s)));
    for (int64_t c = 0; c < cfg.in_channels; ++c) {
      Tensor f({h, w});
      for (int m = 0; m < 4; ++m) {
        SynthMode mode{1.0 / (1 + m), static_cast<int>(1 + srng.uniform_int(4)),
                       static_cast<int>(srng.uniform_int(3)) - 1, srng.uniform(0.0, 2 * M_PI), 0.0};
        detail::add_mode(f, h, w, mode, 0.0);
      }
      std::copy(f.data(), f.data() + h * w, task.inputs.data() + (s * cfg.in_channels + c) * h * w);
    }
    // u lives in the first `n_levels` channels: shear = top - bottom level
    const double* u_bot = task.inputs.data() + (s * cfg.in_channels + 0) * h * w;
    const double* u_top = task.inputs.data() + (s * cfg.in_channels + n_levels - 1) * h * w;
    const double* u_mid = task.inputs.data() + (s * cfg.in_channels + n_levels / 2) * h * w;
    for (int64_t j = 0; j < cfg.out_channels; ++j) {
      const double a = 0.5 + 0.5 * static_cast<double>(j) / static_cast<double>(cfg.out_channels);
      const double b = 0.3 + 0.2 * static_cast<double>(j % 3);
      double* tc = task.targets_clean.data() + (s * cfg.out_channels + j) * h * w;
      double* tn = task.targets.data() + (s * cfg.out_channels + j) * h * w;
      for (int64_t i = 0; i < h * w; ++i) {
        tc[i] = a * (u_top[i] - u_bot[i]) * task.terrain[i] + b * std::tanh(u_mid[i]);
        tn[i] = tc[i] + noise.normal(0.0, noise_sigma);
      }
    }
  }
  return task;
}

}  // namespace wxc
