#include <catch2/catch_amalgamated.hpp>

#include "finite_diff.hpp"
#include "wxc/downscale.hpp"
#include "wxc/gravity_wave.hpp"

using namespace wxc;

namespace {

ModelConfig small_core_config(int64_t d = 16) {
  ModelConfig c;
  c.grid_h = 8;
  c.grid_w = 16;
  c.patch_h = c.patch_w = 2;
  c.window_h = 4;
  c.window_w = 8;
  c.embed_dim = d;
  c.n_heads = 2;
  c.mlp_ratio = 2.0;
  c.n_encoder_blocks = 3;
  c.n_decoder_blocks = 3;
  c.in_channels = 4;
  c.context_channels = 3;
  c.out_channels = 2;
  c.validate();
  return c;
}

Tensor rand_tensor(Shape s, uint64_t seed, double sd = 1.0) {
  Tensor t(std::move(s));
  Rng rng(seed);
  rng.fill_normal(t, 0.0, sd);
  return t;
}

DownscaleConfig desk_downscale_config() {
  DownscaleConfig c;
  c.coarsen_factor = 6;
  c.pre_core_upscale = 2;
  c.post_core_upscale = {3};
  c.core_patch = 1;
  c.coarse_h = 4;
  c.coarse_w = 8;
  c.core_window_h = 4;
  c.core_window_w = 8;
  c.in_channels = 9;
  c.out_channels = 1;
  c.feature_dim = 12;
  return c;
}

GWHeadConfig desk_gw_config() {
  GWHeadConfig c;
  c.in_channels = 12;
  c.out_channels = 6;
  c.grid_h = 16;
  c.grid_w = 32;
  c.base_channels = 16;
  c.core_window_h = 2;
  c.core_window_w = 4;
  c.validate();
  return c;
}

}  // namespace

TEST_CASE("coarsen: constants, shapes, checkerboard, trim") {
  Tensor c1({2, 12, 12}, 3.5);
  Tensor out = coarsen(c1, 3);
  REQUIRE(out.shape() == Shape{2, 4, 4});
  for (int64_t i = 0; i < out.numel(); ++i) REQUIRE(out[i] == 3.5);

  // paper shape accounting: 360x576 / 6 -> 60x96
  Tensor big({1, 360, 576});
  REQUIRE(coarsen(big, 6).shape() == Shape{1, 60, 96});
  // 361 rows: trim one latitude row first
  Tensor odd({1, 361, 576});
  REQUIRE(coarsen(odd, 6).shape() == Shape{1, 60, 96});
  Tensor bad({1, 10, 12});
  REQUIRE_THROWS(coarsen(bad, 4));

  // 2x2 checkerboard of {0,1} block-means to exactly 0.5
  Tensor cb({1, 4, 4});
  for (int64_t y = 0; y < 4; ++y) {
    for (int64_t x = 0; x < 4; ++x) cb.at(int64_t(0), y, x) = static_cast<double>((x + y) % 2);
  }
  Tensor half = coarsen(cb, 2);
  for (int64_t i = 0; i < half.numel(); ++i) REQUIRE(half[i] == 0.5);
}

TEST_CASE("smooth3x3 keeps constants and averages locally") {
  Tensor c({1, 6, 8}, 2.0);
  Tensor s = smooth3x3(c);
  for (int64_t i = 0; i < s.numel(); ++i) REQUIRE_THAT(s[i], Catch::Matchers::WithinAbs(2.0, 1e-12));

  Tensor spike({1, 5, 5});
  spike.at(int64_t(0), int64_t(2), int64_t(2)) = 9.0;
  Tensor sm = smooth3x3(spike);
  REQUIRE_THAT(sm.at(int64_t(0), int64_t(2), int64_t(2)), Catch::Matchers::WithinAbs(1.0, 1e-12));
  REQUIRE_THAT(sm.at(int64_t(0), int64_t(0), int64_t(0)), Catch::Matchers::WithinAbs(0.0, 1e-12));
}

TEST_CASE("interpolation baselines") {
  SECTION("nearest on a constant stays constant") {
    Tensor c({1, 3, 4}, 1.25);
    Tensor up = interpolate_baseline(c, 2, "nearest");
    REQUIRE(up.shape() == Shape{1, 6, 8});
    for (int64_t i = 0; i < up.numel(); ++i) REQUIRE(up[i] == 1.25);
  }
  SECTION("bilinear midpoint between 0 and 1 is 0.5") {
    // two latitude rows 0 and 1, upsample x2: interior samples hit 1/5..4/5?
    // use explicit plan positions: out row j maps to (j*(H-1))/(H2-1)
    Tensor f({1, 2, 4});
    for (int64_t x = 0; x < 4; ++x) f.at(int64_t(0), int64_t(1), x) = 1.0;
    Tensor up = interpolate_baseline(f, 2, "bilinear");
    // out rows {0, 1/3, 2/3, 1}; the value at fractional position p is p
    REQUIRE_THAT(up.at(int64_t(0), int64_t(1), int64_t(0)), Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-12));
    REQUIRE_THAT(up.at(int64_t(0), int64_t(2), int64_t(0)), Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-12));
    // a genuine midpoint: upsample a 2-row field to 3 rows? use factor 2 on
    // 3 rows -> 6 rows; out row 2 maps to 2*2/5 = 0.8? keep the ramp test
    // below as the exactness statement.
  }
  SECTION("2x bilinear reproduces a latitude ramp exactly") {
    Tensor f({1, 5, 4});
    for (int64_t y = 0; y < 5; ++y) {
      for (int64_t x = 0; x < 4; ++x) f.at(int64_t(0), y, x) = 2.0 + 3.0 * static_cast<double>(y);
    }
    Tensor up = interpolate_baseline(f, 2, "bilinear");
    // affine in latitude: up(j) = 2 + 3 * j*(5-1)/(10-1)
    for (int64_t j = 0; j < 10; ++j) {
      const double expect = 2.0 + 3.0 * (static_cast<double>(j) * 4.0 / 9.0);
      REQUIRE_THAT(up.at(int64_t(0), j, int64_t(2)), Catch::Matchers::WithinAbs(expect, 1e-12));
    }
  }
  SECTION("unknown method rejects") {
    Tensor c({1, 2, 2}, 0.0);
    REQUIRE_THROWS_WITH(interpolate_baseline(c, 2, "bicubic"), Catch::Matchers::ContainsSubstring("bicubic"));
  }
}

TEST_CASE("downscale config: chain-product invariant and presets") {
  DownscaleConfig good = desk_downscale_config();
  REQUIRE_NOTHROW(good.validate());
  DownscaleConfig bad = good;
  bad.post_core_upscale = {2};  // 2*2 != 6
  REQUIRE_THROWS_WITH(bad.validate(), Catch::Matchers::ContainsSubstring("product"));

  const DownscaleConfig merra = merra6x_config();
  REQUIRE(merra.coarsen_factor == 6);
  REQUIRE(merra.pre_core_upscale == 2);
  REQUIRE(merra.post_core_upscale == std::vector<int64_t>{3});
  REQUIRE(merra.core_patch == 1);
  REQUIRE(merra.mid_h() == 120);
  REQUIRE(merra.mid_w() == 192);
  REQUIRE(merra.out_h() == 360);
  REQUIRE(merra.out_w() == 576);

  const DownscaleConfig cordex = cordex12x_config();
  REQUIRE(cordex.coarsen_factor == 12);
  REQUIRE(cordex.mid_h() == 111);
  REQUIRE(cordex.out_h() == 444);
  REQUIRE(cordex.out_w() == 444);
}

TEST_CASE("downscale model: shapes, frozen core, residual wiring") {
  ModelConfig core_cfg = small_core_config();
  WxCModel core(core_cfg, make_global_grid(8, 16), 5);
  DownscaleConfig cfg = desk_downscale_config();
  DownscaleModel model(cfg, core, 6);
  TrainMode eval{};

  Tensor coarse = rand_tensor({2, 9, 4, 8}, 7, 0.5);
  ad::Var out = model.forward(ad::constant(coarse), eval);
  REQUIRE(out->value.shape() == Shape{2, 1, 24, 48});

  SECTION("frozen core: zero grads and bit-identical parameters") {
    std::vector<Tensor> before;
    for (auto& [name, p] : core.params()) before.push_back(p->value);
    AdamW opt;
    Tensor target = rand_tensor({2, 1, 24, 48}, 8, 0.5);
    for (int i = 0; i < 3; ++i) finetune_downscale_step(model, opt, coarse, target, 1e-3);
    size_t k = 0;
    double core_grad_abs = 0.0;
    for (auto& [name, p] : core.params()) {
      REQUIRE(max_abs_diff(p->value, before[k]) == 0.0);
      if (WxCModel::is_core_param(name) && p->grad.numel() > 0) core_grad_abs += p->grad.max_abs();
      ++k;
    }
    REQUIRE(core_grad_abs == 0.0);
  }

  SECTION("residual wiring: zeroed deep path ignores core entirely") {
    model.zero_deep_path();
    Tensor base = model.forward(ad::constant(coarse), eval)->value;
    // scrambling a core block weight must not change the output
    core.encoder_blocks()[0].w_qkv->value.fill(3.21);
    Tensor after = model.forward(ad::constant(coarse), eval)->value;
    REQUIRE(max_abs_diff(base, after) == 0.0);
    // but the output still depends on the input (shallow path alive)
    Tensor coarse2 = coarse;
    coarse2[0] += 1.0;
    Tensor moved = model.forward(ad::constant(coarse2), eval)->value;
    REQUIRE(max_abs_diff(base, moved) > 0.0);
  }

  SECTION("head gradient check vs central differences") {
    auto res = test::check_gradients(
        model.params(),
        [&] {
          ad::Var y = model.forward(ad::constant(coarse), eval);
          return ad::weighted_sum(y, rand_tensor(y->value.shape(), 9));
        },
        100, 10);
    INFO(res.worst_param);
    REQUIRE(res.max_rel_err < 1e-4);
  }
}

TEST_CASE("downscale paper-preset chains at reduced width") {
  SECTION("merra6x: 60x96 -> core at 120x192 -> 360x576") {
    ModelConfig core_cfg = small_core_config(8);
    core_cfg.n_heads = 1;
    core_cfg.n_encoder_blocks = 1;
    core_cfg.n_decoder_blocks = 1;
    core_cfg.validate();
    WxCModel core(core_cfg, make_global_grid(8, 16), 11);
    DownscaleConfig cfg = merra6x_config();
    cfg.in_channels = 2;
    cfg.out_channels = 1;
    cfg.feature_dim = 4;
    DownscaleModel model(cfg, core, 12);
    TrainMode eval{};
    Tensor coarse({1, 2, 60, 96}, 0.25);
    ad::Var out = model.forward(ad::constant(coarse), eval);
    REQUIRE(out->value.shape() == Shape{1, 1, 360, 576});
  }
  SECTION("cordex12x: 37x37 -> core at 111x111 -> 444x444") {
    ModelConfig core_cfg = small_core_config(8);
    core_cfg.n_heads = 1;
    core_cfg.n_encoder_blocks = 1;
    core_cfg.n_decoder_blocks = 1;
    core_cfg.validate();
    WxCModel core(core_cfg, make_global_grid(8, 16), 13);
    DownscaleConfig cfg = cordex12x_config();
    cfg.in_channels = 2;
    cfg.out_channels = 1;
    cfg.feature_dim = 4;
    DownscaleModel model(cfg, core, 14);
    TrainMode eval{};
    Tensor coarse({1, 2, 37, 37}, 0.25);
    ad::Var out = model.forward(ad::constant(coarse), eval);
    REQUIRE(out->value.shape() == Shape{1, 1, 444, 444});
  }
}

TEST_CASE("gravity-wave head: shapes, channel trace, frozen core, gradients") {
  ModelConfig core_cfg = small_core_config();
  WxCModel core(core_cfg, make_global_grid(8, 16), 15);
  GWHeadConfig cfg = desk_gw_config();
  GWModel model(cfg, core, 16);
  TrainMode eval{};

  Tensor input = rand_tensor({1, 12, 16, 32}, 17, 0.5);
  ad::Var out = model.forward(ad::constant(input), eval);
  REQUIRE(out->value.shape() == Shape{1, 6, 16, 32});
  REQUIRE(model.last_channel_trace() == std::vector<int64_t>{12, 16, 32, 64, 128});

  SECTION("frozen core across fine-tune updates") {
    std::vector<Tensor> before;
    for (auto& [name, p] : core.params()) before.push_back(p->value);
    AdamW opt;
    Tensor target = rand_tensor({1, 6, 16, 32}, 18, 0.5);
    finetune_gw_step(model, opt, input, target, 1e-3);
    size_t k = 0;
    for (auto& [name, p] : core.params()) {
      REQUIRE(max_abs_diff(p->value, before[k]) == 0.0);
      ++k;
    }
  }

  SECTION("head gradient check vs central differences") {
    auto res = test::check_gradients(
        model.params(),
        [&] {
          ad::Var y = model.forward(ad::constant(input), eval);
          return ad::weighted_sum(y, rand_tensor(y->value.shape(), 19));
        },
        100, 20);
    INFO(res.worst_param);
    REQUIRE(res.max_rel_err < 1e-4);
  }
}

TEST_CASE("synthetic gravity-wave task") {
  const GWHeadConfig cfg = desk_gw_config();
  GWTask a = synth_gw_task(31, 3, cfg);
  GWTask b = synth_gw_task(31, 3, cfg);
  REQUIRE(max_abs_diff(a.inputs, b.inputs) == 0.0);
  REQUIRE(max_abs_diff(a.targets, b.targets) == 0.0);
  REQUIRE(a.inputs.shape() == Shape{3, 12, 16, 32});
  REQUIRE(a.targets.shape() == Shape{3, 6, 16, 32});

  // the analytic functional evaluated directly is the noise-free oracle:
  // targets deviate from it by noise of the injected scale
  double dev = 0.0;
  for (int64_t i = 0; i < a.targets.numel(); ++i) {
    const double d = a.targets[i] - a.targets_clean[i];
    dev += d * d;
  }
  dev = std::sqrt(dev / static_cast<double>(a.targets.numel()));
  REQUIRE_THAT(dev, Catch::Matchers::WithinAbs(a.noise_sigma, 0.01));

  // mse of the clean oracle against the noisy targets is the loss floor
  const double floor = dev * dev;
  REQUIRE(floor < 2.0 * a.noise_sigma * a.noise_sigma);
}
