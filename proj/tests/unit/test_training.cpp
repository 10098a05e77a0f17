#include <catch2/catch_amalgamated.hpp>

#include "wxc/metrics.hpp"
#include "wxc/run_config.hpp"
#include "wxc/synthetic.hpp"
#include "wxc/trainer.hpp"

using namespace wxc;

namespace {

ModelConfig trainer_model_config() {
  ModelConfig c;
  c.grid_h = 8;
  c.grid_w = 16;
  c.patch_h = c.patch_w = 2;
  c.window_h = 4;
  c.window_w = 8;
  c.embed_dim = 16;
  c.n_heads = 2;
  c.mlp_ratio = 2.0;
  c.n_encoder_blocks = 3;
  c.n_decoder_blocks = 3;
  c.in_channels = 18;
  c.context_channels = 17;
  c.out_channels = 9;
  c.lead_time_set = {0, 6, 12, 24};
  c.input_delta_set = {-3, -6, -9, -12};
  c.validate();
  return c;
}

struct Fixture {
  fs::path dir;
  DatasetContainer data;
  Climatology clim;
  NormStats stats;

  static Fixture make() {
    SyntheticConfig cfg;
    cfg.catalog = desk_catalog();
    cfg.grid = make_global_grid(8, 16);
    cfg.n_years = 1;
    cfg.cadence_hours = 3;
    cfg.noise_amp = 0.05;
    fs::path dir = fs::temp_directory_path() / "wxc_trainer_fixture";
    static bool built = false;
    if (!built || !fs::exists(dir / "manifest.json")) {
      fs::remove_all(dir);
      generate_synthetic(dir, 1001, cfg);
      built = true;
    }
    DatasetContainer data = DatasetContainer::open(dir);
    Climatology clim = build_climatology(data, 61, true);
    NormStats stats = compute_norm_stats(data);
    stats.sigma_c = compute_anomaly_stats(data, clim);
    return Fixture{dir, std::move(data), std::move(clim), std::move(stats)};
  }
};

}  // namespace

TEST_CASE("lr schedule: warmup, anchors, continuity, monotonicity") {
  LrSchedule s;  // defaults: warmup 2500, cosine 1e-4 -> 1e-5 over 100k
  REQUIRE_THAT(lr_at(2500, s), Catch::Matchers::WithinRel(1e-4, 1e-12));
  REQUIRE_THAT(lr_at(100000, s), Catch::Matchers::WithinRel(1e-5, 1e-12));
  const int64_t mid = 2500 + (100000 - 2500) / 2;
  REQUIRE(mid == 51250);
  REQUIRE_THAT(lr_at(mid, s), Catch::Matchers::WithinRel(5.5e-5, 1e-12));
  // continuity at the junction
  REQUIRE(std::abs(lr_at(2500, s) - lr_at(2501, s)) < 1e-7);
  const double just_before = lr_at(2499, s);
  REQUIRE(std::abs(just_before - 1e-4) < 1e-7);
  // monotone nonincreasing after warmup
  double prev = lr_at(2500, s);
  for (int64_t step = 2500; step <= 100000; step += 250) {
    const double v = lr_at(step, s);
    REQUIRE(v <= prev + 1e-15);
    prev = v;
  }
  REQUIRE_THROWS(lr_at(-1, s));
  REQUIRE_THROWS(lr_at(100001, s));
  REQUIRE(lr_at(12345, LrSchedule::constant(3e-4)) == 3e-4);
}

TEST_CASE("weight table: spot values and level scaling") {
  const VariableCatalog cat = paper_catalog();
  WeightTable wt = make_weight_table(cat);
  REQUIRE(wt.weights.size() == 160);
  REQUIRE(wt.weights[cat.surface_index("U10M")] == 1.0);
  REQUIRE(wt.weights[cat.surface_index("V10M")] == 1.0);
  REQUIRE(wt.weights[cat.surface_index("SLP")] == 0.1);
  REQUIRE(wt.weights[cat.surface_index("T2M")] == 0.1);
  REQUIRE(wt.weights[cat.surface_index("TS")] == 0.01);
  // T at 48 hPa with max level 985: 1.0 * 48/985
  // T is vertical var index 3; level 48 hPa is index 13
  const int64_t t48 = 20 + 3 * 14 + 13;
  REQUIRE(cat.channel_name(t48) == "T@48hPa");
  REQUIRE_THAT(wt.weights[static_cast<size_t>(t48)], Catch::Matchers::WithinRel(48.0 / 985.0, 1e-12));
  // QL at 48 hPa carries the 0.1 parameter weight
  const int64_t ql48 = 20 + 9 * 14 + 13;
  REQUIRE(cat.channel_name(ql48) == "QL@48hPa");
  REQUIRE_THAT(wt.weights[static_cast<size_t>(ql48)], Catch::Matchers::WithinRel(0.1 * 48.0 / 985.0, 1e-12));

  VariableCatalog bad = cat;
  bad.surface_vars.push_back("MYSTERY");
  REQUIRE_THROWS_WITH(make_weight_table(bad), Catch::Matchers::ContainsSubstring("MYSTERY"));
}

TEST_CASE("pretrain steps: alternation, sampled deltas, convergence") {
  Fixture f = Fixture::make();
  WxCModel model(trainer_model_config(), f.data.grid(), 2024);
  Assembler assembler(f.data, f.clim, f.stats);
  TrainPhaseConfig phase = TrainPhaseConfig::phase1();
  phase.drop_path_rate = 0.0;
  phase.schedule = LrSchedule::constant(2e-3);
  Trainer trainer(model, assembler, phase, 555);

  // mid-year indices so every (t, dt, dtau) combination exists
  std::vector<int64_t> batch = {800, 801, 802, 803};
  double first_losses = 0.0, last_losses = 0.0;
  for (int64_t step = 0; step < 40; ++step) {
    StepResult r = trainer.pretrain_step(batch, step);
    REQUIRE(r.used == 4);
    REQUIRE(r.skipped == 0);
    // strategy alternates with step parity
    REQUIRE(r.strategy == (step % 2 == 0 ? MaskStrategy::Local : MaskStrategy::Global));
    for (int dt : r.dts) {
      REQUIRE(std::find(phase.lead_time_set.begin(), phase.lead_time_set.end(), dt) != phase.lead_time_set.end());
    }
    for (int dtau : r.dtaus) {
      REQUIRE(std::find(phase.input_delta_set.begin(), phase.input_delta_set.end(), dtau) !=
              phase.input_delta_set.end());
    }
    if (step < 5) first_losses += r.loss;
    if (step >= 35) last_losses += r.loss;
  }
  REQUIRE(last_losses < first_losses);  // learning happens
}

TEST_CASE("pretrain_step skips samples with missing climatology and logs them") {
  Fixture f = Fixture::make();
  WxCModel model(trainer_model_config(), f.data.grid(), 11);
  Assembler assembler(f.data, f.clim, f.stats);
  TrainPhaseConfig phase = TrainPhaseConfig::phase2();
  phase.schedule = LrSchedule::constant(1e-3);
  Trainer trainer(model, assembler, phase, 1);
  // the last index has no t+6h state in the dataset
  StepResult r = trainer.pretrain_step({f.data.size() - 1}, 0);
  REQUIRE(r.used == 0);
  REQUIRE(r.skipped == 1);
  REQUIRE(std::isnan(r.loss));
}

TEST_CASE("deterministic training with fixed seeds at mask ratio 0") {
  Fixture f = Fixture::make();
  auto run = [&](uint64_t seed) {
    WxCModel model(trainer_model_config(), f.data.grid(), 99);
    Assembler assembler(f.data, f.clim, f.stats);
    TrainPhaseConfig phase = TrainPhaseConfig::phase2();
    phase.swin_shift_encoder = true;
    phase.schedule = LrSchedule::constant(1e-3);
    Trainer trainer(model, assembler, phase, seed);
    std::vector<double> losses;
    for (int64_t step = 0; step < 5; ++step) {
      losses.push_back(trainer.pretrain_step({700, 701}, step).loss);
    }
    return losses;
  };
  const auto a = run(42), b = run(42);
  REQUIRE(a == b);  // bitwise identical trajectories
}

TEST_CASE("rollout: n=1 bit-equals a single pretrain step") {
  Fixture f = Fixture::make();
  TrainPhaseConfig phase = TrainPhaseConfig::phase2();
  phase.schedule = LrSchedule::constant(1e-3);

  WxCModel m1(trainer_model_config(), f.data.grid(), 7);
  WxCModel m2(trainer_model_config(), f.data.grid(), 7);
  Assembler assembler(f.data, f.clim, f.stats);
  Trainer t1(m1, assembler, phase, 33);
  Trainer t2(m2, assembler, phase, 33);

  StepResult r1 = t1.pretrain_step({600, 601}, 0);
  RolloutTrace trace;
  StepResult r2 = t2.rollout_step({600, 601}, 0, 1, &trace);
  REQUIRE(r1.loss == r2.loss);  // bit-for-bit
  // parameters bitwise identical after the update
  for (size_t i = 0; i < m1.params().size(); ++i) {
    REQUIRE(max_abs_diff(m1.params()[i].second->value, m2.params()[i].second->value) == 0.0);
  }
  REQUIRE(trace.step_mask_ratios == std::vector<double>{0.0});
}

TEST_CASE("rollout: masking applies only to the first step") {
  Fixture f = Fixture::make();
  WxCModel model(trainer_model_config(), f.data.grid(), 13);
  Assembler assembler(f.data, f.clim, f.stats);
  TrainPhaseConfig phase = TrainPhaseConfig::phase1();
  phase.lead_time_set = {6};
  phase.input_delta_set = {-6};
  phase.mask_ratio = 0.5;
  phase.mask_alternation = false;
  phase.drop_path_rate = 0.0;
  phase.schedule = LrSchedule::constant(1e-3);
  Trainer trainer(model, assembler, phase, 21);
  RolloutTrace trace;
  StepResult r = trainer.rollout_step({500, 501}, 0, 3, &trace);
  REQUIRE(r.used == 2);
  REQUIRE(trace.step_mask_ratios == std::vector<double>{0.5, 0.0, 0.0});
  REQUIRE(trace.step_masked_counts[0] > 0);
  REQUIRE(trace.step_masked_counts[1] == 0);
  REQUIRE(trace.step_masked_counts[2] == 0);
}

TEST_CASE("rollout: gradients differ between n=1 and n=3 on the same batch") {
  Fixture f = Fixture::make();
  TrainPhaseConfig phase = TrainPhaseConfig::phase2();
  phase.schedule = LrSchedule::constant(0.0);  // lr 0: inspect gradients via optimizer no-op

  WxCModel m1(trainer_model_config(), f.data.grid(), 3);
  WxCModel m3(trainer_model_config(), f.data.grid(), 3);
  Assembler assembler(f.data, f.clim, f.stats);
  Trainer t1(m1, assembler, phase, 5);
  Trainer t3(m3, assembler, phase, 5);
  t1.rollout_step({400, 401}, 0, 1);
  t3.rollout_step({400, 401}, 0, 3);
  double diff = 0.0;
  for (size_t i = 0; i < m1.params().size(); ++i) {
    const Tensor& g1 = m1.params()[i].second->grad;
    const Tensor& g3 = m3.params()[i].second->grad;
    if (g1.numel() == 0 || g3.numel() == 0) continue;
    diff = std::max(diff, max_abs_diff(g1, g3));
  }
  REQUIRE(diff > 0.0);
}

TEST_CASE("rollout with a zero-anomaly stub model tracks the climatology sequence") {
  Fixture f = Fixture::make();
  WxCModel model(trainer_model_config(), f.data.grid(), 17);
  // zero head: the model predicts zero normalized anomaly everywhere
  for (auto& [name, p] : model.params()) {
    if (name == "head.w" || name == "head.b") p->value.fill(0.0);
  }
  Assembler assembler(f.data, f.clim, f.stats);
  MetricReport report = eval_forecast(model, assembler, {300}, 12, 6);
  // model output in physical units equals climatology -> the "forecast" rows
  // must match the "climatology" rows exactly
  std::map<int, double> model_rmse, clim_rmse;
  for (const auto& row : report.rows) {
    if (row.strategy == "forecast") model_rmse[row.lead_hours] += row.rmse;
    if (row.strategy == "climatology") clim_rmse[row.lead_hours] += row.rmse;
  }
  REQUIRE(!model_rmse.empty());
  for (const auto& [lead, v] : model_rmse) {
    REQUIRE_THAT(v, Catch::Matchers::WithinAbs(clim_rmse[lead], 1e-9));
  }
}

TEST_CASE("loss scale invariance and latitude weighting") {
  Fixture f = Fixture::make();
  Rng rng(23);
  Tensor pred({1, 9, 8, 16});
  rng.fill_normal(pred);
  Tensor target({1, 9, 8, 16});
  rng.fill_normal(target);
  WeightTable w1 = make_weight_table(f.data.catalog());
  WeightTable w2 = w1;
  for (double& x : w2.weights) x *= 17.0;
  const double l1 = ad::weighted_mse(ad::constant(pred), target, w1)->value[0];
  const double l2 = ad::weighted_mse(ad::constant(pred), target, w2)->value[0];
  REQUIRE_THAT(l1, Catch::Matchers::WithinRel(l2, 1e-12));

  const auto lat_w = cos_lat_weights(f.data.grid());
  double mean = 0.0;
  for (double v : lat_w) mean += v;
  REQUIRE_THAT(mean / lat_w.size(), Catch::Matchers::WithinAbs(1.0, 1e-12));
  const double l3 = ad::weighted_mse(ad::constant(pred), target, w1, &lat_w)->value[0];
  REQUIRE(l3 != l1);
}

TEST_CASE("phase defaults match the protocol") {
  const TrainPhaseConfig p1 = TrainPhaseConfig::phase1();
  REQUIRE(p1.mask_ratio == 0.5);
  REQUIRE(p1.drop_path_rate == 0.05);
  REQUIRE(p1.mask_alternation);
  REQUIRE(p1.lead_time_set == std::vector<int>{0, 6, 12, 24});
  REQUIRE(p1.input_delta_set == std::vector<int>{-3, -6, -9, -12});
  REQUIRE(p1.schedule.warmup_steps == 2500);
  REQUIRE(p1.schedule.peak_lr == 1e-4);
  REQUIRE(p1.schedule.final_lr == 1e-5);
  REQUIRE(p1.schedule.total_steps == 100000);

  const TrainPhaseConfig p2 = TrainPhaseConfig::phase2();
  REQUIRE(p2.mask_ratio == 0.0);
  REQUIRE(p2.drop_path_rate == 0.0);
  REQUIRE(p2.swin_shift_encoder);
  REQUIRE(p2.lead_time_set == std::vector<int>{6});
  REQUIRE(p2.input_delta_set == std::vector<int>{-6});
  REQUIRE(p2.schedule.kind == LrSchedule::Kind::Constant);
  REQUIRE(p2.schedule.constant_lr == 1e-5);
}

TEST_CASE("run config: defaults, overrides, unknown keys") {
  const json defaults = default_run_config();
  REQUIRE(defaults.at("training").at("schedule").at("warmup_steps") == 2500);

  json user;
  user["training"]["steps"] = 7;
  json merged = merge_config(defaults, user);
  REQUIRE(merged.at("training").at("steps") == 7);
  REQUIRE(merged.at("training").at("batch_size") == defaults.at("training").at("batch_size"));

  json bad;
  bad["training"]["stepz"] = 7;
  REQUIRE_THROWS_WITH(merge_config(defaults, bad), Catch::Matchers::ContainsSubstring("training.stepz"));
}
