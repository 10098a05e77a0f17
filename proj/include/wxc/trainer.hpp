#pragma once

#include <fstream>
#include <iostream>

#include "wxc/loss.hpp"
#include "wxc/model.hpp"
#include "wxc/optim.hpp"
#include "wxc/schedule.hpp"
#include "wxc/stats.hpp"

namespace wxc {

/// Settings of one training phase (pretraining or rollout tuning).
struct TrainPhaseConfig {
  double mask_ratio = 0.5;
  bool mask_alternation = true;
  MaskStrategy fixed_strategy = MaskStrategy::Local;
  double drop_path_rate = 0.05;
  bool swin_shift_encoder = false;
  std::vector<int> lead_time_set = {0, 6, 12, 24};
  std::vector<int> input_delta_set = {-3, -6, -9, -12};
  int rollout_steps = 1;
  LrSchedule schedule;
  bool use_variable_weights = true;
  bool lat_weighted_loss = false;

  /// Masked pretraining: 50% masking, 5% drop path, randomized lead times
  /// and input deltas, 2500-step warmup then cosine 1e-4 -> 1e-5 over 100k.
  static TrainPhaseConfig phase1() {
    TrainPhaseConfig p;
    p.mask_ratio = 0.5;
    p.mask_alternation = true;
    p.drop_path_rate = 0.05;
    p.swin_shift_encoder = false;
    p.lead_time_set = {0, 6, 12, 24};
    p.input_delta_set = {-3, -6, -9, -12};
    p.schedule.kind = LrSchedule::Kind::WarmupCosine;
    p.schedule.peak_lr = 1e-4;
    p.schedule.final_lr = 1e-5;
    p.schedule.warmup_steps = 2500;
    p.schedule.total_steps = 100000;
    return p;
  }

  /// Forecast tuning: dense data, no drop path, encoder Swin-shift on,
  /// fixed dt=6 / dtau=-6, constant 1e-5, 1-3 autoregressive steps.
  static TrainPhaseConfig phase2(int rollout_steps = 1) {
    TrainPhaseConfig p;
    p.mask_ratio = 0.0;
    p.mask_alternation = false;
    p.drop_path_rate = 0.0;
    p.swin_shift_encoder = true;
    p.lead_time_set = {6};
    p.input_delta_set = {-6};
    p.rollout_steps = rollout_steps;
    p.schedule = LrSchedule::constant(1e-5);
    return p;
  }
};

/// Everything assembled for one (t, dt, dtau) training example.
struct SampleBundle {
  Tensor x_t_norm, x_prev_norm;  // [C,H,W]
  Tensor clim_norm;              // [C,H,W], target-time climatology over (mu, sigma)
  Tensor statics;                // [S+4,H,W]
  Tensor target_norm_anomaly;    // [C,H,W]
  Tensor clim_target;            // [C,H,W] physical units
  int dt = 0, dtau = 0;
};

/// Shared dataset-side assembly for training and evaluation.
class Assembler {
 public:
  Assembler(const DatasetContainer& data, const Climatology& clim, const NormStats& stats)
      : data_(data), clim_(clim), stats_(stats) {
    require(!stats.sigma_c.empty(), "assembler: anomaly stats (sigma_c) required");
    statics_norm_ = standardize_statics(data.statics().fields);
  }

  const DatasetContainer& data() const { return data_; }
  const Climatology& clim() const { return clim_; }
  const NormStats& stats() const { return stats_; }

  /// Assemble one example; nullopt (with reason) if a required state or
  /// climatology entry is missing.
  std::optional<SampleBundle> build(int64_t t_index, int dt, int dtau, std::string* why = nullptr) const {
    const DateTime t = data_.timestamps()[static_cast<size_t>(t_index)];
    const auto prev = data_.index_at(t.plus_hours(dtau));
    const auto tgt = data_.index_at(t.plus_hours(dt));
    if (!prev || !tgt) {
      if (why) *why = "missing input/target state around " + t.iso();
      return std::nullopt;
    }
    const DateTime target_time = t.plus_hours(dt);
    auto clim_t = clim_.try_lookup(target_time);
    if (!clim_t) {
      if (why) *why = "missing climatology entry for " + target_time.iso();
      return std::nullopt;
    }
    SampleBundle s;
    s.dt = dt;
    s.dtau = dtau;
    s.x_t_norm = normalize(data_.state(t_index).values, stats_);
    s.x_prev_norm = normalize(data_.state(*prev).values, stats_);
    s.clim_target = std::move(*clim_t);
    s.clim_norm = normalize(s.clim_target, stats_);
    s.statics = statics_with_time(t);
    Tensor target = data_.state(*tgt).values;
    const int64_t hw = target.dim(1) * target.dim(2);
    s.target_norm_anomaly = Tensor(target.shape());
    for (int64_t c = 0; c < target.dim(0); ++c) {
      const double inv = 1.0 / stats_.sigma_c[static_cast<size_t>(c)];
      for (int64_t i = 0; i < hw; ++i) {
        s.target_norm_anomaly[c * hw + i] = (target[c * hw + i] - s.clim_target[c * hw + i]) * inv;
      }
    }
    return s;
  }

  /// [S+4, H, W]: standardized geophysical statics plus time channels.
  Tensor statics_with_time(const DateTime& t) const {
    StaticFields f;
    f.grid = data_.grid();
    f.fields = statics_norm_;
    return f.with_time(t);
  }

  /// Stack per-sample [C,H,W] tensors into one [B,C,H,W] batch.
  static Tensor stack(const std::vector<const Tensor*>& parts) {
    require(!parts.empty(), "stack: empty batch");
    Shape s = parts[0]->shape();
    s.insert(s.begin(), static_cast<int64_t>(parts.size()));
    Tensor out(s);
    const int64_t per = parts[0]->numel();
    for (size_t i = 0; i < parts.size(); ++i) {
      require(parts[i]->numel() == per, "stack: ragged batch");
      std::copy(parts[i]->data(), parts[i]->data() + per, out.data() + static_cast<int64_t>(i) * per);
    }
    return out;
  }

 private:
  static Tensor standardize_statics(const Tensor& fields) {
    Tensor out = fields;
    const int64_t s = fields.dim(0), hw = fields.dim(1) * fields.dim(2);
    for (int64_t si = 0; si < s; ++si) {
      double* p = out.data() + si * hw;
      double mean = 0.0, sq = 0.0;
      for (int64_t i = 0; i < hw; ++i) mean += p[i];
      mean /= static_cast<double>(hw);
      for (int64_t i = 0; i < hw; ++i) sq += (p[i] - mean) * (p[i] - mean);
      const double sd = std::sqrt(sq / static_cast<double>(hw));
      const double inv = sd > 1e-12 ? 1.0 / sd : 1.0;
      for (int64_t i = 0; i < hw; ++i) p[i] = (p[i] - mean) * inv;
    }
    return out;
  }

  const DatasetContainer& data_;
  const Climatology& clim_;
  const NormStats& stats_;
  Tensor statics_norm_;
};

struct StepResult {
  double loss = std::numeric_limits<double>::quiet_NaN();
  double lr = 0.0;
  MaskStrategy strategy = MaskStrategy::Local;
  std::vector<int> dts, dtaus;
  int used = 0, skipped = 0;
};

struct RolloutTrace {
  std::vector<double> step_mask_ratios;
  std::vector<int64_t> step_masked_counts;
};

/// Single-writer training loop over a frozen dataset/climatology pair.
class Trainer {
 public:
  Trainer(WxCModel& model, const Assembler& assembler, TrainPhaseConfig phase, uint64_t seed)
      : model_(model), asm_(assembler), phase_(std::move(phase)), seed_(seed) {
    for (int dt : phase_.lead_time_set) model_.config().lead_index(dt);      // validate subsets
    for (int dtau : phase_.input_delta_set) model_.config().delta_index(dtau);
    model_.set_swin_shift_encoder(phase_.swin_shift_encoder);
    model_.set_drop_path_rate(phase_.drop_path_rate);
    weights_ = phase_.use_variable_weights ? make_weight_table(asm_.data().catalog())
                                           : uniform_weight_table(asm_.data().catalog().channels());
    if (phase_.lat_weighted_loss) lat_weights_ = cos_lat_weights(asm_.data().grid());
  }

  AdamW& optimizer() { return opt_; }
  const TrainPhaseConfig& phase() const { return phase_; }
  const WeightTable& loss_weights() const { return weights_; }

  /// One masked-pretraining update: per-sample random (dt, dtau) from the
  /// phase sets, mask strategy alternating with step parity.
  StepResult pretrain_step(const std::vector<int64_t>& t_indices, int64_t step) {
    StepResult res;
    res.strategy = strategy_for(step);
    std::vector<SampleBundle> bundle;
    for (size_t i = 0; i < t_indices.size(); ++i) {
      Rng rng(derive_seed(seed_, static_cast<uint64_t>(step), i));
      const int dt = phase_.lead_time_set[static_cast<size_t>(rng.uniform_int(
          static_cast<int64_t>(phase_.lead_time_set.size())))];
      const int dtau = phase_.input_delta_set[static_cast<size_t>(rng.uniform_int(
          static_cast<int64_t>(phase_.input_delta_set.size())))];
      std::string why;
      auto s = asm_.build(t_indices[i], dt, dtau, &why);
      if (!s) {
        std::cerr << "[wxc] step " << step << ": skipping sample: " << why << "\n";
        ++res.skipped;
        continue;
      }
      res.dts.push_back(dt);
      res.dtaus.push_back(dtau);
      bundle.push_back(std::move(*s));
    }
    if (bundle.empty()) return res;
    res.used = static_cast<int>(bundle.size());

    std::vector<MaskIndex> masks;
    const MaskSpec spec{res.strategy, phase_.mask_ratio};
    for (size_t i = 0; i < bundle.size(); ++i) {
      masks.push_back(sample_mask(derive_seed(seed_, static_cast<uint64_t>(step), 0x4000 + i), spec,
                                  model_.config().n_windows(), model_.config().tokens_per_window()));
    }

    Rng drop_rng(derive_seed(seed_, static_cast<uint64_t>(step), 0x9D0F));
    TrainMode tm{true, &drop_rng};
    ad::Var loss = batch_loss(bundle, masks, tm);
    res.loss = loss->value[0];
    apply_update(loss, step, res);
    return res;
  }

  /// Autoregressive rollout update: fixed dt/dtau (first entries of the
  /// phase sets), masking applied only at the first step, gradients flow
  /// through all steps, loss averaged over steps.
  StepResult rollout_step(const std::vector<int64_t>& t_indices, int64_t step, int n_steps,
                          RolloutTrace* trace = nullptr) {
    require(n_steps >= 1, "rollout_step: n_steps must be >= 1");
    StepResult res;
    res.strategy = strategy_for(step);
    const int dt = phase_.lead_time_set.front();
    const int dtau = phase_.input_delta_set.front();
    require(dt > 0, "rollout_step: lead time must be positive");

    struct Seq {
      SampleBundle first;
      std::vector<Tensor> targets, clims;  // per rollout step
    };
    std::vector<Seq> seqs;
    for (size_t i = 0; i < t_indices.size(); ++i) {
      std::string why;
      auto s0 = asm_.build(t_indices[i], dt, dtau, &why);
      bool ok = s0.has_value();
      Seq seq;
      if (ok) {
        seq.first = std::move(*s0);
        for (int k = 2; k <= n_steps && ok; ++k) {
          auto sk = asm_.build(t_indices[i], dt * k, dtau, &why);
          if (!sk) {
            ok = false;
            break;
          }
          seq.targets.push_back(std::move(sk->target_norm_anomaly));
          seq.clims.push_back(std::move(sk->clim_target));
        }
      }
      if (!ok) {
        std::cerr << "[wxc] step " << step << ": skipping rollout sample: " << why << "\n";
        ++res.skipped;
        continue;
      }
      res.dts.push_back(dt);
      res.dtaus.push_back(dtau);
      seqs.push_back(std::move(seq));
    }
    if (seqs.empty()) return res;
    res.used = static_cast<int>(seqs.size());

    // first step (optionally masked)
    std::vector<MaskIndex> masks;
    const MaskSpec spec{res.strategy, phase_.mask_ratio};
    for (size_t i = 0; i < seqs.size(); ++i) {
      masks.push_back(sample_mask(derive_seed(seed_, static_cast<uint64_t>(step), 0x4000 + i), spec,
                                  model_.config().n_windows(), model_.config().tokens_per_window()));
    }
    if (trace) {
      trace->step_mask_ratios.push_back(phase_.mask_ratio);
      trace->step_masked_counts.push_back(
          static_cast<int64_t>(seqs.size()) *
          (model_.config().n_tokens() - masks[0].total_kept()));
    }

    Rng drop_rng(derive_seed(seed_, static_cast<uint64_t>(step), 0x9D0F));
    TrainMode tm{true, &drop_rng};

    std::vector<const Tensor*> xt, xp, cn, st, tg, ct;
    for (auto& s : seqs) {
      xt.push_back(&s.first.x_t_norm);
      xp.push_back(&s.first.x_prev_norm);
      cn.push_back(&s.first.clim_norm);
      st.push_back(&s.first.statics);
      tg.push_back(&s.first.target_norm_anomaly);
      ct.push_back(&s.first.clim_target);
    }
    ad::Var x_t_norm = ad::constant(Assembler::stack(xt));
    ad::Var x_prev_norm = ad::constant(Assembler::stack(xp));
    ad::Var ctx = ad::constant(build_ctx(cn, st));
    Tensor clim_target_b = Assembler::stack(ct);

    std::vector<int> dts(seqs.size(), dt), dtaus(seqs.size(), dtau);
    ad::Var dyn = ad::concat_channels(x_t_norm, x_prev_norm);
    ad::Var out = model_.forward(dyn, ctx, dts, dtaus, masks, tm);
    ad::Var total = ad::weighted_mse(out, Assembler::stack(tg), weights_,
                                     phase_.lat_weighted_loss ? &lat_weights_ : nullptr);

    // feed predictions back: prediction becomes X_t, old X_t becomes X_{t-dtau}
    std::vector<MaskIndex> identity = {
        sample_mask(0, MaskSpec{MaskStrategy::Local, 0.0}, model_.config().n_windows(),
                    model_.config().tokens_per_window())};
    for (int k = 2; k <= n_steps; ++k) {
      if (trace) {
        trace->step_mask_ratios.push_back(0.0);
        trace->step_masked_counts.push_back(0);
      }
      ad::Var phys = predict_physical(out, clim_target_b, asm_.stats().sigma_c);
      std::vector<double> inv_sigma(asm_.stats().sigma.size()), neg_mu_over(asm_.stats().sigma.size());
      for (size_t c = 0; c < inv_sigma.size(); ++c) {
        inv_sigma[c] = 1.0 / asm_.stats().sigma[c];
        neg_mu_over[c] = -asm_.stats().mu[c] / asm_.stats().sigma[c];
      }
      ad::Var pred_norm = ad::channel_affine(phys, inv_sigma, neg_mu_over);
      x_prev_norm = x_t_norm;
      x_t_norm = pred_norm;
      dyn = ad::concat_channels(x_t_norm, x_prev_norm);

      std::vector<const Tensor*> cn_k, st_k, tg_k, ct_k;
      std::vector<Tensor> statics_k;
      statics_k.reserve(seqs.size());
      for (auto& s : seqs) {
        cn_k.push_back(nullptr);  // filled below
        ct_k.push_back(&s.clims[static_cast<size_t>(k - 2)]);
        tg_k.push_back(&s.targets[static_cast<size_t>(k - 2)]);
      }
      // context at step k: climatology of the step-k target time, statics at
      // the recycled input time t + (k-1) dt
      std::vector<Tensor> clim_norm_k;
      clim_norm_k.reserve(seqs.size());
      for (size_t i = 0; i < seqs.size(); ++i) {
        clim_norm_k.push_back(normalize(seqs[i].clims[static_cast<size_t>(k - 2)], asm_.stats()));
        cn_k[i] = &clim_norm_k[i];
        const DateTime t_in =
            asm_.data().timestamps()[static_cast<size_t>(t_indices[i])].plus_hours(static_cast<int64_t>(dt) * (k - 1));
        statics_k.push_back(asm_.statics_with_time(t_in));
        st_k.push_back(&statics_k[i]);
      }
      ctx = ad::constant(build_ctx(cn_k, st_k));
      clim_target_b = Assembler::stack(ct_k);

      out = model_.forward(dyn, ctx, dts, dtaus, identity, tm);
      total = ad::add(total, ad::weighted_mse(out, Assembler::stack(tg_k), weights_,
                                              phase_.lat_weighted_loss ? &lat_weights_ : nullptr));
    }
    ad::Var loss = ad::scale(total, 1.0 / static_cast<double>(n_steps));
    res.loss = loss->value[0];
    apply_update(loss, step, res);
    return res;
  }

  MaskStrategy strategy_for(int64_t step) const {
    if (!phase_.mask_alternation) return phase_.fixed_strategy;
    return step % 2 == 0 ? MaskStrategy::Local : MaskStrategy::Global;
  }

  /// Eval-style forward (no update): returns normalized-anomaly prediction.
  Tensor forward_eval(const std::vector<SampleBundle>& bundle, const std::vector<MaskIndex>& masks) {
    TrainMode tm{};  // eval: deterministic, no drop path
    std::vector<const Tensor*> xt, xp, cn, st;
    for (auto& s : bundle) {
      xt.push_back(&s.x_t_norm);
      xp.push_back(&s.x_prev_norm);
      cn.push_back(&s.clim_norm);
      st.push_back(&s.statics);
    }
    std::vector<int> dts, dtaus;
    for (auto& s : bundle) {
      dts.push_back(s.dt);
      dtaus.push_back(s.dtau);
    }
    ad::Var dyn = ad::concat_channels(ad::constant(Assembler::stack(xt)), ad::constant(Assembler::stack(xp)));
    ad::Var ctx = ad::constant(build_ctx(cn, st));
    ad::Var out = model_.forward(dyn, ctx, dts, dtaus, masks, tm);
    return out->value;
  }

 private:
  ad::Var batch_loss(const std::vector<SampleBundle>& bundle, const std::vector<MaskIndex>& masks,
                     const TrainMode& tm) {
    std::vector<const Tensor*> xt, xp, cn, st, tg;
    for (auto& s : bundle) {
      xt.push_back(&s.x_t_norm);
      xp.push_back(&s.x_prev_norm);
      cn.push_back(&s.clim_norm);
      st.push_back(&s.statics);
      tg.push_back(&s.target_norm_anomaly);
    }
    std::vector<int> dts, dtaus;
    for (auto& s : bundle) {
      dts.push_back(s.dt);
      dtaus.push_back(s.dtau);
    }
    ad::Var dyn = ad::concat_channels(ad::constant(Assembler::stack(xt)), ad::constant(Assembler::stack(xp)));
    ad::Var ctx = ad::constant(build_ctx(cn, st));
    ad::Var out = model_.forward(dyn, ctx, dts, dtaus, masks, tm);
    return ad::weighted_mse(out, Assembler::stack(tg), weights_, phase_.lat_weighted_loss ? &lat_weights_ : nullptr);
  }

  Tensor build_ctx(const std::vector<const Tensor*>& clim_norm, const std::vector<const Tensor*>& statics) const {
    const int64_t b = static_cast<int64_t>(clim_norm.size());
    const int64_t c = clim_norm[0]->dim(0), h = clim_norm[0]->dim(1), w = clim_norm[0]->dim(2);
    const int64_t s = statics[0]->dim(0);
    Tensor out({b, c + s, h, w});
    for (int64_t bi = 0; bi < b; ++bi) {
      std::copy(clim_norm[static_cast<size_t>(bi)]->data(), clim_norm[static_cast<size_t>(bi)]->data() + c * h * w,
                out.data() + bi * (c + s) * h * w);
      std::copy(statics[static_cast<size_t>(bi)]->data(), statics[static_cast<size_t>(bi)]->data() + s * h * w,
                out.data() + bi * (c + s) * h * w + c * h * w);
    }
    return out;
  }

  void apply_update(const ad::Var& loss, int64_t step, StepResult& res) {
    model_.zero_grad();
    ad::backward(loss);
    res.lr = lr_at(step, phase_.schedule);
    opt_.step(model_.params(), res.lr);
  }

  WxCModel& model_;
  const Assembler& asm_;
  TrainPhaseConfig phase_;
  uint64_t seed_;
  WeightTable weights_;
  std::vector<double> lat_weights_;
  AdamW opt_;
};

/// Run directory: config snapshot, per-step CSV metrics, checkpoints.
class RunDir {
 public:
  explicit RunDir(const fs::path& dir) : dir_(dir) {
    fs::create_directories(dir);
    metrics_.open(dir / "metrics.csv", std::ios::trunc);
    metrics_ << "step,lr,loss,strategy,dt,dtau,used,skipped\n";
    log_.open(dir / "log.txt", std::ios::trunc);
  }

  const fs::path& dir() const { return dir_; }

  void snapshot_config(const json& j) { write_json(dir_ / "config.json", j); }

  void record(int64_t step, const StepResult& r) {
    auto join = [](const std::vector<int>& v) {
      std::string s;
      for (size_t i = 0; i < v.size(); ++i) s += (i ? "|" : "") + std::to_string(v[i]);
      return s;
    };
    metrics_ << step << "," << r.lr << "," << r.loss << "," << to_string(r.strategy) << "," << join(r.dts) << ","
             << join(r.dtaus) << "," << r.used << "," << r.skipped << "\n";
  }

  void log(const std::string& line) {
    log_ << line << "\n";
    log_.flush();
  }

  void flush() { metrics_.flush(); }

 private:
  fs::path dir_;
  std::ofstream metrics_;
  std::ofstream log_;
};

}  // namespace wxc
