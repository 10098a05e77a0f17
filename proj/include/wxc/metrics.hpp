#pragma once

#include "wxc/trainer.hpp"

namespace wxc {

/// Per-channel root mean squared error, optionally cos-latitude weighted
/// (weights normalized to mean 1 over rows).
inline std::vector<double> rmse(const Tensor& pred, const Tensor& truth, const std::vector<double>* lat_weights = nullptr) {
  require(pred.same_shape(truth), "rmse: shape mismatch");
  require(pred.ndim() == 3, "rmse: expected [C,H,W]");
  const int64_t c = pred.dim(0), h = pred.dim(1), w = pred.dim(2);
  if (lat_weights) require(static_cast<int64_t>(lat_weights->size()) == h, "rmse: latitude weight count mismatch");
  std::vector<double> out(static_cast<size_t>(c), 0.0);
  for (int64_t ci = 0; ci < c; ++ci) {
    double acc = 0.0, wsum = 0.0;
    for (int64_t r = 0; r < h; ++r) {
      const double lam = lat_weights ? (*lat_weights)[static_cast<size_t>(r)] : 1.0;
      const double* pp = pred.data() + (ci * h + r) * w;
      const double* tp = truth.data() + (ci * h + r) * w;
      for (int64_t x = 0; x < w; ++x) {
        const double d = pp[x] - tp[x];
        acc += lam * d * d;
      }
      wsum += lam * static_cast<double>(w);
    }
    out[static_cast<size_t>(ci)] = std::sqrt(acc / wsum);
  }
  return out;
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// Flat per-variable metric rows with the sweep coordinates that produced
/// them; rendered as CSV and JSON.
struct MetricReport {
  struct Row {
    std::string variable;
    std::string strategy;  // "local"/"global"/"forecast"/"persistence"/"climatology"
    double ratio = 0.0;
    int lead_hours = 0;
    double rmse = 0.0;
    int64_t n_samples = 0;
  };
  std::vector<Row> rows;
  bool lat_weighted = false;

  void append(const std::string& variable, const std::string& strategy, double ratio, int lead, double value,
              int64_t n) {
    rows.push_back({variable, strategy, ratio, lead, value, n});
  }

  std::string to_csv() const {
    std::ostringstream os;
    os << "variable,strategy,ratio,lead_hours,rmse,n_samples,lat_weighted\n";
    for (const auto& r : rows) {
      os << r.variable << "," << r.strategy << "," << r.ratio << "," << r.lead_hours << "," << r.rmse << ","
         << r.n_samples << "," << (lat_weighted ? 1 : 0) << "\n";
    }
    return os.str();
  }

  json to_json() const {
    json rows_j = json::array();
    for (const auto& r : rows) {
      rows_j.push_back(json{{"variable", r.variable},
                            {"strategy", r.strategy},
                            {"ratio", r.ratio},
                            {"lead_hours", r.lead_hours},
                            {"rmse", r.rmse},
                            {"n_samples", r.n_samples}});
    }
    return json{{"lat_weighted", lat_weighted}, {"rows", rows_j}};
  }

  /// Mean-over-variables RMSE for one (strategy, lead) as a function of
  /// ratio, in ascending ratio order.
  std::vector<std::pair<double, double>> ratio_series(const std::string& strategy, int lead) const {
    std::map<double, std::pair<double, int64_t>> acc;
    for (const auto& r : rows) {
      if (r.strategy == strategy && r.lead_hours == lead) {
        acc[r.ratio].first += r.rmse;
        acc[r.ratio].second += 1;
      }
    }
    std::vector<std::pair<double, double>> out;
    for (const auto& [ratio, v] : acc) out.emplace_back(ratio, v.first / static_cast<double>(v.second));
    return out;
  }
};

/// Eval-mode batched forward on assembled bundles (no update, no drop path).
inline Tensor batched_forward_eval(WxCModel& model, const std::vector<SampleBundle>& bundle,
                                   const std::vector<MaskIndex>& masks) {
  TrainMode tm{};
  std::vector<const Tensor*> xt, xp, cn, st;
  std::vector<int> dts, dtaus;
  for (auto& s : bundle) {
    xt.push_back(&s.x_t_norm);
    xp.push_back(&s.x_prev_norm);
    cn.push_back(&s.clim_norm);
    st.push_back(&s.statics);
    dts.push_back(s.dt);
    dtaus.push_back(s.dtau);
  }
  ad::Var dyn = ad::concat_channels(ad::constant(Assembler::stack(xt)), ad::constant(Assembler::stack(xp)));
  const int64_t b = static_cast<int64_t>(bundle.size());
  const int64_t c = bundle[0].clim_norm.dim(0), h = bundle[0].clim_norm.dim(1), w = bundle[0].clim_norm.dim(2);
  const int64_t s_ch = bundle[0].statics.dim(0);
  Tensor ctx({b, c + s_ch, h, w});
  for (int64_t bi = 0; bi < b; ++bi) {
    std::copy(bundle[static_cast<size_t>(bi)].clim_norm.data(), bundle[static_cast<size_t>(bi)].clim_norm.data() + c * h * w,
              ctx.data() + bi * (c + s_ch) * h * w);
    std::copy(bundle[static_cast<size_t>(bi)].statics.data(), bundle[static_cast<size_t>(bi)].statics.data() + s_ch * h * w,
              ctx.data() + bi * (c + s_ch) * h * w + c * h * w);
  }
  ad::Var out = model.forward(dyn, ad::constant(ctx), dts, dtaus, masks, tm);
  return out->value;
}

/// Physical-units prediction for one sample of an eval batch.
inline Tensor to_physical(const Tensor& norm_anomaly_batch, int64_t b_index, const Tensor& clim_target,
                          const std::vector<double>& sigma_c) {
  const int64_t c = clim_target.dim(0), hw = clim_target.dim(1) * clim_target.dim(2);
  Tensor out(clim_target.shape());
  const double* src = norm_anomaly_batch.data() + b_index * c * hw;
  for (int64_t ci = 0; ci < c; ++ci) {
    for (int64_t i = 0; i < hw; ++i) {
      out[ci * hw + i] = src[ci * hw + i] * sigma_c[static_cast<size_t>(ci)] + clim_target[ci * hw + i];
    }
  }
  return out;
}

/// Masked-reconstruction sweep over ratios x strategies x lead times with
/// fixed per-cell seeds; RMSE in physical units vs the target state.
inline MetricReport eval_reconstruction(WxCModel& model, const Assembler& assembler,
                                        const std::vector<int64_t>& t_indices,
                                        const std::vector<double>& ratios = {0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99},
                                        const std::vector<MaskStrategy>& strategies = {MaskStrategy::Local,
                                                                                       MaskStrategy::Global},
                                        const std::vector<int>& lead_times = {0, 6}, int dtau = -6,
                                        uint64_t seed = 1234, bool lat_weighted = false) {
  MetricReport report;
  report.lat_weighted = lat_weighted;
  const auto& cat = assembler.data().catalog();
  std::vector<double> lat_w;
  if (lat_weighted) lat_w = cos_lat_weights(assembler.data().grid());

  for (MaskStrategy strat : strategies) {
    for (double ratio : ratios) {
      for (int lead : lead_times) {
        std::vector<SampleBundle> bundle;
        std::vector<Tensor> truths;
        for (int64_t ti : t_indices) {
          auto s = assembler.build(ti, lead, dtau);
          if (!s) continue;
          const DateTime target_time =
              assembler.data().timestamps()[static_cast<size_t>(ti)].plus_hours(lead);
          const auto truth_index = assembler.data().index_at(target_time);
          truths.push_back(assembler.data().state(*truth_index).values);
          bundle.push_back(std::move(*s));
        }
        if (bundle.empty()) continue;
        std::vector<MaskIndex> masks;
        for (size_t i = 0; i < bundle.size(); ++i) {
          const uint64_t cell_seed =
              derive_seed(seed, static_cast<uint64_t>(ratio * 1000), static_cast<uint64_t>(lead) * 2 +
                                                                          (strat == MaskStrategy::Global ? 1 : 0),
                          i);
          masks.push_back(sample_mask(cell_seed, MaskSpec{strat, ratio}, model.config().n_windows(),
                                      model.config().tokens_per_window()));
        }
        Tensor out = batched_forward_eval(model, bundle, masks);
        std::vector<double> acc(static_cast<size_t>(cat.channels()), 0.0);
        for (size_t bi = 0; bi < bundle.size(); ++bi) {
          Tensor phys = to_physical(out, static_cast<int64_t>(bi), bundle[bi].clim_target, assembler.stats().sigma_c);
          auto r = rmse(phys, truths[bi], lat_weighted ? &lat_w : nullptr);
          for (size_t ci = 0; ci < r.size(); ++ci) acc[ci] += r[ci];
        }
        for (int64_t ci = 0; ci < cat.channels(); ++ci) {
          report.append(cat.channel_name(ci), to_string(strat), ratio, lead,
                        acc[static_cast<size_t>(ci)] / static_cast<double>(bundle.size()),
                        static_cast<int64_t>(bundle.size()));
        }
      }
    }
  }
  return report;
}

/// Dense autoregressive forecast evaluation with persistence and
/// climatology reference scores.
inline MetricReport eval_forecast(WxCModel& model, const Assembler& assembler, const std::vector<int64_t>& t_indices,
                                  int max_lead_hours, int step_hours = 6, bool lat_weighted = false) {
  MetricReport report;
  report.lat_weighted = lat_weighted;
  const auto& cat = assembler.data().catalog();
  const int n_leads = max_lead_hours / step_hours;
  std::vector<double> lat_w;
  if (lat_weighted) lat_w = cos_lat_weights(assembler.data().grid());

  struct Acc {
    std::vector<double> model_e, persist_e, clim_e;
    int64_t n = 0;
  };
  std::vector<Acc> acc(static_cast<size_t>(n_leads));
  for (auto& a : acc) {
    a.model_e.assign(static_cast<size_t>(cat.channels()), 0.0);
    a.persist_e.assign(static_cast<size_t>(cat.channels()), 0.0);
    a.clim_e.assign(static_cast<size_t>(cat.channels()), 0.0);
  }

  const std::vector<MaskIndex> identity = {sample_mask(
      0, MaskSpec{MaskStrategy::Local, 0.0}, model.config().n_windows(), model.config().tokens_per_window())};

  for (int64_t ti : t_indices) {
    const DateTime t0 = assembler.data().timestamps()[static_cast<size_t>(ti)];
    Tensor x0 = assembler.data().state(ti).values;
    Tensor x_t = x0;
    Tensor x_prev;
    {
      const auto prev = assembler.data().index_at(t0.plus_hours(-step_hours));
      if (!prev) continue;
      x_prev = assembler.data().state(*prev).values;
    }
    bool ok = true;
    for (int k = 1; k <= n_leads && ok; ++k) {
      const DateTime target_time = t0.plus_hours(static_cast<int64_t>(k) * step_hours);
      const auto truth_index = assembler.data().index_at(target_time);
      auto clim_t = assembler.clim().try_lookup(target_time);
      if (!truth_index || !clim_t) {
        ok = false;
        break;
      }
      const Tensor truth = assembler.data().state(*truth_index).values;

      SampleBundle s;
      s.dt = step_hours;
      s.dtau = -step_hours;
      s.x_t_norm = normalize(x_t, assembler.stats());
      s.x_prev_norm = normalize(x_prev, assembler.stats());
      s.clim_target = *clim_t;
      s.clim_norm = normalize(*clim_t, assembler.stats());
      s.statics = assembler.statics_with_time(t0.plus_hours(static_cast<int64_t>(k - 1) * step_hours));
      Tensor out = batched_forward_eval(model, {s}, identity);
      Tensor pred = to_physical(out, 0, s.clim_target, assembler.stats().sigma_c);

      auto rm = rmse(pred, truth, lat_weighted ? &lat_w : nullptr);
      auto rp = rmse(x0, truth, lat_weighted ? &lat_w : nullptr);
      auto rc = rmse(s.clim_target, truth, lat_weighted ? &lat_w : nullptr);
      Acc& a = acc[static_cast<size_t>(k - 1)];
      for (size_t ci = 0; ci < rm.size(); ++ci) {
        a.model_e[ci] += rm[ci];
        a.persist_e[ci] += rp[ci];
        a.clim_e[ci] += rc[ci];
      }
      a.n += 1;

      x_prev = x_t;
      x_t = pred;
    }
  }

  for (int k = 1; k <= n_leads; ++k) {
    const Acc& a = acc[static_cast<size_t>(k - 1)];
    if (a.n == 0) continue;
    for (int64_t ci = 0; ci < cat.channels(); ++ci) {
      report.append(cat.channel_name(ci), "forecast", 0.0, k * step_hours,
                    a.model_e[static_cast<size_t>(ci)] / static_cast<double>(a.n), a.n);
      report.append(cat.channel_name(ci), "persistence", 0.0, k * step_hours,
                    a.persist_e[static_cast<size_t>(ci)] / static_cast<double>(a.n), a.n);
      report.append(cat.channel_name(ci), "climatology", 0.0, k * step_hours,
                    a.clim_e[static_cast<size_t>(ci)] / static_cast<double>(a.n), a.n);
    }
  }
  return report;
}

}  // namespace wxc
