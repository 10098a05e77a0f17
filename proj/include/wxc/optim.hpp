#pragma once

#include <map>

#include "wxc/autodiff.hpp"

namespace wxc {

/// Adam with decoupled weight decay and a global gradient-norm clip.
/// Decay applies to matrices only (norms, biases and tables are exempt).
class AdamW {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-8;
    double weight_decay = 0.05;
    double clip_norm = 1.0;
  };

  AdamW() : AdamW(Options()) {}
  explicit AdamW(Options opt) : opt_(opt) {}

  const Options& options() const { return opt_; }

  /// One update over the trainable parameters; returns the pre-clip
  /// gradient norm.
  double step(std::vector<std::pair<std::string, ad::Var>>& params, double lr) {
    double sq = 0.0;
    for (auto& [name, p] : params) {
      if (!p->requires_grad || p->grad.numel() == 0) continue;
      for (int64_t i = 0; i < p->grad.numel(); ++i) sq += p->grad[i] * p->grad[i];
    }
    const double norm = std::sqrt(sq);
    const double clip_scale = (opt_.clip_norm > 0.0 && norm > opt_.clip_norm) ? opt_.clip_norm / norm : 1.0;

    ++t_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    for (auto& [name, p] : params) {
      if (!p->requires_grad || p->grad.numel() == 0) continue;
      auto& st = state_[p.get()];
      if (st.m.numel() == 0) {
        st.m = Tensor(p->value.shape());
        st.v = Tensor(p->value.shape());
      }
      const bool decay = p->value.ndim() >= 2;
      for (int64_t i = 0; i < p->value.numel(); ++i) {
        const double g = p->grad[i] * clip_scale;
        st.m[i] = opt_.beta1 * st.m[i] + (1.0 - opt_.beta1) * g;
        st.v[i] = opt_.beta2 * st.v[i] + (1.0 - opt_.beta2) * g * g;
        const double mhat = st.m[i] / bc1;
        const double vhat = st.v[i] / bc2;
        double upd = mhat / (std::sqrt(vhat) + opt_.eps);
        if (decay) upd += opt_.weight_decay * p->value[i];
        p->value[i] -= lr * upd;
      }
    }
    return norm;
  }

 private:
  struct State {
    Tensor m, v;
  };
  Options opt_;
  int64_t t_ = 0;
  std::map<ad::Node*, State> state_;
};

}  // namespace wxc
