#pragma once

#include <functional>

#include "wxc/autodiff.hpp"
#include "wxc/rng.hpp"

namespace wxc::test {

/// Central-difference gradient oracle. `build` must rebuild the scalar
/// graph from the current parameter values on every call.
struct GradCheck {
  double max_rel_err = 0.0;
  double worst_analytic = 0.0, worst_fd = 0.0;
  std::string worst_param;
};

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({1e-3, std::abs(a), std::abs(b)});
}

inline GradCheck check_gradients(std::vector<std::pair<std::string, ad::Var>> params,
                                 const std::function<ad::Var()>& build, int n_coords, uint64_t seed,
                                 double h0 = 1e-4) {
  // analytic gradients once
  for (auto& [name, p] : params) p->zero_grad();
  ad::Var loss = build();
  ad::backward(loss);
  std::vector<Tensor> analytic;
  for (auto& [name, p] : params) analytic.push_back(p->g());

  GradCheck res;
  Rng rng(seed);
  for (int c = 0; c < n_coords; ++c) {
    const size_t pi = static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(params.size())));
    ad::Var& p = params[pi].second;
    const int64_t i = rng.uniform_int(p->value.numel());
    const double x0 = p->value[i];
    const double h = h0 * std::max(1.0, std::abs(x0));
    p->value[i] = x0 + h;
    const double fp = build()->value[0];
    p->value[i] = x0 - h;
    const double fm = build()->value[0];
    p->value[i] = x0;
    const double fd = (fp - fm) / (2.0 * h);
    const double an = analytic[pi][i];
    const double rel = relative_error(an, fd);
    if (rel > res.max_rel_err) {
      res.max_rel_err = rel;
      res.worst_analytic = an;
      res.worst_fd = fd;
      res.worst_param = params[pi].first;
    }
  }
  return res;
}

}  // namespace wxc::test
