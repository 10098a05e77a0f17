#pragma once

#include "wxc/tensor.hpp"

namespace wxc {

/// Linear warmup then cosine annealing, or a constant rate.
struct LrSchedule {
  enum class Kind { WarmupCosine, Constant };
  Kind kind = Kind::WarmupCosine;
  double peak_lr = 1e-4;
  double final_lr = 1e-5;
  int64_t warmup_steps = 2500;
  int64_t total_steps = 100000;
  double constant_lr = 1e-5;

  static LrSchedule constant(double lr) {
    LrSchedule s;
    s.kind = Kind::Constant;
    s.constant_lr = lr;
    return s;
  }
};

inline double lr_at(int64_t step, const LrSchedule& s) {
  if (s.kind == LrSchedule::Kind::Constant) return s.constant_lr;
  require(step >= 0 && step <= s.total_steps, "lr_at: step out of schedule range");
  if (step <= s.warmup_steps) {
    return s.peak_lr * static_cast<double>(step) / static_cast<double>(s.warmup_steps);
  }
  const double tau = static_cast<double>(step - s.warmup_steps) / static_cast<double>(s.total_steps - s.warmup_steps);
  return s.final_lr + (s.peak_lr - s.final_lr) * 0.5 * (1.0 + std::cos(M_PI * tau));
}

}  // namespace wxc
