#pragma once

#include "wxc/autodiff.hpp"
#include "wxc/grid.hpp"
#include "wxc/weights.hpp"

namespace wxc {

/// cos-latitude pixel weights normalized to mean 1 over the grid.
inline std::vector<double> cos_lat_weights(const GridSpec& grid) {
  std::vector<double> w(static_cast<size_t>(grid.h));
  double sum = 0.0;
  for (int64_t r = 0; r < grid.h; ++r) {
    w[static_cast<size_t>(r)] = std::max(0.0, std::cos(grid.lat(r) * M_PI / 180.0));
    sum += w[static_cast<size_t>(r)];
  }
  for (double& v : w) v = v * static_cast<double>(grid.h) / sum;
  return w;
}

namespace ad {

/// Channel-weighted MSE over all pixels, averaged over the batch:
///   L = mean_b sum_c w_c * mean_hw(d^2) / sum_c w_c
/// Optional per-row latitude weights (normalized to mean 1) reweigh the
/// pixel mean.
inline Var weighted_mse(const Var& pred, Tensor target, const WeightTable& wt,
                        const std::vector<double>* lat_weights = nullptr) {
  require(pred->value.same_shape(target), "weighted_mse: shape mismatch " + shape_str(pred->value.shape()) +
                                              " vs " + shape_str(target.shape()));
  require(pred->value.ndim() == 4, "weighted_mse: expected [B,C,H,W]");
  wt.validate();
  const int64_t b = pred->value.dim(0), c = pred->value.dim(1), h = pred->value.dim(2), w = pred->value.dim(3);
  require(static_cast<int64_t>(wt.weights.size()) == c, "weighted_mse: weight count mismatch");
  if (lat_weights != nullptr) {
    require(static_cast<int64_t>(lat_weights->size()) == h, "weighted_mse: latitude weight count mismatch");
  }
  double wsum = 0.0;
  for (double v : wt.weights) wsum += v;

  // effective per-element coefficient: w_c * lambda_row / (B * H * W * sum_w)
  auto coeff = std::make_shared<std::vector<double>>(static_cast<size_t>(c * h));
  const double norm = 1.0 / (static_cast<double>(b) * static_cast<double>(h * w) * wsum);
  for (int64_t ci = 0; ci < c; ++ci) {
    for (int64_t r = 0; r < h; ++r) {
      const double lam = lat_weights ? (*lat_weights)[static_cast<size_t>(r)] : 1.0;
      (*coeff)[static_cast<size_t>(ci * h + r)] = wt.weights[static_cast<size_t>(ci)] * lam * norm;
    }
  }

  auto tgt = std::make_shared<Tensor>(std::move(target));
  Tensor out({1});
  double acc = 0.0;
  for (int64_t bi = 0; bi < b; ++bi) {
    for (int64_t ci = 0; ci < c; ++ci) {
      for (int64_t r = 0; r < h; ++r) {
        const double k = (*coeff)[static_cast<size_t>(ci * h + r)];
        const double* pp = pred->value.data() + ((bi * c + ci) * h + r) * w;
        const double* tp = tgt->data() + ((bi * c + ci) * h + r) * w;
        double rowacc = 0.0;
        for (int64_t x = 0; x < w; ++x) {
          const double d = pp[x] - tp[x];
          rowacc += d * d;
        }
        acc += k * rowacc;
      }
    }
  }
  out[0] = acc;
  return make_op(std::move(out), {pred}, [tgt, coeff, b, c, h, w](Node& self) {
    Tensor& pg = self.parents[0]->g();
    const Tensor& pv = self.parents[0]->value;
    const double g = self.grad[0];
    for (int64_t bi = 0; bi < b; ++bi) {
      for (int64_t ci = 0; ci < c; ++ci) {
        for (int64_t r = 0; r < h; ++r) {
          const double k = 2.0 * g * (*coeff)[static_cast<size_t>(ci * h + r)];
          const int64_t base = ((bi * c + ci) * h + r) * w;
          for (int64_t x = 0; x < w; ++x) {
            pg[base + x] += k * (pv[base + x] - (*tgt)[base + x]);
          }
        }
      }
    }
  });
}

/// Concatenate along the channel axis of [B, C, H, W].
inline Var concat_channels(const Var& a, const Var& b) {
  require(a->value.ndim() == 4 && b->value.ndim() == 4, "concat_channels: expected [B,C,H,W]");
  const int64_t bs = a->value.dim(0), ca = a->value.dim(1), cb = b->value.dim(1);
  const int64_t h = a->value.dim(2), w = a->value.dim(3);
  require(b->value.dim(0) == bs && b->value.dim(2) == h && b->value.dim(3) == w, "concat_channels: shape mismatch");
  Tensor out({bs, ca + cb, h, w});
  const int64_t hw = h * w;
  for (int64_t bi = 0; bi < bs; ++bi) {
    std::copy(a->value.data() + bi * ca * hw, a->value.data() + (bi + 1) * ca * hw,
              out.data() + bi * (ca + cb) * hw);
    std::copy(b->value.data() + bi * cb * hw, b->value.data() + (bi + 1) * cb * hw,
              out.data() + bi * (ca + cb) * hw + ca * hw);
  }
  return make_op(std::move(out), {a, b}, [bs, ca, cb, hw](Node& self) {
    for (int64_t bi = 0; bi < bs; ++bi) {
      if (self.parents[0]->requires_grad) {
        Tensor& pg = self.parents[0]->g();
        const double* gy = self.grad.data() + bi * (ca + cb) * hw;
        double* gp = pg.data() + bi * ca * hw;
        for (int64_t i = 0; i < ca * hw; ++i) gp[i] += gy[i];
      }
      if (self.parents[1]->requires_grad) {
        Tensor& pg = self.parents[1]->g();
        const double* gy = self.grad.data() + bi * (ca + cb) * hw + ca * hw;
        double* gp = pg.data() + bi * cb * hw;
        for (int64_t i = 0; i < cb * hw; ++i) gp[i] += gy[i];
      }
    }
  });
}

}  // namespace ad

}  // namespace wxc
