#pragma once

#include "wxc/patching.hpp"
#include "wxc/rng.hpp"

namespace wxc {

/// Static Fourier position encoding per token slot: sin/cos of integer
/// harmonics of token-center longitude and latitude, sent through a fixed
/// seeded projection to the embedding width. Non-learned; exactly periodic
/// in longitude by construction.
inline Tensor fourier_position_encoding(const ModelConfig& cfg, const GridSpec& grid) {
  const TokenLayout layout(cfg);
  const int64_t k = cfg.harmonics();
  const int64_t feat = 4 * k;
  const int64_t n = layout.n_tokens();

  Tensor features({n, feat});
  for (int64_t slot = 0; slot < n; ++slot) {
    const auto [gr, gc] = layout.grid_of_slot(slot);
    const double lat = grid.lat0 + grid.dlat * (static_cast<double>(gr) * cfg.patch_h + (cfg.patch_h - 1) * 0.5);
    const double lon = grid.lon0 + grid.dlon * (static_cast<double>(gc) * cfg.patch_w + (cfg.patch_w - 1) * 0.5);
    const double lam = lon * M_PI / 180.0;
    const double phi = lat * M_PI / 180.0;
    double* row = features.data() + slot * feat;
    for (int64_t h = 1; h <= k; ++h) {
      row[4 * (h - 1) + 0] = std::sin(h * lam);
      row[4 * (h - 1) + 1] = std::cos(h * lam);
      row[4 * (h - 1) + 2] = std::sin(h * phi);
      row[4 * (h - 1) + 3] = std::cos(h * phi);
    }
  }

  // fixed projection, regenerated deterministically (not a checkpoint tensor)
  Tensor proj({feat, cfg.embed_dim});
  Rng rng(derive_seed(0xF0501E17ULL, static_cast<uint64_t>(feat), static_cast<uint64_t>(cfg.embed_dim)));
  rng.fill_normal(proj, 0.0, 1.0 / std::sqrt(static_cast<double>(feat)));

  Tensor out({n, cfg.embed_dim});
  ad::ECMap f(features.data(), n, feat);
  ad::ECMap p(proj.data(), feat, cfg.embed_dim);
  ad::EMap o(out.data(), n, cfg.embed_dim);
  o.noalias() = f * p;
  return out;
}

namespace ad {

/// Add a fixed per-slot row table to [B, S, D]-shaped tokens (S folded as
/// windows x tokens). The table is constant; gradients pass through.
inline Var add_slot_rows(const Var& x, std::shared_ptr<const Tensor> rows) {
  const int64_t d = x->value.dim(-1);
  const int64_t slots = rows->dim(0);
  require(rows->dim(1) == d, "add_slot_rows: width mismatch");
  const int64_t b = x->value.numel() / (slots * d);
  require(b * slots * d == x->value.numel(), "add_slot_rows: slot count mismatch");
  Tensor out = x->value;
  for (int64_t bi = 0; bi < b; ++bi) {
    double* dst = out.data() + bi * slots * d;
    for (int64_t s = 0; s < slots; ++s) {
      const double* r = rows->data() + s * d;
      for (int64_t i = 0; i < d; ++i) dst[s * d + i] += r[i];
    }
  }
  return make_op(std::move(out), {x}, [](Node& self) {
    Tensor& pg = self.parents[0]->g();
    for (int64_t i = 0; i < pg.numel(); ++i) pg[i] += self.grad[i];
  });
}

}  // namespace ad

}  // namespace wxc
