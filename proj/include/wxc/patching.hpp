#pragma once

#include <memory>

#include "wxc/autodiff.hpp"
#include "wxc/model_config.hpp"

namespace wxc {

/// Index bookkeeping between pixel space [C, H, W] and the windowed token
/// layout [n_windows, tokens_per_window, C*p_h*p_w]. Windows are row-major
/// over the grid, tokens row-major within a window, features channel-major.
class TokenLayout {
 public:
  explicit TokenLayout(const ModelConfig& cfg)
      : th_(cfg.tokens_h()),
        tw_(cfg.tokens_w()),
        wth_(cfg.win_tokens_h()),
        wtw_(cfg.win_tokens_w()),
        wcols_(cfg.window_cols()),
        ph_(cfg.patch_h),
        pw_(cfg.patch_w) {}

  int64_t n_tokens() const { return th_ * tw_; }
  int64_t tokens_h() const { return th_; }
  int64_t tokens_w() const { return tw_; }
  int64_t tokens_per_window() const { return wth_ * wtw_; }
  int64_t n_windows() const { return (th_ / wth_) * (tw_ / wtw_); }

  /// (window, token-in-window) -> flat slot index.
  int64_t slot_of_grid(int64_t gr, int64_t gc) const {
    const int64_t win = (gr / wth_) * wcols_ + (gc / wtw_);
    const int64_t tok = (gr % wth_) * wtw_ + (gc % wtw_);
    return win * tokens_per_window() + tok;
  }

  /// flat slot index -> token-grid coordinates.
  std::pair<int64_t, int64_t> grid_of_slot(int64_t slot) const {
    const int64_t win = slot / tokens_per_window();
    const int64_t tok = slot % tokens_per_window();
    const int64_t gr = (win / wcols_) * wth_ + tok / wtw_;
    const int64_t gc = (win % wcols_) * wtw_ + tok % wtw_;
    return {gr, gc};
  }

  /// Map from (slot, feature) to the flat [C, H, W] index; features are
  /// c * p_h * p_w + py * p_w + px.
  std::shared_ptr<const std::vector<int64_t>> pixel_map(int64_t channels, int64_t h, int64_t w) const {
    require(h == th_ * ph_ && w == tw_ * pw_, "token layout built for another grid");
    const int64_t f = channels * ph_ * pw_;
    auto map = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(n_tokens() * f));
    for (int64_t slot = 0; slot < n_tokens(); ++slot) {
      const auto [gr, gc] = grid_of_slot(slot);
      for (int64_t c = 0; c < channels; ++c) {
        for (int64_t py = 0; py < ph_; ++py) {
          for (int64_t px = 0; px < pw_; ++px) {
            const int64_t feat = c * ph_ * pw_ + py * pw_ + px;
            (*map)[static_cast<size_t>(slot * f + feat)] = c * h * w + (gr * ph_ + py) * w + (gc * pw_ + px);
          }
        }
      }
    }
    return map;
  }

  /// Cyclic token-grid roll by (half window height, half window width),
  /// floor for odd counts. Returns slot permutation out_slot -> in_slot.
  std::shared_ptr<const std::vector<int64_t>> shift_permutation(bool inverse) const {
    const int64_t sh = wth_ / 2, sw = wtw_ / 2;
    auto perm = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(n_tokens()));
    for (int64_t gr = 0; gr < th_; ++gr) {
      for (int64_t gc = 0; gc < tw_; ++gc) {
        const int64_t sgr = inverse ? (gr + sh) % th_ : (gr - sh + th_) % th_;
        const int64_t sgc = inverse ? (gc + sw) % tw_ : (gc - sw + tw_) % tw_;
        (*perm)[static_cast<size_t>(slot_of_grid(gr, gc))] = slot_of_grid(sgr, sgc);
      }
    }
    return perm;
  }

  std::pair<int64_t, int64_t> half_window_shift() const { return {wth_ / 2, wtw_ / 2}; }

 private:
  int64_t th_, tw_, wth_, wtw_, wcols_, ph_, pw_;
};

// --- plain-tensor patchify/unpatchify ---------------------------------------

inline Tensor patchify(const Tensor& field, const TokenLayout& layout) {
  require(field.ndim() == 3, "patchify: expected [C,H,W]");
  const int64_t c = field.dim(0), h = field.dim(1), w = field.dim(2);
  auto map = layout.pixel_map(c, h, w);
  const int64_t f = map->size() / static_cast<size_t>(layout.n_tokens());
  Tensor out({layout.n_windows(), layout.tokens_per_window(), f});
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = field[(*map)[static_cast<size_t>(i)]];
  return out;
}

inline Tensor unpatchify(const Tensor& tokens, const TokenLayout& layout, int64_t channels, int64_t h, int64_t w) {
  require(tokens.numel() == channels * h * w, "unpatchify: element count mismatch");
  auto map = layout.pixel_map(channels, h, w);
  Tensor out({channels, h, w});
  for (int64_t i = 0; i < tokens.numel(); ++i) out[(*map)[static_cast<size_t>(i)]] = tokens[i];
  return out;
}

namespace ad {

/// [B, C, H, W] -> [B, n_windows, tokens_per_window, C*p_h*p_w]
inline Var patchify(const Var& x, const TokenLayout& layout) {
  require(x->value.ndim() == 4, "patchify: expected [B,C,H,W]");
  const int64_t b = x->value.dim(0), c = x->value.dim(1), h = x->value.dim(2), w = x->value.dim(3);
  auto map = layout.pixel_map(c, h, w);
  const int64_t per = c * h * w;
  const int64_t f = static_cast<int64_t>(map->size()) / layout.n_tokens();
  Tensor out({b, layout.n_windows(), layout.tokens_per_window(), f});
  for (int64_t bi = 0; bi < b; ++bi) {
    const double* src = x->value.data() + bi * per;
    double* dst = out.data() + bi * per;
    for (int64_t i = 0; i < per; ++i) dst[i] = src[(*map)[static_cast<size_t>(i)]];
  }
  return make_op(std::move(out), {x}, [map, b, per](Node& self) {
    Tensor& pg = self.parents[0]->g();
    for (int64_t bi = 0; bi < b; ++bi) {
      double* gx = pg.data() + bi * per;
      const double* gy = self.grad.data() + bi * per;
      for (int64_t i = 0; i < per; ++i) gx[(*map)[static_cast<size_t>(i)]] += gy[i];
    }
  });
}

/// [B, n_windows, tokens_per_window, C*p_h*p_w] -> [B, C, H, W]
inline Var unpatchify(const Var& x, const TokenLayout& layout, int64_t channels, int64_t h, int64_t w) {
  require(x->value.ndim() == 4, "unpatchify: expected [B,W,T,F]");
  const int64_t b = x->value.dim(0);
  const int64_t per = channels * h * w;
  require(x->value.numel() == b * per, "unpatchify: element count mismatch");
  auto map = layout.pixel_map(channels, h, w);
  Tensor out({b, channels, h, w});
  for (int64_t bi = 0; bi < b; ++bi) {
    const double* src = x->value.data() + bi * per;
    double* dst = out.data() + bi * per;
    for (int64_t i = 0; i < per; ++i) dst[(*map)[static_cast<size_t>(i)]] = src[i];
  }
  return make_op(std::move(out), {x}, [map, b, per](Node& self) {
    Tensor& pg = self.parents[0]->g();
    for (int64_t bi = 0; bi < b; ++bi) {
      double* gx = pg.data() + bi * per;
      const double* gy = self.grad.data() + bi * per;
      for (int64_t i = 0; i < per; ++i) gx[i] += gy[(*map)[static_cast<size_t>(i)]];
    }
  });
}

}  // namespace ad

}  // namespace wxc
