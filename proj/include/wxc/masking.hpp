#pragma once

#include <nlohmann/json.hpp>

#include "wxc/autodiff.hpp"
#include "wxc/rng.hpp"

namespace wxc {

using json = nlohmann::json;

enum class MaskStrategy { Local, Global };

inline const char* to_string(MaskStrategy s) { return s == MaskStrategy::Local ? "local" : "global"; }

struct MaskSpec {
  MaskStrategy strategy = MaskStrategy::Local;
  double ratio = 0.0;

  void validate() const { require(ratio >= 0.0 && ratio < 1.0, "mask ratio must be in [0, 1)"); }
};

/// Kept-token bookkeeping for one sample. Local masking keeps exactly
/// k tokens in every window (rectangular packing); global masking keeps
/// whole windows.
struct MaskIndex {
  MaskStrategy strategy = MaskStrategy::Local;
  int64_t n_windows = 0;
  int64_t tokens_per_window = 0;
  std::vector<int64_t> kept_windows;               // global
  std::vector<std::vector<int64_t>> kept_tokens;   // local, one sorted list per window

  int64_t kept_per_window() const {
    return kept_tokens.empty() ? tokens_per_window : static_cast<int64_t>(kept_tokens[0].size());
  }
  int64_t packed_windows() const {
    return strategy == MaskStrategy::Global ? static_cast<int64_t>(kept_windows.size()) : n_windows;
  }
  int64_t packed_tokens() const {
    return strategy == MaskStrategy::Global ? tokens_per_window : kept_per_window();
  }
  int64_t total_kept() const { return packed_windows() * packed_tokens(); }

  bool is_identity() const {
    return strategy == MaskStrategy::Local ? kept_per_window() == tokens_per_window
                                           : static_cast<int64_t>(kept_windows.size()) == n_windows;
  }

  /// Flat kept slots in (window, token) order.
  std::vector<int64_t> kept_slots() const {
    std::vector<int64_t> out;
    out.reserve(static_cast<size_t>(total_kept()));
    if (strategy == MaskStrategy::Global) {
      for (int64_t w : kept_windows) {
        for (int64_t t = 0; t < tokens_per_window; ++t) out.push_back(w * tokens_per_window + t);
      }
    } else {
      for (int64_t w = 0; w < n_windows; ++w) {
        for (int64_t t : kept_tokens[static_cast<size_t>(w)]) out.push_back(w * tokens_per_window + t);
      }
    }
    return out;
  }
};

inline int64_t masked_count(double ratio, int64_t n) {
  return static_cast<int64_t>(std::ceil(ratio * static_cast<double>(n) - 1e-12));
}

/// Uniform random mask without replacement; deterministic given the seed.
inline MaskIndex sample_mask(uint64_t seed, const MaskSpec& spec, int64_t n_windows, int64_t tokens_per_window) {
  spec.validate();
  require(n_windows > 0 && tokens_per_window > 0, "sample_mask: shape parameters must be positive");
  Rng rng(derive_seed(seed, 0x3A5C));
  MaskIndex idx;
  idx.strategy = spec.strategy;
  idx.n_windows = n_windows;
  idx.tokens_per_window = tokens_per_window;
  if (spec.strategy == MaskStrategy::Global) {
    const int64_t kept = n_windows - masked_count(spec.ratio, n_windows);
    idx.kept_windows = rng.sample_without_replacement(n_windows, kept);
  } else {
    const int64_t kept = tokens_per_window - masked_count(spec.ratio, tokens_per_window);
    idx.kept_tokens.reserve(static_cast<size_t>(n_windows));
    for (int64_t w = 0; w < n_windows; ++w) {
      idx.kept_tokens.push_back(rng.sample_without_replacement(tokens_per_window, kept));
    }
  }
  return idx;
}

inline json mask_to_json(const MaskIndex& m) {
  json j;
  j["strategy"] = to_string(m.strategy);
  j["n_windows"] = m.n_windows;
  j["tokens_per_window"] = m.tokens_per_window;
  if (m.strategy == MaskStrategy::Global) {
    j["kept_windows"] = m.kept_windows;
  } else {
    j["kept_tokens"] = m.kept_tokens;
  }
  return j;
}

inline MaskIndex mask_from_json(const json& j) {
  MaskIndex m;
  m.strategy = j.at("strategy").get<std::string>() == "global" ? MaskStrategy::Global : MaskStrategy::Local;
  m.n_windows = j.at("n_windows").get<int64_t>();
  m.tokens_per_window = j.at("tokens_per_window").get<int64_t>();
  if (m.strategy == MaskStrategy::Global) {
    m.kept_windows = j.at("kept_windows").get<std::vector<int64_t>>();
  } else {
    m.kept_tokens = j.at("kept_tokens").get<std::vector<std::vector<int64_t>>>();
  }
  return m;
}

namespace ad {

inline void check_mask_batch(const Tensor& v, const std::vector<MaskIndex>& idx) {
  require(!idx.empty(), "mask batch is empty");
  require(idx.size() == 1 || static_cast<int64_t>(idx.size()) == v.dim(0),
          "mask batch size must be 1 or match the batch");
  for (const auto& m : idx) {
    require(m.strategy == idx[0].strategy && m.packed_windows() == idx[0].packed_windows() &&
                m.packed_tokens() == idx[0].packed_tokens(),
            "masks in a batch must share strategy and counts");
  }
}

/// Pack kept tokens of [B, W, T, D] preserving relative order; no mask
/// tokens are introduced (packing happens before the encoder).
inline Var gather_tokens(const Var& x, const std::vector<MaskIndex>& idx) {
  require(x->value.ndim() == 4, "gather_tokens: expected [B,W,T,D]");
  check_mask_batch(x->value, idx);
  const int64_t b = x->value.dim(0), w = x->value.dim(1), t = x->value.dim(2), d = x->value.dim(3);
  require(idx[0].n_windows == w && idx[0].tokens_per_window == t, "gather_tokens: mask built for another shape");
  const int64_t pw = idx[0].packed_windows(), pt = idx[0].packed_tokens();
  auto slot_maps = std::make_shared<std::vector<std::vector<int64_t>>>();
  for (const auto& m : idx) slot_maps->push_back(m.kept_slots());
  Tensor out({b, pw, pt, d});
  for (int64_t bi = 0; bi < b; ++bi) {
    const auto& slots = (*slot_maps)[slot_maps->size() == 1 ? 0 : static_cast<size_t>(bi)];
    const double* src = x->value.data() + bi * w * t * d;
    double* dst = out.data() + bi * pw * pt * d;
    for (size_t s = 0; s < slots.size(); ++s) {
      std::copy(src + slots[s] * d, src + (slots[s] + 1) * d, dst + static_cast<int64_t>(s) * d);
    }
  }
  return make_op(std::move(out), {x}, [slot_maps, b, w, t, d, pw, pt](Node& self) {
    Tensor& pg = self.parents[0]->g();
    for (int64_t bi = 0; bi < b; ++bi) {
      const auto& slots = (*slot_maps)[slot_maps->size() == 1 ? 0 : static_cast<size_t>(bi)];
      double* gx = pg.data() + bi * w * t * d;
      const double* gy = self.grad.data() + bi * pw * pt * d;
      for (size_t s = 0; s < slots.size(); ++s) {
        const double* row = gy + static_cast<int64_t>(s) * d;
        double* out_row = gx + slots[s] * d;
        for (int64_t k = 0; k < d; ++k) out_row[k] += row[k];
      }
    }
  });
}

/// Densify packed tokens back to [B, W, T, D]; masked slots carry the
/// learned mask token.
inline Var scatter_tokens(const Var& packed, const std::vector<MaskIndex>& idx, const Var& mask_token) {
  require(packed->value.ndim() == 4, "scatter_tokens: expected packed [B,W',T',D]");
  const int64_t b = packed->value.dim(0), d = packed->value.dim(3);
  check_mask_batch(packed->value, idx);
  require(mask_token->value.numel() == d, "scatter_tokens: mask token width mismatch");
  const int64_t w = idx[0].n_windows, t = idx[0].tokens_per_window;
  const int64_t pw = idx[0].packed_windows(), pt = idx[0].packed_tokens();
  require(packed->value.dim(1) == pw && packed->value.dim(2) == pt, "scatter_tokens: packed shape mismatch");
  auto slot_maps = std::make_shared<std::vector<std::vector<int64_t>>>();
  for (const auto& m : idx) slot_maps->push_back(m.kept_slots());
  Tensor out({b, w, t, d});
  for (int64_t bi = 0; bi < b; ++bi) {
    double* dst = out.data() + bi * w * t * d;
    for (int64_t s = 0; s < w * t; ++s) {
      std::copy(mask_token->value.data(), mask_token->value.data() + d, dst + s * d);
    }
    const auto& slots = (*slot_maps)[slot_maps->size() == 1 ? 0 : static_cast<size_t>(bi)];
    const double* src = packed->value.data() + bi * pw * pt * d;
    for (size_t s = 0; s < slots.size(); ++s) {
      std::copy(src + static_cast<int64_t>(s) * d, src + static_cast<int64_t>(s + 1) * d, dst + slots[s] * d);
    }
  }
  return make_op(std::move(out), {packed, mask_token}, [slot_maps, b, w, t, d, pw, pt](Node& self) {
    const Var& packed = self.parents[0];
    const Var& token = self.parents[1];
    for (int64_t bi = 0; bi < b; ++bi) {
      const auto& slots = (*slot_maps)[slot_maps->size() == 1 ? 0 : static_cast<size_t>(bi)];
      const double* gy = self.grad.data() + bi * w * t * d;
      if (packed->requires_grad) {
        double* gp = packed->g().data() + bi * pw * pt * d;
        for (size_t s = 0; s < slots.size(); ++s) {
          const double* row = gy + slots[s] * d;
          double* out_row = gp + static_cast<int64_t>(s) * d;
          for (int64_t k = 0; k < d; ++k) out_row[k] += row[k];
        }
      }
      if (token->requires_grad) {
        std::vector<char> kept(static_cast<size_t>(w * t), 0);
        for (int64_t s : slots) kept[static_cast<size_t>(s)] = 1;
        Tensor& gt = token->g();
        for (int64_t s = 0; s < w * t; ++s) {
          if (!kept[static_cast<size_t>(s)]) {
            const double* row = gy + s * d;
            for (int64_t k = 0; k < d; ++k) gt[k] += row[k];
          }
        }
      }
    }
  });
}

}  // namespace ad

}  // namespace wxc
