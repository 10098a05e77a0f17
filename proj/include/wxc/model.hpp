#pragma once

#include "wxc/container.hpp"
#include "wxc/masking.hpp"
#include "wxc/position.hpp"

namespace wxc {

struct TrainMode {
  bool training = false;
  Rng* rng = nullptr;  // drop-path decisions; unused in eval
};

struct AttnBlock {
  bool global_attn = false;
  ad::Var ln1_g, ln1_b, w_qkv, b_qkv, w_proj, b_proj;
  ad::Var ln2_g, ln2_b, w_fc1, b_fc1, w_fc2, b_fc2;
};

/// The encoder-decoder transformer f_theta. Local blocks attend within
/// windows; global blocks transpose the window and token axes and reuse the
/// same mechanics, so same-slot tokens interact across windows.
class WxCModel {
 public:
  WxCModel(ModelConfig cfg, GridSpec grid, uint64_t seed) : cfg_(std::move(cfg)), grid_(grid), layout_(cfg_) {
    cfg_.validate();
    require(grid_.h == cfg_.grid_h && grid_.w == cfg_.grid_w, "model: grid does not match config");
    require(cfg_.swin_wrap_lat || (!cfg_.swin_shift_encoder && !cfg_.swin_shift_decoder),
            "model: only cyclic-wrap Swin shifts are implemented");
    Rng rng(derive_seed(seed, 0x30DE1));
    const int64_t d = cfg_.embed_dim;
    const int64_t pp = cfg_.patch_h * cfg_.patch_w;

    w_dyn_ = add_param("embed.dyn.w", weight_init(rng, {cfg_.in_channels * pp, d}));
    b_dyn_ = add_param("embed.dyn.b", Tensor({d}));
    w_ctx_ = add_param("embed.ctx.w", weight_init(rng, {cfg_.context_channels * pp, d}));
    b_ctx_ = add_param("embed.ctx.b", Tensor({d}));
    lead_table_ = add_param("time.lead", weight_init(rng, {static_cast<int64_t>(cfg_.lead_time_set.size()), d}));
    delta_table_ = add_param("time.delta", weight_init(rng, {static_cast<int64_t>(cfg_.input_delta_set.size()), d}));
    mask_token_ = add_param("mask_token", weight_init(rng, {d}));
    for (int64_t i = 0; i < cfg_.n_encoder_blocks; ++i) {
      encoder_.push_back(make_block("enc." + std::to_string(i), ModelConfig::block_is_global(i), rng));
    }
    enc_norm_g_ = add_param("enc_norm.g", Tensor({d}, 1.0));
    enc_norm_b_ = add_param("enc_norm.b", Tensor({d}));
    for (int64_t i = 0; i < cfg_.n_decoder_blocks; ++i) {
      decoder_.push_back(make_block("dec." + std::to_string(i), ModelConfig::block_is_global(i), rng));
    }
    dec_norm_g_ = add_param("dec_norm.g", Tensor({d}, 1.0));
    dec_norm_b_ = add_param("dec_norm.b", Tensor({d}));
    w_head_ = add_param("head.w", weight_init(rng, {d, cfg_.out_channels * pp}));
    b_head_ = add_param("head.b", Tensor({cfg_.out_channels * pp}));

    pos_ = std::make_shared<Tensor>(fourier_position_encoding(cfg_, grid_));
    shift_ = layout_.shift_permutation(false);
    unshift_ = layout_.shift_permutation(true);
  }

  const ModelConfig& config() const { return cfg_; }
  const GridSpec& grid() const { return grid_; }
  const TokenLayout& layout() const { return layout_; }

  /// Phase flags: the shift is a data-layout transform, so toggling it
  /// leaves every weight untouched.
  void set_swin_shift_encoder(bool on) { cfg_.swin_shift_encoder = on; }
  void set_swin_shift_decoder(bool on) { cfg_.swin_shift_decoder = on; }
  void set_drop_path_rate(double p) {
    require(p >= 0.0 && p < 1.0, "drop_path_rate out of range");
    cfg_.drop_path_rate = p;
  }
  std::vector<std::pair<std::string, ad::Var>>& params() { return params_; }
  const std::vector<std::pair<std::string, ad::Var>>& params() const { return params_; }
  std::shared_ptr<const Tensor> position_encoding() const { return pos_; }
  const ad::Var& mask_token() const { return mask_token_; }

  int64_t parameter_count() const {
    int64_t n = 0;
    for (const auto& [name, p] : params_) n += p->value.numel();
    return n;
  }

  void zero_grad() {
    for (auto& [name, p] : params_) p->zero_grad();
  }

  /// Mark the transformer blocks and final norms (the reusable core) as
  /// frozen; embeddings, time tables, mask token and head stay trainable.
  void freeze_core() {
    for (const auto& [name, p] : params_) {
      if (is_core_param(name)) p->requires_grad = false;
    }
  }

  static bool is_core_param(const std::string& name) {
    return name.rfind("enc", 0) == 0 || name.rfind("dec", 0) == 0;
  }

  // --- forward pieces -------------------------------------------------------

  /// Token features from normalized inputs: linear(dynamic patch) +
  /// linear(context patch) + position + lead/delta encodings.
  ad::Var embed(const ad::Var& dyn, const ad::Var& ctx, const std::vector<int>& leads,
                const std::vector<int>& deltas) const {
    require(dyn->value.ndim() == 4 && dyn->value.dim(1) == cfg_.in_channels,
            "embed: dynamic input channel count mismatch");
    require(ctx->value.ndim() == 4 && ctx->value.dim(1) == cfg_.context_channels,
            "embed: context channel count mismatch");
    const int64_t b = dyn->value.dim(0);
    require(static_cast<int64_t>(leads.size()) == b && static_cast<int64_t>(deltas.size()) == b,
            "embed: per-sample time parameters required");
    ad::Var x = ad::linear(ad::patchify(dyn, layout_), w_dyn_, b_dyn_);
    x = ad::add(x, ad::linear(ad::patchify(ctx, layout_), w_ctx_, b_ctx_));
    x = ad::add_slot_rows(x, pos_);
    std::vector<ad::Var> lead_rows, delta_rows;
    for (int64_t i = 0; i < b; ++i) {
      lead_rows.push_back(ad::select_row(lead_table_, cfg_.lead_index(leads[static_cast<size_t>(i)])));
      delta_rows.push_back(ad::select_row(delta_table_, cfg_.delta_index(deltas[static_cast<size_t>(i)])));
    }
    x = ad::add_rows_per_batch(x, ad::stack_rows(lead_rows));
    x = ad::add_rows_per_batch(x, ad::stack_rows(delta_rows));
    return x;
  }

  /// Alternating local/global blocks over packed tokens. No mask tokens
  /// enter here; Swin shifts require dense (identity-mask) tokens.
  ad::Var encode(const ad::Var& packed, const std::vector<MaskIndex>& masks, const TrainMode& tm) {
    const bool identity = masks.empty() || masks[0].is_identity();
    require(!cfg_.swin_shift_encoder || identity, "encoder Swin-shift requires dense tokens (mask ratio 0)");
    ad::Var x = run_blocks(encoder_, packed, tm, cfg_.swin_shift_encoder ? shift_ : nullptr,
                           cfg_.swin_shift_encoder ? unshift_ : nullptr);
    return ad::layer_norm(x, enc_norm_g_, enc_norm_b_);
  }

  /// Scatter to dense tokens (mask token + re-added position encodings at
  /// masked slots), run decoder blocks, project and unpatchify.
  ad::Var decode(const ad::Var& latent, const std::vector<MaskIndex>& masks, const TrainMode& tm) {
    ad::Var dense = ad::scatter_tokens(latent, masks, mask_token_);
    if (!masks[0].is_identity()) {
      dense = ad::add_const(dense, masked_position_rows(masks, dense->value.dim(0)));
    }
    ad::Var x = run_blocks(decoder_, dense, tm, cfg_.swin_shift_decoder ? shift_ : nullptr,
                           cfg_.swin_shift_decoder ? unshift_ : nullptr);
    x = ad::layer_norm(x, dec_norm_g_, dec_norm_b_);
    x = ad::linear(x, w_head_, b_head_);
    return ad::unpatchify(x, layout_, cfg_.out_channels, cfg_.grid_h, cfg_.grid_w);
  }

  /// Full forward: normalized anomaly prediction [B, C_out, H, W].
  ad::Var forward(const ad::Var& dyn, const ad::Var& ctx, const std::vector<int>& leads,
                  const std::vector<int>& deltas, const std::vector<MaskIndex>& masks, const TrainMode& tm) {
    ad::Var x = embed(dyn, ctx, leads, deltas);
    x = ad::gather_tokens(x, masks);
    x = encode(x, masks, tm);
    return decode(x, masks, tm);
  }

  /// Run the frozen transformer core (both stacks and final norms) over
  /// dense tokens from a different tokenization; used by fine-tune heads.
  ad::Var run_core(const ad::Var& tokens, const TokenLayout& layout, bool shift_encoder, bool shift_decoder,
                   const TrainMode& tm) {
    require(tokens->value.dim(-1) == cfg_.embed_dim, "run_core: token width mismatch");
    auto shift = (shift_encoder || shift_decoder) ? layout.shift_permutation(false) : nullptr;
    auto unshift = (shift_encoder || shift_decoder) ? layout.shift_permutation(true) : nullptr;
    ad::Var x = run_blocks(encoder_, tokens, tm, shift_encoder ? shift : nullptr, shift_encoder ? unshift : nullptr);
    x = ad::layer_norm(x, enc_norm_g_, enc_norm_b_);
    x = run_blocks(decoder_, x, tm, shift_decoder ? shift : nullptr, shift_decoder ? unshift : nullptr);
    return ad::layer_norm(x, dec_norm_g_, dec_norm_b_);
  }

  /// Apply one attention block standalone (testing hook).
  ad::Var apply_block(AttnBlock& blk, const ad::Var& x, const TrainMode& tm) { return attention_block(x, blk, tm); }

  std::vector<AttnBlock>& encoder_blocks() { return encoder_; }
  std::vector<AttnBlock>& decoder_blocks() { return decoder_; }
  ad::Var head_w() { return w_head_; }
  ad::Var head_b() { return b_head_; }

  /// When set, softmax attention rows are recorded here during forward.
  std::vector<Tensor>* attn_probe = nullptr;

  // --- checkpointing ---------------------------------------------------------

  void save(const fs::path& dir) const {
    fs::create_directories(dir);
    int64_t total = 0;
    for (const auto& [name, p] : params_) total += p->value.numel();
    std::vector<double> flat(static_cast<size_t>(total));
    int64_t off = 0;
    json plist = json::array();
    for (const auto& [name, p] : params_) {
      std::copy(p->value.data(), p->value.data() + p->value.numel(), flat.data() + off);
      plist.push_back(json{{"name", name}, {"shape", p->value.shape()}, {"offset", off}});
      off += p->value.numel();
    }
    write_f32(dir / "weights.f32", flat.data(), total);
    json m;
    m["format"] = "wxc-checkpoint-1";
    m["config"] = model_config_to_json(cfg_);
    m["grid"] = grid_to_json(grid_);
    m["params"] = std::move(plist);
    m["weights_fnv1a"] = fnv1a_file(dir / "weights.f32");
    write_json(dir / "manifest.json", m);
  }

  static WxCModel load(const fs::path& dir) {
    const json m = read_json(dir / "manifest.json");
    require(m.at("format").get<std::string>() == "wxc-checkpoint-1", "unknown checkpoint format");
    WxCModel model(model_config_from_json(m.at("config")), grid_from_json(m.at("grid")), 0);
    int64_t total = 0;
    for (const auto& [name, p] : model.params_) total += p->value.numel();
    std::vector<double> flat(static_cast<size_t>(total));
    read_f32(dir / "weights.f32", flat.data(), total);
    int64_t off = 0;
    for (auto& [name, p] : model.params_) {
      std::copy(flat.data() + off, flat.data() + off + p->value.numel(), p->value.data());
      off += p->value.numel();
    }
    return model;
  }

  static uint64_t checkpoint_hash(const fs::path& dir) {
    return read_json(dir / "manifest.json").at("weights_fnv1a").get<uint64_t>();
  }

 private:
  static Tensor weight_init(Rng& rng, Shape shape) {
    Tensor t(std::move(shape));
    rng.fill_normal(t, 0.0, 0.02);
    return t;
  }

  ad::Var add_param(const std::string& name, Tensor t) {
    ad::Var p = ad::param(std::move(t));
    params_.emplace_back(name, p);
    return p;
  }

  AttnBlock make_block(const std::string& prefix, bool global_attn, Rng& rng) {
    const int64_t d = cfg_.embed_dim;
    const int64_t m = static_cast<int64_t>(cfg_.mlp_ratio * static_cast<double>(d));
    AttnBlock b;
    b.global_attn = global_attn;
    b.ln1_g = add_param(prefix + ".ln1.g", Tensor({d}, 1.0));
    b.ln1_b = add_param(prefix + ".ln1.b", Tensor({d}));
    b.w_qkv = add_param(prefix + ".qkv.w", weight_init(rng, {d, 3 * d}));
    b.b_qkv = add_param(prefix + ".qkv.b", Tensor({3 * d}));
    b.w_proj = add_param(prefix + ".proj.w", weight_init(rng, {d, d}));
    b.b_proj = add_param(prefix + ".proj.b", Tensor({d}));
    b.ln2_g = add_param(prefix + ".ln2.g", Tensor({d}, 1.0));
    b.ln2_b = add_param(prefix + ".ln2.b", Tensor({d}));
    b.w_fc1 = add_param(prefix + ".fc1.w", weight_init(rng, {d, m}));
    b.b_fc1 = add_param(prefix + ".fc1.b", Tensor({m}));
    b.w_fc2 = add_param(prefix + ".fc2.w", weight_init(rng, {m, d}));
    b.b_fc2 = add_param(prefix + ".fc2.b", Tensor({d}));
    return b;
  }

  ad::Var drop_path(const ad::Var& branch, const TrainMode& tm) const {
    if (!tm.training || cfg_.drop_path_rate <= 0.0) return branch;
    require(tm.rng != nullptr, "drop-path needs an rng in training mode");
    const int64_t b = branch->value.dim(0);
    std::vector<double> factors(static_cast<size_t>(b));
    const double keep = 1.0 - cfg_.drop_path_rate;
    for (int64_t i = 0; i < b; ++i) {
      factors[static_cast<size_t>(i)] = tm.rng->uniform() < cfg_.drop_path_rate ? 0.0 : 1.0 / keep;
    }
    return ad::scale_batch(branch, factors);
  }

  /// Pre-norm transformer block on [B, G, T, D]; global variant transposes
  /// the window and token axes around the same mechanics.
  ad::Var attention_block(const ad::Var& x_in, AttnBlock& blk, const TrainMode& tm) {
    ad::Var x = x_in;
    if (blk.global_attn) x = ad::permute(x, {0, 2, 1, 3});
    const int64_t b = x->value.dim(0), g = x->value.dim(1), t = x->value.dim(2), d = x->value.dim(3);
    const int64_t heads = cfg_.n_heads, dh = d / cfg_.n_heads;

    ad::Var h = ad::layer_norm(x, blk.ln1_g, blk.ln1_b);
    ad::Var qkv = ad::linear(h, blk.w_qkv, blk.b_qkv);
    auto split_heads = [&](const ad::Var& v) {
      ad::Var r = ad::reshape(v, {b * g, t, heads, dh});
      r = ad::permute(r, {0, 2, 1, 3});
      return ad::reshape(r, {b * g * heads, t, dh});
    };
    ad::Var q = split_heads(ad::slice_lastdim(qkv, 0, d));
    ad::Var k = split_heads(ad::slice_lastdim(qkv, d, d));
    ad::Var v = split_heads(ad::slice_lastdim(qkv, 2 * d, d));
    ad::Var scores = ad::scale(ad::bmm(q, k, false, true), 1.0 / std::sqrt(static_cast<double>(dh)));
    ad::Var probs = ad::softmax_lastdim(scores);
    if (attn_probe != nullptr) attn_probe->push_back(probs->value);
    ad::Var ctx = ad::bmm(probs, v);
    ctx = ad::reshape(ctx, {b * g, heads, t, dh});
    ctx = ad::permute(ctx, {0, 2, 1, 3});
    ctx = ad::reshape(ctx, {b, g, t, d});
    ad::Var attn_out = ad::linear(ctx, blk.w_proj, blk.b_proj);
    x = ad::add(x, drop_path(attn_out, tm));

    ad::Var h2 = ad::layer_norm(x, blk.ln2_g, blk.ln2_b);
    ad::Var mlp = ad::linear(ad::gelu(ad::linear(h2, blk.w_fc1, blk.b_fc1)), blk.w_fc2, blk.b_fc2);
    x = ad::add(x, drop_path(mlp, tm));

    if (blk.global_attn) x = ad::permute(x, {0, 2, 1, 3});
    return x;
  }

  ad::Var run_blocks(std::vector<AttnBlock>& blocks, ad::Var x, const TrainMode& tm,
                     std::shared_ptr<const std::vector<int64_t>> shift,
                     std::shared_ptr<const std::vector<int64_t>> unshift) {
    for (size_t i = 0; i < blocks.size(); ++i) {
      const bool shifted = shift != nullptr && (i % 2 == 1);
      if (shifted) x = ad::permute_slots(x, shift);
      x = attention_block(x, blocks[i], tm);
      if (shifted) x = ad::permute_slots(x, unshift);
    }
    return x;
  }

  /// Position-encoding rows at masked slots only (zeros at kept slots).
  Tensor masked_position_rows(const std::vector<MaskIndex>& masks, int64_t b) const {
    const int64_t w = masks[0].n_windows, t = masks[0].tokens_per_window, d = cfg_.embed_dim;
    Tensor out({b, w, t, d});
    for (int64_t bi = 0; bi < b; ++bi) {
      const MaskIndex& m = masks[masks.size() == 1 ? 0 : static_cast<size_t>(bi)];
      std::vector<char> kept(static_cast<size_t>(w * t), 0);
      for (int64_t s : m.kept_slots()) kept[static_cast<size_t>(s)] = 1;
      for (int64_t s = 0; s < w * t; ++s) {
        if (!kept[static_cast<size_t>(s)]) {
          const double* src = pos_->data() + s * d;
          double* dst = out.data() + (bi * w * t + s) * d;
          std::copy(src, src + d, dst);
        }
      }
    }
    return out;
  }

  ModelConfig cfg_;
  GridSpec grid_;
  TokenLayout layout_;
  std::vector<std::pair<std::string, ad::Var>> params_;
  ad::Var w_dyn_, b_dyn_, w_ctx_, b_ctx_, lead_table_, delta_table_, mask_token_;
  std::vector<AttnBlock> encoder_, decoder_;
  ad::Var enc_norm_g_, enc_norm_b_, dec_norm_g_, dec_norm_b_, w_head_, b_head_;
  std::shared_ptr<Tensor> pos_;
  std::shared_ptr<const std::vector<int64_t>> shift_, unshift_;
};

/// Invert the objective: physical-units prediction = out * sigma_c + C_target.
inline ad::Var predict_physical(const ad::Var& norm_anomaly, const Tensor& clim_target_batch,
                                const std::vector<double>& sigma_c) {
  std::vector<double> zero(sigma_c.size(), 0.0);
  ad::Var scaled = ad::channel_affine(norm_anomaly, sigma_c, zero);
  return ad::add_const(scaled, clim_target_batch);
}

}  // namespace wxc
