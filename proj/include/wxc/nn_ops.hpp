#pragma once

#include <array>
#include <memory>

#include "wxc/autodiff.hpp"

namespace wxc::ad {

enum class Pad { Zero, Replicate, Wrap };

/// Index map for a same-padded stride-1 convolution: entry per
/// (pixel, tap) giving the source pixel or -1 for zero padding.
struct ConvMap {
  int64_t h = 0, w = 0, kh = 0, kw = 0;
  std::vector<int32_t> src;
};

inline std::shared_ptr<const ConvMap> make_conv_map(int64_t h, int64_t w, int64_t kh, int64_t kw, Pad pad_h,
                                                    Pad pad_w) {
  auto m = std::make_shared<ConvMap>();
  m->h = h;
  m->w = w;
  m->kh = kh;
  m->kw = kw;
  m->src.resize(static_cast<size_t>(h * w * kh * kw));
  const int64_t oh = kh / 2, ow = kw / 2;
  auto clampi = [](int64_t v, int64_t n) { return std::max<int64_t>(0, std::min(n - 1, v)); };
  auto wrapi = [](int64_t v, int64_t n) { return ((v % n) + n) % n; };
  size_t p = 0;
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      for (int64_t ky = 0; ky < kh; ++ky) {
        for (int64_t kx = 0; kx < kw; ++kx) {
          int64_t sy = y + ky - oh;
          int64_t sx = x + kx - ow;
          bool dead = false;
          switch (pad_h) {
            case Pad::Zero: dead = dead || sy < 0 || sy >= h; break;
            case Pad::Replicate: sy = clampi(sy, h); break;
            case Pad::Wrap: sy = wrapi(sy, h); break;
          }
          switch (pad_w) {
            case Pad::Zero: dead = dead || sx < 0 || sx >= w; break;
            case Pad::Replicate: sx = clampi(sx, w); break;
            case Pad::Wrap: sx = wrapi(sx, w); break;
          }
          m->src[p++] = dead ? -1 : static_cast<int32_t>(sy * w + sx);
        }
      }
    }
  }
  return m;
}

/// Same-padded stride-1 conv: x[B,Cin,H,W], w[Cout,Cin,kh,kw], b[Cout].
/// im2col runs over row strips to bound the scratch buffer.
inline Var conv2d(const Var& x, const Var& w, const Var& b, std::shared_ptr<const ConvMap> map) {
  const int64_t bsz = x->value.dim(0);
  const int64_t cin = x->value.dim(1);
  const int64_t h = x->value.dim(2);
  const int64_t wd = x->value.dim(3);
  const int64_t cout = w->value.dim(0);
  require(w->value.dim(1) == cin, "conv2d: channel mismatch");
  require(map->h == h && map->w == wd, "conv2d: map built for another grid");
  const int64_t kk = map->kh * map->kw;
  require(w->value.dim(2) == map->kh && w->value.dim(3) == map->kw, "conv2d: kernel shape mismatch");
  require(b->value.numel() == cout, "conv2d: bias size mismatch");

  const int64_t strip_rows = std::max<int64_t>(1, (1 << 22) / std::max<int64_t>(1, cin * kk * wd));
  Tensor out({bsz, cout, h, wd});

  auto fill_cols = [map, cin, kk, h, wd](const double* xin, int64_t y0, int64_t rows, std::vector<double>& cols) {
    const int64_t npix = rows * wd;
    cols.assign(static_cast<size_t>(cin * kk * npix), 0.0);
    for (int64_t c = 0; c < cin; ++c) {
      const double* ch = xin + c * h * wd;
      for (int64_t t = 0; t < kk; ++t) {
        double* dst = cols.data() + (c * kk + t) * npix;
        const int32_t* srow = map->src.data() + (y0 * wd) * kk;
        for (int64_t p = 0; p < npix; ++p) {
          const int32_t s = srow[p * kk + t];
          dst[p] = s < 0 ? 0.0 : ch[s];
        }
      }
    }
  };

  {
    std::vector<double> cols;
    for (int64_t bi = 0; bi < bsz; ++bi) {
      const double* xin = x->value.data() + bi * cin * h * wd;
      for (int64_t y0 = 0; y0 < h; y0 += strip_rows) {
        const int64_t rows = std::min(strip_rows, h - y0);
        const int64_t npix = rows * wd;
        fill_cols(xin, y0, rows, cols);
        ECMap wm(w->value.data(), cout, cin * kk);
        ECMap cm(cols.data(), cin * kk, npix);
        EMap om(out.data() + bi * cout * h * wd, cout, h * wd);
        om.block(0, y0 * wd, cout, npix).noalias() = wm * cm;
      }
      double* o = out.data() + bi * cout * h * wd;
      for (int64_t c = 0; c < cout; ++c) {
        const double bv = b->value[c];
        for (int64_t p = 0; p < h * wd; ++p) o[c * h * wd + p] += bv;
      }
    }
  }

  return make_op(std::move(out), {x, w, b}, [map, bsz, cin, cout, h, wd, kk, strip_rows, fill_cols](Node& self) {
    const Var& x = self.parents[0];
    const Var& w = self.parents[1];
    const Var& b = self.parents[2];
    std::vector<double> cols, gcols;
    for (int64_t bi = 0; bi < bsz; ++bi) {
      const double* xin = x->value.data() + bi * cin * h * wd;
      const double* gy = self.grad.data() + bi * cout * h * wd;
      for (int64_t y0 = 0; y0 < h; y0 += strip_rows) {
        const int64_t rows = std::min(strip_rows, h - y0);
        const int64_t npix = rows * wd;
        ECMap gym(gy, cout, h * wd);
        if (w->requires_grad) {
          fill_cols(xin, y0, rows, cols);
          ECMap cm(cols.data(), cin * kk, npix);
          EMap gw(w->g().data(), cout, cin * kk);
          gw.noalias() += gym.block(0, y0 * wd, cout, npix) * cm.transpose();
        }
        if (x->requires_grad) {
          gcols.assign(static_cast<size_t>(cin * kk * npix), 0.0);
          EMap gc(gcols.data(), cin * kk, npix);
          ECMap wm(w->value.data(), cout, cin * kk);
          gc.noalias() = wm.transpose() * gym.block(0, y0 * wd, cout, npix);
          double* gx = x->g().data() + bi * cin * h * wd;
          for (int64_t c = 0; c < cin; ++c) {
            double* gch = gx + c * h * wd;
            for (int64_t t = 0; t < kk; ++t) {
              const double* srcg = gcols.data() + (c * kk + t) * npix;
              const int32_t* srow = map->src.data() + (y0 * wd) * kk;
              for (int64_t p = 0; p < npix; ++p) {
                const int32_t s = srow[p * kk + t];
                if (s >= 0) gch[s] += srcg[p];
              }
            }
          }
        }
      }
      if (b->requires_grad) {
        Tensor& gb = b->g();
        for (int64_t c = 0; c < cout; ++c) {
          double s = 0.0;
          for (int64_t p = 0; p < h * wd; ++p) s += gy[c * h * wd + p];
          gb[c] += s;
        }
      }
    }
  });
}

/// Non-overlapping f x f block mean on [B,C,H,W].
inline Var avg_pool2d(const Var& x, int64_t f) {
  const int64_t bsz = x->value.dim(0), c = x->value.dim(1), h = x->value.dim(2), w = x->value.dim(3);
  require(f > 0 && h % f == 0 && w % f == 0, "avg_pool2d: grid not divisible by factor");
  const int64_t oh = h / f, ow = w / f;
  Tensor out({bsz, c, oh, ow});
  const double inv = 1.0 / static_cast<double>(f * f);
  for (int64_t bc = 0; bc < bsz * c; ++bc) {
    const double* in = x->value.data() + bc * h * w;
    double* o = out.data() + bc * oh * ow;
    for (int64_t y = 0; y < oh; ++y) {
      for (int64_t xx = 0; xx < ow; ++xx) {
        double s = 0.0;
        for (int64_t dy = 0; dy < f; ++dy) {
          for (int64_t dx = 0; dx < f; ++dx) s += in[(y * f + dy) * w + xx * f + dx];
        }
        o[y * ow + xx] = s * inv;
      }
    }
  }
  return make_op(std::move(out), {x}, [bsz, c, h, w, f, oh, ow, inv](Node& self) {
    Tensor& pg = self.parents[0]->g();
    for (int64_t bc = 0; bc < bsz * c; ++bc) {
      double* gx = pg.data() + bc * h * w;
      const double* gy = self.grad.data() + bc * oh * ow;
      for (int64_t y = 0; y < oh; ++y) {
        for (int64_t xx = 0; xx < ow; ++xx) {
          const double g = gy[y * ow + xx] * inv;
          for (int64_t dy = 0; dy < f; ++dy) {
            for (int64_t dx = 0; dx < f; ++dx) gx[(y * f + dy) * w + xx * f + dx] += g;
          }
        }
      }
    }
  });
}

/// Sparse interpolation plan: each output pixel is a fixed convex
/// combination of up to 4 input pixels.
struct InterpPlan {
  int64_t in_h = 0, in_w = 0, out_h = 0, out_w = 0;
  std::vector<std::array<int32_t, 4>> idx;
  std::vector<std::array<double, 4>> wgt;
};

enum class InterpMethod { Nearest, Bilinear };

/// Build an upsampling plan. Latitude uses endpoint-anchored sample
/// positions (exact on affine fields); longitude wraps when periodic.
inline std::shared_ptr<const InterpPlan> make_interp_plan(int64_t in_h, int64_t in_w, int64_t out_h, int64_t out_w,
                                                          InterpMethod method, bool periodic_lon) {
  auto plan = std::make_shared<InterpPlan>();
  plan->in_h = in_h;
  plan->in_w = in_w;
  plan->out_h = out_h;
  plan->out_w = out_w;
  plan->idx.resize(static_cast<size_t>(out_h * out_w));
  plan->wgt.resize(static_cast<size_t>(out_h * out_w));

  auto axis_pos = [](int64_t j, int64_t n_out, int64_t n_in, bool periodic) {
    if (periodic) return static_cast<double>(j) * static_cast<double>(n_in) / static_cast<double>(n_out);
    if (n_out == 1 || n_in == 1) return 0.0;
    return static_cast<double>(j) * static_cast<double>(n_in - 1) / static_cast<double>(n_out - 1);
  };

  for (int64_t y = 0; y < out_h; ++y) {
    const double fy = axis_pos(y, out_h, in_h, false);
    int64_t y0 = static_cast<int64_t>(std::floor(fy));
    double ty = fy - static_cast<double>(y0);
    y0 = std::max<int64_t>(0, std::min(in_h - 1, y0));
    int64_t y1 = std::min(in_h - 1, y0 + 1);
    for (int64_t x = 0; x < out_w; ++x) {
      const double fx = axis_pos(x, out_w, in_w, periodic_lon);
      int64_t x0 = static_cast<int64_t>(std::floor(fx));
      double tx = fx - static_cast<double>(x0);
      int64_t x1;
      if (periodic_lon) {
        x0 = ((x0 % in_w) + in_w) % in_w;
        x1 = (x0 + 1) % in_w;
      } else {
        x0 = std::max<int64_t>(0, std::min(in_w - 1, x0));
        x1 = std::min(in_w - 1, x0 + 1);
      }
      auto& id = plan->idx[static_cast<size_t>(y * out_w + x)];
      auto& wg = plan->wgt[static_cast<size_t>(y * out_w + x)];
      if (method == InterpMethod::Nearest) {
        const int64_t ny = ty < 0.5 ? y0 : y1;
        const int64_t nx = tx < 0.5 ? x0 : x1;
        id = {static_cast<int32_t>(ny * in_w + nx), 0, 0, 0};
        wg = {1.0, 0.0, 0.0, 0.0};
      } else {
        id = {static_cast<int32_t>(y0 * in_w + x0), static_cast<int32_t>(y0 * in_w + x1),
              static_cast<int32_t>(y1 * in_w + x0), static_cast<int32_t>(y1 * in_w + x1)};
        wg = {(1 - ty) * (1 - tx), (1 - ty) * tx, ty * (1 - tx), ty * tx};
      }
    }
  }
  return plan;
}

inline void apply_interp_plan(const InterpPlan& plan, const double* in, double* out) {
  const int64_t n = plan.out_h * plan.out_w;
  for (int64_t p = 0; p < n; ++p) {
    const auto& id = plan.idx[static_cast<size_t>(p)];
    const auto& wg = plan.wgt[static_cast<size_t>(p)];
    out[p] = wg[0] * in[id[0]] + wg[1] * in[id[1]] + wg[2] * in[id[2]] + wg[3] * in[id[3]];
  }
}

inline Var upsample(const Var& x, std::shared_ptr<const InterpPlan> plan) {
  const int64_t bsz = x->value.dim(0), c = x->value.dim(1), h = x->value.dim(2), w = x->value.dim(3);
  require(h == plan->in_h && w == plan->in_w, "upsample: plan built for another grid");
  Tensor out({bsz, c, plan->out_h, plan->out_w});
  const int64_t onum = plan->out_h * plan->out_w;
  for (int64_t bc = 0; bc < bsz * c; ++bc) {
    apply_interp_plan(*plan, x->value.data() + bc * h * w, out.data() + bc * onum);
  }
  return make_op(std::move(out), {x}, [plan, bsz, c, h, w, onum](Node& self) {
    Tensor& pg = self.parents[0]->g();
    for (int64_t bc = 0; bc < bsz * c; ++bc) {
      double* gx = pg.data() + bc * h * w;
      const double* gy = self.grad.data() + bc * onum;
      for (int64_t p = 0; p < onum; ++p) {
        const auto& id = plan->idx[static_cast<size_t>(p)];
        const auto& wg = plan->wgt[static_cast<size_t>(p)];
        for (int k = 0; k < 4; ++k) {
          if (wg[k] != 0.0) gx[id[k]] += wg[k] * gy[p];
        }
      }
    }
  });
}

}  // namespace wxc::ad
