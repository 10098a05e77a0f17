#include <catch2/catch_amalgamated.hpp>

#include "finite_diff.hpp"
#include "wxc/loss.hpp"
#include "wxc/nn_ops.hpp"

using namespace wxc;
using ad::Var;

namespace {

Var rand_param(Shape s, uint64_t seed) {
  Tensor t(std::move(s));
  Rng rng(seed);
  rng.fill_normal(t, 0.0, 1.0);
  return ad::param(std::move(t));
}

Tensor rand_tensor(Shape s, uint64_t seed) {
  Tensor t(std::move(s));
  Rng rng(seed);
  rng.fill_normal(t, 0.0, 1.0);
  return t;
}

/// Scalarize with fixed random coefficients so every output coordinate
/// contributes to the checked gradient.
Var scalarize(const Var& x, uint64_t seed = 99) {
  return ad::weighted_sum(x, rand_tensor(x->value.shape(), seed));
}

}  // namespace

TEST_CASE("gradients: elementwise and structural ops") {
  Var a = rand_param({3, 5}, 1);
  Var b = rand_param({3, 5}, 2);

  SECTION("add/sub/scale/hadamard") {
    auto res = test::check_gradients({{"a", a}, {"b", b}},
                                     [&] { return scalarize(ad::hadamard(ad::sub(ad::scale(ad::add(a, b), 1.7), b), a)); },
                                     40, 11);
    REQUIRE(res.max_rel_err < 1e-6);
  }
  SECTION("gelu") {
    auto res = test::check_gradients({{"a", a}}, [&] { return scalarize(ad::gelu(a)); }, 30, 12);
    REQUIRE(res.max_rel_err < 1e-6);
  }
  SECTION("reshape/permute/slice/concat") {
    auto res = test::check_gradients(
        {{"a", a}, {"b", b}},
        [&] {
          Var x = ad::concat_lastdim({ad::reshape(a, {5, 3}), ad::reshape(b, {5, 3})});
          x = ad::permute(x, {1, 0});
          return scalarize(ad::slice_lastdim(x, 1, 3));
        },
        40, 13);
    REQUIRE(res.max_rel_err < 1e-6);
  }
}

TEST_CASE("gradients: dense algebra") {
  SECTION("linear") {
    Var x = rand_param({7, 4}, 3);
    Var w = rand_param({4, 6}, 4);
    Var b = rand_param({6}, 5);
    auto res = test::check_gradients({{"x", x}, {"w", w}, {"b", b}},
                                     [&] { return scalarize(ad::linear(x, w, b)); }, 60, 14);
    REQUIRE(res.max_rel_err < 1e-6);
  }
  SECTION("bmm all transpose combinations") {
    for (bool ta : {false, true}) {
      for (bool tb : {false, true}) {
        Var a = rand_param({2, 3, 4}, 6);
        Var b = rand_param({2, ta == tb ? 4 : 3, ta == tb ? 3 : 4}, 7);
        // shape juggling: pick b so the inner dims match
        Shape bs = ta ? (tb ? Shape{2, 5, 3} : Shape{2, 3, 5}) : (tb ? Shape{2, 5, 4} : Shape{2, 4, 5});
        b = rand_param(bs, 7);
        auto res = test::check_gradients({{"a", a}, {"b", b}},
                                         [&] { return scalarize(ad::bmm(a, b, ta, tb)); }, 40, 15);
        REQUIRE(res.max_rel_err < 1e-6);
      }
    }
  }
  SECTION("softmax rows sum to one and gradients check") {
    Var x = rand_param({4, 6}, 8);
    Var s = ad::softmax_lastdim(x);
    for (int64_t r = 0; r < 4; ++r) {
      double sum = 0.0;
      for (int64_t c = 0; c < 6; ++c) sum += s->value.at(r, c);
      REQUIRE(std::abs(sum - 1.0) < 1e-12);
    }
    auto res = test::check_gradients({{"x", x}}, [&] { return scalarize(ad::softmax_lastdim(x)); }, 40, 16);
    REQUIRE(res.max_rel_err < 1e-6);
  }
  SECTION("layer_norm") {
    Var x = rand_param({5, 8}, 9);
    Var g = rand_param({8}, 10);
    Var b = rand_param({8}, 11);
    auto res = test::check_gradients({{"x", x}, {"g", g}, {"b", b}},
                                     [&] { return scalarize(ad::layer_norm(x, g, b)); }, 60, 17);
    REQUIRE(res.max_rel_err < 1e-4);
  }
}

TEST_CASE("gradients: row helpers") {
  Var x = rand_param({2, 3, 4}, 20);
  Var v = rand_param({4}, 21);
  Var table = rand_param({5, 4}, 22);
  auto res = test::check_gradients(
      {{"x", x}, {"v", v}, {"table", table}},
      [&] {
        Var y = ad::add_rows(x, v);
        Var row = ad::select_row(table, 3);
        Var stacked = ad::stack_rows({row, ad::select_row(table, 1)});
        y = ad::add_rows_per_batch(y, stacked);
        return scalarize(y);
      },
      60, 23);
  REQUIRE(res.max_rel_err < 1e-6);
}

TEST_CASE("gradients: conv2d under all padding modes") {
  for (auto pad : {ad::Pad::Zero, ad::Pad::Replicate, ad::Pad::Wrap}) {
    Var x = rand_param({2, 3, 5, 6}, 30);
    Var w = rand_param({4, 3, 3, 3}, 31);
    Var b = rand_param({4}, 32);
    auto map = ad::make_conv_map(5, 6, 3, 3, pad, ad::Pad::Wrap);
    auto res = test::check_gradients({{"x", x}, {"w", w}, {"b", b}},
                                     [&] { return scalarize(ad::conv2d(x, w, b, map)); }, 60, 33);
    REQUIRE(res.max_rel_err < 1e-5);
  }
}

TEST_CASE("conv2d matches a direct stencil computation") {
  Var x = rand_param({1, 2, 4, 5}, 40);
  Var w = rand_param({3, 2, 3, 3}, 41);
  Var b = rand_param({3}, 42);
  auto map = ad::make_conv_map(4, 5, 3, 3, ad::Pad::Replicate, ad::Pad::Wrap);
  Var y = ad::conv2d(x, w, b, map);
  auto clampi = [](int64_t v, int64_t n) { return std::max<int64_t>(0, std::min(n - 1, v)); };
  for (int64_t co = 0; co < 3; ++co) {
    for (int64_t oy = 0; oy < 4; ++oy) {
      for (int64_t ox = 0; ox < 5; ++ox) {
        double acc = b->value[co];
        for (int64_t ci = 0; ci < 2; ++ci) {
          for (int64_t ky = 0; ky < 3; ++ky) {
            for (int64_t kx = 0; kx < 3; ++kx) {
              const int64_t sy = clampi(oy + ky - 1, 4);
              const int64_t sx = ((ox + kx - 1) % 5 + 5) % 5;
              acc += x->value.at(int64_t(0), ci, sy, sx) * w->value.at(co, ci, ky, kx);
            }
          }
        }
        REQUIRE_THAT(y->value.at(int64_t(0), co, oy, ox), Catch::Matchers::WithinAbs(acc, 1e-12));
      }
    }
  }
}

TEST_CASE("gradients: pooling and upsampling") {
  Var x = rand_param({2, 3, 4, 6}, 50);
  SECTION("avg_pool2d") {
    auto res = test::check_gradients({{"x", x}}, [&] { return scalarize(ad::avg_pool2d(x, 2)); }, 40, 51);
    REQUIRE(res.max_rel_err < 1e-6);
  }
  SECTION("upsample bilinear") {
    auto plan = ad::make_interp_plan(4, 6, 8, 12, ad::InterpMethod::Bilinear, true);
    auto res = test::check_gradients({{"x", x}}, [&] { return scalarize(ad::upsample(x, plan)); }, 40, 52);
    REQUIRE(res.max_rel_err < 1e-6);
  }
}

TEST_CASE("gradients: channel_affine, scale_batch and weighted_mse") {
  Var x = rand_param({2, 3, 4, 5}, 60);
  Tensor target = rand_tensor({2, 3, 4, 5}, 61);
  WeightTable wt;
  wt.weights = {1.0, 3.0, 0.5};
  std::vector<double> scale = {2.0, 0.5, -1.0}, shift = {0.1, -0.2, 0.3};
  auto res = test::check_gradients(
      {{"x", x}},
      [&] {
        Var y = ad::channel_affine(x, scale, shift);
        y = ad::scale_batch(y, {0.5, 2.0});
        return ad::weighted_mse(y, target, wt);
      },
      60, 62);
  REQUIRE(res.max_rel_err < 1e-6);
}

TEST_CASE("weighted_mse hand example") {
  // two channels, weights {1,3}, per-channel MSE {0,2} -> (0 + 3*2)/4 = 1.5
  Tensor pred({1, 2, 1, 2});
  pred[0] = 1.0;
  pred[1] = 1.0;
  pred[2] = 3.0;
  pred[3] = 3.0;
  Tensor target({1, 2, 1, 2});
  target[0] = 1.0;
  target[1] = 1.0;
  target[2] = 3.0 - std::sqrt(2.0);
  target[3] = 3.0 + std::sqrt(2.0);
  WeightTable wt;
  wt.weights = {1.0, 3.0};
  Var loss = ad::weighted_mse(ad::constant(pred), target, wt);
  REQUIRE_THAT(loss->value[0], Catch::Matchers::WithinAbs(1.5, 1e-12));

  // invariance under weight rescaling
  WeightTable wt2;
  wt2.weights = {7.0, 21.0};
  Var loss2 = ad::weighted_mse(ad::constant(pred), target, wt2);
  REQUIRE_THAT(loss2->value[0], Catch::Matchers::WithinAbs(loss->value[0], 1e-12));
}

TEST_CASE("backward accumulates across shared subgraphs") {
  // y = x + x: dy/dx = 2 per coordinate
  Var x = rand_param({3}, 70);
  Var y = ad::reduce_sum(ad::add(x, x));
  ad::backward(y);
  for (int64_t i = 0; i < 3; ++i) REQUIRE_THAT(x->grad[i], Catch::Matchers::WithinAbs(2.0, 1e-14));
}
