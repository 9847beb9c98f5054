#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gyre/rng.hpp"
#include "gyre/tape.hpp"
#include "support/fd_check.hpp"

using namespace gyre;
using gyre::testsupport::fd_compare;

TEST_CASE("sum of squares gradient is 2x") {
  Tape t;
  TensorRef x = t.leaf(tensor_from({{3.0}}));
  TensorRef y = t.sum(t.mul(x, x));
  t.backward(y);
  CHECK(t.grad(x).data[0] == doctest::Approx(6.0));
}

TEST_CASE("constant output yields zero gradients") {
  Tape t;
  TensorRef x = t.leaf(tensor_from({{1.0, 2.0}}));
  TensorRef c = t.constant(tensor_from({{5.0}}));
  TensorRef y = t.add(t.scale(t.sum(x), 0.0), c);
  t.backward(y);
  CHECK(t.grad(x).data[0] == 0.0);
  CHECK(t.grad(x).data[1] == 0.0);
}

TEST_CASE("backward requires scalar output") {
  Tape t;
  TensorRef x = t.leaf(tensor_from({{1.0, 2.0}}));
  CHECK_THROWS(t.backward(x));
}

TEST_CASE("stop_gradient blocks the blocked path only") {
  Tape t;
  TensorRef x = t.leaf(tensor_from({{2.0}}));
  // f = sg(x^2) * x : analytic grad treating sg as constant = x^2 = 4
  TensorRef y = t.sum(t.mul(t.stop_gradient(t.mul(x, x)), x));
  t.backward(y);
  CHECK(t.grad(x).data[0] == doctest::Approx(4.0));
}

TEST_CASE("every op matches finite differences on a composite function") {
  Rng rng(11);
  Tensor2 x0 = rng.gaussian_tensor(3, 4, 0.0, 1.0);
  Tensor2 w0 = rng.gaussian_tensor(5, 4, 0.0, 0.7);
  Tensor2 b0 = rng.gaussian_tensor(1, 5, 0.0, 0.3);
  Tensor2 m0 = rng.gaussian_tensor(3, 5, 0.0, 0.5);
  Tensor2 rows_w = tensor_from({{0.5}, {2.0}, {0.0}});

  auto eval = [&](Tensor2* gx, Tensor2* gw, Tensor2* gb, Tensor2* gm) {
    Tape t;
    TensorRef x = t.leaf(x0);
    TensorRef w = t.leaf(w0);
    TensorRef b = t.leaf(b0);
    TensorRef m = t.leaf(m0);
    TensorRef h = t.add_row(t.matmul_nt(x, w), b);       // (3,5)
    TensorRef s = t.unary(h, Unary::Silu);
    TensorRef g = t.mul(s, t.unary(m, Unary::Tanh));
    TensorRef parts = t.concat_cols({g, t.unary(h, Unary::Sigmoid)});
    TensorRef sliced = t.slice_cols(parts, 2, 7);
    TensorRef centered = t.center_cols(sliced);
    TensorRef weighted = t.scale_rows(t.mul(centered, centered), rows_w);
    TensorRef a = t.unary(t.scale(weighted, 0.25), Unary::Softplus);
    TensorRef e = t.unary(t.scale(a, 0.1), Unary::Exp);
    // also exercise matmul/matmul_tn and the grad-kind activations
    TensorRef sg = t.unary(t.matmul_nt(x, w), Unary::SiluGrad);  // (3,5)
    TensorRef q = t.matmul(e, t.matmul_tn(sg, x));               // (3,5)x(5,4) -> (3,4)
    TensorRef out =
        t.add(t.mean(q), t.mean(t.unary(t.slice_cols(h, 0, 3), Unary::TanhGrad)));
    double v = t.value(out).data[0];
    if (gx) {
      t.backward(out);
      *gx = t.grad(x);
      if (gw) *gw = t.grad(w);
      if (gb) *gb = t.grad(b);
      if (gm) *gm = t.grad(m);
    }
    return v;
  };

  Tensor2 gx, gw, gb, gm;
  eval(&gx, &gw, &gb, &gm);
  auto f = [&]() { return eval(nullptr, nullptr, nullptr, nullptr); };
  CHECK(fd_compare(x0, gx, f).max_rel < 1e-4);
  CHECK(fd_compare(w0, gw, f).max_rel < 1e-4);
  CHECK(fd_compare(b0, gb, f).max_rel < 1e-4);
  CHECK(fd_compare(m0, gm, f).max_rel < 1e-4);
}

TEST_CASE("block layout ops match finite differences") {
  Rng rng(13);
  Tensor2 a0 = rng.gaussian_tensor(2, 3, 0.0, 1.0);  // d = 3 channels
  Tensor2 s0 = rng.gaussian_tensor(2, 4, 0.0, 1.0);  // n = 4 state dims

  auto eval = [&](Tensor2* ga, Tensor2* gs) {
    Tape t;
    TensorRef a = t.leaf(a0);
    TensorRef s = t.leaf(s0);
    TensorRef rep = t.repeat_cols_block(a, 4);  // (2,12)
    TensorRef til = t.tile_cols_block(s, 3);    // (2,12)
    TensorRef prod = t.mul(rep, til);
    TensorRef back = t.block_row_sums(prod, 4);  // (2,3)
    TensorRef out = t.mean(t.mul(back, back));
    double v = t.value(out).data[0];
    if (ga) {
      t.backward(out);
      *ga = t.grad(a);
      *gs = t.grad(s);
    }
    return v;
  };

  Tensor2 ga, gs;
  eval(&ga, &gs);
  auto f = [&]() { return eval(nullptr, nullptr); };
  CHECK(fd_compare(a0, ga, f).max_rel < 1e-4);
  CHECK(fd_compare(s0, gs, f).max_rel < 1e-4);
}

TEST_CASE("softmax cross-entropy value and gradient") {
  // uniform logits vs any target -> ln(K)
  Tape t;
  Tensor2 logits0(2, 5, 0.3);
  Tensor2 targets(2, 5, 0.0);
  targets.at(0, 1) = 1.0;
  targets.at(1, 0) = 0.5;
  targets.at(1, 4) = 0.5;
  TensorRef l = t.leaf(logits0);
  TensorRef ce = t.softmax_xent_mean(l, targets);
  CHECK(t.value(ce).data[0] == doctest::Approx(std::log(5.0)));

  t.backward(ce);
  Tensor2 g = t.grad(l);
  auto f = [&]() {
    Tape t2;
    return t2.value(t2.softmax_xent_mean(t2.leaf(logits0), targets)).data[0];
  };
  CHECK(fd_compare(logits0, g, f).max_rel < 1e-4);
}

TEST_CASE("matching one-hot logits drive cross-entropy to zero") {
  Tape t;
  Tensor2 logits(1, 3, 0.0);
  logits.at(0, 2) = 20.0;  // margin 20
  Tensor2 target(1, 3, 0.0);
  target.at(0, 2) = 1.0;
  TensorRef ce = t.softmax_xent_mean(t.constant(logits), target);
  CHECK(t.value(ce).data[0] < 1e-6);
}

TEST_CASE("silu second derivative used by SiluGrad backward is correct") {
  // unary_deriv(SiluGrad, x) must equal d/dx unary_eval(SiluGrad, x)
  for (double x : {-3.0, -0.7, 0.0, 0.4, 2.2}) {
    const double h = 1e-6;
    const double fd =
        (unary_eval(Unary::SiluGrad, x + h) - unary_eval(Unary::SiluGrad, x - h)) / (2 * h);
    CHECK(unary_deriv(Unary::SiluGrad, x) == doctest::Approx(fd).epsilon(1e-6));
  }
  for (double x : {-2.0, -0.3, 0.0, 1.1}) {
    const double h = 1e-6;
    const double fd =
        (unary_eval(Unary::TanhGrad, x + h) - unary_eval(Unary::TanhGrad, x - h)) / (2 * h);
    CHECK(unary_deriv(Unary::TanhGrad, x) == doctest::Approx(fd).epsilon(1e-6));
  }
}
