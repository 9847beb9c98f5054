#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gyre/nn.hpp"
#include "support/fd_check.hpp"

using namespace gyre;
using gyre::testsupport::fd_compare;

TEST_CASE("identity network passes input through") {
  Mlp m;
  m.hidden_act = Act::Identity;
  m.output_act = Act::Identity;
  m.w.push_back(tensor_from({{1, 0}, {0, 1}}));
  m.b.push_back(Tensor2(1, 2, 0.0));
  Tensor2 x = tensor_from({{3.0, -4.0}});
  CHECK(bit_equal(mlp_forward(m, x), x));
}

TEST_CASE("zero weights with bias produce activation(bias)") {
  Rng rng(1);
  Mlp m = mlp_make({3, 2}, Act::SiLU, Act::Tanh, rng);
  for (auto& w : m.w) w = Tensor2(w.rows, w.cols, 0.0);
  m.b[0] = tensor_from({{0.5, -0.5}});
  Tensor2 y = mlp_forward(m, tensor_from({{9.0, 9.0, 9.0}}));
  CHECK(y.at(0, 0) == doctest::Approx(std::tanh(0.5)));
  CHECK(y.at(0, 1) == doctest::Approx(std::tanh(-0.5)));
}

TEST_CASE("input dim mismatch throws") {
  Rng rng(2);
  Mlp m = mlp_make({3, 4, 2}, Act::SiLU, Act::Identity, rng);
  CHECK_THROWS(mlp_forward(m, Tensor2(1, 5)));
}

TEST_CASE("zero_output makes the final layer exactly zero") {
  Rng rng(3);
  Mlp m = mlp_make({3, 8, 4}, Act::SiLU, Act::Identity, rng, /*zero_output=*/true);
  Tensor2 y = mlp_forward(m, rng.gaussian_tensor(2, 3, 0.0, 1.0));
  CHECK(max_abs(y) == 0.0);
}

TEST_CASE("taped forward equals plain forward bit-for-bit") {
  Rng rng(4);
  Mlp m = mlp_make({4, 16, 16, 3}, Act::SiLU, Act::Tanh, rng);
  Tensor2 x = rng.gaussian_tensor(5, 4, 0.0, 1.0);
  Tensor2 plain = mlp_forward(m, x);
  Tape t;
  MlpRefs r = mlp_bind_const(t, m);
  Tensor2 taped = t.value(mlp_forward(t, r, t.constant(x)));
  CHECK(bit_equal(plain, taped));
}

TEST_CASE("parameter gradients match finite differences at 1e-4") {
  Rng rng(5);
  Mlp m = mlp_make({3, 10, 8, 2}, Act::SiLU, Act::Identity, rng);
  Tensor2 x = rng.gaussian_tensor(4, 3, 0.0, 1.0);
  Tensor2 target = rng.gaussian_tensor(4, 2, 0.0, 1.0);

  auto loss_of = [&]() {
    Tensor2 y = mlp_forward(m, x);
    Tensor2 d = sub(y, target);
    return 0.5 * dot_all(d, d);
  };

  Tape t;
  std::vector<std::pair<std::string, TensorRef>> bound;
  MlpRefs r = mlp_bind(t, m, "net", &bound);
  TensorRef y = mlp_forward(t, r, t.constant(x));
  TensorRef d = t.sub(y, t.constant(target));
  TensorRef loss = t.scale(t.sum(t.mul(d, d)), 0.5);
  t.backward(loss);
  CHECK(bound.size() == 6);

  Mlp grads = mlp_grads(t, r, m);
  for (int l = 0; l < m.layer_count(); ++l) {
    CHECK(fd_compare(m.w[l], grads.w[l], loss_of).max_rel < 1e-4);
    CHECK(fd_compare(m.b[l], grads.b[l], loss_of).max_rel < 1e-4);
  }
}

TEST_CASE("input gradient of a scalar head: plain, taped, and finite differences agree") {
  Rng rng(6);
  Mlp m = mlp_make({5, 12, 12, 1}, Act::SiLU, Act::Identity, rng);
  Tensor2 x = rng.gaussian_tensor(3, 5, 0.0, 1.0);

  Tensor2 value, grad;
  mlp_value_and_input_grad(m, x, &value, &grad);
  CHECK(bit_equal(value, mlp_forward(m, x)));

  Tape t;
  MlpRefs r = mlp_bind_const(t, m);
  TensorRef tv, tg;
  mlp_value_and_input_grad(t, r, t.constant(x), &tv, &tg);
  CHECK(bit_equal(t.value(tv), value));
  CHECK(bit_equal(t.value(tg), grad));

  // finite differences on the summed head value w.r.t. x
  auto f = [&]() { return sum_all(mlp_forward(m, x)); };
  CHECK(fd_compare(x, grad, f).max_rel < 1e-6);
}

TEST_CASE("training gradients flow through the taped input-gradient path") {
  // loss = mean(input_grad^2); check d loss / d params against FD
  Rng rng(7);
  Mlp m = mlp_make({4, 9, 1}, Act::SiLU, Act::Identity, rng);
  Tensor2 x = rng.gaussian_tensor(3, 4, 0.0, 1.0);

  auto loss_of = [&]() {
    Tensor2 v, g;
    mlp_value_and_input_grad(m, x, &v, &g);
    return sum_all(mul(g, g)) / g.size();
  };

  Tape t;
  MlpRefs r = mlp_bind(t, m, "h", nullptr);
  TensorRef tv, tg;
  mlp_value_and_input_grad(t, r, t.constant(x), &tv, &tg);
  TensorRef loss = t.mean(t.mul(tg, tg));
  CHECK(t.value(loss).data[0] == doctest::Approx(loss_of()).epsilon(1e-12));
  t.backward(loss);
  Mlp grads = mlp_grads(t, r, m);
  for (int l = 0; l < m.layer_count(); ++l) {
    CHECK(fd_compare(m.w[l], grads.w[l], loss_of).max_rel < 1e-4);
    CHECK(fd_compare(m.b[l], grads.b[l], loss_of).max_rel < 1e-4);
  }
}

TEST_CASE("activation name roundtrip") {
  for (Act a : {Act::Identity, Act::SiLU, Act::Tanh, Act::Softplus})
    CHECK(act_from_name(act_name(a)) == a);
  CHECK_THROWS(act_from_name("relu"));
}
