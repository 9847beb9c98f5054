#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "gyre/planner.hpp"
#include "gyre/rng.hpp"

using namespace gyre;

namespace {

// State-free stub: constant reward and terminal value, zero prior.
struct ConstStub : Dynamics {
  double reward, terminal;
  int dims;
  ConstStub(double r, double v, int a) : reward(r), terminal(v), dims(a) {}
  int act_dim() const override { return dims; }
  RolloutState start(int copies) const override {
    RolloutState s;
    s.z = Tensor2(copies, 1);
    return s;
  }
  Tensor2 step(RolloutState& s, const Tensor2&) const override {
    Tensor2 r(s.z.rows, 1);
    for (double& v : r.data) v = reward;
    return r;
  }
  Tensor2 value(const RolloutState& s) const override {
    Tensor2 v(s.z.rows, 1);
    for (double& x : v.data) x = terminal;
    return v;
  }
  Tensor2 prior(const RolloutState& s) const override { return Tensor2(s.z.rows, dims); }
};

// Poisons the latent at a chosen step.
struct NanStub : ConstStub {
  int nan_step;
  mutable int calls = 0;
  NanStub(int at) : ConstStub(0.0, 0.0, 1), nan_step(at) {}
  Tensor2 step(RolloutState& s, const Tensor2& a) const override {
    Tensor2 r = ConstStub::step(s, a);
    if (calls++ == nan_step) s.z.at(0, 0) = std::nan("");
    return r;
  }
};

// Strictly concave surrogate: reward is -(a - a*)^2 summed over coordinates,
// value 0, so the optimal first action is exactly a*.
struct QuadStub : Dynamics {
  Tensor2 target;        // (1, act)
  Tensor2 prior_action;  // (1, act)
  explicit QuadStub(Tensor2 t) : target(std::move(t)), prior_action(1, target.cols) {}
  int act_dim() const override { return target.cols; }
  RolloutState start(int copies) const override {
    RolloutState s;
    s.z = Tensor2(copies, 1);
    return s;
  }
  Tensor2 step(RolloutState& s, const Tensor2& a) const override {
    Tensor2 r(s.z.rows, 1);
    for (int b = 0; b < a.rows; ++b) {
      double acc = 0.0;
      for (int d = 0; d < a.cols; ++d) {
        const double dv = a.at(b, d) - target.at(0, d);
        acc -= dv * dv;
      }
      r.at(b, 0) = acc;
    }
    return r;
  }
  Tensor2 value(const RolloutState& s) const override { return Tensor2(s.z.rows, 1); }
  Tensor2 prior(const RolloutState& s) const override {
    return repeat_row(prior_action, s.z.rows);
  }
};

}  // namespace

TEST_CASE("imagined rollout scores a geometric reward sum plus terminal value") {
  ConstStub dyn(0.8, 2.0, 1);
  const double gamma = 0.5;
  std::vector<Tensor2> acts(3, Tensor2(4, 1));
  ImaginedRollout ro = imagine_rollout(dyn, acts, gamma);
  double expect = 0.0, disc = 1.0;
  for (int k = 0; k < 3; ++k) {
    expect += disc * 0.8;
    disc *= gamma;
  }
  expect += disc * 2.0;
  REQUIRE(ro.score.rows == 4);
  for (int b = 0; b < 4; ++b) CHECK(ro.score.at(b, 0) == expect);
  CHECK(ro.rewards.size() == 3);
  CHECK(ro.latents.size() == 3);

  SUBCASE("empty horizon scores the root state by value alone") {
    ImaginedRollout r0 = imagine_rollout(dyn, {}, gamma);
    CHECK(r0.score.rows == 1);
    CHECK(r0.score.at(0, 0) == 2.0);
    CHECK(r0.rewards.empty());
  }
  SUBCASE("identical action sequences give identical rollouts") {
    ImaginedRollout a = imagine_rollout(dyn, acts, gamma);
    ImaginedRollout b = imagine_rollout(dyn, acts, gamma);
    CHECK(bit_equal(a.score, b.score));
    CHECK(bit_equal(a.terminal_value, b.terminal_value));
  }
}

TEST_CASE("a non-finite latent aborts the rollout naming the step") {
  NanStub dyn(2);
  std::vector<Tensor2> acts(5, Tensor2(1, 1));
  try {
    imagine_rollout(dyn, acts, 0.99);
    FAIL("expected an error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("step 2") != std::string::npos);
  }
}

TEST_CASE("softmax weights: uniform on ties, zero on -inf, error when empty of signal") {
  std::vector<double> equal(16, 3.25);
  auto w = softmax_weights(equal, 0.5);
  for (double v : w) CHECK(v == 1.0 / 16);

  std::vector<double> mixed = {1.0, -std::numeric_limits<double>::infinity(), 1.0};
  auto wm = softmax_weights(mixed, 0.5);
  CHECK(wm[1] == 0.0);
  CHECK(wm[0] == doctest::Approx(0.5).epsilon(1e-15));

  std::vector<double> dead(4, -std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(softmax_weights(dead, 0.5), std::invalid_argument);
}

TEST_CASE("planner config invariants are enforced") {
  PlannerConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  SUBCASE("horizon") {
    cfg.horizon = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  }
  SUBCASE("elites exceed candidates") {
    cfg.elites = cfg.candidates + 1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  }
  SUBCASE("stds positive") {
    cfg.min_std = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  }
  SUBCASE("temperature positive") {
    cfg.temperature = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  }
}

TEST_CASE("CEM converges to the quadratic optimum within 6 iterations on 20 seeds") {
  Tensor2 target(1, 2);
  target.at(0, 0) = 0.4;
  target.at(0, 1) = -0.3;
  QuadStub dyn(target);
  PlannerConfig cfg;
  cfg.horizon = 1;  // surrogate objective depends only on the first action
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    PlanResult res = cem_plan(dyn, cfg, seed);
    CAPTURE(seed);
    for (int d = 0; d < 2; ++d)
      CHECK(std::abs(res.action.at(0, d) - target.at(0, d)) < 0.05);
    REQUIRE(res.best_seen.size() == size_t(cfg.iterations));
    for (size_t i = 1; i < res.best_seen.size(); ++i)
      CHECK(res.best_seen[i] >= res.best_seen[i - 1]);
    CHECK(res.elite_mean_score.size() == size_t(cfg.iterations));
    for (const Tensor2& s : res.stddev)
      for (double v : s.data) CHECK(v >= cfg.min_std);
    for (double v : res.action.data) {
      CHECK(v <= 1.0);
      CHECK(v >= -1.0);
    }
  }
}

TEST_CASE("an out-of-bounds optimum saturates at the clamped corner") {
  Tensor2 target(1, 2);
  target.at(0, 0) = 5.0;
  target.at(0, 1) = -5.0;
  QuadStub dyn(target);
  PlannerConfig cfg;
  cfg.horizon = 1;
  PlanResult res = cem_plan(dyn, cfg, 3);
  CHECK(res.action.at(0, 0) > 0.9);
  CHECK(res.action.at(0, 0) <= 1.0);
  CHECK(res.action.at(0, 1) < -0.9);
  CHECK(res.action.at(0, 1) >= -1.0);
}

TEST_CASE("a prior that already knows the optimum is found immediately via warm start") {
  Tensor2 target(1, 2);
  target.at(0, 0) = 0.25;
  target.at(0, 1) = -0.6;
  QuadStub dyn(target);
  dyn.prior_action = target;
  PlannerConfig cfg;
  cfg.horizon = 1;
  PlanResult res = cem_plan(dyn, cfg, 5);
  // the warm-started previous-mean candidate scores exactly zero, the maximum
  CHECK(res.best_seen[0] == 0.0);
  for (int d = 0; d < 2; ++d)
    CHECK(std::abs(res.action.at(0, d) - target.at(0, d)) < 0.05);
}

TEST_CASE("planning is deterministic in the seed") {
  Tensor2 target(1, 2);
  target.at(0, 0) = 0.1;
  target.at(0, 1) = 0.2;
  QuadStub dyn(target);
  PlannerConfig cfg;
  cfg.horizon = 2;
  PlanResult a = cem_plan(dyn, cfg, 42);
  PlanResult b = cem_plan(dyn, cfg, 42);
  CHECK(bit_equal(a.action, b.action));
  CHECK(a.best_seen == b.best_seen);
  CHECK(a.elite_mean_score == b.elite_mean_score);
  PlanResult c = cem_plan(dyn, cfg, 43);
  CHECK(!bit_equal(a.action, c.action));
}

TEST_CASE("acting: eval returns the plan mean, training adds 0.3-std noise") {
  Tensor2 target(1, 2);  // optimum at the origin keeps the noise unclipped
  QuadStub dyn(target);
  PlannerConfig cfg;
  cfg.horizon = 1;
  cfg.candidates = 16;
  cfg.elites = 4;
  cfg.policy_candidates = 0;
  cfg.iterations = 2;

  Tensor2 eval_a = planner_act(dyn, cfg, ActMode::Eval, 7);
  PlanResult plan = cem_plan(dyn, cfg, 7);
  CHECK(bit_equal(eval_a, plan.action));

  const int draws = 10000;
  std::vector<double> m(2, 0.0), m2(2, 0.0);
  int clipped = 0;
  for (int i = 0; i < draws; ++i) {
    const uint64_t seed = 1000 + i;
    Tensor2 e = planner_act(dyn, cfg, ActMode::Eval, seed);
    Tensor2 t = planner_act(dyn, cfg, ActMode::Train, seed);
    for (int d = 0; d < 2; ++d) {
      CHECK(t.at(0, d) <= 1.0);
      CHECK(t.at(0, d) >= -1.0);
      const double diff = t.at(0, d) - e.at(0, d);
      if (t.at(0, d) == 1.0 || t.at(0, d) == -1.0) ++clipped;
      m[d] += diff;
      m2[d] += diff * diff;
    }
  }
  for (int d = 0; d < 2; ++d) {
    const double mean = m[d] / draws;
    const double sd = std::sqrt(m2[d] / draws - mean * mean);
    CAPTURE(d);
    CHECK(sd > 0.27);
    CHECK(sd < 0.33);
  }
  CHECK(clipped < draws / 100);  // interior optimum: clamping is rare
}

TEST_CASE("model adapter: planning over a real model stays bounded and deterministic") {
  Rng rng(61);
  ModelConfig mc;
  mc.obs_dim = 4;
  mc.act_dim = 2;
  mc.dim_q = 2;
  mc.dim_p = 2;
  mc.dim_c = 2;
  mc.enc_width = 6;
  mc.enc_depth = 1;
  mc.head_width = 6;
  mc.head_depth = 1;
  mc.proj_dim = 3;
  mc.mem_dim = 3;
  mc.mem_state_dim = 2;
  mc.mem_layers = 1;
  WorldModel m = model_make(mc, rng);
  Tensor2 obs = rng.gaussian_tensor(1, mc.obs_dim, 0.0, 1.0);
  Tensor2 z = encode(m, obs);
  ModelDynamics dyn(m, z, mem_init(m.memory, 1), /*alpha=*/0.3);

  SUBCASE("empty horizon equals the EMA value decode") {
    ImaginedRollout ro = imagine_rollout(dyn, {}, 0.99);
    Tensor2 expect = m.codec().decode_logits_rows(predict_value_logits(m, z, true));
    CHECK(ro.score.at(0, 0) == expect.at(0, 0));
  }
  SUBCASE("batched rows evolve independently and identically") {
    RolloutState s = dyn.start(3);
    Tensor2 a = repeat_row(rng.gaussian_tensor(1, mc.act_dim, 0.0, 0.4), 3);
    Tensor2 r = dyn.step(s, a);
    for (int b = 1; b < 3; ++b) {
      CHECK(r.at(b, 0) == r.at(0, 0));
      for (int d = 0; d < s.z.cols; ++d) CHECK(s.z.at(b, d) == s.z.at(0, d));
    }
  }
  SUBCASE("plan action is finite, bounded and seed-deterministic") {
    PlannerConfig cfg;
    cfg.horizon = 2;
    cfg.iterations = 2;
    cfg.candidates = 8;
    cfg.elites = 3;
    cfg.policy_candidates = 2;
    PlanResult a = cem_plan(dyn, cfg, 9);
    PlanResult b = cem_plan(dyn, cfg, 9);
    CHECK(bit_equal(a.action, b.action));
    for (double v : a.action.data) {
      CHECK(std::isfinite(v));
      CHECK(v <= 1.0);
      CHECK(v >= -1.0);
    }
  }
}
