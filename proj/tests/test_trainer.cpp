#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "gyre/trainer.hpp"

using namespace gyre;

namespace {

ModelConfig tiny_cfg(int obs, int act, MemoryKind mk) {
  ModelConfig c;
  c.obs_dim = obs;
  c.act_dim = act;
  c.dim_q = 2;
  c.dim_p = 2;
  c.dim_c = 2;
  c.enc_width = 8;
  c.enc_depth = 1;
  c.head_width = 8;
  c.head_depth = 1;
  c.proj_dim = 4;
  c.bin_count = 11;
  c.memory_kind = mk;
  c.mem_dim = 3;
  c.mem_state_dim = 2;
  c.mem_layers = 1;
  return c;
}

SeqBatch synth_batch(int T, int B, int obs, int act, uint64_t seed) {
  Rng rng(seed);
  SeqBatch b;
  for (int t = 0; t <= T; ++t) b.obs.push_back(rng.gaussian_tensor(B, obs, 0.0, 0.5));
  for (int t = 0; t < T; ++t) {
    b.act.push_back(rng.uniform_tensor(B, act, -1.0, 1.0));
    b.rew.push_back(rng.gaussian_tensor(B, 1, 0.0, 0.3));
  }
  return b;
}

bool models_identical(WorldModel& a, WorldModel& b) {
  auto ta = model_all_tensors(a);
  auto tb = model_all_tensors(b);
  if (ta.size() != tb.size()) return false;
  for (size_t i = 0; i < ta.size(); ++i) {
    if (ta[i].first != tb[i].first) return false;
    if (!bit_equal(*ta[i].second, *tb[i].second)) return false;
  }
  return true;
}

bool reports_identical(const LossReport& a, const LossReport& b) {
  return std::memcmp(&a, &b, sizeof(LossReport)) == 0;
}

TrainerConfig small_tc() {
  TrainerConfig tc;
  tc.batch_size = 2;
  tc.seq_len = 6;
  tc.grad_clip = 10.0;
  tc.tau = 0.01;
  return tc;
}

PlannerConfig tiny_pc() {
  PlannerConfig pc;
  pc.horizon = 2;
  pc.iterations = 2;
  pc.candidates = 6;
  pc.elites = 2;
  pc.policy_candidates = 2;
  return pc;
}

}  // namespace

TEST_CASE("optimizer: first step moves each weight by about lr") {
  Tensor2 p(1, 3);
  p.at(0, 0) = 1.0;
  p.at(0, 1) = -2.0;
  p.at(0, 2) = 0.5;
  Tensor2 g(1, 3);
  g.at(0, 0) = 2.0;
  g.at(0, 1) = -3.0;
  g.at(0, 2) = 0.001;

  AdamW opt(0.01, 0.0);
  opt.step({{"p", &p}}, {g});
  CHECK(opt.steps_taken() == 1);
  // bias-corrected first step is lr * g / (|g| + eps): one lr in the sign
  // direction, slightly shrunk for small entries
  CHECK(p.at(0, 0) == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
  CHECK(p.at(0, 1) == doctest::Approx(-2.0 + 0.01).epsilon(1e-6));
  CHECK(p.at(0, 2) == doctest::Approx(0.5 - 0.01 * (0.001 / (0.001 + 1e-8))).epsilon(1e-9));
}

TEST_CASE("optimizer: matches the reference recursion bitwise") {
  const double lr = 0.003, wd = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  Rng rng(4);
  Tensor2 pa = rng.gaussian_tensor(2, 3, 0.0, 1.0);
  Tensor2 pb = rng.gaussian_tensor(1, 4, 0.0, 1.0);
  Tensor2 ra = pa, rb = pb;  // reference copies
  Tensor2 ma(2, 3), va(2, 3), mb(1, 4), vb(1, 4);

  AdamW opt(lr, wd);
  for (int step = 1; step <= 4; ++step) {
    Tensor2 ga = rng.gaussian_tensor(2, 3, 0.0, 0.5);
    Tensor2 gb = rng.gaussian_tensor(1, 4, 0.0, 0.5);
    opt.step({{"a", &pa}, {"b", &pb}}, {ga, gb});

    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
    auto ref = [&](Tensor2& p, Tensor2& m, Tensor2& v, const Tensor2& g) {
      for (int k = 0; k < p.size(); ++k) {
        m.data[k] = b1 * m.data[k] + (1.0 - b1) * g.data[k];
        v.data[k] = b2 * v.data[k] + (1.0 - b2) * g.data[k] * g.data[k];
        const double mhat = m.data[k] / c1;
        const double vhat = v.data[k] / c2;
        p.data[k] -= lr * (mhat / (std::sqrt(vhat) + eps) + wd * p.data[k]);
      }
    };
    ref(ra, ma, va, ga);
    ref(rb, mb, vb, gb);
    CHECK(bit_equal(pa, ra));
    CHECK(bit_equal(pb, rb));
  }
  CHECK(opt.steps_taken() == 4);
}

TEST_CASE("optimizer: zero gradients decay weights geometrically") {
  const double lr = 0.01, wd = 0.1;
  Tensor2 p(1, 3);
  p.at(0, 0) = 2.0;
  p.at(0, 1) = -1.5;
  p.at(0, 2) = 0.25;
  Tensor2 ref = p;
  Tensor2 z(1, 3);

  AdamW opt(lr, wd);
  for (int step = 0; step < 5; ++step) {
    opt.step({{"p", &p}}, {z});
    for (int k = 0; k < 3; ++k) ref.data[k] -= lr * (wd * ref.data[k]);
    CHECK(bit_equal(p, ref));
  }
  // closed form: p0 * (1 - lr*wd)^5
  for (int k = 0; k < 3; ++k)
    CHECK(p.data[k] ==
          doctest::Approx((k == 0 ? 2.0 : k == 1 ? -1.5 : 0.25) * std::pow(1.0 - lr * wd, 5.0))
              .epsilon(1e-12));
}

TEST_CASE("optimizer: guards against malformed inputs") {
  CHECK_THROWS_AS(AdamW(0.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(AdamW(1e-3, -0.1), std::invalid_argument);
  CHECK_THROWS_AS(AdamW(1e-3, 0.0, 1.0, 0.999), std::invalid_argument);

  Tensor2 p(2, 2), g(2, 2), bad(1, 2);
  AdamW opt(1e-3, 0.0);
  CHECK_THROWS_AS(opt.step({{"p", &p}}, {g, g}), std::invalid_argument);
  CHECK_THROWS(opt.step({{"p", &p}}, {bad}));
  opt.step({{"p", &p}}, {g});
  Tensor2 q(1, 1), gq(1, 1);
  CHECK_THROWS_AS(opt.step({{"p", &p}, {"q", &q}}, {g, gq}), std::invalid_argument);
}

TEST_CASE("gradient clipping rescales to the threshold and reports the raw norm") {
  std::vector<Tensor2> grads;
  grads.emplace_back(1, 2);
  grads.emplace_back(1, 1);
  grads[0].at(0, 0) = 15.0;
  grads[0].at(0, 1) = 0.0;
  grads[1].at(0, 0) = 20.0;
  CHECK(global_norm(grads) == 25.0);  // sqrt(15^2 + 20^2) is exact

  const double raw = clip_global_norm(grads, 10.0);
  CHECK(raw == 25.0);
  CHECK(grads[0].at(0, 0) == doctest::Approx(6.0).epsilon(1e-12));
  CHECK(grads[1].at(0, 0) == doctest::Approx(8.0).epsilon(1e-12));
  CHECK(global_norm(grads) == doctest::Approx(10.0).epsilon(1e-9));

  std::vector<Tensor2> small;
  small.emplace_back(1, 2);
  small[0].at(0, 0) = 3.0;
  small[0].at(0, 1) = 4.0;
  std::vector<Tensor2> before = small;
  CHECK(clip_global_norm(small, 10.0) == 5.0);
  CHECK(bit_equal(small[0], before[0]));

  std::vector<Tensor2> none;
  CHECK(global_norm(none) == 0.0);
}

TEST_CASE("model update step is deterministic across clones") {
  ModelConfig cfg = tiny_cfg(4, 2, MemoryKind::Selective);
  Rng r1(55), r2(55);
  WorldModel m1 = model_make(cfg, r1);
  WorldModel m2 = model_make(cfg, r2);
  REQUIRE(models_identical(m1, m2));

  SeqBatch batch = synth_batch(6, 2, 4, 2, 7);
  LossWeights w;
  LossConfig lc;
  TrainerConfig tc = small_tc();
  AdamW o1(1e-3, 1e-6), o2(1e-3, 1e-6);
  Rng s1(9), s2(9);

  UpdateOut u1 = model_update_step(m1, o1, batch, w, lc, tc, 0.5, s1);
  UpdateOut u2 = model_update_step(m2, o2, batch, w, lc, tc, 0.5, s2);
  CHECK(reports_identical(u1.report, u2.report));
  CHECK(u1.raw_grad_norm == u2.raw_grad_norm);
  CHECK(u1.raw_grad_norm > 0.0);
  CHECK(std::isfinite(u1.report.total));
  CHECK(models_identical(m1, m2));

  // a second update keeps them in lockstep
  UpdateOut u3 = model_update_step(m1, o1, batch, w, lc, tc, 0.6, s1);
  UpdateOut u4 = model_update_step(m2, o2, batch, w, lc, tc, 0.6, s2);
  CHECK(reports_identical(u3.report, u4.report));
  CHECK(models_identical(m1, m2));
}

TEST_CASE("model update step rejects sequences shorter than the rollout") {
  ModelConfig cfg = tiny_cfg(4, 2, MemoryKind::None);
  Rng r(3);
  WorldModel m = model_make(cfg, r);
  SeqBatch batch = synth_batch(3, 2, 4, 2, 7);  // T=3 < rollout_k=5
  LossWeights w;
  LossConfig lc;
  TrainerConfig tc = small_tc();
  AdamW opt(1e-3, 0.0);
  Rng rng(1);
  CHECK_THROWS_AS((void)model_update_step(m, opt, batch, w, lc, tc, 0.5, rng),
                  std::invalid_argument);
}

TEST_CASE("repeated updates on a fixed batch reduce the objective") {
  ModelConfig cfg = tiny_cfg(4, 2, MemoryKind::Selective);
  Rng r(19);
  WorldModel m = model_make(cfg, r);
  SeqBatch batch = synth_batch(6, 2, 4, 2, 23);
  LossWeights w;
  LossConfig lc;
  TrainerConfig tc = small_tc();
  AdamW opt(3e-3, 0.0);
  Rng rng(5);

  double first = 0.0, last = 0.0;
  for (int i = 0; i < 50; ++i) {
    UpdateOut u = model_update_step(m, opt, batch, w, lc, tc, 0.5, rng);
    if (i == 0) first = u.report.total;
    last = u.report.total;
    CHECK(std::isfinite(u.report.total));
  }
  CHECK(last < 0.9 * first);
}

TEST_CASE("the reward and policy heads fit constant targets") {
  ModelConfig cfg = tiny_cfg(3, 2, MemoryKind::None);
  Rng r(31);
  WorldModel m = model_make(cfg, r);

  // constant reward 1.0, constant action 0.5 on every step
  SeqBatch batch = synth_batch(6, 2, 3, 2, 37);
  for (auto& rew : batch.rew)
    for (double& v : rew.data) v = 1.0;
  for (auto& act : batch.act)
    for (double& v : act.data) v = 0.5;

  LossWeights w;
  LossConfig lc;
  TrainerConfig tc = small_tc();
  AdamW opt(3e-3, 0.0);
  Rng rng(11);
  for (int i = 0; i < 300; ++i) (void)model_update_step(m, opt, batch, w, lc, tc, 0.5, rng);

  TwoHotCodec codec = m.codec();
  const double alpha = alpha_at(m.cfg.alpha, 0.5);
  MemoryState mem = mem_init(m.memory, batch.batch());
  for (int t = 0; t < 2; ++t) {
    Tensor2 z = encode(m, batch.obs[t]);
    MemStepOut ms = mem_step(m.memory, z, batch.act[t], mem);
    TransitionOutput tr = soft_ham_step(m, z, batch.act[t], ms.features, alpha);
    Tensor2 rhat = codec.decode_logits_rows(predict_reward_logits(m, tr.next));
    for (int b = 0; b < rhat.rows; ++b) {
      CHECK(rhat.at(b, 0) > 0.9);
      CHECK(rhat.at(b, 0) < 1.1);
    }
    Tensor2 prior = policy_prior(m, z);
    for (int b = 0; b < prior.rows; ++b)
      for (int d = 0; d < prior.cols; ++d) {
        CHECK(prior.at(b, d) > 0.4);
        CHECK(prior.at(b, d) < 0.6);
      }
  }
}

TEST_CASE("tau = 0 freezes the EMA targets; tau = 1 snaps them to online") {
  ModelConfig cfg = tiny_cfg(4, 2, MemoryKind::None);
  Rng r(41);
  WorldModel m = model_make(cfg, r);
  SeqBatch batch = synth_batch(6, 2, 4, 2, 43);
  LossWeights w;
  LossConfig lc;
  TrainerConfig tc = small_tc();
  tc.tau = 0.0;
  AdamW opt(1e-3, 0.0);
  Rng rng(2);

  std::vector<Tensor2> target_before;
  for (const Mlp* net : {&m.encoder_t, &m.projector_t, &m.value_t}) {
    for (const Tensor2& t : net->w) target_before.push_back(t);
    for (const Tensor2& t : net->b) target_before.push_back(t);
  }
  Tensor2 online_before = m.encoder.w[0];
  (void)model_update_step(m, opt, batch, w, lc, tc, 0.5, rng);
  CHECK_FALSE(bit_equal(m.encoder.w[0], online_before));  // online moved

  size_t i = 0;
  for (const Mlp* net : {&m.encoder_t, &m.projector_t, &m.value_t}) {
    for (const Tensor2& t : net->w) CHECK(bit_equal(t, target_before[i++]));
    for (const Tensor2& t : net->b) CHECK(bit_equal(t, target_before[i++]));
  }

  ema_update(m, 1.0);
  for (int l = 0; l < m.encoder.layer_count(); ++l) {
    CHECK(bit_equal(m.encoder_t.w[l], m.encoder.w[l]));
    CHECK(bit_equal(m.encoder_t.b[l], m.encoder.b[l]));
  }
}

TEST_CASE("a 200-step run triggers exactly the scheduled updates") {
  EnvSpec spec = make_env_spec(EnvName::PendulumSwingup);
  Env env(spec);
  ModelConfig cfg = tiny_cfg(spec.obs_dim, spec.act_dim, MemoryKind::Selective);
  Rng r(61);
  WorldModel m = model_make(cfg, r);

  TrainerConfig tc = small_tc();
  tc.total_steps = 200;
  tc.seed_steps = 100;
  tc.train_every = 2;
  tc.grad_steps = 2;
  tc.buffer_capacity = 10000;
  tc.lr = 1e-4;
  tc.eval_every = 0;
  tc.seed = 5;
  LossWeights w;
  LossConfig lc;
  PlannerConfig pc = tiny_pc();

  TrainResult res = train_run(m, env, tc, w, lc, pc);
  // updates fire at even steps 102..200: 50 triggers x 2 gradient steps
  CHECK(res.update_calls == 100);
  CHECK(res.rows.size() == 100);
  CHECK(res.rows.front().env_step == 102);
  CHECK(res.rows.back().env_step == 200);
  CHECK(res.evals.empty());
  CHECK(res.episodes == 1);  // pendulum episodes last 200 steps
  for (const MetricRow& row : res.rows) {
    CHECK(std::isfinite(row.report.total));
    CHECK(std::isfinite(row.grad_norm));
  }
}

TEST_CASE("evaluation cadence and the checkpoint hook") {
  EnvSpec spec = make_env_spec(EnvName::MassSpring);
  spec.episode_len = 50;
  Env env(spec);
  ModelConfig cfg = tiny_cfg(spec.obs_dim, spec.act_dim, MemoryKind::None);
  Rng r(71);
  WorldModel m = model_make(cfg, r);

  TrainerConfig tc = small_tc();
  tc.total_steps = 600;
  tc.seed_steps = 600;  // pure random collection, no updates ever fire
  tc.buffer_capacity = 10000;
  tc.eval_every = 500;
  tc.eval_episodes = 1;
  tc.seed = 13;
  LossWeights w;
  LossConfig lc;
  PlannerConfig pc = tiny_pc();

  std::vector<int> hook_steps;
  TrainResult res = train_run(m, env, tc, w, lc, pc,
                              [&](int step, const WorldModel&) { hook_steps.push_back(step); });
  CHECK(res.update_calls == 0);
  CHECK(res.rows.empty());
  REQUIRE(res.evals.size() == 1);
  CHECK(res.evals[0].env_step == 500);
  CHECK(std::isfinite(res.evals[0].mean_return));
  CHECK(res.episodes == 12);  // 600 steps / 50-step episodes
  REQUIRE(hook_steps.size() == 2);
  CHECK(hook_steps[0] == 500);
  CHECK(hook_steps[1] == 600);
}

TEST_CASE("training runs bit-identically for the same seed") {
  EnvSpec spec = make_env_spec(EnvName::PendulumSwingup);
  spec.episode_len = 50;
  Env env(spec);
  ModelConfig cfg = tiny_cfg(spec.obs_dim, spec.act_dim, MemoryKind::Selective);

  TrainerConfig tc = small_tc();
  tc.total_steps = 80;
  tc.seed_steps = 40;
  tc.train_every = 2;
  tc.grad_steps = 1;
  tc.buffer_capacity = 1000;
  tc.lr = 1e-3;
  tc.tau = 0.05;
  tc.eval_every = 40;
  tc.eval_episodes = 1;
  tc.seed = 77;
  LossWeights w;
  LossConfig lc;
  PlannerConfig pc = tiny_pc();

  Rng r1(3), r2(3);
  WorldModel m1 = model_make(cfg, r1);
  WorldModel m2 = model_make(cfg, r2);
  TrainResult a = train_run(m1, env, tc, w, lc, pc);
  TrainResult b = train_run(m2, env, tc, w, lc, pc);

  CHECK(a.update_calls == 20);  // even steps 42..80, one gradient step each
  CHECK(a.update_calls == b.update_calls);
  CHECK(a.episodes == b.episodes);
  REQUIRE(a.rows.size() == b.rows.size());
  for (size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].env_step == b.rows[i].env_step);
    CHECK(reports_identical(a.rows[i].report, b.rows[i].report));
    CHECK(a.rows[i].grad_norm == b.rows[i].grad_norm);
  }
  REQUIRE(a.evals.size() == 2);
  REQUIRE(b.evals.size() == 2);
  CHECK(a.evals[0].mean_return == b.evals[0].mean_return);
  CHECK(a.evals[1].mean_return == b.evals[1].mean_return);
  CHECK(models_identical(m1, m2));

  // a different seed produces a different trajectory
  TrainerConfig tc2 = tc;
  tc2.seed = 78;
  Rng r3(3);
  WorldModel m3 = model_make(cfg, r3);
  TrainResult c = train_run(m3, env, tc2, w, lc, pc);
  bool any_diff = c.rows.size() != a.rows.size();
  for (size_t i = 0; !any_diff && i < c.rows.size(); ++i)
    any_diff = !reports_identical(a.rows[i].report, c.rows[i].report);
  CHECK(any_diff);
}
