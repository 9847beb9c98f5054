#include "gyre/trainer.hpp"

#include <cmath>
#include <stdexcept>

namespace gyre {

AdamW::AdamW(double lr, double weight_decay, double beta1, double beta2, double eps)
    : lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {
  if (!(lr > 0.0)) throw std::invalid_argument("optimizer: learning rate must be positive");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("optimizer: bad weight decay");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw std::invalid_argument("optimizer: betas must lie in [0, 1)");
}

void AdamW::step(const std::vector<std::pair<std::string, Tensor2*>>& params,
                 const std::vector<Tensor2>& grads) {
  if (params.size() != grads.size())
    throw std::invalid_argument("optimizer: parameter/gradient count mismatch");
  if (m_.empty()) {
    for (const auto& [name, p] : params) {
      m_.emplace_back(p->rows, p->cols);
      v_.emplace_back(p->rows, p->cols);
    }
  }
  if (m_.size() != params.size())
    throw std::invalid_argument("optimizer: parameter set changed between steps");
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor2& p = *params[i].second;
    const Tensor2& g = grads[i];
    if (!p.same_shape(g)) shape_fail("optimizer step", p, g);
    for (int k = 0; k < p.size(); ++k) {
      m_[i].data[k] = b1_ * m_[i].data[k] + (1.0 - b1_) * g.data[k];
      v_[i].data[k] = b2_ * v_[i].data[k] + (1.0 - b2_) * g.data[k] * g.data[k];
      const double mhat = m_[i].data[k] / c1;
      const double vhat = v_[i].data[k] / c2;
      p.data[k] -= lr_ * (mhat / (std::sqrt(vhat) + eps_) + wd_ * p.data[k]);
    }
  }
}

double global_norm(const std::vector<Tensor2>& grads) {
  double acc = 0.0;
  for (const Tensor2& g : grads)
    for (double v : g.data) acc += v * v;
  return std::sqrt(acc);
}

double clip_global_norm(std::vector<Tensor2>& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (norm > max_norm) {
    const double f = max_norm / norm;
    for (Tensor2& g : grads)
      for (double& v : g.data) v *= f;
  }
  return norm;
}

void TrainerConfig::validate() const {
  if (total_steps < 1 || seed_steps < 0 || seed_steps > total_steps)
    throw std::invalid_argument("trainer: bad step budget");
  if (train_every < 1 || grad_steps < 1)
    throw std::invalid_argument("trainer: bad update cadence");
  if (batch_size < 1 || seq_len < 1 || buffer_capacity < 1)
    throw std::invalid_argument("trainer: bad batch shape");
  if (!(lr > 0.0) || !(grad_clip > 0.0) || !(weight_decay >= 0.0))
    throw std::invalid_argument("trainer: bad optimizer settings");
  if (!(tau > 0.0) || tau > 1.0)
    throw std::invalid_argument("trainer: EMA coefficient must lie in (0, 1]");
  if (eval_every < 0 || eval_episodes < 1)
    throw std::invalid_argument("trainer: bad evaluation cadence");
}

namespace {

void require_finite(const LossReport& r) {
  const std::pair<const char*, double> fields[] = {
      {"repr_loss", r.repr_loss},
      {"dyn_loss", r.dyn_loss},
      {"roll_loss", r.roll_loss},
      {"reward_loss", r.reward_loss},
      {"value_ce_loss", r.value_ce_loss},
      {"value_slow_loss", r.value_slow_loss},
      {"policy_prior_loss", r.policy_prior_loss},
      {"sa_loss", r.sa_loss},
      {"energy_loss", r.energy_loss},
      {"hamiltonian_loss", r.hamiltonian_loss},
      {"temp_loss", r.temp_loss},
      {"decouple_loss", r.decouple_loss},
      {"c_sparse_loss", r.c_sparse_loss},
      {"total", r.total},
  };
  for (const auto& [name, v] : fields)
    if (!std::isfinite(v))
      throw std::runtime_error(std::string("training aborted: ") + name + " is non-finite");
}

Tensor2 row_from(const std::vector<double>& v) {
  Tensor2 t(1, static_cast<int>(v.size()));
  for (size_t i = 0; i < v.size(); ++i) t.at(0, static_cast<int>(i)) = v[i];
  return t;
}

std::vector<double> to_vector(const Tensor2& row) {
  return std::vector<double>(row.data.begin(), row.data.end());
}

}  // namespace

UpdateOut model_update_step(WorldModel& m, AdamW& opt, const SeqBatch& batch,
                            const LossWeights& w, const LossConfig& lc,
                            const TrainerConfig& tc, double progress, Rng& rng) {
  const int hi = batch.steps() - lc.rollout_k;
  if (hi < 0)
    throw std::invalid_argument("model update: sequence shorter than the rollout length");
  // two distinct uniform start offsets (one if only one window exists)
  std::vector<int> starts;
  starts.push_back(rng.uniform_int(0, hi));
  if (hi >= 1) {
    int s2 = rng.uniform_int(0, hi - 1);
    if (s2 >= starts[0]) ++s2;
    starts.push_back(s2);
  }

  const double alpha = alpha_at(m.cfg.alpha, progress);
  TargetPack tp = make_targets(m, batch, lc, starts);

  Tape t;
  std::vector<std::pair<std::string, TensorRef>> bound;
  ModelRefs refs = model_bind(t, m, &bound);
  LossTerms terms = compute_losses(t, refs, batch, tp, w, lc, progress, alpha);
  UpdateOut out;
  out.report = loss_report(t, terms, w);
  require_finite(out.report);

  t.backward(terms.total);
  std::vector<Tensor2> grads;
  grads.reserve(bound.size());
  for (const auto& [name, ref] : bound) grads.push_back(t.grad(ref));
  out.raw_grad_norm = clip_global_norm(grads, tc.grad_clip);

  auto params = model_trainables(m);
  if (params.size() != bound.size())
    throw std::logic_error("model update: trainable enumeration mismatch");
  for (size_t i = 0; i < params.size(); ++i)
    if (params[i].first != bound[i].first)
      throw std::logic_error("model update: parameter order mismatch at " + params[i].first);
  opt.step(params, grads);
  ema_update(m, tc.tau);
  return out;
}

double eval_episode(const WorldModel& m, const Env& env, const PlannerConfig& pc,
                    double progress, uint64_t seed) {
  auto [state, obs] = env.reset(seed);
  MemoryState mem = mem_init(m.memory, 1);
  const double alpha = alpha_at(m.cfg.alpha, progress);
  double ret = 0.0;
  for (int t = 0;; ++t) {
    Tensor2 obs_row = row_from(obs);
    Tensor2 z = encode(m, obs_row);
    ModelDynamics dyn(m, z, mem, alpha);
    Tensor2 a = planner_act(dyn, pc, ActMode::Eval, derive_seed(seed, "eval-plan", t));
    mem = mem_step(m.memory, z, a, mem).next;
    StepOut so = env.step(state, to_vector(a));
    ret += so.reward;
    state = so.state;
    obs = so.obs;
    if (so.done) break;
  }
  return ret;
}

TrainResult train_run(WorldModel& m, const Env& env, const TrainerConfig& tc,
                      const LossWeights& w, const LossConfig& lc, const PlannerConfig& pc,
                      const std::function<void(int, const WorldModel&)>& checkpoint_hook) {
  tc.validate();
  pc.validate();
  const int act_dim = env.spec().act_dim;
  if (act_dim != m.cfg.act_dim || env.spec().obs_dim != m.cfg.obs_dim)
    throw std::invalid_argument("train_run: model and environment dimensions disagree");

  TrainResult res;
  ReplayBuffer buffer(tc.buffer_capacity);
  AdamW opt(tc.lr, tc.weight_decay);
  Rng seed_act(derive_seed(tc.seed, "seed-actions"));
  Rng sample_rng(derive_seed(tc.seed, "replay-sample"));
  Rng start_rng(derive_seed(tc.seed, "roll-starts"));

  auto [state, obs] = env.reset(derive_seed(tc.seed, "reset", 0));
  buffer.begin_episode(row_from(obs));
  MemoryState mem = mem_init(m.memory, 1);

  for (int env_step = 1; env_step <= tc.total_steps; ++env_step) {
    const double progress = static_cast<double>(env_step) / tc.total_steps;
    Tensor2 obs_row = row_from(obs);
    Tensor2 z = encode(m, obs_row);
    Tensor2 a(1, act_dim);
    if (env_step <= tc.seed_steps) {
      for (int d = 0; d < act_dim; ++d) a.at(0, d) = seed_act.uniform(-1.0, 1.0);
    } else {
      ModelDynamics dyn(m, z, mem, alpha_at(m.cfg.alpha, progress));
      a = planner_act(dyn, pc, ActMode::Train, derive_seed(tc.seed, "plan", env_step));
    }
    mem = mem_step(m.memory, z, a, mem).next;

    StepOut so = env.step(state, to_vector(a));
    buffer.push(a, so.reward, row_from(so.obs));
    state = so.state;
    obs = so.obs;
    if (so.done) {
      ++res.episodes;
      auto fresh = env.reset(derive_seed(tc.seed, "reset", res.episodes));
      state = fresh.first;
      obs = fresh.second;
      buffer.begin_episode(row_from(obs));
      mem = mem_init(m.memory, 1);
    }

    if (env_step > tc.seed_steps && env_step % tc.train_every == 0 &&
        buffer.valid_starts(tc.seq_len) > 0) {
      for (int g = 0; g < tc.grad_steps; ++g) {
        SeqBatch batch = buffer.sample(tc.batch_size, tc.seq_len, sample_rng);
        UpdateOut u = model_update_step(m, opt, batch, w, lc, tc, progress, start_rng);
        res.rows.push_back({env_step, u.report, u.raw_grad_norm});
        ++res.update_calls;
      }
    }

    if (tc.eval_every > 0 && env_step % tc.eval_every == 0) {
      double sum = 0.0;
      for (int ep = 0; ep < tc.eval_episodes; ++ep)
        sum += eval_episode(m, env, pc, progress,
                            derive_seed(tc.seed, "eval", static_cast<uint64_t>(env_step) * 1000 + ep));
      res.evals.push_back({env_step, sum / tc.eval_episodes});
      if (checkpoint_hook) checkpoint_hook(env_step, m);
    }
  }
  if (checkpoint_hook) checkpoint_hook(tc.total_steps, m);
  return res;
}

}  // namespace gyre
