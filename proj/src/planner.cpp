#include "gyre/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "gyre/rng.hpp"

namespace gyre {

namespace {

constexpr double kActLo = -1.0, kActHi = 1.0;

double clamp_act(double v) { return v < kActLo ? kActLo : (v > kActHi ? kActHi : v); }

Tensor2 clamped(Tensor2 a) {
  for (double& v : a.data) v = clamp_act(v);
  return a;
}

}  // namespace

void PlannerConfig::validate() const {
  if (horizon < 1) throw std::invalid_argument("planner: horizon must be at least 1");
  if (iterations < 1) throw std::invalid_argument("planner: need at least one iteration");
  if (candidates < 1) throw std::invalid_argument("planner: need at least one candidate");
  if (elites < 1 || elites > candidates)
    throw std::invalid_argument("planner: elites must lie in [1, candidates]");
  if (!(init_std > 0.0) || !(min_std > 0.0))
    throw std::invalid_argument("planner: stds must be positive");
  if (!(temperature > 0.0)) throw std::invalid_argument("planner: temperature must be positive");
  if (policy_candidates < 0)
    throw std::invalid_argument("planner: policy candidate count cannot be negative");
  if (!(explore_std >= 0.0)) throw std::invalid_argument("planner: bad exploration std");
  if (!(gamma > 0.0) || gamma > 1.0)
    throw std::invalid_argument("planner: discount must lie in (0, 1]");
}

ModelDynamics::ModelDynamics(const WorldModel& m, Tensor2 z_root, MemoryState mem_root,
                             double alpha)
    : m_(m), z_root_(std::move(z_root)), mem_root_(std::move(mem_root)), alpha_(alpha) {
  if (z_root_.rows != 1 || z_root_.cols != m.cfg.dim_z())
    throw std::invalid_argument("ModelDynamics: root latent must be a single row");
  for (const Tensor2& s : mem_root_.s)
    if (s.rows != 1) throw std::invalid_argument("ModelDynamics: root memory must be a single row");
}

RolloutState ModelDynamics::start(int copies) const {
  RolloutState s;
  s.z = repeat_row(z_root_, copies);
  for (const Tensor2& layer : mem_root_.s) s.mem.push_back(repeat_row(layer, copies));
  return s;
}

Tensor2 ModelDynamics::step(RolloutState& s, const Tensor2& actions) const {
  MemoryState st;
  st.s = s.mem;
  MemStepOut mo = mem_step(m_.memory, s.z, actions, st);
  s.mem = std::move(mo.next.s);
  TransitionOutput tr = soft_ham_step(m_, s.z, actions, mo.features, alpha_);
  s.z = std::move(tr.next);
  return m_.codec().decode_logits_rows(predict_reward_logits(m_, s.z));
}

Tensor2 ModelDynamics::value(const RolloutState& s) const {
  return m_.codec().decode_logits_rows(predict_value_logits(m_, s.z, /*use_target=*/true));
}

Tensor2 ModelDynamics::prior(const RolloutState& s) const { return policy_prior(m_, s.z); }

ImaginedRollout imagine_rollout(const Dynamics& dyn, const std::vector<Tensor2>& actions,
                                double gamma) {
  const int B = actions.empty() ? 1 : actions[0].rows;
  ImaginedRollout out;
  RolloutState s = dyn.start(B);
  Tensor2 score(B, 1);
  double disc = 1.0;
  for (size_t k = 0; k < actions.size(); ++k) {
    Tensor2 r;
    try {
      r = dyn.step(s, actions[k]);
    } catch (const std::exception& e) {
      throw std::runtime_error(std::string(e.what()) + " (imagined step " + std::to_string(k) +
                               ")");
    }
    if (!s.z.all_finite())
      throw std::runtime_error("imagined rollout produced a non-finite latent at step " +
                               std::to_string(k));
    for (int b = 0; b < B; ++b) score.at(b, 0) += disc * r.at(b, 0);
    disc *= gamma;
    out.latents.push_back(s.z);
    out.rewards.push_back(std::move(r));
  }
  out.terminal_value = dyn.value(s);
  for (int b = 0; b < B; ++b) score.at(b, 0) += disc * out.terminal_value.at(b, 0);
  out.score = std::move(score);
  return out;
}

std::vector<double> softmax_weights(const std::vector<double>& scores, double temperature) {
  double top = -std::numeric_limits<double>::infinity();
  for (double s : scores) top = std::max(top, s);
  if (!std::isfinite(top))
    throw std::invalid_argument("softmax_weights: no finite score");
  std::vector<double> w(scores.size());
  double sum = 0.0;
  for (size_t i = 0; i < scores.size(); ++i) {
    w[i] = std::exp((scores[i] - top) / temperature);
    sum += w[i];
  }
  for (double& v : w) v /= sum;
  return w;
}

PlanResult cem_plan(const Dynamics& dyn, const PlannerConfig& cfg, uint64_t seed) {
  cfg.validate();
  const int H = cfg.horizon, A = dyn.act_dim();
  const int n_gauss = cfg.candidates, n_pol = cfg.policy_candidates;
  const int n_total = n_gauss + n_pol + 1;  // + previous mean
  Rng rng(seed);

  std::vector<Tensor2> mu(H, Tensor2(1, A)), sigma(H, Tensor2(1, A));
  for (Tensor2& s : sigma)
    for (double& v : s.data) v = cfg.init_std;
  if (cfg.warm_start) {
    // deterministic closed-loop prior rollout seeds the mean
    RolloutState s = dyn.start(1);
    for (int k = 0; k < H; ++k) {
      mu[k] = clamped(dyn.prior(s));
      dyn.step(s, mu[k]);
    }
  }

  PlanResult res;
  for (int it = 0; it < cfg.iterations; ++it) {
    // candidate action sequences, step-major: rows [0,n_gauss) Gaussian,
    // [n_gauss, n_gauss+n_pol) noisy prior rollouts, last row previous mean
    std::vector<Tensor2> acts(H, Tensor2(n_total, A));
    std::vector<double> scores(n_total, -std::numeric_limits<double>::infinity());

    for (int j = 0; j < n_gauss; ++j)
      for (int k = 0; k < H; ++k)
        for (int d = 0; d < A; ++d)
          acts[k].at(j, d) =
              clamp_act(mu[k].at(0, d) + sigma[k].at(0, d) * rng.gaussian(0.0, 1.0));

    if (n_pol > 0) {
      // closed-loop: each row follows the prior with per-step search-scale
      // noise; rewards are accumulated inline so the trajectory is scored as
      // it is generated
      RolloutState s = dyn.start(n_pol);
      std::vector<double> acc(n_pol, 0.0);
      double disc = 1.0;
      for (int k = 0; k < H; ++k) {
        Tensor2 a = dyn.prior(s);
        for (int j = 0; j < n_pol; ++j)
          for (int d = 0; d < A; ++d)
            a.at(j, d) =
                clamp_act(a.at(j, d) + sigma[k].at(0, d) * rng.gaussian(0.0, 1.0));
        for (int j = 0; j < n_pol; ++j)
          for (int d = 0; d < A; ++d) acts[k].at(n_gauss + j, d) = a.at(j, d);
        Tensor2 r = dyn.step(s, a);
        for (int j = 0; j < n_pol; ++j) acc[j] += disc * r.at(j, 0);
        disc *= cfg.gamma;
      }
      Tensor2 v = dyn.value(s);
      for (int j = 0; j < n_pol; ++j) {
        const double g = acc[j] + disc * v.at(j, 0);
        scores[n_gauss + j] = std::isfinite(g) ? g : -std::numeric_limits<double>::infinity();
      }
    }

    for (int k = 0; k < H; ++k)
      for (int d = 0; d < A; ++d) acts[k].at(n_total - 1, d) = mu[k].at(0, d);

    // open-loop batch: Gaussian candidates plus the previous mean
    {
      std::vector<Tensor2> open(H, Tensor2(n_gauss + 1, A));
      for (int k = 0; k < H; ++k)
        for (int j = 0; j <= n_gauss; ++j) {
          const int src = j < n_gauss ? j : n_total - 1;
          for (int d = 0; d < A; ++d) open[k].at(j, d) = acts[k].at(src, d);
        }
      ImaginedRollout ro = imagine_rollout(dyn, open, cfg.gamma);
      for (int j = 0; j <= n_gauss; ++j) {
        const double g = ro.score.at(j, 0);
        const int dst = j < n_gauss ? j : n_total - 1;
        scores[dst] = std::isfinite(g) ? g : -std::numeric_limits<double>::infinity();
      }
    }

    double iter_best = *std::max_element(scores.begin(), scores.end());
    if (!std::isfinite(iter_best))
      throw std::runtime_error("planning degenerated: no candidate scored finitely");
    res.best_seen.push_back(res.best_seen.empty() ? iter_best
                                                  : std::max(res.best_seen.back(), iter_best));

    std::vector<int> order(n_total);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&scores](int a, int b) { return scores[a] > scores[b]; });
    std::vector<double> elite_scores(cfg.elites);
    for (int e = 0; e < cfg.elites; ++e) elite_scores[e] = scores[order[e]];
    const std::vector<double> w = softmax_weights(elite_scores, cfg.temperature);
    res.elite_mean_score.push_back(
        std::accumulate(elite_scores.begin(), elite_scores.end(), 0.0) / cfg.elites);

    for (int k = 0; k < H; ++k)
      for (int d = 0; d < A; ++d) {
        double m = 0.0;
        for (int e = 0; e < cfg.elites; ++e) m += w[e] * acts[k].at(order[e], d);
        double var = 0.0;
        for (int e = 0; e < cfg.elites; ++e) {
          const double dv = acts[k].at(order[e], d) - m;
          var += w[e] * dv * dv;
        }
        mu[k].at(0, d) = m;
        sigma[k].at(0, d) = std::max(std::sqrt(var), cfg.min_std);
      }
  }

  res.mean = std::move(mu);
  res.stddev = std::move(sigma);
  res.action = res.mean[0];
  return res;
}

Tensor2 planner_act(const Dynamics& dyn, const PlannerConfig& cfg, ActMode mode,
                    uint64_t seed) {
  PlanResult plan = cem_plan(dyn, cfg, seed);
  if (mode == ActMode::Eval) return plan.action;
  Rng noise(derive_seed(seed, "explore"));
  Tensor2 a = plan.action;
  for (double& v : a.data) v = clamp_act(v + noise.gaussian(0.0, cfg.explore_std));
  return a;
}

}  // namespace gyre
