#include "gyre/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gyre {

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double row_norm(const Tensor2& t, int row) {
  double acc = 0.0;
  for (int c = 0; c < t.cols; ++c) acc += t.at(row, c) * t.at(row, c);
  return std::sqrt(acc);
}

double diff_norm(const Tensor2& a, const Tensor2& b) {
  if (!a.same_shape(b)) shape_fail("diff_norm", a, b);
  double acc = 0.0;
  for (int i = 0; i < a.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

Tensor2 row_from(const std::vector<double>& v) {
  Tensor2 t(1, static_cast<int>(v.size()));
  for (size_t i = 0; i < v.size(); ++i) t.at(0, static_cast<int>(i)) = v[i];
  return t;
}

Tensor2 qp_of(const WorldModel& m, const Tensor2& z) {
  const int d = m.cfg.dim_q + m.cfg.dim_p;
  Tensor2 qp(z.rows, d);
  for (int r = 0; r < z.rows; ++r)
    for (int c = 0; c < d; ++c) qp.at(r, c) = z.at(r, c);
  return qp;
}

void require_geometry(const WorldModel& m, const char* what) {
  if (!m.cfg.geometry)
    throw std::invalid_argument(std::string(what) + ": needs a model with the geometric heads");
}

double pearson(const std::vector<double>& x, const std::vector<double>& y, bool* defined) {
  const size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) {
    *defined = false;
    return 0.0;
  }
  *defined = true;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

// ---- energy traces ------------------------------------------------------

std::string regime_str(Regime r) {
  switch (r) {
    case Regime::NoAction: return "no_action";
    case Regime::RandomAction: return "random_action";
    case Regime::PolicyRollout: return "policy_rollout";
  }
  return "unknown";
}

double EnergySeries::drift() const {
  if (h.size() < 2) return 0.0;
  return std::abs(h.back() - h.front()) / (std::abs(h.front()) + 1e-8);
}

std::vector<double> EnergyTraceSet::drifts() const {
  std::vector<double> d;
  d.reserve(episodes.size());
  for (const EnergySeries& e : episodes) d.push_back(e.drift());
  return d;
}

double EnergyTraceSet::median_drift() const { return median(drifts()); }

EnergyTraceSet energy_trace(const WorldModel& m, const Env& env, Regime regime, int episodes,
                            int steps, double kick_scale, uint64_t seed, double progress,
                            const PlannerConfig* pc) {
  require_geometry(m, "energy_trace");
  if (episodes < 1 || steps < 1) throw std::invalid_argument("energy_trace: bad protocol size");
  if (regime == Regime::PolicyRollout && pc == nullptr)
    throw std::invalid_argument("energy_trace: policy rollouts need a planner config");
  const double alpha = alpha_at(m.cfg.alpha, progress);
  const int act_dim = env.spec().act_dim;

  EnergyTraceSet set;
  set.regime = regime;
  for (int e = 0; e < episodes; ++e) {
    const uint64_t es = derive_seed(seed, "trace-reset", e);
    auto [state, obs] = regime == Regime::PolicyRollout ? env.reset(es)
                                                        : env.kick_reset(es, kick_scale);
    Rng act_rng(derive_seed(seed, "trace-act", e));
    MemoryState mem = mem_init(m.memory, 1);
    EnergySeries series;
    for (int t = 0; t < steps; ++t) {
      Tensor2 z = encode(m, row_from(obs));
      series.h.push_back(hamiltonian_energy(m, qp_of(m, z)).at(0, 0));

      Tensor2 a(1, act_dim);
      if (regime == Regime::RandomAction) {
        for (int d = 0; d < act_dim; ++d) a.at(0, d) = act_rng.uniform(-1.0, 1.0);
      } else if (regime == Regime::PolicyRollout) {
        ModelDynamics dyn(m, z, mem, alpha);
        a = planner_act(dyn, *pc, ActMode::Eval,
                        derive_seed(seed, "trace-plan", static_cast<uint64_t>(e) * 100000 + t));
      }
      mem = mem_step(m.memory, z, a, mem).next;
      StepOut so = env.step(state, std::vector<double>(a.data.begin(), a.data.end()));
      state = so.state;
      obs = so.obs;
      if (so.done) break;
    }
    set.episodes.push_back(std::move(series));
  }

  size_t common = set.episodes.front().h.size();
  for (const EnergySeries& s : set.episodes) common = std::min(common, s.h.size());
  for (size_t t = 0; t < common; ++t) {
    double mean = 0.0;
    for (const EnergySeries& s : set.episodes) mean += s.h[t];
    mean /= episodes;
    double var = 0.0;
    for (const EnergySeries& s : set.episodes) var += (s.h[t] - mean) * (s.h[t] - mean);
    set.mean_h.push_back(mean);
    set.std_h.push_back(std::sqrt(var / episodes));
  }
  return set;
}

EnergySeries energy_trace_latent(const WorldModel& m, const Tensor2& z0,
                                 const std::vector<Tensor2>& actions, double alpha) {
  require_geometry(m, "energy_trace_latent");
  if (z0.rows != 1 || z0.cols != m.cfg.dim_z())
    throw std::invalid_argument("energy_trace_latent: z0 must be one latent row");
  EnergySeries series;
  Tensor2 z = z0;
  MemoryState mem = mem_init(m.memory, 1);
  series.h.push_back(hamiltonian_energy(m, qp_of(m, z)).at(0, 0));
  for (const Tensor2& a : actions) {
    MemStepOut ms = mem_step(m.memory, z, a, mem);
    TransitionOutput tr = soft_ham_step(m, z, a, ms.features, alpha);
    z = tr.next;
    mem = ms.next;
    series.h.push_back(hamiltonian_energy(m, qp_of(m, z)).at(0, 0));
  }
  return series;
}

// ---- push / crossing ----------------------------------------------------

std::vector<PushRecord> push_records(const WorldModel& m,
                                     const std::vector<ReplayEpisode>& episodes,
                                     double progress) {
  require_geometry(m, "push_records");
  const double alpha = alpha_at(m.cfg.alpha, progress);
  std::vector<PushRecord> recs;
  for (const ReplayEpisode& ep : episodes) {
    MemoryState mem = mem_init(m.memory, 1);
    for (int t = 0; t < ep.steps(); ++t) {
      Tensor2 z = encode(m, ep.obs[t]);
      MemStepOut ms = mem_step(m.memory, z, ep.act[t], mem);
      TransitionOutput tr = soft_ham_step(m, z, ep.act[t], ms.features, alpha);
      mem = ms.next;
      PushRecord r;
      for (int c = 0; c < tr.drive.cols; ++c) r.push += tr.dh_dp.at(0, c) * tr.drive.at(0, c);
      r.dh = hamiltonian_energy(m, qp_of(m, tr.next)).at(0, 0) - tr.energy.at(0, 0);
      recs.push_back(r);
    }
  }
  return recs;
}

PushMetrics push_metrics(const std::vector<PushRecord>& records) {
  if (records.size() < 100)
    throw std::invalid_argument("push_metrics: needs at least 100 teacher-forced steps");
  std::vector<double> sign_dh, push, abs_dh, abs_push;
  for (const PushRecord& r : records) {
    sign_dh.push_back(r.dh > 0.0 ? 1.0 : r.dh < 0.0 ? -1.0 : 0.0);
    push.push_back(r.push);
    abs_dh.push_back(std::abs(r.dh));
    abs_push.push_back(std::abs(r.push));
  }
  PushMetrics out;
  out.steps = static_cast<int>(records.size());
  out.corr_sign = pearson(sign_dh, push, &out.sign_defined);
  out.corr_abs = pearson(abs_dh, abs_push, &out.abs_defined);
  return out;
}

PushMetrics push_metrics(const WorldModel& m, const std::vector<ReplayEpisode>& episodes,
                         double progress) {
  return push_metrics(push_records(m, episodes, progress));
}

CrossingCurve crossing_rate_curve(const std::vector<PushRecord>& records,
                                  const std::vector<double>& thresholds) {
  if (thresholds.empty()) throw std::invalid_argument("crossing_rate_curve: no thresholds");
  for (size_t i = 0; i < thresholds.size(); ++i) {
    if (thresholds[i] <= 0.0)
      throw std::invalid_argument("crossing_rate_curve: thresholds must be positive");
    if (i > 0 && thresholds[i] <= thresholds[i - 1])
      throw std::invalid_argument("crossing_rate_curve: thresholds must ascend");
  }
  std::vector<double> abs_push;
  for (const PushRecord& r : records) abs_push.push_back(std::abs(r.push));
  CrossingCurve curve;
  curve.thresholds = thresholds;
  curve.median_abs_push = median(abs_push);

  std::vector<const PushRecord*> high, low;
  for (const PushRecord& r : records)
    (std::abs(r.push) > curve.median_abs_push ? high : low).push_back(&r);
  curve.high_count = static_cast<int>(high.size());
  curve.low_count = static_cast<int>(low.size());
  if (curve.high_count < 2 || curve.low_count < 2)
    throw std::runtime_error("crossing_rate_curve: needs at least 2 steps per |push| group");

  auto rate = [](const std::vector<const PushRecord*>& g, double theta) {
    int n = 0;
    for (const PushRecord* r : g)
      if (std::abs(r->dh) > theta) ++n;
    return static_cast<double>(n) / static_cast<double>(g.size());
  };
  double auc = 0.0;
  for (double theta : thresholds) {
    curve.rate_high.push_back(rate(high, theta));
    curve.rate_low.push_back(rate(low, theta));
    auc += (curve.rate_high.back() - curve.rate_low.back() + 1.0) / 2.0;
  }
  curve.lift_auc = auc / static_cast<double>(thresholds.size());
  return curve;
}

CrossingCurve crossing_rate_curve(const WorldModel& m, const std::vector<ReplayEpisode>& episodes,
                                  const std::vector<double>& thresholds, double progress) {
  return crossing_rate_curve(push_records(m, episodes, progress), thresholds);
}

// ---- rollout error ------------------------------------------------------

RolloutMse rollout_mse(const WorldModel& m, const std::vector<ReplayEpisode>& episodes,
                       std::vector<int> ks, double progress) {
  if (ks.empty()) throw std::invalid_argument("rollout_mse: no rollout lengths");
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  if (ks.front() < 1) throw std::invalid_argument("rollout_mse: rollout lengths must be >= 1");
  const int max_k = ks.back();
  const double alpha = alpha_at(m.cfg.alpha, progress);

  RolloutMse out;
  out.ks = ks;
  out.mse.assign(ks.size(), 0.0);
  for (const ReplayEpisode& ep : episodes) {
    const int T = ep.steps();
    if (T < max_k) {
      ++out.episodes_skipped;
      continue;
    }
    ++out.episodes_used;
    // teacher-forced latents and memory snapshots along the episode
    std::vector<Tensor2> zs;
    std::vector<MemoryState> mems;
    mems.push_back(mem_init(m.memory, 1));
    for (int t = 0; t <= T; ++t) zs.push_back(encode(m, ep.obs[t]));
    for (int t = 0; t < T; ++t) mems.push_back(mem_step(m.memory, zs[t], ep.act[t], mems[t]).next);

    for (int s = 0; s + max_k <= T; ++s) {
      ++out.starts;
      Tensor2 z = zs[s];
      MemoryState mem = mems[s];
      for (int j = 1; j <= max_k; ++j) {
        MemStepOut ms = mem_step(m.memory, z, ep.act[s + j - 1], mem);
        TransitionOutput tr = soft_ham_step(m, z, ep.act[s + j - 1], ms.features, alpha);
        z = tr.next;
        mem = ms.next;
        const auto hit = std::find(ks.begin(), ks.end(), j);
        if (hit != ks.end()) {
          double acc = 0.0;
          for (int c = 0; c < z.cols; ++c) {
            const double d = z.at(0, c) - zs[s + j].at(0, c);
            acc += d * d;
          }
          out.mse[static_cast<size_t>(hit - ks.begin())] += acc;
        }
      }
    }
  }
  if (out.episodes_used == 0)
    throw std::runtime_error("rollout_mse: no episode is long enough for the requested lengths");
  for (double& v : out.mse) v /= static_cast<double>(out.starts);
  return out;
}

// ---- error-propagation bound -------------------------------------------

BoundReport bound_check(const LatentMap& true_map, const LatentMap& learned_map,
                        const std::vector<Tensor2>& starts, int k_max, double probe_scale,
                        uint64_t seed) {
  if (k_max < 1) throw std::invalid_argument("bound_check: k_max must be >= 1");
  if (starts.empty()) throw std::invalid_argument("bound_check: no start points");
  if (!(probe_scale > 0.0)) throw std::invalid_argument("bound_check: probe scale must be > 0");
  for (const Tensor2& s : starts)
    if (s.rows != 1) throw std::invalid_argument("bound_check: starts must be single rows");

  // both rollouts from every start
  std::vector<std::vector<Tensor2>> zs(starts.size()), zhat(starts.size());
  for (size_t i = 0; i < starts.size(); ++i) {
    zs[i].push_back(starts[i]);
    zhat[i].push_back(starts[i]);
    for (int k = 0; k < k_max; ++k) {
      zs[i].push_back(true_map(zs[i].back()));
      zhat[i].push_back(learned_map(zhat[i].back()));
    }
  }

  BoundReport rep;
  // uniform one-step error over every point the learned rollout applies the
  // map to, plus the true-visited points
  for (size_t i = 0; i < starts.size(); ++i)
    for (int k = 0; k < k_max; ++k) {
      rep.eps = std::max(rep.eps, diff_norm(learned_map(zs[i][k]), true_map(zs[i][k])));
      rep.eps = std::max(rep.eps, diff_norm(learned_map(zhat[i][k]), true_map(zhat[i][k])));
    }

  // local expansion: median of probe ratios on visited points
  Rng rng(derive_seed(seed, "bound-probe"));
  std::vector<double> ratios;
  for (size_t i = 0; i < starts.size(); ++i)
    for (int k = 0; k < k_max; ++k) {
      const Tensor2& z = zs[i][k];
      Tensor2 delta = rng.gaussian_tensor(1, z.cols, 0.0, 1.0);
      const double n = row_norm(delta, 0);
      if (n == 0.0) continue;
      for (double& v : delta.data) v *= probe_scale / n;
      Tensor2 moved = z;
      for (int c = 0; c < z.cols; ++c) moved.at(0, c) += delta.at(0, c);
      const double dn = diff_norm(moved, z);
      if (dn > 0.0) ratios.push_back(diff_norm(true_map(moved), true_map(z)) / dn);
    }
  rep.l_probe = median(ratios);

  // expansion along the actual error segments, so the recursion
  // e_k <= eps + L e_{k-1} holds with the measured constants
  for (size_t i = 0; i < starts.size(); ++i)
    for (int k = 1; k < k_max; ++k) {
      const double d = diff_norm(zhat[i][k], zs[i][k]);
      if (d > 0.0)
        rep.l_segment = std::max(rep.l_segment, diff_norm(true_map(zhat[i][k]), true_map(zs[i][k])) / d);
    }
  rep.L = std::max(rep.l_probe, rep.l_segment);

  double geo_sum = 0.0, power = 1.0;
  for (int k = 1; k <= k_max; ++k) {
    geo_sum += power;  // now sum_{i<k} L^i
    power *= rep.L;
    BoundRow row;
    row.k = k;
    for (size_t i = 0; i < starts.size(); ++i)
      row.measured = std::max(row.measured, diff_norm(zhat[i][k], zs[i][k]));
    row.bound = rep.eps * geo_sum;
    row.satisfied = row.measured <= row.bound * (1.0 + 1e-9) + 1e-15;
    rep.all_satisfied = rep.all_satisfied && row.satisfied;
    rep.rows.push_back(row);
  }
  return rep;
}

DriftBoundParams drift_bound_params(const WorldModel& m,
                                    const std::vector<ReplayEpisode>& episodes, double progress,
                                    double probe_scale, uint64_t seed) {
  require_geometry(m, "drift_bound_params");
  const double alpha = alpha_at(m.cfg.alpha, progress);
  Rng rng(derive_seed(seed, "curvature-probe"));
  DriftBoundParams out;
  std::vector<double> curvature;
  for (const ReplayEpisode& ep : episodes) {
    MemoryState mem = mem_init(m.memory, 1);
    for (int t = 0; t < ep.steps(); ++t) {
      Tensor2 z = encode(m, ep.obs[t]);
      MemStepOut ms = mem_step(m.memory, z, ep.act[t], mem);
      TransitionOutput tr = soft_ham_step(m, z, ep.act[t], ms.features, alpha);
      mem = ms.next;
      ++out.steps;

      double delta_sq = 0.0, grad_sq = 0.0;
      for (int c = 0; c < tr.dq_net.cols; ++c) delta_sq += tr.dq_net.at(0, c) * tr.dq_net.at(0, c);
      for (int c = 0; c < tr.dp_net.cols; ++c) delta_sq += tr.dp_net.at(0, c) * tr.dp_net.at(0, c);
      for (int c = 0; c < tr.dh_dq.cols; ++c) grad_sq += tr.dh_dq.at(0, c) * tr.dh_dq.at(0, c);
      for (int c = 0; c < tr.dh_dp.cols; ++c) grad_sq += tr.dh_dp.at(0, c) * tr.dh_dp.at(0, c);
      out.m_delta = std::max(out.m_delta, std::sqrt(delta_sq));
      out.m_u = std::max(out.m_u, row_norm(tr.drive, 0));
      out.l_h = std::max(out.l_h, std::sqrt(grad_sq));

      // finite-difference curvature of H at the visited (q,p)
      Tensor2 qp = qp_of(m, z);
      Tensor2 delta = rng.gaussian_tensor(1, qp.cols, 0.0, 1.0);
      const double n = row_norm(delta, 0);
      if (n == 0.0) continue;
      for (double& v : delta.data) v *= probe_scale / n;
      Tensor2 moved = qp;
      for (int c = 0; c < qp.cols; ++c) moved.at(0, c) += delta.at(0, c);
      Tensor2 dp0, ndq0, dp1, ndq1;
      hamiltonian_vector_field(m, qp, &dp0, &ndq0);
      hamiltonian_vector_field(m, moved, &dp1, &ndq1);
      double dgrad = 0.0;
      for (int c = 0; c < dp0.cols; ++c) {
        const double a = dp1.at(0, c) - dp0.at(0, c);
        const double b = ndq1.at(0, c) - ndq0.at(0, c);
        dgrad += a * a + b * b;
      }
      const double dn = diff_norm(moved, qp);
      if (dn > 0.0) curvature.push_back(std::sqrt(dgrad) / dn);
    }
  }
  out.c_h = median(curvature);
  return out;
}

// ---- OOD evaluation -----------------------------------------------------

OodReport ood_evaluate(const std::vector<const WorldModel*>& models, const EnvSpec& base,
                       const std::vector<Perturbation>& conditions, const PlannerConfig& pc,
                       int episodes, uint64_t seed) {
  if (models.empty())
    throw std::invalid_argument("ood_evaluate: needs at least one trained checkpoint");
  if (episodes < 1) throw std::invalid_argument("ood_evaluate: episodes must be >= 1");

  OodReport rep;
  rep.episodes = episodes;
  Env id_env(base);
  auto mean_eval = [&](const WorldModel& m, const Env& env, size_t seed_idx) {
    double sum = 0.0;
    for (int ep = 0; ep < episodes; ++ep)
      sum += eval_episode(m, env, pc, 1.0,
                          derive_seed(seed, "ood-ep", seed_idx * 1000 + static_cast<uint64_t>(ep)));
    return sum / episodes;
  };
  for (size_t s = 0; s < models.size(); ++s) rep.id_return.push_back(mean_eval(*models[s], id_env, s));

  for (const Perturbation& cond : conditions) {
    OodRow row;
    row.label = cond.label();
    row.identity = cond.is_identity();
    Env env = apply_perturbation(id_env, cond);
    for (size_t s = 0; s < models.size(); ++s) {
      const double r = mean_eval(*models[s], env, s);
      row.seed_return.push_back(r);
      row.seed_retention.push_back(100.0 * (r / rep.id_return[s]));
    }
    for (double v : row.seed_return) row.mean_return += v;
    for (double v : row.seed_retention) row.mean_retention += v;
    row.mean_return /= static_cast<double>(models.size());
    row.mean_retention /= static_cast<double>(models.size());
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

}  // namespace gyre
