#include "gyre/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace gyre {

double warmup_weight(double base, double begin, double end, double progress) {
  if (!(begin < end)) throw std::invalid_argument("warmup_weight: begin must precede end");
  const double f = (progress - begin) / (end - begin);
  return base * (f < 0.0 ? 0.0 : (f > 1.0 ? 1.0 : f));
}

namespace {

double need(double v, const char* name) {
  if (std::isnan(v))
    throw std::invalid_argument(std::string("total_loss: missing part ") + name);
  return v;
}

}  // namespace

double total_loss(const LossReport& parts, const LossWeights& w, double progress) {
  double acc = w.repr * need(parts.repr_loss, "repr_loss");
  acc += w.dyn * need(parts.dyn_loss, "dyn_loss");
  acc += warmup_weight(w.roll, w.warmup_begin, w.warmup_end, progress) *
         need(parts.roll_loss, "roll_loss");
  acc += w.reward * need(parts.reward_loss, "reward_loss");
  acc += w.value * (need(parts.value_ce_loss, "value_ce_loss") +
                    w.beta_slow * need(parts.value_slow_loss, "value_slow_loss"));
  acc += w.policy * need(parts.policy_prior_loss, "policy_prior_loss");
  acc += warmup_weight(w.sa, w.warmup_begin, w.warmup_end, progress) *
         need(parts.sa_loss, "sa_loss");
  acc += warmup_weight(w.energy, w.warmup_begin, w.warmup_end, progress) *
         need(parts.energy_loss, "energy_loss");
  acc += w.ham * need(parts.hamiltonian_loss, "hamiltonian_loss");
  acc += w.temp * need(parts.temp_loss, "temp_loss");
  acc += w.decouple * need(parts.decouple_loss, "decouple_loss");
  acc += w.c_sparse * need(parts.c_sparse_loss, "c_sparse_loss");
  return acc;
}

std::vector<Tensor2> lambda_returns(const std::vector<Tensor2>& rewards,
                                    const std::vector<Tensor2>& vbar, double gamma,
                                    double lambda) {
  if (vbar.size() != rewards.size() + 1)
    throw std::invalid_argument("lambda_returns: need T rewards and T+1 values");
  const int T = static_cast<int>(rewards.size());
  std::vector<Tensor2> g(T);
  Tensor2 next = vbar[T];  // G_T
  for (int t = T - 1; t >= 0; --t) {
    if (!rewards[t].same_shape(next)) shape_fail("lambda_returns", rewards[t], next);
    Tensor2 cur = rewards[t];
    for (int i = 0; i < cur.size(); ++i)
      cur.data[i] += gamma * ((1.0 - lambda) * vbar[t + 1].data[i] + lambda * next.data[i]);
    g[t] = cur;
    next = g[t];
  }
  return g;
}

TargetPack make_targets(const WorldModel& m, const SeqBatch& batch, const LossConfig& cfg,
                        const std::vector<int>& roll_starts) {
  const int T = batch.steps();
  if (T < 1) throw std::invalid_argument("make_targets: empty batch");
  if (static_cast<int>(batch.obs.size()) != T + 1)
    throw std::invalid_argument("make_targets: need T+1 observations for T steps");
  if (batch.rew.size() != batch.act.size())
    throw std::invalid_argument("make_targets: reward/action length mismatch");
  for (int s : roll_starts)
    if (s < 0 || s + cfg.rollout_k > T)
      throw std::invalid_argument("make_targets: sequence too short for rollout start");

  const TwoHotCodec codec = m.codec();
  TargetPack tp;
  tp.roll_starts = roll_starts;
  std::vector<Tensor2> vbar(T + 1);
  for (int t = 0; t <= T; ++t) {
    tp.z.push_back(encode(m, batch.obs[t]));
    vbar[t] = codec.decode_logits_rows(predict_value_logits(m, tp.z[t], /*use_target=*/true));
  }
  tp.returns = lambda_returns(batch.rew, vbar, cfg.gamma, cfg.lambda);
  for (int t = 0; t < T; ++t) {
    tp.repr_target.push_back(
        project(m, encode(m, batch.obs[t + 1], /*use_target=*/true), /*use_target=*/true));
    tp.reward_target.push_back(codec.encode_rows(batch.rew[t]));
    tp.value_target.push_back(codec.encode_rows(tp.returns[t]));
    tp.slow_target.push_back(
        codec.softmax_rows(predict_value_logits(m, tp.z[t], /*use_target=*/true)));
    Tensor2 mask(batch.batch(), 1);
    for (int b = 0; b < batch.batch(); ++b) {
      double norm2 = 0.0;
      for (int j = 0; j < batch.act[t].cols; ++j) {
        const double a = batch.act[t].at(b, j);
        norm2 += a * a;
      }
      mask.at(b, 0) = std::sqrt(norm2) < cfg.action_eps ? 1.0 : 0.0;
      tp.mask_count += mask.at(b, 0);
    }
    tp.mask.push_back(std::move(mask));
  }
  return tp;
}

LossTerms compute_losses(Tape& t, const ModelRefs& refs, const SeqBatch& batch,
                         const TargetPack& tp, const LossWeights& w, const LossConfig& cfg,
                         double progress, double alpha) {
  const ModelConfig& c = refs.cfg;
  const int T = batch.steps();
  const int B = batch.batch();
  if (static_cast<int>(tp.z.size()) != T + 1)
    throw std::invalid_argument("compute_losses: target pack does not match batch");
  const TensorRef zero = t.constant(Tensor2(1, 1));
  auto acc_into = [&t](TensorRef& acc, TensorRef term) {
    acc = acc.valid() ? t.add(acc, term) : term;
  };
  auto msq = [&t](TensorRef d) { return t.mean(t.mul(d, d)); };

  // taped online latents, memory features, transitions
  std::vector<TensorRef> z(T), acts(T), h(T);
  std::vector<std::vector<TensorRef>> mem_states;  // pre-step state per t
  std::vector<TensorRef> state;
  if (refs.memory.kind == MemoryKind::Selective) {
    for (size_t l = 0; l < refs.memory.ssm.size(); ++l)
      state.push_back(t.constant(Tensor2(B, refs.memory.dim * refs.memory.state_dim)));
  } else if (refs.memory.kind == MemoryKind::Gru) {
    for (size_t l = 0; l < refs.memory.gru.size(); ++l)
      state.push_back(t.constant(Tensor2(B, refs.memory.dim)));
  }
  std::vector<TransitionRefs> trans(T);
  for (int step = 0; step < T; ++step) {
    z[step] = encode(t, refs, t.constant(batch.obs[step]));
    acts[step] = t.constant(batch.act[step]);
    mem_states.push_back(state);
    MemStepRefsOut mo = mem_step(t, refs.memory, z[step], acts[step], state);
    h[step] = mo.features;
    state = mo.next_state;
    trans[step] = soft_ham_step(t, refs, z[step], acts[step], h[step], alpha);
  }

  LossTerms out{};
  TensorRef repr_acc{}, dyn_acc{}, rew_acc{}, vce_acc{}, vslow_acc{}, pol_acc{};
  for (int step = 0; step < T; ++step) {
    acc_into(dyn_acc, msq(t.sub(trans[step].next, t.constant(tp.z[step + 1]))));
    acc_into(repr_acc,
             msq(t.sub(project(t, refs, trans[step].next), t.constant(tp.repr_target[step]))));
    acc_into(rew_acc, t.softmax_xent_mean(predict_reward_logits(t, refs, trans[step].next),
                                          tp.reward_target[step]));
    TensorRef v_logits = predict_value_logits(t, refs, z[step]);
    acc_into(vce_acc, t.softmax_xent_mean(v_logits, tp.value_target[step]));
    acc_into(vslow_acc, t.softmax_xent_mean(v_logits, tp.slow_target[step]));
    acc_into(pol_acc, msq(t.sub(policy_prior(t, refs, z[step]), acts[step])));
  }
  out.dyn = t.scale(dyn_acc, 1.0 / T);
  out.repr = t.scale(repr_acc, 1.0 / T);
  out.reward = t.scale(rew_acc, 1.0 / T);
  out.value_ce = t.scale(vce_acc, 1.0 / T);
  out.value_slow = t.scale(vslow_acc, 1.0 / T);
  out.policy = t.scale(pol_acc, 1.0 / T);

  // K-step reroll from each start, memory restarted from its snapshot
  if (tp.roll_starts.empty()) {
    out.roll = zero;
  } else {
    TensorRef roll_acc{};
    for (int s : tp.roll_starts) {
      TensorRef zc = z[s];
      std::vector<TensorRef> rstate = mem_states[s];
      for (int k = 0; k < cfg.rollout_k; ++k) {
        TensorRef ak = acts[s + k];
        MemStepRefsOut mo = mem_step(t, refs.memory, zc, ak, rstate);
        rstate = mo.next_state;
        TransitionRefs tr = soft_ham_step(t, refs, zc, ak, mo.features, alpha);
        zc = tr.next;
        acc_into(roll_acc, msq(t.sub(zc, t.constant(tp.z[s + k + 1]))));
      }
    }
    out.roll =
        t.scale(roll_acc, 1.0 / (static_cast<double>(tp.roll_starts.size()) * cfg.rollout_k));
  }

  if (!c.geometry) {
    out.sa = out.energy = out.ham = out.temp = out.decouple = out.c_sparse = zero;
  } else {
    TensorRef ham_acc{}, temp_acc{}, csp_acc{}, en_acc{}, sa_acc{};
    for (int step = 0; step < T; ++step) {
      const TransitionRefs& tr = trans[step];
      TensorRef hq = t.sub(tr.dq_net, tr.dh_dp);
      TensorRef hp = t.add(tr.dp_net, tr.dh_dq);
      acc_into(ham_acc,
               t.scale(t.add(t.sum(t.mul(hq, hq)), t.sum(t.mul(hp, hp))), 1.0 / B));
      acc_into(temp_acc,
               t.scale(t.sub(t.sum(t.mul(tr.dq, tr.dq)),
                             t.scale(t.sum(t.mul(tr.dp, tr.dp)), cfg.rho_temp)),
                       1.0 / B));
      acc_into(csp_acc, t.mean(t.unary(tr.dc, Unary::Abs)));
      if (tp.mask_count > 0.0) {
        TensorRef h_next =
            hamiltonian_energy(t, refs, t.slice_cols(tr.next, 0, c.dim_q + c.dim_p));
        TensorRef dh = t.sub(h_next, tr.energy);
        acc_into(en_acc, t.sum(t.scale_rows(t.mul(dh, dh), tp.mask[step])));
        acc_into(sa_acc, t.add(t.sum(t.scale_rows(t.mul(tr.dq, tr.dq), tp.mask[step])),
                               t.sum(t.scale_rows(t.mul(tr.dp, tr.dp), tp.mask[step]))));
      }
    }
    out.ham = t.scale(ham_acc, 1.0 / T);
    out.temp = t.scale(temp_acc, 1.0 / T);
    out.c_sparse = t.scale(csp_acc, 1.0 / T);
    out.energy = tp.mask_count > 0.0 ? t.scale(en_acc, 1.0 / tp.mask_count) : zero;
    out.sa = tp.mask_count > 0.0 ? t.scale(sa_acc, 1.0 / tp.mask_count) : zero;

    // batch cross-covariance of q and p over all (step, sample) latents
    const int N = B * T;
    if (N < 2) {
      out.decouple = zero;
    } else {
      TensorRef all_z = t.concat_rows(z);
      TensorRef q = t.center_cols(t.slice_cols(all_z, 0, c.dim_q));
      TensorRef p = t.center_cols(t.slice_cols(all_z, c.dim_q, c.dim_q + c.dim_p));
      TensorRef cov = t.scale(t.matmul_tn(q, p), 1.0 / (N - 1));
      out.decouple = t.sum(t.mul(cov, cov));
    }
  }

  // weighted total, same accumulation order as total_loss()
  TensorRef total = t.scale(out.repr, w.repr);
  total = t.add(total, t.scale(out.dyn, w.dyn));
  total = t.add(total,
                t.scale(out.roll, warmup_weight(w.roll, w.warmup_begin, w.warmup_end, progress)));
  total = t.add(total, t.scale(out.reward, w.reward));
  total = t.add(total,
                t.scale(t.add(out.value_ce, t.scale(out.value_slow, w.beta_slow)), w.value));
  total = t.add(total, t.scale(out.policy, w.policy));
  total = t.add(total,
                t.scale(out.sa, warmup_weight(w.sa, w.warmup_begin, w.warmup_end, progress)));
  total = t.add(total, t.scale(out.energy, warmup_weight(w.energy, w.warmup_begin,
                                                         w.warmup_end, progress)));
  total = t.add(total, t.scale(out.ham, w.ham));
  total = t.add(total, t.scale(out.temp, w.temp));
  total = t.add(total, t.scale(out.decouple, w.decouple));
  total = t.add(total, t.scale(out.c_sparse, w.c_sparse));
  out.total = total;
  return out;
}

LossReport loss_report(const Tape& t, const LossTerms& terms, const LossWeights& w) {
  auto v = [&t](TensorRef r) { return t.value(r).at(0, 0); };
  LossReport r;
  r.repr_loss = v(terms.repr);
  r.dyn_loss = v(terms.dyn);
  r.roll_loss = v(terms.roll);
  r.reward_loss = v(terms.reward);
  r.value_ce_loss = v(terms.value_ce);
  r.value_slow_loss = v(terms.value_slow);
  r.value_loss = r.value_ce_loss + w.beta_slow * r.value_slow_loss;
  r.policy_prior_loss = v(terms.policy);
  r.sa_loss = v(terms.sa);
  r.energy_loss = v(terms.energy);
  r.hamiltonian_loss = v(terms.ham);
  r.temp_loss = v(terms.temp);
  r.decouple_loss = v(terms.decouple);
  r.c_sparse_loss = v(terms.c_sparse);
  r.total = v(terms.total);
  return r;
}

}  // namespace gyre
