#pragma once

#include <limits>
#include <string>
#include <vector>

#include "gyre/model.hpp"

// The training objective: latent-alignment terms (repr/dyn/roll), twohot
// reward and value regression with an EMA slow-value anchor, behavior-cloned
// action prior, and the geometric regularizers over the transition outputs.
// Targets are computed in a plain pass and enter the tape as constants, so
// they carry exactly zero gradient and the whole objective is checkable
// against finite differences with the targets held fixed.

namespace gyre {

struct LossWeights {
  double repr = 1.0;
  double dyn = 1.0;
  double roll = 0.5;
  double reward = 1.0;
  double value = 0.5;
  double policy = 0.1;
  double sa = 0.05;
  double energy = 0.01;
  double ham = 0.05;
  double temp = 0.01;
  double decouple = 0.01;
  double c_sparse = 0.001;
  double beta_slow = 1.0;
  double warmup_begin = 0.3;  // roll, sa and energy ramp in over this window
  double warmup_end = 0.6;
};

// base * clamp((progress - begin)/(end - begin), 0, 1)
double warmup_weight(double base, double begin, double end, double progress);

struct LossConfig {
  double action_eps = 0.05;  // per-step action L2 below which a step counts as passive
  double rho_temp = 0.5;
  int rollout_k = 5;
  double gamma = 0.99;
  double lambda = 0.95;
};

struct LossReport {
  static constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
  double repr_loss = kMissing;
  double dyn_loss = kMissing;
  double roll_loss = kMissing;
  double reward_loss = kMissing;
  double value_loss = kMissing;  // value_ce + beta_slow * value_slow
  double value_ce_loss = kMissing;
  double value_slow_loss = kMissing;
  double policy_prior_loss = kMissing;
  double sa_loss = kMissing;
  double energy_loss = kMissing;
  double hamiltonian_loss = kMissing;
  double temp_loss = kMissing;
  double decouple_loss = kMissing;
  double c_sparse_loss = kMissing;
  double total = kMissing;
};

// Weighted sum over the optimized terms; throws if any required part is
// missing (NaN). Reads the value subterms, not the derived value_loss field.
double total_loss(const LossReport& parts, const LossWeights& w, double progress);

// Time-major training sequences: T transitions need T+1 observations.
struct SeqBatch {
  std::vector<Tensor2> obs;  // T+1 of (B, obs_dim)
  std::vector<Tensor2> act;  // T of (B, act_dim)
  std::vector<Tensor2> rew;  // T of (B, 1)

  int steps() const { return static_cast<int>(act.size()); }
  int batch() const { return act.empty() ? 0 : act[0].rows; }
};

// G_t = r_t + gamma * ((1-lambda) * vbar_{t+1} + lambda * G_{t+1}), seeded
// with G_T = vbar_T. rewards has T entries, vbar has T+1.
std::vector<Tensor2> lambda_returns(const std::vector<Tensor2>& rewards,
                                    const std::vector<Tensor2>& vbar, double gamma,
                                    double lambda);

// Everything the objective treats as gradient-stopped, precomputed plain.
struct TargetPack {
  std::vector<Tensor2> z;              // T+1 online encoder latents
  std::vector<Tensor2> repr_target;    // T of (B, proj_dim), EMA encoder+projector at t+1
  std::vector<Tensor2> reward_target;  // T of (B, bins), twohot(r_t)
  std::vector<Tensor2> value_target;   // T of (B, bins), twohot(lambda-return)
  std::vector<Tensor2> slow_target;    // T of (B, bins), EMA value distribution at z_t
  std::vector<Tensor2> returns;        // T of (B, 1) raw lambda-returns
  std::vector<Tensor2> mask;           // T of (B, 1) small-action indicator
  double mask_count = 0.0;             // total passive steps over (T, B)
  std::vector<int> roll_starts;        // rollout start offsets, each start+K <= T
};

TargetPack make_targets(const WorldModel& m, const SeqBatch& batch, const LossConfig& cfg,
                        const std::vector<int>& roll_starts);

// Taped objective over the online parameters in refs; targets enter as
// constants. Reductions: per-coordinate means for repr/dyn/roll/policy,
// per-sample coordinate sums averaged over (step, batch) for the geometric
// terms, batch-mean cross-entropies for the twohot heads.
struct LossTerms {
  TensorRef repr, dyn, roll, reward, value_ce, value_slow, policy;
  TensorRef sa, energy, ham, temp, decouple, c_sparse;
  TensorRef total;
};

LossTerms compute_losses(Tape& t, const ModelRefs& refs, const SeqBatch& batch,
                         const TargetPack& targets, const LossWeights& w,
                         const LossConfig& cfg, double progress, double alpha);

// Reads the taped term values into the logger layout (total included).
LossReport loss_report(const Tape& t, const LossTerms& terms, const LossWeights& w);

}  // namespace gyre
