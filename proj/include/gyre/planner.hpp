#pragma once

#include <memory>
#include <vector>

#include "gyre/model.hpp"

// Horizon-H action search by the cross-entropy method over the learned latent
// dynamics. Candidates are whole action sequences; each iteration scores
// fresh Gaussian samples, noisy closed-loop prior rollouts, and the previous
// mean, then refits mean/std to the softmax-weighted elites.

namespace gyre {

struct PlannerConfig {
  int horizon = 6;
  int iterations = 6;
  int candidates = 128;  // Gaussian samples per iteration
  int elites = 16;
  double temperature = 0.5;  // elite score softmax
  double init_std = 0.4;
  double min_std = 0.05;
  int policy_candidates = 32;  // noisy prior rollouts injected per iteration
  double explore_std = 0.3;    // training-only noise added after planning
  double gamma = 0.99;
  bool warm_start = true;  // initialize the mean from a deterministic prior rollout

  void validate() const;
};

// What one planning call returns: the executed action is the first step of
// the final mean sequence.
struct PlanResult {
  Tensor2 action;                        // (1, act_dim)
  std::vector<Tensor2> mean;             // horizon of (1, act_dim)
  std::vector<Tensor2> stddev;           // horizon of (1, act_dim), floored
  std::vector<double> elite_mean_score;  // per iteration
  std::vector<double> best_seen;         // running max of scored candidates
};

// Batched rollout state: z rows are independent candidate trajectories, mem
// carries whatever recurrent state the dynamics threads through.
struct RolloutState {
  Tensor2 z;
  std::vector<Tensor2> mem;
};

// The planner's view of a world model. Stubs implement analytic dynamics in
// tests; ModelDynamics adapts the learned model.
struct Dynamics {
  virtual ~Dynamics() = default;
  virtual int act_dim() const = 0;
  // batch copies of the planning root state
  virtual RolloutState start(int copies) const = 0;
  // advance every row by its action; returns decoded rewards (batch, 1)
  virtual Tensor2 step(RolloutState& s, const Tensor2& actions) const = 0;
  // terminal estimate (batch, 1)
  virtual Tensor2 value(const RolloutState& s) const = 0;
  // deterministic warm-start action (batch, act_dim)
  virtual Tensor2 prior(const RolloutState& s) const = 0;
};

// Learned-model adapter: plans from latent z_root with recurrent snapshot
// mem_root; every imagined step recomputes memory features and applies the
// soft-Hamiltonian transition at blend alpha.
class ModelDynamics : public Dynamics {
 public:
  ModelDynamics(const WorldModel& m, Tensor2 z_root, MemoryState mem_root, double alpha);
  int act_dim() const override { return m_.cfg.act_dim; }
  RolloutState start(int copies) const override;
  Tensor2 step(RolloutState& s, const Tensor2& actions) const override;
  Tensor2 value(const RolloutState& s) const override;
  Tensor2 prior(const RolloutState& s) const override;

 private:
  const WorldModel& m_;
  Tensor2 z_root_;  // (1, dim_z)
  MemoryState mem_root_;
  double alpha_;
};

struct ImaginedRollout {
  std::vector<Tensor2> latents;  // post-step states, horizon entries
  std::vector<Tensor2> rewards;  // horizon of (batch, 1)
  Tensor2 terminal_value;        // (batch, 1)
  Tensor2 score;                 // (batch, 1): discounted rewards + terminal
};

// Open-loop rollout of an action sequence; empty sequence scores the root
// state by its value alone. Throws if a step produces a non-finite latent,
// naming the step.
ImaginedRollout imagine_rollout(const Dynamics& dyn, const std::vector<Tensor2>& actions,
                                double gamma);

// softmax(scores / temperature), max-shifted; uniform for constant scores
std::vector<double> softmax_weights(const std::vector<double>& scores, double temperature);

PlanResult cem_plan(const Dynamics& dyn, const PlannerConfig& cfg, uint64_t seed);

enum class ActMode { Train, Eval };

// Plan, then either return the mean action (eval) or add exploration noise
// and clamp (train).
Tensor2 planner_act(const Dynamics& dyn, const PlannerConfig& cfg, ActMode mode,
                    uint64_t seed);

}  // namespace gyre
