#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gyre/env.hpp"
#include "gyre/planner.hpp"
#include "gyre/replay.hpp"

// Optimization and the online training loop: decoupled-weight-decay adaptive
// moments, global-norm gradient clipping, the single model update (targets ->
// taped objective -> backward -> clip -> step -> EMA), and seeded data
// collection with periodic evaluation.

namespace gyre {

// Standard decoupled-weight-decay Adam. State slots are keyed by parameter
// order, which is fixed by the model's trainable enumeration.
class AdamW {
 public:
  AdamW(double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
        double eps = 1e-8);

  // grads[i] pairs with params[i]; first call sizes the state
  void step(const std::vector<std::pair<std::string, Tensor2*>>& params,
            const std::vector<Tensor2>& grads);
  int64_t steps_taken() const { return t_; }
  double lr() const { return lr_; }

 private:
  double lr_, wd_, b1_, b2_, eps_;
  int64_t t_ = 0;
  std::vector<Tensor2> m_, v_;
};

double global_norm(const std::vector<Tensor2>& grads);
// scales grads in place so the global norm is at most max_norm; returns the
// raw pre-clip norm
double clip_global_norm(std::vector<Tensor2>& grads, double max_norm);

struct TrainerConfig {
  int total_steps = 20000;
  int seed_steps = 1000;  // uniform random actions before planning starts
  int train_every = 2;
  int grad_steps = 2;
  int batch_size = 16;
  int seq_len = 8;
  int buffer_capacity = 50000;
  double lr = 1e-4;
  double weight_decay = 1e-6;
  double grad_clip = 10.0;
  double tau = 0.01;  // EMA targets drift this fraction toward online per update
  int eval_every = 2000;  // env steps between evaluations; 0 disables
  int eval_episodes = 3;
  uint64_t seed = 1;

  void validate() const;
};

struct UpdateOut {
  LossReport report;
  double raw_grad_norm = 0.0;
};

// One gradient update on a sampled batch: plain targets, taped objective,
// backward, clip, optimizer step, EMA target drift. Throws (naming the term)
// if any loss field is non-finite. rng draws the rollout-loss start offsets.
UpdateOut model_update_step(WorldModel& m, AdamW& opt, const SeqBatch& batch,
                            const LossWeights& w, const LossConfig& lc,
                            const TrainerConfig& tc, double progress, Rng& rng);

struct MetricRow {
  int env_step = 0;
  LossReport report;
  double grad_norm = 0.0;
};

struct EvalPoint {
  int env_step = 0;
  double mean_return = 0.0;
};

struct TrainResult {
  std::vector<MetricRow> rows;
  std::vector<EvalPoint> evals;
  int update_calls = 0;
  int episodes = 0;
};

// Runs one episode with the planner in eval mode (no exploration noise) and
// returns the undiscounted return.
double eval_episode(const WorldModel& m, const Env& env, const PlannerConfig& pc,
                    double progress, uint64_t seed);

// Seeded data collection + training: random actions for seed_steps, planned
// actions afterwards, gradient updates every train_every steps, periodic
// evaluation. checkpoint_hook (optional) fires after each evaluation and at
// the end.
TrainResult train_run(WorldModel& m, const Env& env, const TrainerConfig& tc,
                      const LossWeights& w, const LossConfig& lc, const PlannerConfig& pc,
                      const std::function<void(int, const WorldModel&)>& checkpoint_hook = {});

}  // namespace gyre
