#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gyre/trainer.hpp"

// Mechanism analyses over trained checkpoints: energy traces along
// environment rollouts, push/energy correlations, energy-layer crossing
// rates, k-step latent rollout error, the error-propagation bound with
// measured constants, and zero-shot OOD evaluation with retention. All
// functions are read-only over the model.

namespace gyre {

// ---- energy traces ------------------------------------------------------

enum class Regime { NoAction, RandomAction, PolicyRollout };
std::string regime_str(Regime r);

struct EnergySeries {
  std::vector<double> h;  // learned energy at each visited observation
  // |H_last - H_first| / (|H_first| + 1e-8); 0 for series shorter than 2
  double drift() const;
};

struct EnergyTraceSet {
  Regime regime = Regime::NoAction;
  std::vector<EnergySeries> episodes;
  std::vector<double> mean_h, std_h;  // per-step band over episodes (common prefix)
  std::vector<double> drifts() const;
  double median_drift() const;
};

// Free-run protocol: kick_reset (velocities ~ U(-kick_scale, kick_scale),
// damping off) for NoAction / RandomAction; plain reset for PolicyRollout,
// which requires a planner config. Records H at each of `steps`
// pre-action observations, so series lengths equal episode steps.
EnergyTraceSet energy_trace(const WorldModel& m, const Env& env, Regime regime,
                            int episodes = 10, int steps = 200, double kick_scale = 5.0,
                            uint64_t seed = 0, double progress = 1.0,
                            const PlannerConfig* pc = nullptr);

// Latent-space trace: iterates the transition from z0 under the given
// actions and records H at every state, initial included (so the series
// has actions.size()+1 entries). Memory starts from its zero state.
EnergySeries energy_trace_latent(const WorldModel& m, const Tensor2& z0,
                                 const std::vector<Tensor2>& actions, double alpha);

// ---- push / crossing ----------------------------------------------------

// One teacher-forced step: push = (dH/dp) . (G a), dh = H(next qp) - H(qp),
// both taken from the same transition output.
struct PushRecord {
  double push = 0.0;
  double dh = 0.0;
};

std::vector<PushRecord> push_records(const WorldModel& m,
                                     const std::vector<ReplayEpisode>& episodes,
                                     double progress = 1.0);

struct PushMetrics {
  double corr_sign = 0.0;  // Pearson corr(sign dh, push); 0 when undefined
  double corr_abs = 0.0;   // Pearson corr(|dh|, |push|); 0 when undefined
  bool sign_defined = false;
  bool abs_defined = false;
  int steps = 0;
};

// Requires at least 100 steps. A zero-variance series (e.g. push == 0
// throughout) flags the correlation undefined instead of propagating NaN.
PushMetrics push_metrics(const std::vector<PushRecord>& records);
PushMetrics push_metrics(const WorldModel& m, const std::vector<ReplayEpisode>& episodes,
                         double progress = 1.0);

struct CrossingCurve {
  std::vector<double> thresholds;
  std::vector<double> rate_high, rate_low;  // P(|dh| > theta) per |push| group
  double lift_auc = 0.5;  // mean over thresholds of (rate_high - rate_low + 1)/2
  double median_abs_push = 0.0;
  int high_count = 0, low_count = 0;
};

// Splits steps at the median |push|; thresholds must be positive and
// strictly ascending; each split needs at least 2 steps.
CrossingCurve crossing_rate_curve(const std::vector<PushRecord>& records,
                                  const std::vector<double>& thresholds);
CrossingCurve crossing_rate_curve(const WorldModel& m, const std::vector<ReplayEpisode>& episodes,
                                  const std::vector<double>& thresholds, double progress = 1.0);

// ---- rollout error ------------------------------------------------------

struct RolloutMse {
  std::vector<int> ks;
  std::vector<double> mse;  // coordinate-summed squared latent error at each k
  int starts = 0;
  int episodes_used = 0;
  int episodes_skipped = 0;  // shorter than the largest k
};

// Teacher-forced: ground-truth latents come from the online encoder; each
// start rolls max(ks) steps from the encoder latent with the memory state
// snapshot at that step, and errors are averaged over all starts.
RolloutMse rollout_mse(const WorldModel& m, const std::vector<ReplayEpisode>& episodes,
                       std::vector<int> ks = {3, 5, 7}, double progress = 1.0);

// ---- error-propagation bound -------------------------------------------

using LatentMap = std::function<Tensor2(const Tensor2&)>;

struct BoundRow {
  int k = 0;
  double measured = 0.0;  // worst-case ||learned_k - true_k|| over starts
  double bound = 0.0;     // eps * sum_{i<k} L^i
  bool satisfied = false;
};

struct BoundReport {
  double eps = 0.0;        // one-step error measured at every applied point
  double L = 0.0;          // max(l_probe, l_segment)
  double l_probe = 0.0;    // median of ||T(z+d)-T(z)||/||d|| over visited points
  double l_segment = 0.0;  // max expansion along actual error segments
  std::vector<BoundRow> rows;
  bool all_satisfied = true;
};

// Verifies e_k <= eps * sum_{i<k} L^i for k = 1..k_max with eps and L
// measured from the two maps themselves. eps is the max one-step error over
// every point either rollout applies the learned map to, and L also covers
// the measured expansion along the learned-vs-true segments, so the bound
// is a theorem given the measurements; a violation means measurement error.
BoundReport bound_check(const LatentMap& true_map, const LatentMap& learned_map,
                        const std::vector<Tensor2>& starts, int k_max,
                        double probe_scale = 1e-3, uint64_t seed = 0);

// Constants of the energy-drift decomposition, measured on teacher-forced
// steps: max residual-delta norm, max control-drive norm, max ||grad H||,
// and a median finite-difference curvature estimate for H.
struct DriftBoundParams {
  double m_delta = 0.0;
  double m_u = 0.0;
  double l_h = 0.0;
  double c_h = 0.0;
  int steps = 0;
};

DriftBoundParams drift_bound_params(const WorldModel& m,
                                    const std::vector<ReplayEpisode>& episodes,
                                    double progress = 1.0, double probe_scale = 1e-3,
                                    uint64_t seed = 0);

// ---- OOD evaluation -----------------------------------------------------

struct OodRow {
  std::string label;
  bool identity = false;
  std::vector<double> seed_return;     // mean eval return per checkpoint
  std::vector<double> seed_retention;  // 100 * OOD / ID per checkpoint
  double mean_return = 0.0;
  double mean_retention = 0.0;
};

struct OodReport {
  std::vector<double> id_return;  // unperturbed baseline per checkpoint
  std::vector<OodRow> rows;
  int episodes = 0;
};

// Zero-shot: each checkpoint is evaluated on the unperturbed environment
// (the ID baseline) and on every condition with the same episode seeds, so
// an identity perturbation retains exactly 100%.
OodReport ood_evaluate(const std::vector<const WorldModel*>& models, const EnvSpec& base,
                       const std::vector<Perturbation>& conditions, const PlannerConfig& pc,
                       int episodes = 3, uint64_t seed = 0);

}  // namespace gyre
