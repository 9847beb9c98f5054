#pragma once

#include <cstdint>
#include <string>
#include <vector>

// Built-in toy continuous-control environments with analytic dynamics and
// energies, plus perturbation wrappers for zero-shot robustness evaluation.
// Integration is semi-implicit (symplectic) Euler with inner substeps so the
// zero-damping regime conserves the analytic energy tightly.

namespace gyre {

enum class EnvName { PendulumSwingup, MassSpring, PointReacher };

std::string env_name_str(EnvName n);
EnvName env_name_from(const std::string& s);

struct EnvSpec {
  EnvName name = EnvName::PendulumSwingup;
  int obs_dim = 3;
  int act_dim = 1;
  double dt = 0.02;
  int episode_len = 200;
  int substeps = 16;  // inner integrator substeps per control step

  double mass = 1.0;
  double length = 1.0;
  double gravity = 9.81;
  double damping = 0.1;
  double spring_k = 1.0;       // mass_spring only
  double actuator_gain = 1.0;  // force/torque per unit action
  double setpoint = 0.5;       // mass_spring tracking target
  double goal_range = 0.8;     // point_reacher goal ~ U(-r, r)^2

  void validate() const;  // throws on invariant violations
};

EnvSpec make_env_spec(EnvName name);
EnvSpec make_env_spec(const std::string& name);

struct EnvState {
  std::vector<double> pos;      // generalized positions (angle / x / xy)
  std::vector<double> vel;      // matching velocities
  std::vector<double> aux;      // reacher goal; empty otherwise
  std::vector<double> pending;  // queued actions under action_delay, oldest first
  int step = 0;
  bool zero_damping = false;  // set by kick_reset for the whole episode
};

enum class PerturbKind {
  MassScale,
  DampingScale,
  ActuatorScale,
  FrictionScale,  // no contact model here: aliased to damping, flagged in reports
  ActionDelay,
  ObsMask,
};

std::string perturb_kind_str(PerturbKind k);
PerturbKind perturb_kind_from(const std::string& s);

struct Perturbation {
  PerturbKind kind = PerturbKind::MassScale;
  double magnitude = 1.0;      // scale factor, or delay steps for ActionDelay
  double mask_fraction = 0.0;  // ObsMask only
  uint64_t seed = 0;           // ObsMask per-step reseeding stream

  // identity = no behavioral change (scale 1, delay 0, mask 0)
  bool is_identity() const;
  std::string label() const;
};

struct StepOut {
  EnvState state;
  std::vector<double> obs;
  double reward = 0.0;
  bool done = false;
};

class Env {
 public:
  explicit Env(const EnvSpec& spec);

  const EnvSpec& spec() const { return spec_; }
  int action_delay() const { return action_delay_; }
  double mask_fraction() const { return mask_fraction_; }

  std::pair<EnvState, std::vector<double>> reset(uint64_t seed) const;
  // Velocities drawn U(-kick_scale, +kick_scale); damping forced to 0 for the
  // episode. kick_scale = 0 reduces to reset with zero velocity.
  std::pair<EnvState, std::vector<double>> kick_reset(uint64_t seed, double kick_scale) const;

  // Actions are clamped to [-1,1] per dimension; non-finite entries throw.
  StepOut step(const EnvState& s, const std::vector<double>& action) const;

  double energy(const EnvState& s) const;  // analytic mechanical energy
  std::vector<double> observe(const EnvState& s) const;

 private:
  std::vector<double> raw_observe(const EnvState& s) const;
  void integrate(EnvState& s, const std::vector<double>& act) const;
  double reward_of(const EnvState& next, const std::vector<double>& act) const;

  EnvSpec spec_;
  int action_delay_ = 0;
  double mask_fraction_ = 0.0;
  uint64_t mask_seed_ = 0;

  friend Env apply_perturbation(const Env& e, const Perturbation& p);
};

// Returns a new handle with the perturbation folded in; scales multiply the
// named physical parameter, delay/mask configure the wrapper.
Env apply_perturbation(const Env& e, const Perturbation& p);

// The mask index set at a given step: exactly round(fraction*obs_dim) distinct
// indices, reseeded per step. Exposed for the harness integrity checks.
std::vector<int> obs_mask_indices(uint64_t seed, int step, int obs_dim, double fraction);

}  // namespace gyre
