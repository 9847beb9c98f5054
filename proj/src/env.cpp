#include "gyre/env.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "gyre/rng.hpp"

namespace gyre {

std::string env_name_str(EnvName n) {
  switch (n) {
    case EnvName::PendulumSwingup: return "pendulum_swingup";
    case EnvName::MassSpring: return "mass_spring";
    case EnvName::PointReacher: return "point_reacher";
  }
  return "?";
}

EnvName env_name_from(const std::string& s) {
  if (s == "pendulum_swingup") return EnvName::PendulumSwingup;
  if (s == "mass_spring") return EnvName::MassSpring;
  if (s == "point_reacher") return EnvName::PointReacher;
  throw std::invalid_argument("unknown environment: " + s);
}

void EnvSpec::validate() const {
  if (dt <= 0) throw std::invalid_argument("EnvSpec: dt must be > 0");
  if (episode_len <= 0) throw std::invalid_argument("EnvSpec: episode_len must be > 0");
  if (substeps <= 0) throw std::invalid_argument("EnvSpec: substeps must be > 0");
  if (mass <= 0 || length <= 0 || gravity <= 0 || spring_k <= 0 || actuator_gain <= 0)
    throw std::invalid_argument("EnvSpec: physical params must be > 0");
  if (damping < 0) throw std::invalid_argument("EnvSpec: damping must be >= 0");
}

EnvSpec make_env_spec(EnvName name) {
  EnvSpec s;
  s.name = name;
  switch (name) {
    case EnvName::PendulumSwingup:
      s.obs_dim = 3;  // cos(theta), sin(theta), theta_dot
      s.act_dim = 1;
      s.actuator_gain = 2.0;  // max torque; gravity torque peaks at m*g*l, so swingup is required
      s.damping = 0.1;
      break;
    case EnvName::MassSpring:
      s.obs_dim = 2;  // x, v
      s.act_dim = 1;
      s.actuator_gain = 1.0;
      s.damping = 0.1;
      break;
    case EnvName::PointReacher:
      s.obs_dim = 6;  // pos, vel, goal - pos
      s.act_dim = 2;
      s.actuator_gain = 1.0;
      s.damping = 0.5;
      break;
  }
  s.validate();
  return s;
}

EnvSpec make_env_spec(const std::string& name) { return make_env_spec(env_name_from(name)); }

std::string perturb_kind_str(PerturbKind k) {
  switch (k) {
    case PerturbKind::MassScale: return "mass_scale";
    case PerturbKind::DampingScale: return "damping_scale";
    case PerturbKind::ActuatorScale: return "actuator_scale";
    case PerturbKind::FrictionScale: return "friction_scale";
    case PerturbKind::ActionDelay: return "action_delay";
    case PerturbKind::ObsMask: return "obs_mask";
  }
  return "?";
}

PerturbKind perturb_kind_from(const std::string& s) {
  if (s == "mass_scale") return PerturbKind::MassScale;
  if (s == "damping_scale") return PerturbKind::DampingScale;
  if (s == "actuator_scale") return PerturbKind::ActuatorScale;
  if (s == "friction_scale") return PerturbKind::FrictionScale;
  if (s == "action_delay") return PerturbKind::ActionDelay;
  if (s == "obs_mask") return PerturbKind::ObsMask;
  throw std::invalid_argument("unknown perturbation kind: " + s);
}

bool Perturbation::is_identity() const {
  switch (kind) {
    case PerturbKind::ActionDelay: return magnitude == 0.0;
    case PerturbKind::ObsMask: return mask_fraction == 0.0;
    default: return magnitude == 1.0;
  }
}

std::string Perturbation::label() const {
  std::ostringstream os;
  os << perturb_kind_str(kind) << "=";
  if (kind == PerturbKind::ObsMask)
    os << mask_fraction;
  else
    os << magnitude;
  return os.str();
}

Env::Env(const EnvSpec& spec) : spec_(spec) { spec_.validate(); }

std::pair<EnvState, std::vector<double>> Env::reset(uint64_t seed) const {
  Rng rng(derive_seed(seed, "env_reset"));
  EnvState s;
  switch (spec_.name) {
    case EnvName::PendulumSwingup:
      // angle measured from upright; start hanging near the bottom at rest
      s.pos = {M_PI + rng.uniform(-0.1, 0.1)};
      s.vel = {0.0};
      break;
    case EnvName::MassSpring:
      s.pos = {rng.uniform(-1.0, 1.0)};
      s.vel = {0.0};
      break;
    case EnvName::PointReacher:
      s.pos = {rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2)};
      s.vel = {0.0, 0.0};
      s.aux = {rng.uniform(-spec_.goal_range, spec_.goal_range),
               rng.uniform(-spec_.goal_range, spec_.goal_range)};
      break;
  }
  s.pending.assign(static_cast<size_t>(action_delay_) * spec_.act_dim, 0.0);
  return {s, observe(s)};
}

std::pair<EnvState, std::vector<double>> Env::kick_reset(uint64_t seed, double kick_scale) const {
  if (kick_scale < 0) throw std::invalid_argument("kick_reset: kick_scale must be >= 0");
  auto [s, obs] = reset(seed);
  Rng rng(derive_seed(seed, "env_kick"));
  for (double& v : s.vel) v = kick_scale == 0.0 ? 0.0 : rng.uniform(-kick_scale, kick_scale);
  s.zero_damping = true;
  return {s, observe(s)};
}

std::vector<double> Env::raw_observe(const EnvState& s) const {
  switch (spec_.name) {
    case EnvName::PendulumSwingup:
      return {std::cos(s.pos[0]), std::sin(s.pos[0]), s.vel[0]};
    case EnvName::MassSpring:
      return {s.pos[0], s.vel[0]};
    case EnvName::PointReacher:
      return {s.pos[0], s.pos[1], s.vel[0], s.vel[1], s.aux[0] - s.pos[0], s.aux[1] - s.pos[1]};
  }
  throw std::logic_error("raw_observe: bad env");
}

std::vector<int> obs_mask_indices(uint64_t seed, int step, int obs_dim, double fraction) {
  const int count = static_cast<int>(std::llround(fraction * obs_dim));
  std::vector<int> idx(obs_dim);
  for (int i = 0; i < obs_dim; ++i) idx[i] = i;
  if (count <= 0) return {};
  Rng rng(derive_seed(seed, "obs_mask", static_cast<uint64_t>(step)));
  // partial Fisher-Yates: the first `count` entries are the masked set
  for (int i = 0; i < count; ++i) {
    const int j = rng.uniform_int(i, obs_dim - 1);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(count);
  return idx;
}

std::vector<double> Env::observe(const EnvState& s) const {
  std::vector<double> obs = raw_observe(s);
  if (mask_fraction_ > 0.0) {
    for (int i : obs_mask_indices(mask_seed_, s.step, spec_.obs_dim, mask_fraction_)) obs[i] = 0.0;
  }
  return obs;
}

void Env::integrate(EnvState& s, const std::vector<double>& act) const {
  const double damping = s.zero_damping ? 0.0 : spec_.damping;
  const double h = spec_.dt / spec_.substeps;
  switch (spec_.name) {
    case EnvName::PendulumSwingup: {
      const double ml2 = spec_.mass * spec_.length * spec_.length;
      const double torque = spec_.actuator_gain * act[0];
      for (int k = 0; k < spec_.substeps; ++k) {
        const double acc = (spec_.gravity / spec_.length) * std::sin(s.pos[0]) +
                           (torque - damping * s.vel[0]) / ml2;
        s.vel[0] += h * acc;
        s.pos[0] += h * s.vel[0];
      }
      // keep the angle in (-pi, pi]; observations and energy are unaffected
      s.pos[0] = std::remainder(s.pos[0], 2.0 * M_PI);
      break;
    }
    case EnvName::MassSpring: {
      const double force = spec_.actuator_gain * act[0];
      for (int k = 0; k < spec_.substeps; ++k) {
        const double acc = (-spec_.spring_k * s.pos[0] - damping * s.vel[0] + force) / spec_.mass;
        s.vel[0] += h * acc;
        s.pos[0] += h * s.vel[0];
      }
      break;
    }
    case EnvName::PointReacher: {
      for (int k = 0; k < spec_.substeps; ++k) {
        for (int d = 0; d < 2; ++d) {
          const double acc =
              (spec_.actuator_gain * act[d] - damping * s.vel[d]) / spec_.mass;
          s.vel[d] += h * acc;
          s.pos[d] += h * s.vel[d];
        }
      }
      break;
    }
  }
}

double Env::reward_of(const EnvState& next, const std::vector<double>& act) const {
  switch (spec_.name) {
    case EnvName::PendulumSwingup: {
      // (1+cos(theta))/2 peaks at 1 upright, 0 hanging; small action penalty.
      // Per-step bound: [-0.001 * act_dim, 1].
      return 0.5 * (1.0 + std::cos(next.pos[0])) - 0.001 * act[0] * act[0];
    }
    case EnvName::MassSpring:
      // exp(-|x - setpoint|), bound (0, 1]
      return std::exp(-std::fabs(next.pos[0] - spec_.setpoint));
    case EnvName::PointReacher: {
      const double dx = next.pos[0] - next.aux[0];
      const double dy = next.pos[1] - next.aux[1];
      return std::exp(-std::sqrt(dx * dx + dy * dy));  // bound (0, 1]
    }
  }
  throw std::logic_error("reward_of: bad env");
}

StepOut Env::step(const EnvState& s, const std::vector<double>& action) const {
  if (static_cast<int>(action.size()) != spec_.act_dim)
    throw std::invalid_argument("env step: action dim mismatch");
  for (double a : action)
    if (!std::isfinite(a)) throw std::invalid_argument("env step: non-finite action");
  if (s.step >= spec_.episode_len) throw std::invalid_argument("env step: episode already done");

  std::vector<double> issued(action);
  for (double& a : issued) a = std::clamp(a, -1.0, 1.0);

  StepOut out;
  out.state = s;
  // under action_delay the applied action is the one issued d steps ago
  std::vector<double> applied = issued;
  if (action_delay_ > 0) {
    applied.assign(out.state.pending.begin(), out.state.pending.begin() + spec_.act_dim);
    out.state.pending.erase(out.state.pending.begin(),
                            out.state.pending.begin() + spec_.act_dim);
    out.state.pending.insert(out.state.pending.end(), issued.begin(), issued.end());
  }

  integrate(out.state, applied);
  out.state.step = s.step + 1;
  out.reward = reward_of(out.state, applied);
  out.done = out.state.step >= spec_.episode_len;
  out.obs = observe(out.state);
  return out;
}

double Env::energy(const EnvState& s) const {
  switch (spec_.name) {
    case EnvName::PendulumSwingup: {
      const double ml2 = spec_.mass * spec_.length * spec_.length;
      // potential referenced to the hanging rest state (angle from upright)
      return 0.5 * ml2 * s.vel[0] * s.vel[0] +
             spec_.mass * spec_.gravity * spec_.length * (1.0 + std::cos(s.pos[0]));
    }
    case EnvName::MassSpring:
      return 0.5 * spec_.mass * s.vel[0] * s.vel[0] +
             0.5 * spec_.spring_k * s.pos[0] * s.pos[0];
    case EnvName::PointReacher:
      return 0.5 * spec_.mass * (s.vel[0] * s.vel[0] + s.vel[1] * s.vel[1]);
  }
  throw std::logic_error("energy: bad env");
}

Env apply_perturbation(const Env& e, const Perturbation& p) {
  Env out = e;
  switch (p.kind) {
    case PerturbKind::MassScale:
      if (p.magnitude <= 0) throw std::invalid_argument("mass_scale must be > 0");
      out.spec_.mass *= p.magnitude;
      break;
    case PerturbKind::DampingScale:
    case PerturbKind::FrictionScale:
      // no contact model: friction aliases to damping (documented)
      if (p.magnitude < 0) throw std::invalid_argument("damping scale must be >= 0");
      out.spec_.damping *= p.magnitude;
      break;
    case PerturbKind::ActuatorScale:
      if (p.magnitude <= 0) throw std::invalid_argument("actuator_scale must be > 0");
      out.spec_.actuator_gain *= p.magnitude;
      break;
    case PerturbKind::ActionDelay: {
      const double d = p.magnitude;
      if (d < 0 || d != std::floor(d)) throw std::invalid_argument("action_delay must be int >= 0");
      out.action_delay_ = static_cast<int>(d);
      break;
    }
    case PerturbKind::ObsMask:
      if (p.mask_fraction < 0 || p.mask_fraction > 1)
        throw std::invalid_argument("mask_fraction must be in [0,1]");
      out.mask_fraction_ = p.mask_fraction;
      out.mask_seed_ = p.seed;
      break;
  }
  return out;
}

}  // namespace gyre
