#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gyre/codec.hpp"
#include "gyre/memory.hpp"
#include "gyre/nn.hpp"

// The world model: an encoder that factors observations into [q, p, c], a
// learned scalar energy over (q,p) whose symplectic field biases the
// transition, a residual core, an action-conditioned control drive on p, a
// context updater for c, and twohot reward/value heads plus a tanh action
// prior. Every op has a plain form and a taped twin that agree bit-for-bit.

namespace gyre {

struct AlphaSchedule {
  double alpha_start = 0.1;
  double alpha_end = 0.5;
  double ramp_begin = 0.3;  // training-progress fraction where the ramp starts
  double ramp_end = 1.0;
};

// Piecewise-linear blend weight between the residual core and the symplectic
// field, clamped to [alpha_start, alpha_end].
double alpha_at(const AlphaSchedule& s, double progress);

struct ModelConfig {
  int obs_dim = 0;
  int act_dim = 0;
  int dim_q = 4;
  int dim_p = 4;
  int dim_c = 8;
  int enc_width = 64;
  int enc_depth = 2;   // hidden layers in the encoder
  int head_width = 48;
  int head_depth = 1;  // hidden layers in every other head
  int proj_dim = 16;
  int bin_count = 41;
  double bin_lo = -10.0;
  double bin_hi = 10.0;
  // geometry=false is the single-block ablation: the core predicts a full
  // latent delta and the energy head, control map and context updater are
  // dropped from the parameter set.
  bool geometry = true;
  MemoryKind memory_kind = MemoryKind::Selective;
  GateKind memory_gate = GateKind::Sigmoid;
  bool memory_shared_a = false;
  int mem_dim = 32;
  int mem_state_dim = 32;
  int mem_layers = 2;
  AlphaSchedule alpha;

  int dim_z() const { return dim_q + dim_p + dim_c; }
  int core_in() const { return dim_z() + act_dim + mem_dim; }
  void validate() const;
};

struct WorldModel {
  ModelConfig cfg;
  Mlp encoder, projector, core, ham, control, context, reward, value, policy;
  Mlp encoder_t, projector_t, value_t;  // EMA targets
  MemoryParams memory;

  TwoHotCodec codec() const { return TwoHotCodec(cfg.bin_count, cfg.bin_lo, cfg.bin_hi); }
};

WorldModel model_make(const ModelConfig& cfg, Rng& rng);

// Online trainable tensors in a stable named order (the optimizer state and
// checkpoint layout both key off this enumeration).
std::vector<std::pair<std::string, Tensor2*>> model_trainables(WorldModel& m);
// Same enumeration plus the EMA target heads (for checkpoints).
std::vector<std::pair<std::string, Tensor2*>> model_all_tensors(WorldModel& m);
// target <- (1-tau)*target + tau*online for encoder/projector/value targets.
void ema_update(WorldModel& m, double tau);

// latent layout [q | p | c]
inline Tensor2 latent_q(const ModelConfig& c, const Tensor2& z) {
  return slice_cols(z, 0, c.dim_q);
}
inline Tensor2 latent_p(const ModelConfig& c, const Tensor2& z) {
  return slice_cols(z, c.dim_q, c.dim_q + c.dim_p);
}
inline Tensor2 latent_c(const ModelConfig& c, const Tensor2& z) {
  return slice_cols(z, c.dim_q + c.dim_p, c.dim_z());
}
inline Tensor2 latent_qp(const ModelConfig& c, const Tensor2& z) {
  return slice_cols(z, 0, c.dim_q + c.dim_p);
}

Tensor2 encode(const WorldModel& m, const Tensor2& obs, bool use_target = false);
Tensor2 project(const WorldModel& m, const Tensor2& z, bool use_target = false);

// Scalar energy over the (q,p) pair; qp is (batch, dim_q+dim_p).
Tensor2 hamiltonian_energy(const WorldModel& m, const Tensor2& qp);
// Symplectic field (dH/dp, -dH/dq); orthogonal to grad H by construction.
void hamiltonian_vector_field(const WorldModel& m, const Tensor2& qp, Tensor2* dh_dp,
                              Tensor2* neg_dh_dq);

struct TransitionOutput {
  Tensor2 next;              // (batch, dim_z)
  Tensor2 dq_net, dp_net;    // residual core deltas
  Tensor2 dq, dp, dc;        // applied deltas
  Tensor2 energy;            // (batch,1) H at the input (q,p)
  Tensor2 dh_dq, dh_dp;      // energy gradients at the input (q,p)
  Tensor2 drive;             // (batch, dim_p) control drive G_t a_t
};

// next.q = q + (1-alpha)*dq_net + alpha*dH/dp
// next.p = p + (1-alpha)*dp_net - alpha*dH/dq + G(z,a,h)*a
// next.c = c + f_c(z,a,h)
TransitionOutput soft_ham_step(const WorldModel& m, const Tensor2& z, const Tensor2& a,
                               const Tensor2& h, double alpha);

Tensor2 predict_reward_logits(const WorldModel& m, const Tensor2& z_next);
Tensor2 predict_value_logits(const WorldModel& m, const Tensor2& z, bool use_target = false);
Tensor2 policy_prior(const WorldModel& m, const Tensor2& z);  // tanh-squashed

// ---- taped twins (online parameters only; targets are evaluated plain) ----

struct ModelRefs {
  ModelConfig cfg;
  MlpRefs encoder, projector, core, ham, control, context, reward, value, policy;
  MemoryRefs memory;
};

ModelRefs model_bind(Tape& t, const WorldModel& m,
                     std::vector<std::pair<std::string, TensorRef>>* bound);

TensorRef encode(Tape& t, const ModelRefs& m, TensorRef obs);
TensorRef project(Tape& t, const ModelRefs& m, TensorRef z);
TensorRef hamiltonian_energy(Tape& t, const ModelRefs& m, TensorRef qp);

struct TransitionRefs {
  TensorRef next, dq_net, dp_net, dq, dp, dc, energy, dh_dq, dh_dp, drive;
};
TransitionRefs soft_ham_step(Tape& t, const ModelRefs& m, TensorRef z, TensorRef a,
                             TensorRef h, double alpha);

TensorRef predict_reward_logits(Tape& t, const ModelRefs& m, TensorRef z_next);
TensorRef predict_value_logits(Tape& t, const ModelRefs& m, TensorRef z);
TensorRef policy_prior(Tape& t, const ModelRefs& m, TensorRef z);

}  // namespace gyre
