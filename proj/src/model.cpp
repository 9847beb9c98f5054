#include "gyre/model.hpp"

#include <cmath>
#include <stdexcept>

namespace gyre {

double alpha_at(const AlphaSchedule& s, double progress) {
  if (!(s.alpha_start >= 0.0 && s.alpha_start <= s.alpha_end && s.alpha_end <= 1.0))
    throw std::invalid_argument("alpha schedule: need 0 <= start <= end <= 1");
  if (!(s.ramp_begin < s.ramp_end))
    throw std::invalid_argument("alpha schedule: ramp_begin must precede ramp_end");
  const double f = (progress - s.ramp_begin) / (s.ramp_end - s.ramp_begin);
  const double clamped = f < 0.0 ? 0.0 : (f > 1.0 ? 1.0 : f);
  return s.alpha_start + clamped * (s.alpha_end - s.alpha_start);
}

void ModelConfig::validate() const {
  if (obs_dim <= 0 || act_dim <= 0) throw std::invalid_argument("model: obs/act dims required");
  if (dim_q <= 0 || dim_p <= 0 || dim_c <= 0) throw std::invalid_argument("model: latent dims");
  if (dim_q != dim_p) throw std::invalid_argument("model: dim_q must equal dim_p");
  if (enc_width <= 0 || enc_depth <= 0 || head_width <= 0 || head_depth <= 0)
    throw std::invalid_argument("model: widths/depths must be positive");
  if (proj_dim <= 0) throw std::invalid_argument("model: proj_dim");
  if (mem_dim <= 0 || mem_state_dim <= 0 || mem_layers <= 0)
    throw std::invalid_argument("model: memory dims");
  TwoHotCodec(bin_count, bin_lo, bin_hi);  // validates the bin layout
}

namespace {

std::vector<int> stack_dims(int in, int width, int depth, int out) {
  std::vector<int> d{in};
  for (int i = 0; i < depth; ++i) d.push_back(width);
  d.push_back(out);
  return d;
}

void check_finite(const Tensor2& x, const char* head) {
  if (!x.all_finite())
    throw std::runtime_error(std::string(head) + " produced a non-finite output");
}

}  // namespace

WorldModel model_make(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  WorldModel m;
  m.cfg = cfg;
  const int dz = cfg.dim_z();
  m.encoder = mlp_make(stack_dims(cfg.obs_dim, cfg.enc_width, cfg.enc_depth, dz),
                       Act::SiLU, Act::Identity, rng);
  m.projector = mlp_make(stack_dims(dz, cfg.head_width, cfg.head_depth, cfg.proj_dim),
                         Act::SiLU, Act::Identity, rng);
  const int core_out = cfg.geometry ? cfg.dim_q + cfg.dim_p : dz;
  m.core = mlp_make(stack_dims(cfg.core_in(), cfg.head_width, cfg.head_depth, core_out),
                    Act::SiLU, Act::Identity, rng);
  if (cfg.geometry) {
    m.ham = mlp_make(stack_dims(cfg.dim_q + cfg.dim_p, cfg.head_width, cfg.head_depth, 1),
                     Act::SiLU, Act::Identity, rng);
    m.control = mlp_make(
        stack_dims(cfg.core_in(), cfg.head_width, cfg.head_depth, cfg.dim_p * cfg.act_dim),
        Act::SiLU, Act::Identity, rng);
    m.context = mlp_make(stack_dims(cfg.core_in(), cfg.head_width, cfg.head_depth, cfg.dim_c),
                         Act::SiLU, Act::Identity, rng);
  }
  m.reward = mlp_make(stack_dims(dz, cfg.head_width, cfg.head_depth, cfg.bin_count),
                      Act::SiLU, Act::Identity, rng, /*zero_output=*/true);
  m.value = mlp_make(stack_dims(dz, cfg.head_width, cfg.head_depth, cfg.bin_count),
                     Act::SiLU, Act::Identity, rng, /*zero_output=*/true);
  m.policy = mlp_make(stack_dims(dz, cfg.head_width, cfg.head_depth, cfg.act_dim),
                      Act::SiLU, Act::Tanh, rng, /*zero_output=*/true);
  if (cfg.memory_kind != MemoryKind::None) {
    m.memory = memory_make(cfg.memory_kind, dz + cfg.act_dim, cfg.mem_dim,
                           cfg.mem_state_dim, cfg.mem_layers, cfg.memory_gate,
                           cfg.memory_shared_a, rng);
  } else {
    m.memory.kind = MemoryKind::None;
    m.memory.dim = cfg.mem_dim;
    m.memory.in_dim = dz + cfg.act_dim;
  }
  m.encoder_t = m.encoder;
  m.projector_t = m.projector;
  m.value_t = m.value;
  return m;
}

namespace {

void push_mlp(std::vector<std::pair<std::string, Tensor2*>>& out, const std::string& name,
              Mlp& m) {
  for (int l = 0; l < m.layer_count(); ++l) {
    out.emplace_back(name + ".w" + std::to_string(l), &m.w[l]);
    out.emplace_back(name + ".b" + std::to_string(l), &m.b[l]);
  }
}

void push_memory(std::vector<std::pair<std::string, Tensor2*>>& out, MemoryParams& p) {
  if (p.kind == MemoryKind::None) return;
  out.emplace_back("memory.w_in", &p.w_in);
  out.emplace_back("memory.b_in", &p.b_in);
  for (size_t l = 0; l < p.ssm.size(); ++l) {
    SsmLayer& s = p.ssm[l];
    const std::string k = "memory.ssm" + std::to_string(l) + ".";
    out.emplace_back(k + "w_dt", &s.w_dt);
    out.emplace_back(k + "b_dt", &s.b_dt);
    out.emplace_back(k + "w_b", &s.w_b);
    out.emplace_back(k + "b_b", &s.b_b);
    out.emplace_back(k + "w_c", &s.w_c);
    out.emplace_back(k + "b_c", &s.b_c);
    out.emplace_back(k + "a_raw", &s.a_raw);
    out.emplace_back(k + "d_skip", &s.d_skip);
    out.emplace_back(k + "w_gate", &s.w_gate);
    out.emplace_back(k + "b_gate", &s.b_gate);
  }
  for (size_t l = 0; l < p.gru.size(); ++l) {
    GruLayer& g = p.gru[l];
    const std::string k = "memory.gru" + std::to_string(l) + ".";
    out.emplace_back(k + "w_z", &g.w_z);
    out.emplace_back(k + "u_z", &g.u_z);
    out.emplace_back(k + "b_z", &g.b_z);
    out.emplace_back(k + "w_r", &g.w_r);
    out.emplace_back(k + "u_r", &g.u_r);
    out.emplace_back(k + "b_r", &g.b_r);
    out.emplace_back(k + "w_h", &g.w_h);
    out.emplace_back(k + "u_h", &g.u_h);
    out.emplace_back(k + "b_h", &g.b_h);
  }
}

}  // namespace

std::vector<std::pair<std::string, Tensor2*>> model_trainables(WorldModel& m) {
  std::vector<std::pair<std::string, Tensor2*>> out;
  push_mlp(out, "encoder", m.encoder);
  push_mlp(out, "projector", m.projector);
  push_mlp(out, "core", m.core);
  if (m.cfg.geometry) {
    push_mlp(out, "ham", m.ham);
    push_mlp(out, "control", m.control);
    push_mlp(out, "context", m.context);
  }
  push_mlp(out, "reward", m.reward);
  push_mlp(out, "value", m.value);
  push_mlp(out, "policy", m.policy);
  push_memory(out, m.memory);
  return out;
}

std::vector<std::pair<std::string, Tensor2*>> model_all_tensors(WorldModel& m) {
  auto out = model_trainables(m);
  push_mlp(out, "encoder_t", m.encoder_t);
  push_mlp(out, "projector_t", m.projector_t);
  push_mlp(out, "value_t", m.value_t);
  return out;
}

void ema_update(WorldModel& m, double tau) {
  if (tau < 0.0 || tau > 1.0) throw std::invalid_argument("ema_update: tau in [0,1]");
  auto blend = [tau](Mlp& online, Mlp& target) {
    for (int l = 0; l < online.layer_count(); ++l) {
      for (int i = 0; i < online.w[l].size(); ++i)
        target.w[l].data[i] = (1.0 - tau) * target.w[l].data[i] + tau * online.w[l].data[i];
      for (int i = 0; i < online.b[l].size(); ++i)
        target.b[l].data[i] = (1.0 - tau) * target.b[l].data[i] + tau * online.b[l].data[i];
    }
  };
  blend(m.encoder, m.encoder_t);
  blend(m.projector, m.projector_t);
  blend(m.value, m.value_t);
}

Tensor2 encode(const WorldModel& m, const Tensor2& obs, bool use_target) {
  if (obs.cols != m.cfg.obs_dim) throw std::invalid_argument("encode: obs dim mismatch");
  Tensor2 z = mlp_forward(use_target ? m.encoder_t : m.encoder, obs);
  check_finite(z, "encoder");
  return z;
}

Tensor2 project(const WorldModel& m, const Tensor2& z, bool use_target) {
  Tensor2 y = mlp_forward(use_target ? m.projector_t : m.projector, z);
  check_finite(y, "projector");
  return y;
}

Tensor2 hamiltonian_energy(const WorldModel& m, const Tensor2& qp) {
  if (!m.cfg.geometry) throw std::logic_error("hamiltonian_energy: geometry disabled");
  Tensor2 v;
  mlp_value_and_input_grad(m.ham, qp, &v, nullptr);
  check_finite(v, "energy head");
  return v;
}

void hamiltonian_vector_field(const WorldModel& m, const Tensor2& qp, Tensor2* dh_dp,
                              Tensor2* neg_dh_dq) {
  if (!m.cfg.geometry) throw std::logic_error("hamiltonian_vector_field: geometry disabled");
  Tensor2 grad;
  mlp_value_and_input_grad(m.ham, qp, nullptr, &grad);
  check_finite(grad, "energy head gradient");
  const int dq = m.cfg.dim_q;
  if (dh_dp) *dh_dp = slice_cols(grad, dq, dq + m.cfg.dim_p);
  if (neg_dh_dq) *neg_dh_dq = scale(slice_cols(grad, 0, dq), -1.0);
}

namespace {

// drive[b,i] = sum_j G[b, i*act+j] * a[b,j]; plain twin of the taped
// tile/block-sum composition, same accumulation order.
Tensor2 control_drive(const Tensor2& gflat, const Tensor2& a, int dim_p) {
  const int B = gflat.rows, act = a.cols;
  Tensor2 out(B, dim_p);
  for (int b = 0; b < B; ++b) {
    const double* g = gflat.row(b);
    const double* ar = a.row(b);
    for (int i = 0; i < dim_p; ++i) {
      double acc = 0.0;
      for (int j = 0; j < act; ++j) acc += g[i * act + j] * ar[j];
      out.at(b, i) = acc;
    }
  }
  return out;
}

}  // namespace

TransitionOutput soft_ham_step(const WorldModel& m, const Tensor2& z, const Tensor2& a,
                               const Tensor2& h, double alpha) {
  const ModelConfig& c = m.cfg;
  if (z.cols != c.dim_z()) throw std::invalid_argument("soft_ham_step: latent dim");
  if (a.cols != c.act_dim) throw std::invalid_argument("soft_ham_step: action dim");
  if (h.cols != c.mem_dim) throw std::invalid_argument("soft_ham_step: memory dim");
  if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("soft_ham_step: alpha");
  TransitionOutput o;
  const Tensor2 core_in = concat_cols({&z, &a, &h});
  if (!c.geometry) {
    Tensor2 dz = mlp_forward(m.core, core_in);
    check_finite(dz, "core");
    o.next = add(z, dz);
    o.dq_net = slice_cols(dz, 0, c.dim_q);
    o.dp_net = slice_cols(dz, c.dim_q, c.dim_q + c.dim_p);
    o.dq = o.dq_net;
    o.dp = o.dp_net;
    o.dc = slice_cols(dz, c.dim_q + c.dim_p, c.dim_z());
    o.energy = Tensor2(z.rows, 1);
    o.dh_dq = Tensor2(z.rows, c.dim_q);
    o.dh_dp = Tensor2(z.rows, c.dim_p);
    o.drive = Tensor2(z.rows, c.dim_p);
    return o;
  }
  const Tensor2 qp = latent_qp(c, z);
  Tensor2 grad;
  mlp_value_and_input_grad(m.ham, qp, &o.energy, &grad);
  check_finite(o.energy, "energy head");
  check_finite(grad, "energy head gradient");
  o.dh_dq = slice_cols(grad, 0, c.dim_q);
  o.dh_dp = slice_cols(grad, c.dim_q, c.dim_q + c.dim_p);
  Tensor2 d_net = mlp_forward(m.core, core_in);
  check_finite(d_net, "core");
  o.dq_net = slice_cols(d_net, 0, c.dim_q);
  o.dp_net = slice_cols(d_net, c.dim_q, c.dim_q + c.dim_p);
  Tensor2 gflat = mlp_forward(m.control, core_in);
  check_finite(gflat, "control map");
  o.drive = control_drive(gflat, a, c.dim_p);
  o.dc = mlp_forward(m.context, core_in);
  check_finite(o.dc, "context updater");
  o.dq = add(scale(o.dq_net, 1.0 - alpha), scale(o.dh_dp, alpha));
  o.dp = add(add(scale(o.dp_net, 1.0 - alpha), scale(o.dh_dq, -alpha)), o.drive);
  const Tensor2 delta = concat_cols({&o.dq, &o.dp, &o.dc});
  o.next = add(z, delta);
  return o;
}

Tensor2 predict_reward_logits(const WorldModel& m, const Tensor2& z_next) {
  Tensor2 y = mlp_forward(m.reward, z_next);
  check_finite(y, "reward head");
  return y;
}

Tensor2 predict_value_logits(const WorldModel& m, const Tensor2& z, bool use_target) {
  Tensor2 y = mlp_forward(use_target ? m.value_t : m.value, z);
  check_finite(y, "value head");
  return y;
}

Tensor2 policy_prior(const WorldModel& m, const Tensor2& z) {
  Tensor2 y = mlp_forward(m.policy, z);
  check_finite(y, "action prior");
  return y;
}

// ---- taped twins ----

ModelRefs model_bind(Tape& t, const WorldModel& m,
                     std::vector<std::pair<std::string, TensorRef>>* bound) {
  ModelRefs r;
  r.cfg = m.cfg;
  r.encoder = mlp_bind(t, m.encoder, "encoder", bound);
  r.projector = mlp_bind(t, m.projector, "projector", bound);
  r.core = mlp_bind(t, m.core, "core", bound);
  if (m.cfg.geometry) {
    r.ham = mlp_bind(t, m.ham, "ham", bound);
    r.control = mlp_bind(t, m.control, "control", bound);
    r.context = mlp_bind(t, m.context, "context", bound);
  }
  r.reward = mlp_bind(t, m.reward, "reward", bound);
  r.value = mlp_bind(t, m.value, "value", bound);
  r.policy = mlp_bind(t, m.policy, "policy", bound);
  r.memory = memory_bind(t, m.memory, "memory", bound);
  return r;
}

TensorRef encode(Tape& t, const ModelRefs& m, TensorRef obs) {
  return mlp_forward(t, m.encoder, obs);
}

TensorRef project(Tape& t, const ModelRefs& m, TensorRef z) {
  return mlp_forward(t, m.projector, z);
}

TensorRef hamiltonian_energy(Tape& t, const ModelRefs& m, TensorRef qp) {
  TensorRef v{};
  mlp_value_and_input_grad(t, m.ham, qp, &v, nullptr);
  return v;
}

TransitionRefs soft_ham_step(Tape& t, const ModelRefs& m, TensorRef z, TensorRef a,
                             TensorRef h, double alpha) {
  const ModelConfig& c = m.cfg;
  TransitionRefs o;
  const TensorRef core_in = t.concat_cols({z, a, h});
  const int B = t.value(z).rows;
  if (!c.geometry) {
    TensorRef dz = mlp_forward(t, m.core, core_in);
    o.next = t.add(z, dz);
    o.dq_net = t.slice_cols(dz, 0, c.dim_q);
    o.dp_net = t.slice_cols(dz, c.dim_q, c.dim_q + c.dim_p);
    o.dq = o.dq_net;
    o.dp = o.dp_net;
    o.dc = t.slice_cols(dz, c.dim_q + c.dim_p, c.dim_z());
    o.energy = t.constant(Tensor2(B, 1));
    o.dh_dq = t.constant(Tensor2(B, c.dim_q));
    o.dh_dp = t.constant(Tensor2(B, c.dim_p));
    o.drive = t.constant(Tensor2(B, c.dim_p));
    return o;
  }
  const TensorRef qp = t.slice_cols(z, 0, c.dim_q + c.dim_p);
  TensorRef grad{};
  mlp_value_and_input_grad(t, m.ham, qp, &o.energy, &grad);
  o.dh_dq = t.slice_cols(grad, 0, c.dim_q);
  o.dh_dp = t.slice_cols(grad, c.dim_q, c.dim_q + c.dim_p);
  TensorRef d_net = mlp_forward(t, m.core, core_in);
  o.dq_net = t.slice_cols(d_net, 0, c.dim_q);
  o.dp_net = t.slice_cols(d_net, c.dim_q, c.dim_q + c.dim_p);
  TensorRef gflat = mlp_forward(t, m.control, core_in);
  o.drive = t.block_row_sums(t.mul(gflat, t.tile_cols_block(a, c.dim_p)), c.act_dim);
  o.dc = mlp_forward(t, m.context, core_in);
  o.dq = t.add(t.scale(o.dq_net, 1.0 - alpha), t.scale(o.dh_dp, alpha));
  o.dp = t.add(t.add(t.scale(o.dp_net, 1.0 - alpha), t.scale(o.dh_dq, -alpha)), o.drive);
  o.next = t.add(z, t.concat_cols({o.dq, o.dp, o.dc}));
  return o;
}

TensorRef predict_reward_logits(Tape& t, const ModelRefs& m, TensorRef z_next) {
  return mlp_forward(t, m.reward, z_next);
}

TensorRef predict_value_logits(Tape& t, const ModelRefs& m, TensorRef z) {
  return mlp_forward(t, m.value, z);
}

TensorRef policy_prior(Tape& t, const ModelRefs& m, TensorRef z) {
  return mlp_forward(t, m.policy, z);
}

}  // namespace gyre
