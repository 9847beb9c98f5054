#include "gyre/memory.hpp"

#include <cmath>
#include <stdexcept>

namespace gyre {

std::string memory_kind_str(MemoryKind k) {
  switch (k) {
    case MemoryKind::Selective: return "selective";
    case MemoryKind::Gru: return "gru";
    case MemoryKind::None: return "none";
  }
  throw std::logic_error("bad memory kind");
}

MemoryKind memory_kind_from(const std::string& s) {
  if (s == "selective") return MemoryKind::Selective;
  if (s == "gru") return MemoryKind::Gru;
  if (s == "none") return MemoryKind::None;
  throw std::invalid_argument("unknown memory kind: " + s);
}

std::string gate_kind_str(GateKind k) {
  return k == GateKind::Sigmoid ? "sigmoid" : "silu";
}

GateKind gate_kind_from(const std::string& s) {
  if (s == "sigmoid") return GateKind::Sigmoid;
  if (s == "silu") return GateKind::Silu;
  throw std::invalid_argument("unknown gate kind: " + s);
}

namespace {

Tensor2 glorot(int out, int in, Rng& rng) {
  double lim = std::sqrt(6.0 / (in + out));
  return rng.uniform_tensor(out, in, -lim, lim);
}

}  // namespace

MemoryParams memory_make(MemoryKind kind, int in_dim, int dim, int state_dim, int layers,
                         GateKind gate, bool shared_a, Rng& rng) {
  if (in_dim <= 0 || dim <= 0 || state_dim <= 0 || layers <= 0)
    throw std::invalid_argument("memory_make: dims and layer count must be positive");
  MemoryParams p;
  p.kind = kind;
  p.gate = gate;
  p.shared_a = shared_a;
  p.dim = dim;
  p.state_dim = state_dim;
  p.in_dim = in_dim;
  p.w_in = glorot(dim, in_dim, rng);
  p.b_in = Tensor2(1, dim);
  if (kind == MemoryKind::Selective) {
    for (int l = 0; l < layers; ++l) {
      SsmLayer s;
      s.w_dt = glorot(dim, dim, rng);
      s.b_dt = Tensor2(1, dim);
      // softplus(-1) ~ 0.31: moderate step sizes at init
      for (auto& v : s.b_dt.data) v = -1.0;
      s.w_b = glorot(state_dim, dim, rng);
      s.b_b = Tensor2(1, state_dim);
      s.w_c = glorot(state_dim, dim, rng);
      s.b_c = Tensor2(1, state_dim);
      s.a_raw = rng.uniform_tensor(1, shared_a ? state_dim : dim * state_dim, -1.0, 0.5);
      s.d_skip = Tensor2(1, dim);
      for (auto& v : s.d_skip.data) v = 1.0;
      s.w_gate = glorot(dim, dim, rng);
      s.b_gate = Tensor2(1, dim);
      p.ssm.push_back(std::move(s));
    }
  } else if (kind == MemoryKind::Gru) {
    for (int l = 0; l < layers; ++l) {
      GruLayer g;
      g.w_z = glorot(dim, dim, rng);
      g.u_z = glorot(dim, dim, rng);
      g.b_z = Tensor2(1, dim);
      g.w_r = glorot(dim, dim, rng);
      g.u_r = glorot(dim, dim, rng);
      g.b_r = Tensor2(1, dim);
      g.w_h = glorot(dim, dim, rng);
      g.u_h = glorot(dim, dim, rng);
      g.b_h = Tensor2(1, dim);
      p.gru.push_back(std::move(g));
    }
  }
  return p;
}

MemoryState mem_init(const MemoryParams& p, int batch) {
  MemoryState st;
  if (p.kind == MemoryKind::Selective) {
    for (int l = 0; l < p.layer_count(); ++l) st.s.emplace_back(batch, p.dim * p.state_dim);
  } else if (p.kind == MemoryKind::Gru) {
    for (int l = 0; l < p.layer_count(); ++l) st.s.emplace_back(batch, p.dim);
  }
  return st;
}

namespace {

// Affine map y = x * w^T + b for row-major (out,in) weights.
Tensor2 affine(const Tensor2& x, const Tensor2& w, const Tensor2& b) {
  return add_row_broadcast(matmul_nt(x, w), b);
}

// One selective layer; x (B,d), state (B,d*n) channel-major. Returns the
// residual output and writes the updated state in place. Scalar formulas and
// accumulation order mirror the taped twin exactly (verified bit-for-bit).
Tensor2 ssm_layer_step(const SsmLayer& ly, GateKind gate, bool shared_a, int n,
                       const Tensor2& x, Tensor2& state) {
  const int B = x.rows, d = x.cols;
  if (state.rows != B || state.cols != d * n)
    shape_fail("ssm_layer_step state", state, x);
  Tensor2 dt = affine(x, ly.w_dt, ly.b_dt);   // (B,d), pre-softplus
  Tensor2 bt = affine(x, ly.w_b, ly.b_b);     // (B,n)
  Tensor2 ct = affine(x, ly.w_c, ly.b_c);     // (B,n)
  Tensor2 gt = affine(x, ly.w_gate, ly.b_gate);
  const Unary gate_op = gate == GateKind::Sigmoid ? Unary::Sigmoid : Unary::Silu;
  Tensor2 out(B, d);
  for (int bi = 0; bi < B; ++bi) {
    const double* xrow = x.row(bi);
    const double* brow = bt.row(bi);
    const double* crow = ct.row(bi);
    double* srow = state.row(bi);
    for (int i = 0; i < d; ++i) {
      double step = unary_eval(Unary::Softplus, dt.at(bi, i));
      double drive = step * xrow[i];
      const double* arow = shared_a ? ly.a_raw.data.data() : ly.a_raw.data.data() + i * n;
      double* sblk = srow + i * n;
      double y = 0.0;
      for (int j = 0; j < n; ++j) {
        double decay = std::exp(step * (-1.0 * std::exp(arow[j])));
        sblk[j] = decay * sblk[j] + drive * brow[j];
        y += crow[j] * sblk[j];
      }
      y += ly.d_skip.at(0, i) * xrow[i];
      out.at(bi, i) = xrow[i] + unary_eval(gate_op, gt.at(bi, i)) * y;
    }
  }
  return out;
}

Tensor2 gru_layer_step(const GruLayer& ly, const Tensor2& x, Tensor2& state) {
  const int B = x.rows, d = x.cols;
  if (state.rows != B || state.cols != d) shape_fail("gru_layer_step state", state, x);
  Tensor2 zt = affine(x, ly.w_z, ly.b_z);
  add_inplace(zt, matmul_nt(state, ly.u_z));
  Tensor2 rt = affine(x, ly.w_r, ly.b_r);
  add_inplace(rt, matmul_nt(state, ly.u_r));
  for (auto& v : zt.data) v = unary_eval(Unary::Sigmoid, v);
  for (auto& v : rt.data) v = unary_eval(Unary::Sigmoid, v);
  Tensor2 cand = affine(x, ly.w_h, ly.b_h);
  add_inplace(cand, matmul_nt(mul(rt, state), ly.u_h));
  for (auto& v : cand.data) v = unary_eval(Unary::Tanh, v);
  // h' = h + z*(cand - h), matching the taped op order
  for (int i = 0; i < B * d; ++i)
    state.data[i] = state.data[i] + zt.data[i] * (cand.data[i] - state.data[i]);
  return state;
}

}  // namespace

MemStepOut mem_step(const MemoryParams& p, const Tensor2& z, const Tensor2& a,
                    const MemoryState& state) {
  if (z.rows != a.rows) shape_fail("mem_step batch", z, a);
  if (z.cols + a.cols != p.in_dim)
    throw std::invalid_argument("mem_step: z+a width != in_dim");
  MemStepOut o;
  o.next = state;
  const int B = z.rows;
  if (p.kind == MemoryKind::None) {
    o.features = Tensor2(B, p.dim);
    return o;
  }
  if (static_cast<int>(state.s.size()) != p.layer_count())
    throw std::invalid_argument("mem_step: state layer count mismatch");
  Tensor2 x = affine(concat_cols({&z, &a}), p.w_in, p.b_in);
  for (int l = 0; l < p.layer_count(); ++l) {
    if (p.kind == MemoryKind::Selective)
      x = ssm_layer_step(p.ssm[l], p.gate, p.shared_a, p.state_dim, x, o.next.s[l]);
    else
      x = gru_layer_step(p.gru[l], x, o.next.s[l]);
  }
  o.features = std::move(x);
  return o;
}

MemScanOut mem_scan(const MemoryParams& p, const std::vector<Tensor2>& zs,
                    const std::vector<Tensor2>& as, const MemoryState& init,
                    bool record_states) {
  if (zs.size() != as.size()) throw std::invalid_argument("mem_scan: length mismatch");
  MemScanOut o;
  o.final_state = init;
  for (size_t t = 0; t < zs.size(); ++t) {
    if (record_states) o.states.push_back(o.final_state);
    MemStepOut s = mem_step(p, zs[t], as[t], o.final_state);
    o.features.push_back(std::move(s.features));
    o.final_state = std::move(s.next);
  }
  if (record_states) o.states.push_back(o.final_state);
  return o;
}

MemoryRefs memory_bind(Tape& t, const MemoryParams& p, const std::string& name,
                       std::vector<std::pair<std::string, TensorRef>>* bound) {
  MemoryRefs r;
  r.kind = p.kind;
  r.gate = p.gate;
  r.shared_a = p.shared_a;
  r.dim = p.dim;
  r.state_dim = p.state_dim;
  auto leaf = [&](const Tensor2& v, const std::string& key) {
    TensorRef ref = t.leaf(v);
    if (bound) bound->emplace_back(name + "." + key, ref);
    return ref;
  };
  if (p.kind == MemoryKind::None) return r;
  r.w_in = leaf(p.w_in, "w_in");
  r.b_in = leaf(p.b_in, "b_in");
  for (size_t l = 0; l < p.ssm.size(); ++l) {
    const SsmLayer& s = p.ssm[l];
    std::string k = "ssm" + std::to_string(l) + ".";
    SsmLayerRefs lr;
    lr.w_dt = leaf(s.w_dt, k + "w_dt");
    lr.b_dt = leaf(s.b_dt, k + "b_dt");
    lr.w_b = leaf(s.w_b, k + "w_b");
    lr.b_b = leaf(s.b_b, k + "b_b");
    lr.w_c = leaf(s.w_c, k + "w_c");
    lr.b_c = leaf(s.b_c, k + "b_c");
    lr.a_raw = leaf(s.a_raw, k + "a_raw");
    lr.d_skip = leaf(s.d_skip, k + "d_skip");
    lr.w_gate = leaf(s.w_gate, k + "w_gate");
    lr.b_gate = leaf(s.b_gate, k + "b_gate");
    r.ssm.push_back(lr);
  }
  for (size_t l = 0; l < p.gru.size(); ++l) {
    const GruLayer& g = p.gru[l];
    std::string k = "gru" + std::to_string(l) + ".";
    GruLayerRefs lr;
    lr.w_z = leaf(g.w_z, k + "w_z");
    lr.u_z = leaf(g.u_z, k + "u_z");
    lr.b_z = leaf(g.b_z, k + "b_z");
    lr.w_r = leaf(g.w_r, k + "w_r");
    lr.u_r = leaf(g.u_r, k + "u_r");
    lr.b_r = leaf(g.b_r, k + "b_r");
    lr.w_h = leaf(g.w_h, k + "w_h");
    lr.u_h = leaf(g.u_h, k + "u_h");
    lr.b_h = leaf(g.b_h, k + "b_h");
    r.gru.push_back(lr);
  }
  return r;
}

namespace {

TensorRef affine_t(Tape& t, TensorRef x, TensorRef w, TensorRef b) {
  return t.add_row(t.matmul_nt(x, w), b);
}

TensorRef gate_t(Tape& t, GateKind g, TensorRef x) {
  return t.unary(x, g == GateKind::Sigmoid ? Unary::Sigmoid : Unary::Silu);
}

// Broadcast a (1,c) row to (B,c) on the tape; gradient flows back via the
// matmul's column sums.
TensorRef bcast_rows(Tape& t, TensorRef row, int B) {
  Tensor2 ones(B, 1);
  for (auto& v : ones.data) v = 1.0;
  return t.matmul(t.constant(ones), row);
}

TensorRef ssm_layer_step_t(Tape& t, const SsmLayerRefs& ly, GateKind gate, bool shared_a,
                           int d, int n, TensorRef x, TensorRef state, TensorRef* next) {
  const int B = t.value(x).rows;
  TensorRef dt = t.unary(affine_t(t, x, ly.w_dt, ly.b_dt), Unary::Softplus);  // (B,d)
  TensorRef bt = affine_t(t, x, ly.w_b, ly.b_b);                              // (B,n)
  TensorRef ct = affine_t(t, x, ly.w_c, ly.b_c);                              // (B,n)
  TensorRef gt = gate_t(t, gate, affine_t(t, x, ly.w_gate, ly.b_gate));       // (B,d)
  TensorRef a_flat = shared_a ? t.tile_cols_block(ly.a_raw, d) : ly.a_raw;    // (1,d*n)
  TensorRef neg_a = t.scale(t.unary(a_flat, Unary::Exp), -1.0);
  TensorRef dt_blk = t.repeat_cols_block(dt, n);  // (B,d*n)
  TensorRef decay = t.unary(t.mul(dt_blk, bcast_rows(t, neg_a, B)), Unary::Exp);
  TensorRef drive = t.mul(t.repeat_cols_block(t.mul(dt, x), n), t.tile_cols_block(bt, d));
  TensorRef s_new = t.add(t.mul(decay, state), drive);
  TensorRef y = t.block_row_sums(t.mul(s_new, t.tile_cols_block(ct, d)), n);  // (B,d)
  y = t.add(y, t.mul(bcast_rows(t, ly.d_skip, B), x));
  *next = s_new;
  return t.add(x, t.mul(gt, y));
}

TensorRef gru_layer_step_t(Tape& t, const GruLayerRefs& ly, TensorRef x, TensorRef state,
                           TensorRef* next) {
  TensorRef zt = t.unary(t.add(affine_t(t, x, ly.w_z, ly.b_z), t.matmul_nt(state, ly.u_z)),
                         Unary::Sigmoid);
  TensorRef rt = t.unary(t.add(affine_t(t, x, ly.w_r, ly.b_r), t.matmul_nt(state, ly.u_r)),
                         Unary::Sigmoid);
  TensorRef cand = t.unary(
      t.add(affine_t(t, x, ly.w_h, ly.b_h), t.matmul_nt(t.mul(rt, state), ly.u_h)),
      Unary::Tanh);
  // h' = h + z*(cand - h)
  TensorRef h_new = t.add(state, t.mul(zt, t.sub(cand, state)));
  *next = h_new;
  return h_new;
}

}  // namespace

MemStepRefsOut mem_step(Tape& t, const MemoryRefs& p, TensorRef z, TensorRef a,
                        const std::vector<TensorRef>& state) {
  MemStepRefsOut o;
  const int B = t.value(z).rows;
  if (p.kind == MemoryKind::None) {
    o.features = t.constant(Tensor2(B, p.dim));
    return o;
  }
  int layers = p.kind == MemoryKind::Selective ? static_cast<int>(p.ssm.size())
                                               : static_cast<int>(p.gru.size());
  if (static_cast<int>(state.size()) != layers)
    throw std::invalid_argument("mem_step(tape): state layer count mismatch");
  TensorRef x = affine_t(t, t.concat_cols({z, a}), p.w_in, p.b_in);
  for (int l = 0; l < layers; ++l) {
    TensorRef next{};
    if (p.kind == MemoryKind::Selective)
      x = ssm_layer_step_t(t, p.ssm[l], p.gate, p.shared_a, p.dim, p.state_dim, x, state[l],
                           &next);
    else
      x = gru_layer_step_t(t, p.gru[l], x, state[l], &next);
    o.next_state.push_back(next);
  }
  o.features = x;
  return o;
}

}  // namespace gyre
