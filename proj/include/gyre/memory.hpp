#pragma once

#include <string>
#include <vector>

#include "gyre/nn.hpp"
#include "gyre/tape.hpp"
#include "gyre/tensor.hpp"

// History conditioning h_t for the transition: a stack of selective
// state-space layers (diagonal negative-real A, input-dependent softplus step
// size and B/C maps, skip connection, gated output, residual add) over a
// linear projection of (z_t, a_t). A GRU stack and a pass-through (h = 0)
// variant sit behind the same interface for ablations. The memory only
// conditions the transition; nothing here emits a latent on its own.

namespace gyre {

enum class MemoryKind { Selective, Gru, None };
enum class GateKind { Sigmoid, Silu };

std::string memory_kind_str(MemoryKind k);
MemoryKind memory_kind_from(const std::string& s);
std::string gate_kind_str(GateKind k);
GateKind gate_kind_from(const std::string& s);

struct SsmLayer {
  Tensor2 w_dt, b_dt;    // (d,d),(1,d): step size, softplus-activated
  Tensor2 w_b, b_b;      // (n,d),(1,n): input map B_t
  Tensor2 w_c, b_c;      // (n,d),(1,n): output map C_t
  Tensor2 a_raw;         // (1,d*n), or (1,n) when shared across channels; A = -exp(a_raw)
  Tensor2 d_skip;        // (1,d)
  Tensor2 w_gate, b_gate;  // (d,d),(1,d)
};

struct GruLayer {
  Tensor2 w_z, u_z, b_z;  // (d,d),(d,d),(1,d)
  Tensor2 w_r, u_r, b_r;
  Tensor2 w_h, u_h, b_h;
};

struct MemoryParams {
  MemoryKind kind = MemoryKind::Selective;
  GateKind gate = GateKind::Sigmoid;
  bool shared_a = false;
  int dim = 32;        // model dim d = feature width of h_t
  int state_dim = 32;  // n
  int in_dim = 0;      // latent + action width
  Tensor2 w_in, b_in;  // (d,in_dim),(1,d)
  std::vector<SsmLayer> ssm;
  std::vector<GruLayer> gru;

  int layer_count() const {
    return kind == MemoryKind::Selective ? static_cast<int>(ssm.size())
           : kind == MemoryKind::Gru     ? static_cast<int>(gru.size())
                                         : 0;
  }
};

MemoryParams memory_make(MemoryKind kind, int in_dim, int dim, int state_dim, int layers,
                         GateKind gate, bool shared_a, Rng& rng);

struct MemoryState {
  // per layer: selective (batch, d*n) with channel-major blocks; gru (batch, d)
  std::vector<Tensor2> s;
};

MemoryState mem_init(const MemoryParams& p, int batch);

struct MemStepOut {
  Tensor2 features;  // (batch, dim)
  MemoryState next;
};

// One recurrence step; z is (batch, latent), a is (batch, act).
MemStepOut mem_step(const MemoryParams& p, const Tensor2& z, const Tensor2& a,
                    const MemoryState& state);

// Sequential scan with step-identical semantics (tested bit-for-bit). With
// record_states, states[t] is the state before consuming step t (length T+1,
// states[T] == final_state) — rollout losses and diagnostics restart from
// these snapshots.
struct MemScanOut {
  std::vector<Tensor2> features;  // length T
  MemoryState final_state;
  std::vector<MemoryState> states;
};
MemScanOut mem_scan(const MemoryParams& p, const std::vector<Tensor2>& zs,
                    const std::vector<Tensor2>& as, const MemoryState& init,
                    bool record_states = false);

// ---- taped twins ----

struct SsmLayerRefs {
  TensorRef w_dt, b_dt, w_b, b_b, w_c, b_c, a_raw, d_skip, w_gate, b_gate;
};
struct GruLayerRefs {
  TensorRef w_z, u_z, b_z, w_r, u_r, b_r, w_h, u_h, b_h;
};
struct MemoryRefs {
  MemoryKind kind = MemoryKind::Selective;
  GateKind gate = GateKind::Sigmoid;
  bool shared_a = false;
  int dim = 0, state_dim = 0;
  TensorRef w_in, b_in;
  std::vector<SsmLayerRefs> ssm;
  std::vector<GruLayerRefs> gru;
};

MemoryRefs memory_bind(Tape& t, const MemoryParams& p, const std::string& name,
                       std::vector<std::pair<std::string, TensorRef>>* bound);

struct MemStepRefsOut {
  TensorRef features;
  std::vector<TensorRef> next_state;
};
MemStepRefsOut mem_step(Tape& t, const MemoryRefs& p, TensorRef z, TensorRef a,
                        const std::vector<TensorRef>& state);

}  // namespace gyre
