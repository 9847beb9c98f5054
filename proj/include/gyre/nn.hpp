#pragma once

#include <string>
#include <vector>

#include "gyre/rng.hpp"
#include "gyre/tape.hpp"
#include "gyre/tensor.hpp"

// Small dense MLPs with value-semantics parameters. Every network exists in
// two evaluation forms that are tested to agree bit-for-bit: a plain form used
// by the planner and environment loops, and a taped form used by training.

namespace gyre {

enum class Act { Identity, SiLU, Tanh, Softplus, Square };

Unary act_unary(Act a);  // Identity has no Unary; callers skip it
std::string act_name(Act a);
Act act_from_name(const std::string& name);

struct Mlp {
  std::vector<Tensor2> w;  // layer l maps in->out with w[l] shaped (out,in)
  std::vector<Tensor2> b;  // (1,out)
  Act hidden_act = Act::SiLU;
  Act output_act = Act::Identity;

  int layer_count() const { return static_cast<int>(w.size()); }
  int in_dim() const { return w.empty() ? 0 : w.front().cols; }
  int out_dim() const { return w.empty() ? 0 : b.back().cols; }
};

// dims = {in, hidden..., out}. Glorot-uniform weights, zero biases; when
// zero_output is set the final layer starts at exactly zero (used by heads
// whose neutral output should be zero / uniform logits).
Mlp mlp_make(const std::vector<int>& dims, Act hidden, Act output, Rng& rng,
             bool zero_output = false);

// x is (batch, in). Throws on dimension mismatch.
Tensor2 mlp_forward(const Mlp& m, const Tensor2& x);

// Scalar-output MLP only (out_dim 1, Identity output): returns the value
// (batch,1) and the gradient of the scalar w.r.t. the input (batch,in).
void mlp_value_and_input_grad(const Mlp& m, const Tensor2& x, Tensor2* value, Tensor2* input_grad);

// ---- taped twins ----

struct MlpRefs {
  std::vector<TensorRef> w, b;
  Act hidden_act = Act::SiLU;
  Act output_act = Act::Identity;
};

// Registers every tensor of m as a gradient leaf on the tape and (optionally)
// appends (name.w0, ref) pairs to bound for the optimizer to pick up.
MlpRefs mlp_bind(Tape& t, const Mlp& m, const std::string& name,
                 std::vector<std::pair<std::string, TensorRef>>* bound);
// Same shape of API but registers constants (EMA targets: evaluated on tape,
// never trained).
MlpRefs mlp_bind_const(Tape& t, const Mlp& m);

TensorRef mlp_forward(Tape& t, const MlpRefs& m, TensorRef x);
void mlp_value_and_input_grad(Tape& t, const MlpRefs& m, TensorRef x, TensorRef* value,
                              TensorRef* input_grad);

// Writes tape gradients back into a parameter-shaped Mlp (same layout as m).
// Used by tests; the trainer consumes the bound-pair list instead.
Mlp mlp_grads(Tape& t, const MlpRefs& refs, const Mlp& like);

}  // namespace gyre
