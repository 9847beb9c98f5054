#pragma once

#include <functional>
#include <vector>

#include "gyre/tensor.hpp"

// Reverse-mode autodiff over Tensor2 values. A Tape is an append-only list of
// nodes; ops record a closure that scatters the output gradient back into the
// parents. backward() walks the list once in reverse. Tapes are single-owner
// per update step and cheap to throw away.
//
// Derivatives of activations are themselves available as forward ops (SiluGrad,
// TanhGrad, ...) so that quantities like the input-gradient of a scalar head
// can be written as an ordinary taped forward computation and trained through.

namespace gyre {

struct TensorRef {
  int id = -1;
  bool valid() const { return id >= 0; }
};

enum class Unary {
  Silu,
  SiluGrad,  // d/dx silu(x), used when a head's input-gradient is itself a model output
  Tanh,
  TanhGrad,  // 1 - tanh(x)^2
  Sigmoid,
  Softplus,
  Exp,
  Abs,
  Square,
  SquareGrad,  // 2x; keeps quadratic test heads exact through the input-grad path
};

double unary_eval(Unary k, double x);
double unary_deriv(Unary k, double x);  // d/dx of unary_eval

class Tape {
 public:
  // ---- node creation ----
  TensorRef constant(Tensor2 v);  // never receives gradient
  TensorRef leaf(Tensor2 v);      // gradient accumulator (parameters, probed inputs)

  const Tensor2& value(TensorRef r) const;
  const Tensor2& grad(TensorRef r);  // zeros if the node was never reached
  bool requires_grad(TensorRef r) const;
  int node_count() const { return static_cast<int>(nodes_.size()); }

  // ---- ops ----
  TensorRef add(TensorRef a, TensorRef b);
  TensorRef sub(TensorRef a, TensorRef b);
  TensorRef mul(TensorRef a, TensorRef b);  // elementwise
  TensorRef scale(TensorRef a, double s);
  TensorRef matmul(TensorRef a, TensorRef b);     // (r,k)x(k,c)
  TensorRef matmul_nt(TensorRef a, TensorRef b);  // a * b^T
  TensorRef matmul_tn(TensorRef a, TensorRef b);  // a^T * b
  TensorRef add_row(TensorRef x, TensorRef bias);  // bias (1,c) broadcast over rows
  TensorRef unary(TensorRef a, Unary k);
  TensorRef sum(TensorRef a);   // (1,1)
  TensorRef mean(TensorRef a);  // (1,1)
  TensorRef slice_cols(TensorRef a, int c0, int c1);
  TensorRef concat_cols(const std::vector<TensorRef>& parts);
  TensorRef concat_rows(const std::vector<TensorRef>& parts);
  TensorRef stop_gradient(TensorRef a);
  TensorRef scale_rows(TensorRef a, const Tensor2& w);  // w (rows,1), constant weights
  TensorRef center_cols(TensorRef a);                   // subtract per-column mean
  // mean over rows of softmax cross-entropy against constant target rows
  TensorRef softmax_xent_mean(TensorRef logits, const Tensor2& target_probs);

  // Block layout helpers for the diagonal state-space recurrence. States are
  // stored as (batch, channels*state_dim) with each channel's state contiguous.
  TensorRef repeat_cols_block(TensorRef a, int n);  // (B,d) -> (B,d*n), out[b,i*n+j]=a[b,i]
  TensorRef tile_cols_block(TensorRef a, int d);    // (B,n) -> (B,d*n), out[b,i*n+j]=a[b,j]
  TensorRef block_row_sums(TensorRef a, int n);     // (B,d*n) -> (B,d), sum over j

  // ---- reverse pass ----
  // out must be 1x1 and produced by this tape; seeds with 1 and accumulates
  // into every reachable node's grad buffer.
  void backward(TensorRef out);

 private:
  struct Node {
    Tensor2 value;
    Tensor2 grad;  // allocated lazily in backward
    bool needs_grad = false;
    std::function<void(Tape&, const Tensor2& out_grad)> back;
  };

  TensorRef push(Tensor2 v, bool needs_grad,
                 std::function<void(Tape&, const Tensor2&)> back = nullptr);
  Node& node(TensorRef r);
  const Tensor2& val(TensorRef r) const { return nodes_[r.id].value; }
  void accumulate(TensorRef parent, const Tensor2& g);
  void check(TensorRef r) const;

  std::vector<Node> nodes_;
};

}  // namespace gyre
