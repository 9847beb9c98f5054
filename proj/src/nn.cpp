#include "gyre/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace gyre {

Unary act_unary(Act a) {
  switch (a) {
    case Act::SiLU: return Unary::Silu;
    case Act::Tanh: return Unary::Tanh;
    case Act::Softplus: return Unary::Softplus;
    case Act::Square: return Unary::Square;
    case Act::Identity: break;
  }
  throw std::logic_error("act_unary: Identity has no unary kind");
}

std::string act_name(Act a) {
  switch (a) {
    case Act::Identity: return "identity";
    case Act::SiLU: return "silu";
    case Act::Tanh: return "tanh";
    case Act::Softplus: return "softplus";
    case Act::Square: return "square";
  }
  return "?";
}

Act act_from_name(const std::string& name) {
  if (name == "identity") return Act::Identity;
  if (name == "silu") return Act::SiLU;
  if (name == "tanh") return Act::Tanh;
  if (name == "softplus") return Act::Softplus;
  if (name == "square") return Act::Square;
  throw std::invalid_argument("unknown activation: " + name);
}

Mlp mlp_make(const std::vector<int>& dims, Act hidden, Act output, Rng& rng, bool zero_output) {
  if (dims.size() < 2) throw std::invalid_argument("mlp_make: need at least in,out dims");
  Mlp m;
  m.hidden_act = hidden;
  m.output_act = output;
  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    const int in = dims[l], out = dims[l + 1];
    if (in <= 0 || out <= 0) throw std::invalid_argument("mlp_make: nonpositive dim");
    const bool last = l + 2 == dims.size();
    if (last && zero_output) {
      m.w.push_back(Tensor2(out, in, 0.0));
    } else {
      const double limit = std::sqrt(6.0 / (in + out));
      m.w.push_back(rng.uniform_tensor(out, in, -limit, limit));
    }
    m.b.push_back(Tensor2(1, out, 0.0));
  }
  return m;
}

namespace {

void apply_act_inplace(Tensor2& x, Act a) {
  if (a == Act::Identity) return;
  const Unary k = act_unary(a);
  for (double& v : x.data) v = unary_eval(k, v);
}

}  // namespace

Tensor2 mlp_forward(const Mlp& m, const Tensor2& x) {
  if (x.cols != m.in_dim()) throw std::invalid_argument("mlp_forward: input dim mismatch");
  Tensor2 h = x;
  for (int l = 0; l < m.layer_count(); ++l) {
    h = add_row_broadcast(matmul_nt(h, m.w[l]), m.b[l]);
    apply_act_inplace(h, l + 1 == m.layer_count() ? m.output_act : m.hidden_act);
  }
  return h;
}

void mlp_value_and_input_grad(const Mlp& m, const Tensor2& x, Tensor2* value,
                              Tensor2* input_grad) {
  if (m.out_dim() != 1 || m.output_act != Act::Identity)
    throw std::invalid_argument("mlp_value_and_input_grad: needs scalar Identity head");
  const int layers = m.layer_count();
  // forward keeping pre-activations
  std::vector<Tensor2> pre(layers);
  Tensor2 h = x;
  for (int l = 0; l < layers; ++l) {
    pre[l] = add_row_broadcast(matmul_nt(h, m.w[l]), m.b[l]);
    h = pre[l];
    if (l + 1 < layers) apply_act_inplace(h, m.hidden_act);
  }
  if (value) *value = h;
  if (!input_grad) return;
  // reverse sweep: u starts as ones (d scalar / d pre_last)
  Tensor2 u(x.rows, 1, 1.0);
  for (int l = layers - 1; l >= 0; --l) {
    Tensor2 gin = matmul(u, m.w[l]);  // (batch,in_l)
    if (l > 0 && m.hidden_act != Act::Identity) {
      const Unary k = act_unary(m.hidden_act);
      const Tensor2& p = pre[l - 1];
      for (int i = 0; i < gin.size(); ++i) gin.data[i] *= unary_deriv(k, p.data[i]);
    }
    u = std::move(gin);
  }
  *input_grad = std::move(u);
}

MlpRefs mlp_bind(Tape& t, const Mlp& m, const std::string& name,
                 std::vector<std::pair<std::string, TensorRef>>* bound) {
  MlpRefs r;
  r.hidden_act = m.hidden_act;
  r.output_act = m.output_act;
  for (int l = 0; l < m.layer_count(); ++l) {
    r.w.push_back(t.leaf(m.w[l]));
    r.b.push_back(t.leaf(m.b[l]));
    if (bound) {
      bound->emplace_back(name + ".w" + std::to_string(l), r.w.back());
      bound->emplace_back(name + ".b" + std::to_string(l), r.b.back());
    }
  }
  return r;
}

MlpRefs mlp_bind_const(Tape& t, const Mlp& m) {
  MlpRefs r;
  r.hidden_act = m.hidden_act;
  r.output_act = m.output_act;
  for (int l = 0; l < m.layer_count(); ++l) {
    r.w.push_back(t.constant(m.w[l]));
    r.b.push_back(t.constant(m.b[l]));
  }
  return r;
}

TensorRef mlp_forward(Tape& t, const MlpRefs& m, TensorRef x) {
  TensorRef h = x;
  const int layers = static_cast<int>(m.w.size());
  for (int l = 0; l < layers; ++l) {
    h = t.add_row(t.matmul_nt(h, m.w[l]), m.b[l]);
    const Act a = l + 1 == layers ? m.output_act : m.hidden_act;
    if (a != Act::Identity) h = t.unary(h, act_unary(a));
  }
  return h;
}

void mlp_value_and_input_grad(Tape& t, const MlpRefs& m, TensorRef x, TensorRef* value,
                              TensorRef* input_grad) {
  if (m.output_act != Act::Identity)
    throw std::invalid_argument("mlp_value_and_input_grad: needs Identity output");
  const int layers = static_cast<int>(m.w.size());
  std::vector<TensorRef> pre(layers);
  TensorRef h = x;
  for (int l = 0; l < layers; ++l) {
    pre[l] = t.add_row(t.matmul_nt(h, m.w[l]), m.b[l]);
    h = pre[l];
    if (l + 1 < layers) h = t.unary(h, act_unary(m.hidden_act));
  }
  if (t.value(h).cols != 1)
    throw std::invalid_argument("mlp_value_and_input_grad: needs scalar head");
  if (value) *value = h;
  if (!input_grad) return;
  // The input-gradient is expressed as a taped forward computation (activation
  // derivatives are ordinary ops), so training gradients flow through it.
  TensorRef u = t.constant(Tensor2(t.value(x).rows, 1, 1.0));
  for (int l = layers - 1; l >= 0; --l) {
    TensorRef gin = t.matmul(u, m.w[l]);
    if (l > 0 && m.hidden_act != Act::Identity) {
      const Unary grad_kind = m.hidden_act == Act::SiLU   ? Unary::SiluGrad
                              : m.hidden_act == Act::Tanh ? Unary::TanhGrad
                              : m.hidden_act == Act::Square
                                  ? Unary::SquareGrad
                                  : Unary::Sigmoid;  // Softplus'
      gin = t.mul(gin, t.unary(pre[l - 1], grad_kind));
    }
    u = gin;
  }
  *input_grad = u;
}

Mlp mlp_grads(Tape& t, const MlpRefs& refs, const Mlp& like) {
  Mlp g = like;
  for (size_t l = 0; l < refs.w.size(); ++l) {
    g.w[l] = t.grad(refs.w[l]);
    g.b[l] = t.grad(refs.b[l]);
  }
  return g;
}

}  // namespace gyre
