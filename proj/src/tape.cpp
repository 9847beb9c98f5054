#include "gyre/tape.hpp"

#include <cmath>
#include <stdexcept>

namespace gyre {

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x))); }

}  // namespace

double unary_eval(Unary k, double x) {
  switch (k) {
    case Unary::Silu: return x * sigmoid(x);
    case Unary::SiluGrad: {
      const double s = sigmoid(x);
      return s * (1.0 + x * (1.0 - s));
    }
    case Unary::Tanh: return std::tanh(x);
    case Unary::TanhGrad: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Unary::Sigmoid: return sigmoid(x);
    case Unary::Softplus: return softplus(x);
    case Unary::Exp: return std::exp(x);
    case Unary::Abs: return std::fabs(x);
    case Unary::Square: return x * x;
    case Unary::SquareGrad: return 2.0 * x;
  }
  throw std::logic_error("unary_eval: bad kind");
}

double unary_deriv(Unary k, double x) {
  switch (k) {
    case Unary::Silu: {
      const double s = sigmoid(x);
      return s * (1.0 + x * (1.0 - s));
    }
    case Unary::SiluGrad: {
      // second derivative of silu: s(1-s) * (2 + x(1-2s))
      const double s = sigmoid(x);
      return s * (1.0 - s) * (2.0 + x * (1.0 - 2.0 * s));
    }
    case Unary::Tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Unary::TanhGrad: {
      const double t = std::tanh(x);
      return -2.0 * t * (1.0 - t * t);
    }
    case Unary::Sigmoid: {
      const double s = sigmoid(x);
      return s * (1.0 - s);
    }
    case Unary::Softplus: return sigmoid(x);
    case Unary::Exp: return std::exp(x);
    case Unary::Abs: return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
    case Unary::Square: return 2.0 * x;
    case Unary::SquareGrad: return 2.0;
  }
  throw std::logic_error("unary_deriv: bad kind");
}

TensorRef Tape::push(Tensor2 v, bool needs_grad, std::function<void(Tape&, const Tensor2&)> back) {
  Node n;
  n.value = std::move(v);
  n.needs_grad = needs_grad;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return TensorRef{static_cast<int>(nodes_.size()) - 1};
}

Tape::Node& Tape::node(TensorRef r) {
  check(r);
  return nodes_[r.id];
}

void Tape::check(TensorRef r) const {
  if (!r.valid() || r.id >= static_cast<int>(nodes_.size()))
    throw std::invalid_argument("Tape: ref not on this tape");
}

TensorRef Tape::constant(Tensor2 v) { return push(std::move(v), false); }

TensorRef Tape::leaf(Tensor2 v) { return push(std::move(v), true); }

const Tensor2& Tape::value(TensorRef r) const {
  check(r);
  return nodes_[r.id].value;
}

const Tensor2& Tape::grad(TensorRef r) {
  check(r);
  Node& n = nodes_[r.id];
  if (n.grad.size() == 0) n.grad = Tensor2(n.value.rows, n.value.cols, 0.0);
  return n.grad;
}

bool Tape::requires_grad(TensorRef r) const {
  check(r);
  return nodes_[r.id].needs_grad;
}

void Tape::accumulate(TensorRef parent, const Tensor2& g) {
  Node& n = nodes_[parent.id];
  if (!n.needs_grad) return;
  if (n.grad.size() == 0) n.grad = Tensor2(n.value.rows, n.value.cols, 0.0);
  add_inplace(n.grad, g);
}

TensorRef Tape::add(TensorRef a, TensorRef b) {
  Tensor2 v = gyre::add(value(a), value(b));
  bool ng = requires_grad(a) || requires_grad(b);
  return push(std::move(v), ng, [a, b](Tape& t, const Tensor2& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

TensorRef Tape::sub(TensorRef a, TensorRef b) {
  Tensor2 v = gyre::sub(value(a), value(b));
  bool ng = requires_grad(a) || requires_grad(b);
  return push(std::move(v), ng, [a, b](Tape& t, const Tensor2& g) {
    t.accumulate(a, g);
    t.accumulate(b, gyre::scale(g, -1.0));
  });
}

TensorRef Tape::mul(TensorRef a, TensorRef b) {
  Tensor2 v = gyre::mul(value(a), value(b));
  bool ng = requires_grad(a) || requires_grad(b);
  return push(std::move(v), ng, [a, b](Tape& t, const Tensor2& g) {
    t.accumulate(a, gyre::mul(g, t.val(b)));
    t.accumulate(b, gyre::mul(g, t.val(a)));
  });
}

TensorRef Tape::scale(TensorRef a, double s) {
  Tensor2 v = gyre::scale(value(a), s);
  return push(std::move(v), requires_grad(a),
              [a, s](Tape& t, const Tensor2& g) { t.accumulate(a, gyre::scale(g, s)); });
}

TensorRef Tape::matmul(TensorRef a, TensorRef b) {
  Tensor2 v = gyre::matmul(value(a), value(b));
  bool ng = requires_grad(a) || requires_grad(b);
  return push(std::move(v), ng, [a, b](Tape& t, const Tensor2& g) {
    // y = a*b: da = g*b^T, db = a^T*g
    t.accumulate(a, gyre::matmul_nt(g, t.val(b)));
    t.accumulate(b, gyre::matmul_tn(t.val(a), g));
  });
}

TensorRef Tape::matmul_nt(TensorRef a, TensorRef b) {
  Tensor2 v = gyre::matmul_nt(value(a), value(b));
  bool ng = requires_grad(a) || requires_grad(b);
  return push(std::move(v), ng, [a, b](Tape& t, const Tensor2& g) {
    // y = a*b^T: da = g*b, db = g^T*a
    t.accumulate(a, gyre::matmul(g, t.val(b)));
    t.accumulate(b, gyre::matmul_tn(g, t.val(a)));
  });
}

TensorRef Tape::matmul_tn(TensorRef a, TensorRef b) {
  Tensor2 v = gyre::matmul_tn(value(a), value(b));
  bool ng = requires_grad(a) || requires_grad(b);
  return push(std::move(v), ng, [a, b](Tape& t, const Tensor2& g) {
    // y = a^T*b: da = b*g^T -> (k,r) laid out as a; da = (g*b^T)^T = b*g^T
    t.accumulate(a, gyre::matmul_nt(t.val(b), g));
    t.accumulate(b, gyre::matmul(t.val(a), g));
  });
}

TensorRef Tape::add_row(TensorRef x, TensorRef bias) {
  Tensor2 v = add_row_broadcast(value(x), value(bias));
  bool ng = requires_grad(x) || requires_grad(bias);
  return push(std::move(v), ng, [x, bias](Tape& t, const Tensor2& g) {
    t.accumulate(x, g);
    t.accumulate(bias, col_sums(g));
  });
}

TensorRef Tape::unary(TensorRef a, Unary k) {
  const Tensor2& x = value(a);
  Tensor2 v(x.rows, x.cols);
  for (int i = 0; i < x.size(); ++i) v.data[i] = unary_eval(k, x.data[i]);
  return push(std::move(v), requires_grad(a), [a, k](Tape& t, const Tensor2& g) {
    const Tensor2& x = t.val(a);
    Tensor2 gx(x.rows, x.cols);
    for (int i = 0; i < x.size(); ++i) gx.data[i] = g.data[i] * unary_deriv(k, x.data[i]);
    t.accumulate(a, gx);
  });
}

TensorRef Tape::sum(TensorRef a) {
  Tensor2 v(1, 1, sum_all(value(a)));
  return push(std::move(v), requires_grad(a), [a](Tape& t, const Tensor2& g) {
    const Tensor2& x = t.val(a);
    t.accumulate(a, Tensor2(x.rows, x.cols, g.data[0]));
  });
}

TensorRef Tape::mean(TensorRef a) {
  const int n = value(a).size();
  if (n == 0) throw std::invalid_argument("Tape::mean: empty tensor");
  return scale(sum(a), 1.0 / n);
}

TensorRef Tape::slice_cols(TensorRef a, int c0, int c1) {
  Tensor2 v = gyre::slice_cols(value(a), c0, c1);
  return push(std::move(v), requires_grad(a), [a, c0, c1](Tape& t, const Tensor2& g) {
    const Tensor2& x = t.val(a);
    Tensor2 gx(x.rows, x.cols, 0.0);
    for (int i = 0; i < x.rows; ++i)
      for (int j = c0; j < c1; ++j) gx.at(i, j) = g.at(i, j - c0);
    t.accumulate(a, gx);
  });
}

TensorRef Tape::concat_cols(const std::vector<TensorRef>& parts) {
  std::vector<const Tensor2*> vs;
  bool ng = false;
  for (TensorRef r : parts) {
    vs.push_back(&value(r));
    ng = ng || requires_grad(r);
  }
  Tensor2 v = gyre::concat_cols(vs);
  std::vector<TensorRef> ps = parts;
  return push(std::move(v), ng, [ps](Tape& t, const Tensor2& g) {
    int off = 0;
    for (TensorRef r : ps) {
      const int c = t.val(r).cols;
      t.accumulate(r, gyre::slice_cols(g, off, off + c));
      off += c;
    }
  });
}

TensorRef Tape::concat_rows(const std::vector<TensorRef>& parts) {
  std::vector<const Tensor2*> vs;
  bool ng = false;
  for (TensorRef r : parts) {
    vs.push_back(&value(r));
    ng = ng || requires_grad(r);
  }
  Tensor2 v = gyre::concat_rows(vs);
  std::vector<TensorRef> ps = parts;
  return push(std::move(v), ng, [ps](Tape& t, const Tensor2& g) {
    int off = 0;
    for (TensorRef r : ps) {
      const int n = t.val(r).rows;
      t.accumulate(r, gyre::slice_rows(g, off, off + n));
      off += n;
    }
  });
}

TensorRef Tape::stop_gradient(TensorRef a) { return push(value(a), false); }

TensorRef Tape::scale_rows(TensorRef a, const Tensor2& w) {
  const Tensor2& x = value(a);
  if (w.rows != x.rows || w.cols != 1) throw std::invalid_argument("scale_rows: bad weights");
  Tensor2 v = x;
  for (int i = 0; i < x.rows; ++i) {
    double* orow = v.row(i);
    for (int j = 0; j < x.cols; ++j) orow[j] *= w.data[i];
  }
  Tensor2 wc = w;
  return push(std::move(v), requires_grad(a), [a, wc](Tape& t, const Tensor2& g) {
    Tensor2 gx = g;
    for (int i = 0; i < gx.rows; ++i) {
      double* grow = gx.row(i);
      for (int j = 0; j < gx.cols; ++j) grow[j] *= wc.data[i];
    }
    t.accumulate(a, gx);
  });
}

TensorRef Tape::center_cols(TensorRef a) {
  const Tensor2& x = value(a);
  if (x.rows == 0) throw std::invalid_argument("center_cols: empty");
  Tensor2 m = col_sums(x);
  scale_inplace(m, 1.0 / x.rows);
  Tensor2 v = x;
  for (int i = 0; i < x.rows; ++i) {
    double* orow = v.row(i);
    for (int j = 0; j < x.cols; ++j) orow[j] -= m.data[j];
  }
  return push(std::move(v), requires_grad(a), [a](Tape& t, const Tensor2& g) {
    // centering is a self-adjoint projection: backward = center_cols(g)
    Tensor2 gm = col_sums(g);
    scale_inplace(gm, 1.0 / g.rows);
    Tensor2 gx = g;
    for (int i = 0; i < gx.rows; ++i) {
      double* grow = gx.row(i);
      for (int j = 0; j < gx.cols; ++j) grow[j] -= gm.data[j];
    }
    t.accumulate(a, gx);
  });
}

TensorRef Tape::softmax_xent_mean(TensorRef logits, const Tensor2& target_probs) {
  const Tensor2& l = value(logits);
  if (!l.same_shape(target_probs))
    throw std::invalid_argument("softmax_xent_mean: target shape mismatch");
  if (l.rows == 0) throw std::invalid_argument("softmax_xent_mean: empty batch");
  // ce_row = logsumexp(l) - sum(t*l); output = mean over rows
  double total = 0.0;
  Tensor2 softmax(l.rows, l.cols);
  for (int i = 0; i < l.rows; ++i) {
    const double* lr = l.row(i);
    double m = lr[0];
    for (int j = 1; j < l.cols; ++j) m = std::max(m, lr[j]);
    double z = 0.0;
    for (int j = 0; j < l.cols; ++j) z += std::exp(lr[j] - m);
    const double lse = m + std::log(z);
    double tl = 0.0;
    const double* tr = target_probs.row(i);
    double* sr = softmax.row(i);
    for (int j = 0; j < l.cols; ++j) {
      tl += tr[j] * lr[j];
      sr[j] = std::exp(lr[j] - m) / z;
    }
    total += lse - tl;
  }
  Tensor2 v(1, 1, total / l.rows);
  Tensor2 tp = target_probs;
  const int rows = l.rows;
  return push(std::move(v), requires_grad(logits),
              [logits, softmax, tp, rows](Tape& t, const Tensor2& g) {
                Tensor2 gl = gyre::sub(softmax, tp);
                scale_inplace(gl, g.data[0] / rows);
                t.accumulate(logits, gl);
              });
}

TensorRef Tape::repeat_cols_block(TensorRef a, int n) {
  const Tensor2& x = value(a);
  Tensor2 v(x.rows, x.cols * n);
  for (int b = 0; b < x.rows; ++b) {
    const double* xr = x.row(b);
    double* vr = v.row(b);
    for (int i = 0; i < x.cols; ++i)
      for (int j = 0; j < n; ++j) vr[i * n + j] = xr[i];
  }
  return push(std::move(v), requires_grad(a), [a, n](Tape& t, const Tensor2& g) {
    const Tensor2& x = t.val(a);
    Tensor2 gx(x.rows, x.cols, 0.0);
    for (int b = 0; b < x.rows; ++b) {
      const double* gr = g.row(b);
      double* xr = gx.row(b);
      for (int i = 0; i < x.cols; ++i) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j) acc += gr[i * n + j];
        xr[i] = acc;
      }
    }
    t.accumulate(a, gx);
  });
}

TensorRef Tape::tile_cols_block(TensorRef a, int d) {
  const Tensor2& x = value(a);
  const int n = x.cols;
  Tensor2 v(x.rows, d * n);
  for (int b = 0; b < x.rows; ++b) {
    const double* xr = x.row(b);
    double* vr = v.row(b);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < n; ++j) vr[i * n + j] = xr[j];
  }
  return push(std::move(v), requires_grad(a), [a, d](Tape& t, const Tensor2& g) {
    const Tensor2& x = t.val(a);
    const int n = x.cols;
    Tensor2 gx(x.rows, n, 0.0);
    for (int b = 0; b < x.rows; ++b) {
      const double* gr = g.row(b);
      double* xr = gx.row(b);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < n; ++j) xr[j] += gr[i * n + j];
    }
    t.accumulate(a, gx);
  });
}

TensorRef Tape::block_row_sums(TensorRef a, int n) {
  const Tensor2& x = value(a);
  if (x.cols % n != 0) throw std::invalid_argument("block_row_sums: cols not divisible");
  const int d = x.cols / n;
  Tensor2 v(x.rows, d, 0.0);
  for (int b = 0; b < x.rows; ++b) {
    const double* xr = x.row(b);
    double* vr = v.row(b);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < n; ++j) vr[i] += xr[i * n + j];
  }
  return push(std::move(v), requires_grad(a), [a, n](Tape& t, const Tensor2& g) {
    const Tensor2& x = t.val(a);
    const int d = x.cols / n;
    Tensor2 gx(x.rows, x.cols);
    for (int b = 0; b < x.rows; ++b) {
      const double* gr = g.row(b);
      double* xr = gx.row(b);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < n; ++j) xr[i * n + j] = gr[i];
    }
    t.accumulate(a, gx);
  });
}

void Tape::backward(TensorRef out) {
  check(out);
  Node& last = nodes_[out.id];
  if (last.value.rows != 1 || last.value.cols != 1)
    throw std::invalid_argument("Tape::backward: output must be 1x1");
  if (last.grad.size() == 0) last.grad = Tensor2(1, 1, 0.0);
  last.grad.data[0] += 1.0;
  for (int i = out.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.needs_grad || !n.back || n.grad.size() == 0) continue;
    n.back(*this, n.grad);
  }
}

}  // namespace gyre
