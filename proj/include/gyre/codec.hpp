#pragma once

#include <vector>

#include "gyre/tensor.hpp"

// Scalar regression targets are squashed with symlog and represented as
// two-hot distributions over bins spaced uniformly in symlog space. Heads emit
// logits over the bins; decoding takes the expectation of bin centers and maps
// back through symexp.

namespace gyre {

double symlog(double x);  // sign(x) * ln(1+|x|)
double symexp(double y);  // inverse of symlog

struct TwoHotCodec {
  int bin_count = 41;
  double lo = -10.0;  // bin-center range in symlog space
  double hi = 10.0;

  TwoHotCodec() = default;
  TwoHotCodec(int bins, double lo_, double hi_);

  double center(int i) const;  // symlog-space center of bin i
  double bin_width() const { return (hi - lo) / (bin_count - 1); }

  // Distribution over bins with at most two adjacent nonzero entries summing
  // to 1; out-of-range values clamp to the edge bins.
  std::vector<double> encode(double v) const;
  // Expectation of centers under probs, then symexp. Throws on negative
  // entries or a sum away from 1.
  double decode(const std::vector<double>& probs) const;

  // Batched helpers over (batch, bin_count) tensors.
  Tensor2 encode_rows(const Tensor2& values) const;        // values (n,1)
  Tensor2 decode_rows(const Tensor2& probs) const;         // -> (n,1)
  Tensor2 softmax_rows(const Tensor2& logits) const;       // row-wise softmax
  Tensor2 decode_logits_rows(const Tensor2& logits) const; // softmax then decode
};

}  // namespace gyre
