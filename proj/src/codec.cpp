#include "gyre/codec.hpp"

#include <cmath>
#include <stdexcept>

namespace gyre {

double symlog(double x) {
  if (!std::isfinite(x)) throw std::invalid_argument("symlog: non-finite input");
  return x >= 0.0 ? std::log1p(x) : -std::log1p(-x);
}

double symexp(double y) {
  if (!std::isfinite(y)) throw std::invalid_argument("symexp: non-finite input");
  return y >= 0.0 ? std::expm1(y) : -std::expm1(-y);
}

TwoHotCodec::TwoHotCodec(int bins, double lo_, double hi_) : bin_count(bins), lo(lo_), hi(hi_) {
  if (bin_count < 3 || bin_count % 2 == 0)
    throw std::invalid_argument("TwoHotCodec: bin_count must be odd and >= 3");
  if (!(lo < 0.0 && 0.0 < hi))
    throw std::invalid_argument("TwoHotCodec: need lo < 0 < hi");
  // the middle bin must sit exactly at 0 so that v=0 encodes one-hot
  if (std::fabs(lo + hi) > 1e-12 * (hi - lo))
    throw std::invalid_argument("TwoHotCodec: range must be symmetric about 0");
}

double TwoHotCodec::center(int i) const { return lo + i * bin_width(); }

std::vector<double> TwoHotCodec::encode(double v) const {
  double y = symlog(v);
  if (y <= lo) y = lo;
  if (y >= hi) y = hi;
  const double step = bin_width();
  int i = static_cast<int>(std::floor((y - lo) / step));
  if (i > bin_count - 2) i = bin_count - 2;
  if (i < 0) i = 0;
  const double frac = (y - center(i)) / step;
  std::vector<double> probs(bin_count, 0.0);
  probs[i] = 1.0 - frac;
  probs[i + 1] += frac;
  return probs;
}

double TwoHotCodec::decode(const std::vector<double>& probs) const {
  if (static_cast<int>(probs.size()) != bin_count)
    throw std::invalid_argument("TwoHotCodec::decode: wrong length");
  double total = 0.0, expect = 0.0;
  for (int i = 0; i < bin_count; ++i) {
    const double p = probs[i];
    if (p < -1e-12 || !std::isfinite(p))
      throw std::invalid_argument("TwoHotCodec::decode: malformed distribution");
    total += p;
    expect += p * center(i);
  }
  if (std::fabs(total - 1.0) > 1e-6)
    throw std::invalid_argument("TwoHotCodec::decode: probabilities do not sum to 1");
  return symexp(expect);
}

Tensor2 TwoHotCodec::encode_rows(const Tensor2& values) const {
  if (values.cols != 1) throw std::invalid_argument("encode_rows: expected (n,1)");
  Tensor2 out(values.rows, bin_count, 0.0);
  for (int r = 0; r < values.rows; ++r) {
    const std::vector<double> p = encode(values.data[r]);
    double* orow = out.row(r);
    for (int i = 0; i < bin_count; ++i) orow[i] = p[i];
  }
  return out;
}

Tensor2 TwoHotCodec::decode_rows(const Tensor2& probs) const {
  if (probs.cols != bin_count) throw std::invalid_argument("decode_rows: wrong width");
  Tensor2 out(probs.rows, 1);
  std::vector<double> row(bin_count);
  for (int r = 0; r < probs.rows; ++r) {
    const double* prow = probs.row(r);
    for (int i = 0; i < bin_count; ++i) row[i] = prow[i];
    out.data[r] = decode(row);
  }
  return out;
}

Tensor2 TwoHotCodec::softmax_rows(const Tensor2& logits) const {
  if (logits.cols != bin_count) throw std::invalid_argument("softmax_rows: wrong width");
  Tensor2 out(logits.rows, bin_count);
  for (int r = 0; r < logits.rows; ++r) {
    const double* lrow = logits.row(r);
    double* orow = out.row(r);
    double m = lrow[0];
    for (int i = 1; i < bin_count; ++i) m = std::max(m, lrow[i]);
    double z = 0.0;
    for (int i = 0; i < bin_count; ++i) {
      orow[i] = std::exp(lrow[i] - m);
      z += orow[i];
    }
    for (int i = 0; i < bin_count; ++i) orow[i] /= z;
  }
  return out;
}

Tensor2 TwoHotCodec::decode_logits_rows(const Tensor2& logits) const {
  return decode_rows(softmax_rows(logits));
}

}  // namespace gyre
