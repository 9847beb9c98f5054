#include "gyre/tensor.hpp"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <sstream>
#include <stdexcept>

namespace gyre {

[[noreturn]] void shape_fail(const char* op, const Tensor2& a, const Tensor2& b) {
  std::ostringstream msg;
  msg << op << ": shape mismatch (" << a.rows << "x" << a.cols << ") vs (" << b.rows << "x"
      << b.cols << ")";
  throw std::invalid_argument(msg.str());
}

Tensor2::Tensor2(int r, int c, double fill)
    : rows(r), cols(c), data(static_cast<size_t>(r) * static_cast<size_t>(c), fill) {
  if (r < 0 || c < 0) throw std::invalid_argument("Tensor2: negative dims");
}

bool Tensor2::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

Tensor2 tensor_from(std::initializer_list<std::initializer_list<double>> rows) {
  const int r = static_cast<int>(rows.size());
  const int c = r == 0 ? 0 : static_cast<int>(rows.begin()->size());
  Tensor2 out(r, c);
  int i = 0;
  for (const auto& row : rows) {
    if (static_cast<int>(row.size()) != c) throw std::invalid_argument("tensor_from: ragged rows");
    int j = 0;
    for (double v : row) out.at(i, j++) = v;
    ++i;
  }
  return out;
}

Tensor2 matmul(const Tensor2& a, const Tensor2& b) {
  if (a.cols != b.rows) shape_fail("matmul", a, b);
  Tensor2 out(a.rows, b.cols, 0.0);
  for (int i = 0; i < a.rows; ++i) {
    const double* arow = a.row(i);
    double* orow = out.row(i);
    for (int k = 0; k < a.cols; ++k) {
      const double aik = arow[k];
      const double* brow = b.row(k);
      for (int j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

Tensor2 matmul_nt(const Tensor2& a, const Tensor2& b) {
  if (a.cols != b.cols) shape_fail("matmul_nt", a, b);
  Tensor2 out(a.rows, b.rows);
  for (int i = 0; i < a.rows; ++i) {
    const double* arow = a.row(i);
    double* orow = out.row(i);
    for (int j = 0; j < b.rows; ++j) {
      const double* brow = b.row(j);
      double acc = 0.0;
      for (int k = 0; k < a.cols; ++k) acc += arow[k] * brow[k];
      orow[j] = acc;
    }
  }
  return out;
}

Tensor2 matmul_tn(const Tensor2& a, const Tensor2& b) {
  if (a.rows != b.rows) shape_fail("matmul_tn", a, b);
  Tensor2 out(a.cols, b.cols, 0.0);
  for (int k = 0; k < a.rows; ++k) {
    const double* arow = a.row(k);
    const double* brow = b.row(k);
    for (int i = 0; i < a.cols; ++i) {
      const double aki = arow[i];
      if (aki == 0.0) continue;
      double* orow = out.row(i);
      for (int j = 0; j < b.cols; ++j) orow[j] += aki * brow[j];
    }
  }
  return out;
}

Tensor2 add(const Tensor2& a, const Tensor2& b) {
  if (!a.same_shape(b)) shape_fail("add", a, b);
  Tensor2 out = a;
  for (int i = 0; i < out.size(); ++i) out.data[i] += b.data[i];
  return out;
}

Tensor2 sub(const Tensor2& a, const Tensor2& b) {
  if (!a.same_shape(b)) shape_fail("sub", a, b);
  Tensor2 out = a;
  for (int i = 0; i < out.size(); ++i) out.data[i] -= b.data[i];
  return out;
}

Tensor2 mul(const Tensor2& a, const Tensor2& b) {
  if (!a.same_shape(b)) shape_fail("mul", a, b);
  Tensor2 out = a;
  for (int i = 0; i < out.size(); ++i) out.data[i] *= b.data[i];
  return out;
}

Tensor2 scale(const Tensor2& a, double s) {
  Tensor2 out = a;
  for (double& v : out.data) v *= s;
  return out;
}

Tensor2 transpose(const Tensor2& a) {
  Tensor2 out(a.cols, a.rows);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < a.cols; ++j) out.at(j, i) = a.at(i, j);
  return out;
}

void add_inplace(Tensor2& dst, const Tensor2& src) {
  if (!dst.same_shape(src)) shape_fail("add_inplace", dst, src);
  for (int i = 0; i < dst.size(); ++i) dst.data[i] += src.data[i];
}

void axpy_inplace(Tensor2& dst, double s, const Tensor2& src) {
  if (!dst.same_shape(src)) shape_fail("axpy_inplace", dst, src);
  for (int i = 0; i < dst.size(); ++i) dst.data[i] += s * src.data[i];
}

void scale_inplace(Tensor2& a, double s) {
  for (double& v : a.data) v *= s;
}

Tensor2 add_row_broadcast(const Tensor2& x, const Tensor2& bias) {
  if (bias.rows != 1 || bias.cols != x.cols) shape_fail("add_row_broadcast", x, bias);
  Tensor2 out = x;
  for (int i = 0; i < x.rows; ++i) {
    double* orow = out.row(i);
    const double* brow = bias.row(0);
    for (int j = 0; j < x.cols; ++j) orow[j] += brow[j];
  }
  return out;
}

Tensor2 col_sums(const Tensor2& a) {
  Tensor2 out(1, a.cols, 0.0);
  for (int i = 0; i < a.rows; ++i) {
    const double* arow = a.row(i);
    for (int j = 0; j < a.cols; ++j) out.data[j] += arow[j];
  }
  return out;
}

Tensor2 row_sums(const Tensor2& a) {
  Tensor2 out(a.rows, 1, 0.0);
  for (int i = 0; i < a.rows; ++i) {
    const double* arow = a.row(i);
    double acc = 0.0;
    for (int j = 0; j < a.cols; ++j) acc += arow[j];
    out.data[i] = acc;
  }
  return out;
}

double sum_all(const Tensor2& a) {
  double acc = 0.0;
  for (double v : a.data) acc += v;
  return acc;
}

double dot_all(const Tensor2& a, const Tensor2& b) {
  if (!a.same_shape(b)) shape_fail("dot_all", a, b);
  double acc = 0.0;
  for (int i = 0; i < a.size(); ++i) acc += a.data[i] * b.data[i];
  return acc;
}

double max_abs(const Tensor2& a) {
  double m = 0.0;
  for (double v : a.data) m = std::max(m, std::fabs(v));
  return m;
}

bool bit_equal(const Tensor2& a, const Tensor2& b) {
  if (!a.same_shape(b)) return false;
  return std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0;
}

Tensor2 concat_cols(const std::vector<const Tensor2*>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
  int rows = parts[0]->rows;
  int cols = 0;
  for (const Tensor2* p : parts) {
    if (p->rows != rows) throw std::invalid_argument("concat_cols: row mismatch");
    cols += p->cols;
  }
  Tensor2 out(rows, cols);
  for (int i = 0; i < rows; ++i) {
    double* orow = out.row(i);
    int off = 0;
    for (const Tensor2* p : parts) {
      const double* prow = p->row(i);
      for (int j = 0; j < p->cols; ++j) orow[off + j] = prow[j];
      off += p->cols;
    }
  }
  return out;
}

Tensor2 slice_cols(const Tensor2& a, int c0, int c1) {
  if (c0 < 0 || c1 > a.cols || c0 > c1) throw std::invalid_argument("slice_cols: bad range");
  Tensor2 out(a.rows, c1 - c0);
  for (int i = 0; i < a.rows; ++i) {
    const double* arow = a.row(i);
    double* orow = out.row(i);
    for (int j = c0; j < c1; ++j) orow[j - c0] = arow[j];
  }
  return out;
}

Tensor2 concat_rows(const std::vector<const Tensor2*>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
  const int cols = parts[0]->cols;
  int rows = 0;
  for (const Tensor2* p : parts) {
    if (p->cols != cols) throw std::invalid_argument("concat_rows: col mismatch");
    rows += p->rows;
  }
  Tensor2 out(rows, cols);
  int r = 0;
  for (const Tensor2* p : parts) {
    std::memcpy(out.row(r), p->data.data(), p->data.size() * sizeof(double));
    r += p->rows;
  }
  return out;
}

Tensor2 slice_rows(const Tensor2& a, int r0, int r1) {
  if (r0 < 0 || r1 > a.rows || r0 > r1) throw std::invalid_argument("slice_rows: bad range");
  Tensor2 out(r1 - r0, a.cols);
  if (out.size() > 0)
    std::memcpy(out.data.data(), a.row(r0), out.data.size() * sizeof(double));
  return out;
}

Tensor2 repeat_row(const Tensor2& a, int n) {
  if (a.rows != 1) throw std::invalid_argument("repeat_row: expected a single row");
  Tensor2 out(n, a.cols);
  for (int i = 0; i < n; ++i) {
    double* orow = out.row(i);
    for (int j = 0; j < a.cols; ++j) orow[j] = a.data[j];
  }
  return out;
}

}  // namespace gyre
