#pragma once

#include <initializer_list>
#include <vector>

// Dense row-major 2-D arrays of doubles plus the handful of kernels the rest
// of the code is built on. Everything is 64-bit; shapes are checked at the
// kernel boundary and mismatches throw.

namespace gyre {

struct Tensor2 {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Tensor2() = default;
  Tensor2(int r, int c, double fill = 0.0);

  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
  double* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
  const double* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }
  int size() const { return rows * cols; }
  bool same_shape(const Tensor2& o) const { return rows == o.rows && cols == o.cols; }
  bool all_finite() const;
};

// Small literal constructor for tests: tensor_from({{1,2},{3,4}}).
Tensor2 tensor_from(std::initializer_list<std::initializer_list<double>> rows);

[[noreturn]] void shape_fail(const char* op, const Tensor2& a, const Tensor2& b);

// a(r,k) * b(k,c)
Tensor2 matmul(const Tensor2& a, const Tensor2& b);
// a(r,k) * b(c,k)^T  -- row-by-row dot products, the layout used by MLP layers
Tensor2 matmul_nt(const Tensor2& a, const Tensor2& b);
// a(k,r)^T * b(k,c)
Tensor2 matmul_tn(const Tensor2& a, const Tensor2& b);

Tensor2 add(const Tensor2& a, const Tensor2& b);
Tensor2 sub(const Tensor2& a, const Tensor2& b);
Tensor2 mul(const Tensor2& a, const Tensor2& b);  // elementwise
Tensor2 scale(const Tensor2& a, double s);
Tensor2 transpose(const Tensor2& a);

void add_inplace(Tensor2& dst, const Tensor2& src);
void axpy_inplace(Tensor2& dst, double s, const Tensor2& src);  // dst += s*src
void scale_inplace(Tensor2& a, double s);

// x(n,c) + bias(1,c) broadcast over rows
Tensor2 add_row_broadcast(const Tensor2& x, const Tensor2& bias);
Tensor2 col_sums(const Tensor2& a);  // (1,c)
Tensor2 row_sums(const Tensor2& a);  // (n,1)
double sum_all(const Tensor2& a);
double dot_all(const Tensor2& a, const Tensor2& b);
double max_abs(const Tensor2& a);
bool bit_equal(const Tensor2& a, const Tensor2& b);

Tensor2 concat_cols(const std::vector<const Tensor2*>& parts);
Tensor2 slice_cols(const Tensor2& a, int c0, int c1);  // half-open [c0,c1)
Tensor2 concat_rows(const std::vector<const Tensor2*>& parts);  // vertical stack
Tensor2 slice_rows(const Tensor2& a, int r0, int r1);  // half-open [r0,r1)
Tensor2 repeat_row(const Tensor2& a, int n);           // (1,c) -> (n,c)

}  // namespace gyre
