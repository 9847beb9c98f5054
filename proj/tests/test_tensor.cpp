#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gyre/rng.hpp"
#include "gyre/tensor.hpp"

using namespace gyre;

TEST_CASE("matmul against hand-computed 2x3 * 3x2") {
  Tensor2 a = tensor_from({{1, 2, 3}, {4, 5, 6}});
  Tensor2 b = tensor_from({{7, 8}, {9, 10}, {11, 12}});
  Tensor2 c = matmul(a, b);
  CHECK(c.rows == 2);
  CHECK(c.cols == 2);
  CHECK(c.at(0, 0) == doctest::Approx(58));
  CHECK(c.at(0, 1) == doctest::Approx(64));
  CHECK(c.at(1, 0) == doctest::Approx(139));
  CHECK(c.at(1, 1) == doctest::Approx(154));
}

TEST_CASE("matmul variants agree with explicit transposes") {
  Rng rng(7);
  Tensor2 a = rng.gaussian_tensor(4, 5, 0.0, 1.0);
  Tensor2 b = rng.gaussian_tensor(6, 5, 0.0, 1.0);
  Tensor2 via_nt = matmul_nt(a, b);
  Tensor2 via_plain = matmul(a, transpose(b));
  CHECK(max_abs(sub(via_nt, via_plain)) == doctest::Approx(0.0).epsilon(1e-14));

  Tensor2 c = rng.gaussian_tensor(5, 4, 0.0, 1.0);
  Tensor2 d = rng.gaussian_tensor(5, 3, 0.0, 1.0);
  Tensor2 via_tn = matmul_tn(c, d);
  Tensor2 via_plain2 = matmul(transpose(c), d);
  CHECK(max_abs(sub(via_tn, via_plain2)) == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("shape mismatches throw") {
  Tensor2 a(2, 3), b(2, 3);
  CHECK_THROWS(matmul(a, b));
  CHECK_THROWS(add(a, Tensor2(3, 2)));
  CHECK_THROWS(add_row_broadcast(a, Tensor2(1, 2)));
  CHECK_THROWS(slice_cols(a, 2, 1));
}

TEST_CASE("elementwise ops and reductions") {
  Tensor2 a = tensor_from({{1, -2}, {3, -4}});
  Tensor2 b = tensor_from({{2, 2}, {2, 2}});
  CHECK(sum_all(add(a, b)) == doctest::Approx(6.0));
  CHECK(sum_all(mul(a, b)) == doctest::Approx(-4.0));
  CHECK(max_abs(a) == doctest::Approx(4.0));
  CHECK(dot_all(a, b) == doctest::Approx(-4.0));
  Tensor2 cs = col_sums(a);
  CHECK(cs.at(0, 0) == doctest::Approx(4.0));
  CHECK(cs.at(0, 1) == doctest::Approx(-6.0));
  Tensor2 rs = row_sums(a);
  CHECK(rs.at(0, 0) == doctest::Approx(-1.0));
  CHECK(rs.at(1, 0) == doctest::Approx(-1.0));
}

TEST_CASE("concat and slice roundtrip") {
  Tensor2 a = tensor_from({{1, 2}, {3, 4}});
  Tensor2 b = tensor_from({{5}, {6}});
  Tensor2 c = concat_cols({&a, &b});
  CHECK(c.cols == 3);
  CHECK(bit_equal(slice_cols(c, 0, 2), a));
  CHECK(bit_equal(slice_cols(c, 2, 3), b));
}

TEST_CASE("finite check and repeat_row") {
  Tensor2 a(2, 2, 1.0);
  CHECK(a.all_finite());
  a.at(1, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(a.all_finite());
  Tensor2 r = repeat_row(tensor_from({{1, 2, 3}}), 3);
  CHECK(r.rows == 3);
  CHECK(r.at(2, 1) == doctest::Approx(2.0));
}

TEST_CASE("seed derivation separates streams") {
  const uint64_t s1 = derive_seed(42, "env", 0);
  const uint64_t s2 = derive_seed(42, "env", 1);
  const uint64_t s3 = derive_seed(42, "replay", 0);
  CHECK(s1 != s2);
  CHECK(s1 != s3);
  CHECK(s1 == derive_seed(42, "env", 0));
}
