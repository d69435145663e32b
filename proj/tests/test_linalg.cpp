#include <cmath>
#include <vector>

#include "diffmg/errors.hpp"
#include "diffmg/linalg.hpp"
#include "doctest.h"

using namespace diffmg;

TEST_SUITE("linalg") {

TEST_CASE("dense matmul known 2x3 * 3x2") {
  DenseMatrix a(2, 3);
  a(0, 0) = 1; a(0, 1) = 2; a(0, 2) = 3;
  a(1, 0) = 4; a(1, 1) = 5; a(1, 2) = 6;
  DenseMatrix b(3, 2);
  b(0, 0) = 7; b(0, 1) = 8;
  b(1, 0) = 9; b(1, 1) = 10;
  b(2, 0) = 11; b(2, 1) = 12;
  const DenseMatrix c = matmul(a, b);
  REQUIRE(c.rows() == 2);
  REQUIRE(c.cols() == 2);
  CHECK(c(0, 0) == doctest::Approx(58).epsilon(1e-15));
  CHECK(c(0, 1) == doctest::Approx(64).epsilon(1e-15));
  CHECK(c(1, 0) == doctest::Approx(139).epsilon(1e-15));
  CHECK(c(1, 1) == doctest::Approx(154).epsilon(1e-15));
}

TEST_CASE("matmul shape mismatch throws") {
  CHECK_THROWS_AS(matmul(DenseMatrix(2, 3), DenseMatrix(2, 3)), ShapeError);
}

TEST_CASE("from_triplets sums duplicates and drops zeros") {
  auto m = SparseMatrix::from_triplets(
      2, 2, {{0, 0, 1.0}, {0, 0, 2.0}, {1, 1, 5.0}, {1, 1, -5.0}, {1, 0, 4.0}});
  CHECK(m.nnz() == 2);  // (0,0)=3 and (1,0)=4; (1,1) cancelled out
  const DenseMatrix d = m.to_dense();
  CHECK(d(0, 0) == 3.0);
  CHECK(d(1, 0) == 4.0);
  CHECK(d(1, 1) == 0.0);
}

TEST_CASE("csr constructor validates invariants") {
  // decreasing column indices within a row
  CHECK_THROWS_AS(SparseMatrix(1, 3, {0, 2}, {2, 1}, {1.0, 1.0}), ShapeError);
  // offsets not monotone
  CHECK_THROWS_AS(SparseMatrix(2, 2, {0, 2, 1}, {0, 1}, {1.0, 1.0}),
                  ShapeError);
  // column out of range
  CHECK_THROWS_AS(SparseMatrix(1, 2, {0, 1}, {5}, {1.0}), ShapeError);
  // stored zero
  CHECK_THROWS_AS(SparseMatrix(1, 2, {0, 1}, {0}, {0.0}), ShapeError);
}

TEST_CASE("spmm known 3x3 times 3x2") {
  // A = [[2,0,3],[0,4,0],[5,0,6]]
  auto a = SparseMatrix::from_triplets(
      3, 3, {{0, 0, 2.0}, {0, 2, 3.0}, {1, 1, 4.0}, {2, 0, 5.0}, {2, 2, 6.0}});
  DenseMatrix x(3, 2);
  x(0, 0) = 1; x(0, 1) = 2;
  x(1, 0) = 3; x(1, 1) = 4;
  x(2, 0) = 5; x(2, 1) = 6;
  const DenseMatrix y = spmm(a, x);
  CHECK(y(0, 0) == 17.0);  // 2*1 + 3*5
  CHECK(y(0, 1) == 22.0);
  CHECK(y(1, 0) == 12.0);
  CHECK(y(1, 1) == 16.0);
  CHECK(y(2, 0) == 35.0);  // 5*1 + 6*5
  CHECK(y(2, 1) == 46.0);
}

TEST_CASE("spmm_adjoint equals dense transpose product") {
  auto a = SparseMatrix::from_triplets(
      3, 4, {{0, 1, 2.0}, {1, 0, -1.0}, {1, 3, 0.5}, {2, 2, 3.0}});
  DenseMatrix g(3, 2);
  double v = 0.25;
  for (double& x : g.values()) x = (v += 0.5);
  const DenseMatrix got = spmm_adjoint(a, g);
  const DenseMatrix want = matmul(transpose(a.to_dense()), g);
  REQUIRE(got.rows() == 4);
  REQUIRE(got.cols() == 2);
  for (std::size_t i = 0; i < got.values().size(); ++i) {
    CHECK(got.values()[i] == doctest::Approx(want.values()[i]).epsilon(1e-14));
  }
}

TEST_CASE("op counters track spmm and adjoint calls per thread") {
  auto a = SparseMatrix::from_triplets(2, 2, {{0, 0, 1.0}, {1, 1, 1.0}});
  DenseMatrix x(2, 2, 1.0);
  reset_op_counters();
  CHECK(spmm_call_count() == 0);
  CHECK(spmm_adjoint_call_count() == 0);
  (void)spmm(a, x);
  (void)spmm(a, x);
  (void)spmm_adjoint(a, x);
  CHECK(spmm_call_count() == 2);
  CHECK(spmm_adjoint_call_count() == 1);
  reset_op_counters();
  CHECK(spmm_call_count() == 0);
}

TEST_CASE("row_normalize rescales nonzero rows to sum 1") {
  auto a = SparseMatrix::from_triplets(3, 3,
                                       {{0, 0, 2.0}, {0, 1, 6.0}, {2, 2, 5.0}});
  const SparseMatrix n = row_normalize(a);
  const DenseMatrix d = n.to_dense();
  CHECK(d(0, 0) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(d(0, 1) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(d(1, 0) == 0.0);  // empty row stays empty
  CHECK(d(2, 2) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(n.nnz() == a.nnz());
}

TEST_CASE("row_normalize rejects negative values") {
  auto a = SparseMatrix::from_triplets(1, 2, {{0, 0, -1.0}, {0, 1, 2.0}});
  CHECK_THROWS_AS(row_normalize(a), ShapeError);
}

TEST_CASE("relu and relu_grad with zero subgradient at the kink") {
  DenseMatrix pre(1, 4);
  pre(0, 0) = -2.0; pre(0, 1) = 0.0; pre(0, 2) = 0.5; pre(0, 3) = 3.0;
  const DenseMatrix r = relu(pre);
  CHECK(r(0, 0) == 0.0);
  CHECK(r(0, 1) == 0.0);
  CHECK(r(0, 2) == 0.5);
  CHECK(r(0, 3) == 3.0);
  DenseMatrix up(1, 4, 10.0);
  const DenseMatrix g = relu_grad(pre, up);
  CHECK(g(0, 0) == 0.0);
  CHECK(g(0, 1) == 0.0);  // subgradient at exactly 0 is 0
  CHECK(g(0, 2) == 10.0);
  CHECK(g(0, 3) == 10.0);
}

TEST_CASE("row_softmax rows sum to one and order is preserved") {
  DenseMatrix a(2, 3);
  a(0, 0) = 1; a(0, 1) = 2; a(0, 2) = 3;
  a(1, 0) = 1000; a(1, 1) = 1000; a(1, 2) = 1000;  // max subtraction guard
  const DenseMatrix s = row_softmax(a);
  for (std::size_t r = 0; r < 2; ++r) {
    double sum = 0;
    for (std::size_t c = 0; c < 3; ++c) sum += s(r, c);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));
  }
  CHECK(s(0, 0) < s(0, 1));
  CHECK(s(0, 1) < s(0, 2));
  CHECK(s(1, 0) == doctest::Approx(1.0 / 3).epsilon(1e-14));
}

TEST_CASE("sigmoid midpoint and symmetry") {
  DenseMatrix a(1, 3);
  a(0, 0) = 0.0; a(0, 1) = 2.0; a(0, 2) = -2.0;
  const DenseMatrix s = sigmoid(a);
  CHECK(s(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(s(0, 1) + s(0, 2) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("transpose, add, scale, axpy, frobenius_dot, column_sums") {
  DenseMatrix a(2, 2);
  a(0, 0) = 1; a(0, 1) = 2; a(1, 0) = 3; a(1, 1) = 4;
  const DenseMatrix t = transpose(a);
  CHECK(t(0, 1) == 3.0);
  CHECK(t(1, 0) == 2.0);

  const DenseMatrix sum = add(a, a);
  CHECK(sum(1, 1) == 8.0);
  CHECK_THROWS_AS(add(a, DenseMatrix(1, 2)), ShapeError);

  const DenseMatrix sc = scale(a, -0.5);
  CHECK(sc(1, 0) == -1.5);

  DenseMatrix into(2, 2, 1.0);
  axpy(2.0, a, into);
  CHECK(into(0, 0) == 3.0);
  CHECK(into(1, 1) == 9.0);

  CHECK(frobenius_dot(a, a) == 30.0);  // 1 + 4 + 9 + 16

  const DenseMatrix cs = column_sums(a);
  REQUIRE(cs.rows() == 1);
  CHECK(cs(0, 0) == 4.0);
  CHECK(cs(0, 1) == 6.0);
}

TEST_CASE("identity and to_dense round trip") {
  const DenseMatrix i3 = DenseMatrix::identity(3);
  CHECK(i3(0, 0) == 1.0);
  CHECK(i3(0, 1) == 0.0);
  auto sp = SparseMatrix::from_triplets(3, 3,
                                        {{0, 0, 1.0}, {1, 1, 1.0}, {2, 2, 1.0}});
  const DenseMatrix d = sp.to_dense();
  for (std::size_t i = 0; i < 9; ++i) CHECK(d.values()[i] == i3.values()[i]);
}

}  // TEST_SUITE
