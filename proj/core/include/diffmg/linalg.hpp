#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <tuple>
#include <vector>

namespace diffmg {

/// Row-major dense matrix, 64-bit precision. Immutable by convention once
/// handed to a kernel: all kernels allocate fresh outputs.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

  static DenseMatrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return values_.empty(); }

  double operator()(std::size_t r, std::size_t c) const {
    return values_[r * cols_ + c];
  }
  double& operator()(std::size_t r, std::size_t c) {
    return values_[r * cols_ + c];
  }

  std::span<const double> row(std::size_t r) const {
    return {values_.data() + r * cols_, cols_};
  }
  std::span<double> row(std::size_t r) {
    return {values_.data() + r * cols_, cols_};
  }

  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  bool same_shape(const DenseMatrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

/// CSR sparse matrix, 64-bit values. Invariants are checked at
/// construction: monotone row offsets, strictly increasing column indices
/// within each row, no stored zeros.
class SparseMatrix {
 public:
  SparseMatrix() = default;
  SparseMatrix(std::size_t rows, std::size_t cols,
               std::vector<std::size_t> row_offsets,
               std::vector<std::size_t> col_indices,
               std::vector<double> values);

  /// Builds from (row, col, value) triplets. Duplicate coordinates are
  /// summed; entries that end up exactly zero are dropped.
  static SparseMatrix from_triplets(
      std::size_t rows, std::size_t cols,
      std::vector<std::tuple<std::size_t, std::size_t, double>> triplets);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t nnz() const { return values_.size(); }

  const std::vector<std::size_t>& row_offsets() const { return row_offsets_; }
  const std::vector<std::size_t>& col_indices() const { return col_indices_; }
  const std::vector<double>& values() const { return values_; }

  std::size_t row_nnz(std::size_t r) const {
    return row_offsets_[r + 1] - row_offsets_[r];
  }

  DenseMatrix to_dense() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> row_offsets_{0};
  std::vector<std::size_t> col_indices_;
  std::vector<double> values_;
};

// ---------------------------------------------------------------------------
// Propagation kernels and their adjoints
// ---------------------------------------------------------------------------

/// result = A * X. Increments the per-thread spmm counter.
DenseMatrix spmm(const SparseMatrix& a, const DenseMatrix& x);

/// result = A^T * G (reverse-mode counterpart of spmm). Increments the
/// per-thread spmm-adjoint counter.
DenseMatrix spmm_adjoint(const SparseMatrix& a, const DenseMatrix& g);

/// Row-normalizes A in the mean-aggregation sense: every nonzero row is
/// rescaled to sum to 1, zero rows stay zero, the sparsity pattern is
/// untouched. Requires nonnegative values.
SparseMatrix row_normalize(const SparseMatrix& a);

// Propagation-call counters. One counter pair per thread, so concurrent
// runs (one run per worker thread) account independently.
std::uint64_t spmm_call_count();
std::uint64_t spmm_adjoint_call_count();
void reset_op_counters();

// ---------------------------------------------------------------------------
// Dense kernels
// ---------------------------------------------------------------------------

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix scale(const DenseMatrix& a, double c);
DenseMatrix transpose(const DenseMatrix& a);
DenseMatrix relu(const DenseMatrix& a);
/// Elementwise upstream * 1[pre > 0]; the subgradient at 0 is taken as 0.
DenseMatrix relu_grad(const DenseMatrix& pre, const DenseMatrix& upstream);
DenseMatrix sigmoid(const DenseMatrix& a);
/// Numerically stable softmax per row (max subtraction); rows sum to 1.
DenseMatrix row_softmax(const DenseMatrix& a);

/// into += c * a
void axpy(double c, const DenseMatrix& a, DenseMatrix& into);
/// Frobenius inner product <a, b>.
double frobenius_dot(const DenseMatrix& a, const DenseMatrix& b);
/// Column sums as a 1 x cols matrix.
DenseMatrix column_sums(const DenseMatrix& a);

}  // namespace diffmg
