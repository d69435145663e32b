#include "diffmg/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "diffmg/errors.hpp"

namespace diffmg {

namespace {

thread_local std::uint64_t g_spmm_calls = 0;
thread_local std::uint64_t g_spmm_adjoint_calls = 0;

[[noreturn]] void shape_fail(const char* op, std::size_t ar, std::size_t ac,
                             std::size_t br, std::size_t bc) {
  std::ostringstream msg;
  msg << op << ": incompatible shapes (" << ar << "x" << ac << ") vs (" << br
      << "x" << bc << ")";
  throw ShapeError(msg.str());
}

}  // namespace

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

SparseMatrix::SparseMatrix(std::size_t rows, std::size_t cols,
                           std::vector<std::size_t> row_offsets,
                           std::vector<std::size_t> col_indices,
                           std::vector<double> values)
    : rows_(rows),
      cols_(cols),
      row_offsets_(std::move(row_offsets)),
      col_indices_(std::move(col_indices)),
      values_(std::move(values)) {
  if (row_offsets_.size() != rows_ + 1 || row_offsets_.front() != 0 ||
      row_offsets_.back() != col_indices_.size() ||
      col_indices_.size() != values_.size()) {
    throw ShapeError("SparseMatrix: inconsistent CSR arrays");
  }
  for (std::size_t r = 0; r < rows_; ++r) {
    if (row_offsets_[r] > row_offsets_[r + 1]) {
      throw ShapeError("SparseMatrix: row offsets not monotone");
    }
    for (std::size_t p = row_offsets_[r]; p < row_offsets_[r + 1]; ++p) {
      if (col_indices_[p] >= cols_) {
        throw ShapeError("SparseMatrix: column index out of range");
      }
      if (p > row_offsets_[r] && col_indices_[p] <= col_indices_[p - 1]) {
        throw ShapeError("SparseMatrix: column indices not strictly increasing");
      }
      if (values_[p] == 0.0) {
        throw ShapeError("SparseMatrix: stored explicit zero");
      }
    }
  }
}

SparseMatrix SparseMatrix::from_triplets(
    std::size_t rows, std::size_t cols,
    std::vector<std::tuple<std::size_t, std::size_t, double>> triplets) {
  std::sort(triplets.begin(), triplets.end(),
            [](const auto& a, const auto& b) {
              return std::tie(std::get<0>(a), std::get<1>(a)) <
                     std::tie(std::get<0>(b), std::get<1>(b));
            });

  std::vector<std::size_t> offsets(rows + 1, 0);
  std::vector<std::size_t> cols_out;
  std::vector<double> vals_out;
  cols_out.reserve(triplets.size());
  vals_out.reserve(triplets.size());

  std::size_t p = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    offsets[r] = cols_out.size();
    while (p < triplets.size() && std::get<0>(triplets[p]) == r) {
      const std::size_t c = std::get<1>(triplets[p]);
      if (c >= cols || r >= rows) {
        throw ShapeError("from_triplets: coordinate out of range");
      }
      double v = 0.0;
      while (p < triplets.size() && std::get<0>(triplets[p]) == r &&
             std::get<1>(triplets[p]) == c) {
        v += std::get<2>(triplets[p]);
        ++p;
      }
      if (v != 0.0) {
        cols_out.push_back(c);
        vals_out.push_back(v);
      }
    }
  }
  if (p != triplets.size()) {
    throw ShapeError("from_triplets: row index out of range");
  }
  offsets[rows] = cols_out.size();
  return SparseMatrix(rows, cols, std::move(offsets), std::move(cols_out),
                      std::move(vals_out));
}

DenseMatrix SparseMatrix::to_dense() const {
  DenseMatrix d(rows_, cols_);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t p = row_offsets_[r]; p < row_offsets_[r + 1]; ++p) {
      d(r, col_indices_[p]) = values_[p];
    }
  }
  return d;
}

DenseMatrix spmm(const SparseMatrix& a, const DenseMatrix& x) {
  if (a.cols() != x.rows()) {
    shape_fail("spmm", a.rows(), a.cols(), x.rows(), x.cols());
  }
  ++g_spmm_calls;
  DenseMatrix out(a.rows(), x.cols());
  const auto& offsets = a.row_offsets();
  const auto& cols = a.col_indices();
  const auto& vals = a.values();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto out_row = out.row(r);
    for (std::size_t p = offsets[r]; p < offsets[r + 1]; ++p) {
      const double v = vals[p];
      const auto x_row = x.row(cols[p]);
      for (std::size_t c = 0; c < x.cols(); ++c) out_row[c] += v * x_row[c];
    }
  }
  return out;
}

DenseMatrix spmm_adjoint(const SparseMatrix& a, const DenseMatrix& g) {
  if (a.rows() != g.rows()) {
    shape_fail("spmm_adjoint", a.rows(), a.cols(), g.rows(), g.cols());
  }
  ++g_spmm_adjoint_calls;
  DenseMatrix out(a.cols(), g.cols());
  const auto& offsets = a.row_offsets();
  const auto& cols = a.col_indices();
  const auto& vals = a.values();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const auto g_row = g.row(r);
    for (std::size_t p = offsets[r]; p < offsets[r + 1]; ++p) {
      const double v = vals[p];
      auto out_row = out.row(cols[p]);
      for (std::size_t c = 0; c < g.cols(); ++c) out_row[c] += v * g_row[c];
    }
  }
  return out;
}

SparseMatrix row_normalize(const SparseMatrix& a) {
  std::vector<double> vals = a.values();
  const auto& offsets = a.row_offsets();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    double sum = 0.0;
    for (std::size_t p = offsets[r]; p < offsets[r + 1]; ++p) {
      if (vals[p] < 0.0) {
        throw ShapeError("row_normalize: negative entry");
      }
      sum += vals[p];
    }
    if (sum > 0.0) {
      for (std::size_t p = offsets[r]; p < offsets[r + 1]; ++p) vals[p] /= sum;
    }
  }
  return SparseMatrix(a.rows(), a.cols(), a.row_offsets(), a.col_indices(),
                      std::move(vals));
}

std::uint64_t spmm_call_count() { return g_spmm_calls; }
std::uint64_t spmm_adjoint_call_count() { return g_spmm_adjoint_calls; }
void reset_op_counters() {
  g_spmm_calls = 0;
  g_spmm_adjoint_calls = 0;
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) {
    shape_fail("matmul", a.rows(), a.cols(), b.rows(), b.cols());
  }
  DenseMatrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out_row = out.row(i);
    const auto a_row = a.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double av = a_row[k];
      if (av == 0.0) continue;
      const auto b_row = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += av * b_row[j];
    }
  }
  return out;
}

DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b) {
  if (!a.same_shape(b)) {
    shape_fail("add", a.rows(), a.cols(), b.rows(), b.cols());
  }
  DenseMatrix out = a;
  for (std::size_t i = 0; i < out.values().size(); ++i) {
    out.values()[i] += b.values()[i];
  }
  return out;
}

DenseMatrix scale(const DenseMatrix& a, double c) {
  DenseMatrix out = a;
  for (double& v : out.values()) v *= c;
  return out;
}

DenseMatrix transpose(const DenseMatrix& a) {
  DenseMatrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  }
  return out;
}

DenseMatrix relu(const DenseMatrix& a) {
  DenseMatrix out = a;
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return out;
}

DenseMatrix relu_grad(const DenseMatrix& pre, const DenseMatrix& upstream) {
  if (!pre.same_shape(upstream)) {
    shape_fail("relu_grad", pre.rows(), pre.cols(), upstream.rows(),
               upstream.cols());
  }
  DenseMatrix out = upstream;
  for (std::size_t i = 0; i < out.values().size(); ++i) {
    if (pre.values()[i] <= 0.0) out.values()[i] = 0.0;
  }
  return out;
}

DenseMatrix sigmoid(const DenseMatrix& a) {
  DenseMatrix out = a;
  for (double& v : out.values()) v = 1.0 / (1.0 + std::exp(-v));
  return out;
}

DenseMatrix row_softmax(const DenseMatrix& a) {
  DenseMatrix out = a;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto row = out.row(i);
    double mx = row[0];
    for (double v : row) mx = std::max(mx, v);
    double sum = 0.0;
    for (double& v : row) {
      v = std::exp(v - mx);
      sum += v;
    }
    for (double& v : row) v /= sum;
  }
  return out;
}

void axpy(double c, const DenseMatrix& a, DenseMatrix& into) {
  if (!a.same_shape(into)) {
    shape_fail("axpy", a.rows(), a.cols(), into.rows(), into.cols());
  }
  for (std::size_t i = 0; i < into.values().size(); ++i) {
    into.values()[i] += c * a.values()[i];
  }
}

double frobenius_dot(const DenseMatrix& a, const DenseMatrix& b) {
  if (!a.same_shape(b)) {
    shape_fail("frobenius_dot", a.rows(), a.cols(), b.rows(), b.cols());
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.values().size(); ++i) {
    acc += a.values()[i] * b.values()[i];
  }
  return acc;
}

DenseMatrix column_sums(const DenseMatrix& a) {
  DenseMatrix out(1, a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto row = a.row(i);
    for (std::size_t j = 0; j < a.cols(); ++j) out(0, j) += row[j];
  }
  return out;
}

}  // namespace diffmg
