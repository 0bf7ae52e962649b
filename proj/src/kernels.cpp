#include "gmlevel/kernels.hpp"

#include <algorithm>
#include <string>

#include "gmlevel/error.hpp"

namespace gmlevel::kernels {

namespace {

void require(bool ok, const char* op, const Matrix& a, const Matrix& b) {
  if (!ok) {
    throw Error(ErrorCode::DimensionMismatch,
                std::string(op) + ": " + std::to_string(a.rows) + "x" + std::to_string(a.cols) +
                    " vs " + std::to_string(b.rows) + "x" + std::to_string(b.cols));
  }
}

// Block sizes: a B tile of kNtRows x kNtDepth doubles and a C/B strip of
// kNnCols doubles stay resident in L2 for the batch sizes used here.
constexpr std::size_t kNtRows = 16;
constexpr std::size_t kNtDepth = 512;
constexpr std::size_t kNnCols = 256;
constexpr std::size_t kNnDepth = 128;
constexpr std::size_t kTnCols = 512;

}  // namespace

namespace serial {

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& c) {
  require(a.cols == b.cols, "matmul_nt", a, b);
  c.resize(a.rows, b.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < b.rows; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) s += a(i, k) * b(j, k);
      c(i, j) = s;
    }
}

void matmul_nn(const Matrix& a, const Matrix& b, Matrix& c) {
  require(a.cols == b.rows, "matmul_nn", a, b);
  c.resize(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < b.cols; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
}

void matmul_tn(const Matrix& a, const Matrix& b, Matrix& c) {
  require(a.rows == b.rows, "matmul_tn", a, b);
  c.resize(a.cols, b.cols);
  for (std::size_t i = 0; i < a.cols; ++i)
    for (std::size_t j = 0; j < b.cols; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.rows; ++k) s += a(k, i) * b(k, j);
      c(i, j) = s;
    }
}

void column_sums(const Matrix& a, std::span<double> out) {
  if (out.size() != a.cols) throw Error(ErrorCode::DimensionMismatch, "column_sums: output length");
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) out[j] += a(i, j);
}

}  // namespace serial

namespace parallel {

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& c) {
  require(a.cols == b.cols, "matmul_nt", a, b);
  c.resize(a.rows, b.rows);
  const std::size_t m = a.rows, n = b.rows, depth = a.cols;
  const double* pa = a.data.data();
  const double* pb = b.data.data();
  double* pc = c.data.data();
  const long blocks = static_cast<long>((n + kNtRows - 1) / kNtRows);

#pragma omp parallel for schedule(static)
  for (long blk = 0; blk < blocks; ++blk) {
    const std::size_t j0 = static_cast<std::size_t>(blk) * kNtRows;
    const std::size_t j1 = std::min(n, j0 + kNtRows);
    for (std::size_t k0 = 0; k0 < depth; k0 += kNtDepth) {
      const std::size_t k1 = std::min(depth, k0 + kNtDepth);
      for (std::size_t i = 0; i < m; ++i) {
        const double* ar = pa + i * depth;
        for (std::size_t j = j0; j < j1; ++j) {
          const double* br = pb + j * depth;
          double s = 0.0;
#pragma omp simd reduction(+ : s)
          for (std::size_t k = k0; k < k1; ++k) s += ar[k] * br[k];
          pc[i * n + j] += s;
        }
      }
    }
  }
}

void matmul_nn(const Matrix& a, const Matrix& b, Matrix& c) {
  require(a.cols == b.rows, "matmul_nn", a, b);
  c.resize(a.rows, b.cols);
  const std::size_t m = a.rows, n = b.cols, depth = a.cols;
  const double* pa = a.data.data();
  const double* pb = b.data.data();
  double* pc = c.data.data();
  const long blocks = static_cast<long>((n + kNnCols - 1) / kNnCols);

#pragma omp parallel for schedule(static)
  for (long blk = 0; blk < blocks; ++blk) {
    const std::size_t j0 = static_cast<std::size_t>(blk) * kNnCols;
    const std::size_t j1 = std::min(n, j0 + kNnCols);
    for (std::size_t k0 = 0; k0 < depth; k0 += kNnDepth) {
      const std::size_t k1 = std::min(depth, k0 + kNnDepth);
      for (std::size_t i = 0; i < m; ++i) {
        double* cr = pc + i * n;
        for (std::size_t k = k0; k < k1; ++k) {
          const double av = pa[i * depth + k];
          if (av == 0.0) continue;
          const double* br = pb + k * n;
#pragma omp simd
          for (std::size_t j = j0; j < j1; ++j) cr[j] += av * br[j];
        }
      }
    }
  }
}

void matmul_tn(const Matrix& a, const Matrix& b, Matrix& c) {
  require(a.rows == b.rows, "matmul_tn", a, b);
  c.resize(a.cols, b.cols);
  const std::size_t m = a.cols, n = b.cols, depth = a.rows;
  const double* pa = a.data.data();
  const double* pb = b.data.data();
  double* pc = c.data.data();
  const std::size_t col_blocks = (n + kTnCols - 1) / kTnCols;
  const long tasks = static_cast<long>(col_blocks * m);

  // Task = (column block, output row); row-major over tasks keeps one B strip
  // hot while the rows of that block are produced.
#pragma omp parallel for schedule(static)
  for (long t = 0; t < tasks; ++t) {
    const std::size_t blk = static_cast<std::size_t>(t) / m;
    const std::size_t i = static_cast<std::size_t>(t) % m;
    const std::size_t j0 = blk * kTnCols;
    const std::size_t j1 = std::min(n, j0 + kTnCols);
    double* cr = pc + i * n;
    for (std::size_t k = 0; k < depth; ++k) {
      const double av = pa[k * m + i];
      if (av == 0.0) continue;
      const double* br = pb + k * n;
#pragma omp simd
      for (std::size_t j = j0; j < j1; ++j) cr[j] += av * br[j];
    }
  }
}

void column_sums(const Matrix& a, std::span<double> out) {
  if (out.size() != a.cols) throw Error(ErrorCode::DimensionMismatch, "column_sums: output length");
  const std::size_t n = a.cols;
  const double* pa = a.data.data();
  double* po = out.data();
  const long cols = static_cast<long>(n);
#pragma omp parallel for schedule(static) if (n >= 1024)
  for (long j = 0; j < cols; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows; ++i) s += pa[i * n + static_cast<std::size_t>(j)];
    po[j] = s;
  }
}

}  // namespace parallel

}  // namespace gmlevel::kernels
