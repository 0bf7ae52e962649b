#ifndef GMLEVEL_MATRIX_HPP
#define GMLEVEL_MATRIX_HPP

#include <cstddef>
#include <span>
#include <vector>

namespace gmlevel {

/// Dense row-major matrix of doubles. Rows are batch items throughout the
/// network code.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  std::size_t size() const { return data.size(); }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

  void resize(std::size_t r, std::size_t c) {
    rows = r;
    cols = c;
    data.assign(r * c, 0.0);
  }
  void fill(double v) { data.assign(data.size(), v); }

  bool operator==(const Matrix&) const = default;
};

}  // namespace gmlevel

#endif  // GMLEVEL_MATRIX_HPP
