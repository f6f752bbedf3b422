#pragma once

#include <span>
#include <vector>

#include "landval/common.hpp"

namespace landval {

/// Dense row-major matrix of doubles; rows are samples, columns are features.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  [[nodiscard]] double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  [[nodiscard]] std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }

  /// Copy of the listed columns, in the given order.
  [[nodiscard]] Matrix select_columns(std::span<const std::size_t> columns) const {
    Matrix out(rows, columns.size());
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t k = 0; k < columns.size(); ++k) out(r, k) = (*this)(r, columns[k]);
    return out;
  }

  [[nodiscard]] bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

}  // namespace landval
