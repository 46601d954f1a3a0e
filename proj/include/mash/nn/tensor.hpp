#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mash/common.hpp"

namespace mash::nn {

/// Dense row-major matrix. Vectors are 1 x n rows; scalars are 1 x 1.
template <typename T>
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, T fill = T{0}) : rows(r), cols(c), data(r * c, fill) {}
  Matrix(std::size_t r, std::size_t c, std::vector<T> values) : rows(r), cols(c), data(std::move(values)) {
    if (data.size() != r * c) {
      throw StructuralError("matrix data size does not match shape");
    }
  }

  [[nodiscard]] std::size_t size() const { return data.size(); }
  [[nodiscard]] bool same_shape(const Matrix& other) const { return rows == other.rows && cols == other.cols; }

  T& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<T> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const T> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  void fill(T value) { std::fill(data.begin(), data.end(), value); }

  template <typename U>
  [[nodiscard]] Matrix<U> cast() const {
    Matrix<U> out(rows, cols);
    for (std::size_t i = 0; i < data.size(); ++i) {
      out.data[i] = static_cast<U>(data[i]);
    }
    return out;
  }
};

/// A trainable tensor. values and grad always share a shape.
template <typename T>
struct Parameter {
  std::string name;
  Matrix<T> values;
  Matrix<T> grad;

  Parameter() = default;
  Parameter(std::string n, Matrix<T> v) : name(std::move(n)), values(std::move(v)), grad(values.rows, values.cols) {}

  void zero_grad() { grad.fill(T{0}); }
};

}  // namespace mash::nn
