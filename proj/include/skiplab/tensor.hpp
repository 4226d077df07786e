// Copyright 2026 The skiplab Authors
// SPDX-License-Identifier: Apache-2.0

// Dense fp32 kernels. Everything here is a pure function of its inputs.

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace skiplab {

/// Row-major fp32 matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, float fill = 0.0f)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<float> data);
  Matrix(std::initializer_list<std::initializer_list<float>> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  float& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  float operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<float> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const float> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<float> values() noexcept { return data_; }
  std::span<const float> values() const noexcept { return data_; }

  static Matrix identity(std::size_t n);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

/// Dense fp32 vector.
class Vector {
 public:
  Vector() = default;
  explicit Vector(std::size_t len, float fill = 0.0f) : data_(len, fill) {}
  explicit Vector(std::vector<float> data) : data_(std::move(data)) {}
  Vector(std::initializer_list<float> values) : data_(values) {}

  std::size_t size() const noexcept { return data_.size(); }
  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  std::span<float> values() noexcept { return data_; }
  std::span<const float> values() const noexcept { return data_; }

  friend bool operator==(const Vector&, const Vector&) = default;

 private:
  std::vector<float> data_;
};

/// a · b. Dot products accumulate in double, in increasing k order.
Matrix matmul(const Matrix& a, const Matrix& b);
/// a · bᵀ
Matrix matmul_transposed_b(const Matrix& a, const Matrix& b);
/// aᵀ · b
Matrix matmul_transposed_a(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& m);

/// Row-wise softmax with per-row max subtraction.
Matrix softmax_rows(const Matrix& m);
void softmax_inplace(std::span<float> row);

/// gain ⊙ (x − μ)/√(σ² + eps) + bias with population variance.
Vector layer_norm(const Vector& x, const Vector& gain, const Vector& bias, float eps);
void layer_norm_into(std::span<const float> x, std::span<const float> gain,
                     std::span<const float> bias, float eps, std::span<float> out);

Matrix add(const Matrix& a, const Matrix& b);
void add_inplace(Matrix& a, const Matrix& b);
void add_row_bias(Matrix& m, const Vector& bias);
void scale_inplace(std::span<float> values, float factor);
void relu_inplace(Matrix& m);

bool all_finite(std::span<const float> values);

}  // namespace skiplab
