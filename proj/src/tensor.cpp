// Copyright 2026 The skiplab Authors
// SPDX-License-Identifier: Apache-2.0

#include "skiplab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "skiplab/error.hpp"

namespace skiplab {

namespace {

std::string shape_of(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw RejectedInput(std::string(op) + ": shape mismatch " + shape_of(a) + " vs " +
                        shape_of(b));
  }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<float> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw RejectedInput("Matrix: data length " + std::to_string(data_.size()) +
                        " does not match " + std::to_string(rows) + "x" +
                        std::to_string(cols));
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<float>> rows)
    : rows_(rows.size()), cols_(rows.size() == 0 ? 0 : rows.begin()->size()) {
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw RejectedInput("Matrix: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0f;
  return m;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw RejectedInput("matmul: inner dimensions differ (" + shape_of(a) + " · " +
                        shape_of(b) + ")");
  }
  const std::size_t n = b.cols();
  const std::size_t inner = a.cols();
  Matrix c(a.rows(), n);
  // Register tiles of kRows x kCols outputs over a packed, pre-widened panel
  // of B. Every output element still sums its products in increasing k.
  constexpr std::size_t kRows = 4;
  constexpr std::size_t kCols = 8;
  std::vector<double> panel(inner * kCols);
  for (std::size_t j0 = 0; j0 < n; j0 += kCols) {
    const std::size_t width = std::min(kCols, n - j0);
    for (std::size_t k = 0; k < inner; ++k) {
      const float* brow = b.row(k).data() + j0;
      double* p = panel.data() + k * kCols;
      for (std::size_t jj = 0; jj < kCols; ++jj) p[jj] = jj < width ? brow[jj] : 0.0;
    }
    for (std::size_t i0 = 0; i0 < a.rows(); i0 += kRows) {
      const std::size_t rows = std::min(kRows, a.rows() - i0);
      double acc[kRows][kCols] = {};
      if (rows == kRows) {
        const float* a0 = a.row(i0).data();
        const float* a1 = a.row(i0 + 1).data();
        const float* a2 = a.row(i0 + 2).data();
        const float* a3 = a.row(i0 + 3).data();
        for (std::size_t k = 0; k < inner; ++k) {
          const double* p = panel.data() + k * kCols;
          const double x0 = a0[k], x1 = a1[k], x2 = a2[k], x3 = a3[k];
          for (std::size_t jj = 0; jj < kCols; ++jj) {
            acc[0][jj] += x0 * p[jj];
            acc[1][jj] += x1 * p[jj];
            acc[2][jj] += x2 * p[jj];
            acc[3][jj] += x3 * p[jj];
          }
        }
      } else {
        for (std::size_t r = 0; r < rows; ++r) {
          const float* ar = a.row(i0 + r).data();
          for (std::size_t k = 0; k < inner; ++k) {
            const double* p = panel.data() + k * kCols;
            const double x = ar[k];
            for (std::size_t jj = 0; jj < kCols; ++jj) acc[r][jj] += x * p[jj];
          }
        }
      }
      for (std::size_t r = 0; r < rows; ++r) {
        float* crow = c.row(i0 + r).data() + j0;
        for (std::size_t jj = 0; jj < width; ++jj) crow[jj] = static_cast<float>(acc[r][jj]);
      }
    }
  }
  return c;
}

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) t(c, r) = m(r, c);
  return t;
}

Matrix matmul_transposed_b(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw RejectedInput("matmul_transposed_b: column counts differ (" + shape_of(a) +
                        ", " + shape_of(b) + ")");
  }
  return matmul(a, transpose(b));
}

Matrix matmul_transposed_a(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw RejectedInput("matmul_transposed_a: row counts differ (" + shape_of(a) + ", " +
                        shape_of(b) + ")");
  }
  return matmul(transpose(a), b);
}

void softmax_inplace(std::span<float> row) {
  if (row.empty()) return;
  const float max = *std::max_element(row.begin(), row.end());
  double sum = 0.0;
  for (float& v : row) {
    v = std::exp(v - max);
    sum += v;
  }
  const double inv = 1.0 / sum;
  for (float& v : row) v = static_cast<float>(v * inv);
}

Matrix softmax_rows(const Matrix& m) {
  Matrix out = m;
  for (std::size_t r = 0; r < out.rows(); ++r) softmax_inplace(out.row(r));
  return out;
}

void layer_norm_into(std::span<const float> x, std::span<const float> gain,
                     std::span<const float> bias, float eps, std::span<float> out) {
  const std::size_t n = x.size();
  if (gain.size() != n || bias.size() != n || out.size() != n) {
    throw RejectedInput("layer_norm: length mismatch (x " + std::to_string(n) + ", gain " +
                        std::to_string(gain.size()) + ", bias " +
                        std::to_string(bias.size()) + ")");
  }
  if (n == 0) return;
  double mean = 0.0;
  for (float v : x) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (float v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  const double inv_std = 1.0 / std::sqrt(var + static_cast<double>(eps));
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = static_cast<float>(gain[i] * ((x[i] - mean) * inv_std) + bias[i]);
  }
}

Vector layer_norm(const Vector& x, const Vector& gain, const Vector& bias, float eps) {
  if (!(eps > 0.0f)) throw RejectedInput("layer_norm: eps must be positive");
  Vector out(x.size());
  layer_norm_into(x.values(), gain.values(), bias.values(), eps, out.values());
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
  Matrix out = a;
  add_inplace(out, b);
  return out;
}

void add_inplace(Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) av[i] += bv[i];
}

void add_row_bias(Matrix& m, const Vector& bias) {
  if (bias.size() != m.cols()) {
    throw RejectedInput("add_row_bias: bias length " + std::to_string(bias.size()) +
                        " vs " + std::to_string(m.cols()) + " columns");
  }
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bias[c];
  }
}

void scale_inplace(std::span<float> values, float factor) {
  for (float& v : values) v *= factor;
}

void relu_inplace(Matrix& m) {
  for (float& v : m.values()) v = std::max(v, 0.0f);
}

bool all_finite(std::span<const float> values) {
  return std::all_of(values.begin(), values.end(), [](float v) { return std::isfinite(v); });
}

}  // namespace skiplab
