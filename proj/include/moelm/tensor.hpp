#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "moelm/error.hpp"

namespace moelm {

using Vector = std::vector<double>;

// Row-major dense matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }

  void fill(double v);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

void require_size(std::size_t actual, std::size_t expected, const char* what);

// out += m * x
void gemv_acc(const Matrix& m, std::span<const double> x, std::span<double> out);
// out += m^T * y
void gemv_t_acc(const Matrix& m, std::span<const double> y, std::span<double> out);
// m += y * x^T
void outer_acc(Matrix& m, std::span<const double> y, std::span<const double> x);

double dot(std::span<const double> a, std::span<const double> b);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
double squared_norm(std::span<const double> x);
bool all_finite(std::span<const double> x);

}  // namespace moelm
