#include "moelm/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace moelm {

void Matrix::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void require_size(std::size_t actual, std::size_t expected, const char* what) {
  if (actual != expected) {
    throw ShapeError(std::string(what) + ": expected size " + std::to_string(expected) +
                     ", got " + std::to_string(actual));
  }
}

void gemv_acc(const Matrix& m, std::span<const double> x, std::span<double> out) {
  require_size(x.size(), m.cols(), "gemv input");
  require_size(out.size(), m.rows(), "gemv output");
  for (std::size_t r = 0; r < m.rows(); ++r) out[r] += dot(m.row(r), x);
}

void gemv_t_acc(const Matrix& m, std::span<const double> y, std::span<double> out) {
  require_size(y.size(), m.rows(), "gemv_t input");
  require_size(out.size(), m.cols(), "gemv_t output");
  for (std::size_t r = 0; r < m.rows(); ++r) {
    if (y[r] != 0.0) axpy(y[r], m.row(r), out);
  }
}

void outer_acc(Matrix& m, std::span<const double> y, std::span<const double> x) {
  require_size(y.size(), m.rows(), "outer rows");
  require_size(x.size(), m.cols(), "outer cols");
  for (std::size_t r = 0; r < m.rows(); ++r) {
    if (y[r] != 0.0) axpy(y[r], x, m.row(r));
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double squared_norm(std::span<const double> x) { return dot(x, x); }

bool all_finite(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace moelm
