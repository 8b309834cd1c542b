#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "moelm/tensor.hpp"

namespace moelm {

// Named view over a parameter (or gradient) tensor. Vectors are rows x 1.
struct TensorView {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::span<double> data;
};

TensorView view_of(std::string name, Matrix& m);
TensorView view_of(std::string name, Vector& v);

inline double sigmoid(double x) {
  // Split on sign so exp never overflows.
  if (x >= 0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Max-subtracted softmax. Throws on empty input.
Vector softmax(std::span<const double> logits);
void softmax_inplace(std::span<double> logits);

// Returns -log softmax(logits)[target]; if grad is non-empty it receives
// softmax(logits) - onehot(target).
double softmax_cross_entropy(std::span<const double> logits, std::size_t target,
                             std::span<double> grad);

// theta <- theta - lr * (grad + l2 * theta)
void sgd_update(std::span<double> params, std::span<const double> grads, double lr, double l2);
void sgd_update(const std::vector<TensorView>& params, const std::vector<TensorView>& grads,
                double lr, double l2);

// Scales all gradients so their joint L2 norm is at most max_norm. Returns the
// norm before clipping.
double clip_global_norm(const std::vector<TensorView>& grads, double max_norm);

void zero(const std::vector<TensorView>& tensors);

struct GradSlot {
  std::span<double> value;
  std::span<const double> analytic;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t worst_slot = 0;
  std::size_t worst_index = 0;
};

// Central-difference gradient check. loss() is re-evaluated with each entry of
// each slot perturbed by +/-eps in place; analytic gradients must already be
// filled. max_per_slot = 0 checks every entry, otherwise entries are sampled
// with a fixed stride.
GradCheckResult grad_check(const std::function<double()>& loss, const std::vector<GradSlot>& slots,
                           double eps, std::size_t max_per_slot = 0);

// Convenience form: f(theta, grad) returns the loss and writes the analytic
// gradient into grad when it is non-empty.
double grad_check(const std::function<double(std::span<const double>, std::span<double>)>& f,
                  std::vector<double> theta, double eps);

std::vector<GradSlot> grad_slots(const std::vector<TensorView>& params,
                                 const std::vector<TensorView>& grads);

}  // namespace moelm
