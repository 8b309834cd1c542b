#include "moelm/numerics.hpp"

#include <algorithm>
#include <cmath>

namespace moelm {

TensorView view_of(std::string name, Matrix& m) {
  return {std::move(name), m.rows(), m.cols(), m.flat()};
}

TensorView view_of(std::string name, Vector& v) {
  return {std::move(name), v.size(), 1, std::span<double>(v)};
}

void softmax_inplace(std::span<double> logits) {
  if (logits.empty()) throw ShapeError("softmax of empty vector");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double& v : logits) {
    v = std::exp(v - mx);
    sum += v;
  }
  const double inv = 1.0 / sum;
  for (double& v : logits) v *= inv;
}

Vector softmax(std::span<const double> logits) {
  Vector out(logits.begin(), logits.end());
  softmax_inplace(out);
  return out;
}

double softmax_cross_entropy(std::span<const double> logits, std::size_t target,
                             std::span<double> grad) {
  if (target >= logits.size()) throw ShapeError("cross-entropy target out of range");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - mx);
  const double log_z = mx + std::log(sum);
  if (!grad.empty()) {
    require_size(grad.size(), logits.size(), "cross-entropy grad");
    for (std::size_t i = 0; i < logits.size(); ++i) grad[i] = std::exp(logits[i] - log_z);
    grad[target] -= 1.0;
  }
  return log_z - logits[target];
}

void sgd_update(std::span<double> params, std::span<const double> grads, double lr, double l2) {
  require_size(grads.size(), params.size(), "sgd_update");
  if (!(lr > 0)) throw Error("sgd_update: learning rate must be positive");
  if (!(l2 >= 0)) throw Error("sgd_update: l2 must be non-negative");
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * (grads[i] + l2 * params[i]);
}

void sgd_update(const std::vector<TensorView>& params, const std::vector<TensorView>& grads,
                double lr, double l2) {
  require_size(grads.size(), params.size(), "sgd_update tensor count");
  for (std::size_t i = 0; i < params.size(); ++i) {
    sgd_update(params[i].data, grads[i].data, lr, l2);
  }
}

double clip_global_norm(const std::vector<TensorView>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads) sq += squared_norm(g.data);
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (const auto& g : grads) {
      for (double& v : g.data) v *= scale;
    }
  }
  return norm;
}

void zero(const std::vector<TensorView>& tensors) {
  for (const auto& t : tensors) std::fill(t.data.begin(), t.data.end(), 0.0);
}

std::vector<GradSlot> grad_slots(const std::vector<TensorView>& params,
                                 const std::vector<TensorView>& grads) {
  require_size(grads.size(), params.size(), "grad_slots");
  std::vector<GradSlot> slots;
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_size(grads[i].data.size(), params[i].data.size(), params[i].name.c_str());
    slots.push_back({params[i].data, grads[i].data});
  }
  return slots;
}

GradCheckResult grad_check(const std::function<double()>& loss, const std::vector<GradSlot>& slots,
                           double eps, std::size_t max_per_slot) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) throw Error("grad_check: eps must lie in [1e-7, 1e-3]");
  GradCheckResult result;
  for (std::size_t s = 0; s < slots.size(); ++s) {
    const auto& slot = slots[s];
    require_size(slot.analytic.size(), slot.value.size(), "grad_check slot");
    const std::size_t n = slot.value.size();
    const std::size_t stride = (max_per_slot == 0 || n <= max_per_slot) ? 1 : n / max_per_slot;
    for (std::size_t i = 0; i < n; i += stride) {
      const double saved = slot.value[i];
      slot.value[i] = saved + eps;
      const double up = loss();
      slot.value[i] = saved - eps;
      const double down = loss();
      slot.value[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) throw Error("grad_check: non-finite loss");
      const double numeric = (up - down) / (2 * eps);
      const double analytic = slot.analytic[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      const double rel = std::abs(analytic - numeric) / denom;
      ++result.checked;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_slot = s;
        result.worst_index = i;
      }
    }
  }
  return result;
}

double grad_check(const std::function<double(std::span<const double>, std::span<double>)>& f,
                  std::vector<double> theta, double eps) {
  std::vector<double> analytic(theta.size(), 0.0);
  const double base = f(theta, analytic);
  if (!std::isfinite(base)) throw Error("grad_check: non-finite loss");
  std::vector<GradSlot> slots{{std::span<double>(theta), std::span<const double>(analytic)}};
  return grad_check([&] { return f(theta, {}); }, slots, eps).max_rel_error;
}

}  // namespace moelm
