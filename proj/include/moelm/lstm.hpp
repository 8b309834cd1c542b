#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "moelm/numerics.hpp"
#include "moelm/random.hpp"
#include "moelm/tensor.hpp"

namespace moelm {

// Gate blocks are stacked row-wise in this order inside the 4H matrices.
enum class LstmGate : std::size_t { Input = 0, Forget = 1, Output = 2, Candidate = 3 };

// Canonical LSTM:
//   z = Wx x + Wh h_prev + b
//   i = s(z_i)  f = s(z_f)  o = s(z_o)  g = tanh(z_g)
//   c = f * c_prev + i * g,  h = o * tanh(c)
struct LstmParams {
  std::size_t input_size = 0;
  std::size_t hidden_size = 0;
  Matrix wx;  // 4H x I
  Matrix wh;  // 4H x H
  Vector b;   // 4H

  LstmParams() = default;
  LstmParams(std::size_t input, std::size_t hidden);

  // Uniform [-scale, scale] weights, forget-gate bias set to forget_bias.
  void init(Rng& rng, double scale = 0.1, double forget_bias = 1.0);

  std::span<double> gate_bias(LstmGate g);
  std::vector<TensorView> views(const std::string& prefix);
};

struct LstmState {
  Vector h;
  Vector c;

  static LstmState zeros(std::size_t hidden) { return {Vector(hidden, 0.0), Vector(hidden, 0.0)}; }
  friend bool operator==(const LstmState&, const LstmState&) = default;
};

// Forward activations kept for backpropagation.
struct LstmCache {
  Vector x;
  LstmState prev;
  Vector i, f, o, g;
  Vector c;
  Vector tanh_c;
  Vector h;
};

LstmState lstm_step(const LstmParams& p, std::span<const double> x, const LstmState& prev);
LstmState lstm_step(const LstmParams& p, std::span<const double> x, const LstmState& prev,
                    LstmCache& cache);

// Backward through one cached step. dh/dc are gradients w.r.t. this step's
// outputs; grads accumulate into `grad`. dx may be empty when the input
// gradient is not needed.
void lstm_backward(const LstmParams& p, const LstmCache& cache, std::span<const double> dh,
                   std::span<const double> dc, LstmParams& grad, std::span<double> dx,
                   std::span<double> dh_prev, std::span<double> dc_prev);

}  // namespace moelm
