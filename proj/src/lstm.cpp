#include "moelm/lstm.hpp"

#include <algorithm>
#include <cmath>

namespace moelm {

LstmParams::LstmParams(std::size_t input, std::size_t hidden)
    : input_size(input),
      hidden_size(hidden),
      wx(4 * hidden, input),
      wh(4 * hidden, hidden),
      b(4 * hidden, 0.0) {
  if (input == 0 || hidden == 0) throw ShapeError("LstmParams: sizes must be positive");
}

void LstmParams::init(Rng& rng, double scale, double forget_bias) {
  for (double& v : wx.flat()) v = rng.uniform(-scale, scale);
  for (double& v : wh.flat()) v = rng.uniform(-scale, scale);
  for (double& v : b) v = rng.uniform(-scale, scale);
  for (double& v : gate_bias(LstmGate::Forget)) v = forget_bias;
}

std::span<double> LstmParams::gate_bias(LstmGate g) {
  return std::span<double>(b).subspan(static_cast<std::size_t>(g) * hidden_size, hidden_size);
}

std::vector<TensorView> LstmParams::views(const std::string& prefix) {
  return {view_of(prefix + ".wx", wx), view_of(prefix + ".wh", wh), view_of(prefix + ".b", b)};
}

LstmState lstm_step(const LstmParams& p, std::span<const double> x, const LstmState& prev) {
  LstmCache cache;
  return lstm_step(p, x, prev, cache);
}

LstmState lstm_step(const LstmParams& p, std::span<const double> x, const LstmState& prev,
                    LstmCache& cache) {
  const std::size_t H = p.hidden_size;
  if (x.size() != p.input_size) {
    throw ShapeError("lstm_step: input has " + std::to_string(x.size()) + " entries, expected " +
                     std::to_string(p.input_size));
  }
  if (prev.h.size() != H || prev.c.size() != H) {
    throw ShapeError("lstm_step: state has " + std::to_string(prev.h.size()) + "/" +
                     std::to_string(prev.c.size()) + " entries, expected " + std::to_string(H));
  }
  Vector z = p.b;
  gemv_acc(p.wx, x, z);
  gemv_acc(p.wh, prev.h, z);

  cache.x.assign(x.begin(), x.end());
  cache.prev = prev;
  cache.i.resize(H);
  cache.f.resize(H);
  cache.o.resize(H);
  cache.g.resize(H);
  cache.c.resize(H);
  cache.tanh_c.resize(H);
  cache.h.resize(H);
  for (std::size_t k = 0; k < H; ++k) {
    cache.i[k] = sigmoid(z[k]);
    cache.f[k] = sigmoid(z[H + k]);
    cache.o[k] = sigmoid(z[2 * H + k]);
    cache.g[k] = std::tanh(z[3 * H + k]);
    cache.c[k] = cache.f[k] * prev.c[k] + cache.i[k] * cache.g[k];
    cache.tanh_c[k] = std::tanh(cache.c[k]);
    cache.h[k] = cache.o[k] * cache.tanh_c[k];
  }
  return {cache.h, cache.c};
}

void lstm_backward(const LstmParams& p, const LstmCache& cache, std::span<const double> dh,
                   std::span<const double> dc, LstmParams& grad, std::span<double> dx,
                   std::span<double> dh_prev, std::span<double> dc_prev) {
  const std::size_t H = p.hidden_size;
  require_size(dh.size(), H, "lstm_backward dh");
  require_size(dc.size(), H, "lstm_backward dc");
  Vector dz(4 * H);
  for (std::size_t k = 0; k < H; ++k) {
    const double do_ = dh[k] * cache.tanh_c[k];
    const double dct = dc[k] + dh[k] * cache.o[k] * (1.0 - cache.tanh_c[k] * cache.tanh_c[k]);
    const double di = dct * cache.g[k];
    const double df = dct * cache.prev.c[k];
    const double dg = dct * cache.i[k];
    dz[k] = di * cache.i[k] * (1.0 - cache.i[k]);
    dz[H + k] = df * cache.f[k] * (1.0 - cache.f[k]);
    dz[2 * H + k] = do_ * cache.o[k] * (1.0 - cache.o[k]);
    dz[3 * H + k] = dg * (1.0 - cache.g[k] * cache.g[k]);
    dc_prev[k] = dct * cache.f[k];
  }
  axpy(1.0, dz, grad.b);
  outer_acc(grad.wx, dz, cache.x);
  outer_acc(grad.wh, dz, cache.prev.h);
  std::fill(dh_prev.begin(), dh_prev.end(), 0.0);
  gemv_t_acc(p.wh, dz, dh_prev);
  if (!dx.empty()) {
    std::fill(dx.begin(), dx.end(), 0.0);
    gemv_t_acc(p.wx, dz, dx);
  }
}

}  // namespace moelm
