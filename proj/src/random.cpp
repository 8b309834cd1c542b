#include "moelm/random.hpp"

#include <algorithm>

#include "moelm/error.hpp"

namespace moelm {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

DiscreteSampler::DiscreteSampler(std::span<const double> weights) {
  if (weights.empty()) throw Error("DiscreteSampler: empty weight table");
  double acc = 0.0;
  for (double w : weights) {
    if (!(w >= 0)) throw Error("DiscreteSampler: negative weight");
    acc += w;
    cumulative_.push_back(acc);
  }
  if (!(acc > 0)) throw Error("DiscreteSampler: weights sum to zero");
}

std::size_t DiscreteSampler::operator()(Rng& rng) const {
  const double u = rng.uniform() * cumulative_.back();
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  if (it == cumulative_.end()) --it;
  return static_cast<std::size_t>(it - cumulative_.begin());
}

}  // namespace moelm
