#pragma once

#include <cstdint>
#include <random>

#include "tidal/linalg.h"

namespace tidal {

// Seeded 64-bit stream. Identical seeds give identical draws on the same
// build; every stochastic routine in the project takes one of these by
// reference instead of touching global state.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  // Uniform on [0, 1).
  double Uniform() { return uniform_(engine_); }
  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }
  double Gaussian() { return normal_(engine_); }
  // Uniform integer in {0, ..., n-1}; n must be positive.
  int UniformInt(int n);
  bool Coin() { return UniformInt(2) == 1; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
};

// SplitMix64 mixing of (seed, a, b); used to give every episode and every
// role (env, policy) its own independent stream.
std::uint64_t DeriveSeed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

// t = 1 - s with s ~ Beta(alpha, 1) drawn through the inverse CDF s = u^(1/alpha).
double BetaTimeFromUniform(double u, double alpha);
double SampleBetaTime(SeededRng& rng, double alpha, double beta = 1.0);

// horizon x action_dim matrix of i.i.d. N(0, 1) entries.
Matrix SampleGaussianChunk(SeededRng& rng, int horizon, int action_dim);

}  // namespace tidal
