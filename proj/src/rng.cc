#include "tidal/rng.h"

#include <cmath>
#include <string>

#include "tidal/errors.h"

namespace tidal {

int SeededRng::UniformInt(int n) {
  if (n <= 0) throw ConfigError("UniformInt: n must be positive");
  std::uniform_int_distribution<int> dist(0, n - 1);
  return dist(engine_);
}

std::uint64_t DeriveSeed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ a) ^ (b * 0x632be59bd9b4e019ULL));
}

double BetaTimeFromUniform(double u, double alpha) {
  if (!(alpha > 0.0)) throw ConfigError("beta time sampler: alpha must be > 0");
  const double s = std::pow(u, 1.0 / alpha);
  return 1.0 - s;
}

double SampleBetaTime(SeededRng& rng, double alpha, double beta) {
  if (!(alpha > 0.0)) throw ConfigError("beta time sampler: alpha must be > 0");
  if (beta != 1.0) {
    throw UnsupportedParameterError("beta time sampler: only beta = 1 is supported, got " +
                                    std::to_string(beta));
  }
  return BetaTimeFromUniform(rng.Uniform(), alpha);
}

Matrix SampleGaussianChunk(SeededRng& rng, int horizon, int action_dim) {
  if (horizon <= 0 || action_dim <= 0) throw ConfigError("gaussian chunk: empty shape");
  Matrix out(horizon, action_dim);
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = rng.Gaussian();
  return out;
}

}  // namespace tidal
