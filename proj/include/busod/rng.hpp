// Deterministic RNG streams.
//
// Every stochastic component draws from an mt19937_64 stream derived from the
// master seed plus a (context, index) pair, so per-trip work can be farmed out
// to any number of workers without changing the sampled chain.
#pragma once

#include <cstdint>
#include <random>

namespace busod {

using Rng = std::mt19937_64;

// splitmix64 finalizer; decorrelates structured seed inputs.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0) {
  return mix64(mix64(master ^ mix64(a)) ^ mix64(b + 0x517cc1b727220a95ULL));
}

inline Rng make_stream(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0) {
  return Rng(derive_seed(master, a, b));
}

// Distributions are constructed per call: std:: distribution objects carry
// hidden state, and value-reset draws keep streams replayable.
inline double runif(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

inline double runif(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double rnorm(Rng& rng, double mean = 0.0, double sd = 1.0) {
  return std::normal_distribution<double>(mean, sd)(rng);
}

inline int rpois(Rng& rng, double mean) {
  if (mean <= 0.0) return 0;
  return std::poisson_distribution<int>(mean)(rng);
}

inline int rbinom(Rng& rng, int n, double p) {
  if (n <= 0 || p <= 0.0) return 0;
  if (p >= 1.0) return n;
  return std::binomial_distribution<int>(n, p)(rng);
}

// Hypergeometric(population, marked, draws): number of marked items among
// `draws` taken without replacement. Sequential Bernoulli; counts here are
// passenger-sized so the O(draws) loop is the right tool.
inline int rhypergeom(Rng& rng, int population, int marked, int draws) {
  int got = 0;
  for (int d = 0; d < draws; ++d) {
    const double p = static_cast<double>(marked - got) / static_cast<double>(population - d);
    if (runif(rng) < p) ++got;
  }
  return got;
}

}  // namespace busod
