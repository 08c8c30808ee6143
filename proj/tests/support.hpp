// Shared helpers for the test suites: observation builders, independent
// oracles and Monte Carlo error estimates.
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

#include "busod/latent_model.hpp"
#include "busod/route_model.hpp"
#include "busod/rng.hpp"

namespace busod::test {

inline TripObservation make_obs(std::vector<int> u, std::vector<int> v, double t = 0.0,
                                std::string id = "t") {
  TripObservation obs;
  obs.trip_id = std::move(id);
  obs.boardings = std::move(u);
  obs.alightings = std::move(v);
  obs.departure_s = t;
  return obs;
}

// Random valid observation: draws a random feasible OD vector and derives the
// counts from it, so validity holds by construction.
inline TripObservation random_obs(Rng& rng, int stops, int max_total, double t = 0.0) {
  RouteConfig route{stops};
  ODVector y;
  y.counts.assign(static_cast<std::size_t>(route.od_pairs()), 0);
  const int total = static_cast<int>(runif(rng) * (max_total + 1));
  for (int p = 0; p < total; ++p) {
    const int k = static_cast<int>(runif(rng) * route.od_pairs());
    y[std::min(k, route.od_pairs() - 1)] += 1;
  }
  auto [u, v] = od_to_counts(y, route);
  return make_obs(std::move(u), std::move(v), t);
}

// Lambda table with rows drawn from a rough Dirichlet (normalized Gamma(1)).
inline LambdaTable random_lambda(Rng& rng, int stops, double heterogeneity = 1.0) {
  LambdaTable table;
  table.stops = stops;
  table.probs.assign(static_cast<std::size_t>(stops * (stops - 1) / 2), 0.0);
  for (int i = 0; i < stops - 1; ++i) {
    const int base = od_flat_index(stops, i, i + 1);
    const int len = stops - 1 - i;
    double sum = 0.0;
    for (int k = 0; k < len; ++k) {
      const double e = -std::log(runif(rng) + 1e-300) * std::exp(heterogeneity * rnorm(rng));
      table.probs[static_cast<std::size_t>(base + k)] = e;
      sum += e;
    }
    for (int k = 0; k < len; ++k) table.probs[static_cast<std::size_t>(base + k)] /= sum;
  }
  table.probs.back() = 1.0;
  return table;
}

// Memoryless construction: per-stop hazards h_j with h_S = 1 give
// lambda_{i,j} = h_j * prod_{k=i+1}^{j-1} (1 - h_k); every onboard passenger
// shares the same alighting probability at each stop.
inline LambdaTable memoryless_lambda(int stops, const std::vector<double>& hazards) {
  if (static_cast<int>(hazards.size()) != stops)
    throw std::invalid_argument("one hazard per stop expected");
  if (hazards.back() != 1.0) throw std::invalid_argument("terminal hazard must be 1");
  LambdaTable table;
  table.stops = stops;
  table.probs.assign(static_cast<std::size_t>(stops * (stops - 1) / 2), 0.0);
  for (int i = 0; i < stops - 1; ++i) {
    double survive = 1.0;
    for (int j = i + 1; j < stops; ++j) {
      table.probs[static_cast<std::size_t>(od_flat_index(stops, i, j))] =
          survive * hazards[static_cast<std::size_t>(j)];
      survive *= 1.0 - hazards[static_cast<std::size_t>(j)];
    }
  }
  return table;
}

// Monte Carlo standard error of the mean by batch means (robust to chain
// autocorrelation).
inline double batch_means_se(const std::vector<double>& chain, int n_batches = 50) {
  const std::size_t batch = chain.size() / static_cast<std::size_t>(n_batches);
  std::vector<double> means;
  for (int b = 0; b < n_batches; ++b) {
    double sum = 0.0;
    for (std::size_t k = 0; k < batch; ++k) sum += chain[static_cast<std::size_t>(b) * batch + k];
    means.push_back(sum / static_cast<double>(batch));
  }
  double mean = 0.0;
  for (double m : means) mean += m;
  mean /= static_cast<double>(n_batches);
  double var = 0.0;
  for (double m : means) var += (m - mean) * (m - mean);
  var /= static_cast<double>(n_batches - 1);
  return std::sqrt(var / static_cast<double>(n_batches));
}

inline double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

}  // namespace busod::test
