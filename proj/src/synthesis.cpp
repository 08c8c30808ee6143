#include "busod/synthesis.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace busod {

namespace {

void validate_config(const SynthConfig& cfg) {
  if (cfg.route.stops < 2) throw std::invalid_argument("route needs at least 2 stops");
  if (cfg.n_trips < 1) throw std::invalid_argument("n_trips must be >= 1");
  if (cfg.rank < 1) throw std::invalid_argument("rank must be >= 1");
  if (!(cfg.headway_seconds > 0.0)) throw std::invalid_argument("headway must be positive");
  if (cfg.boarding_profile.size() != static_cast<std::size_t>(cfg.route.stops))
    throw std::invalid_argument("boarding profile must have one rate per stop");
  for (double r : cfg.boarding_profile)
    if (r < 0.0) throw std::invalid_argument("boarding rates must be non-negative");
  if (cfg.boarding_profile.back() != 0.0)
    throw std::invalid_argument("boarding rate at the terminal stop must be 0");
}

Eigen::VectorXd draw_departure_times(const SynthConfig& cfg, Rng& rng) {
  Eigen::VectorXd t(cfg.n_trips);
  for (int n = 0; n < cfg.n_trips; ++n) {
    t[n] = cfg.service_start_s + n * cfg.headway_seconds;
    if (cfg.headway_jitter_s > 0.0)
      t[n] += runif(rng, -cfg.headway_jitter_s, cfg.headway_jitter_s);
  }
  // Jitter must not reorder departures.
  for (int n = 1; n < cfg.n_trips; ++n)
    if (t[n] <= t[n - 1]) t[n] = std::nextafter(t[n - 1], 1e300);
  return t;
}

// Multinomial(u, probs) by conditional binomials.
void draw_multinomial_row(Rng& rng, int u, const double* probs, int len, int* out) {
  int remaining = u;
  double prob_left = 1.0;
  for (int k = 0; k < len - 1 && remaining > 0; ++k) {
    const double p = std::min(1.0, std::max(0.0, probs[k] / prob_left));
    const int draw = rbinom(rng, remaining, p);
    out[k] = draw;
    remaining -= draw;
    prob_left -= probs[k];
    if (prob_left <= 0.0) break;
  }
  out[len - 1] += remaining;  // remainder lands in the final category
}

SynthResult generate_trips(const SynthConfig& cfg, const LatentState& state,
                           const Eigen::VectorXd& times, Rng& rng) {
  validate_state(state, cfg.route, cfg.n_trips);
  const int S = cfg.route.stops;

  SynthResult result;
  result.truth_state = state;
  result.data.route = cfg.route;
  result.data.trips.reserve(static_cast<std::size_t>(cfg.n_trips));
  result.truth.reserve(static_cast<std::size_t>(cfg.n_trips));

  const std::vector<LambdaTable> tables = all_lambdas(state, cfg.route);

  for (int n = 0; n < cfg.n_trips; ++n) {
    ODVector y;
    y.counts.assign(static_cast<std::size_t>(cfg.route.od_pairs()), 0);
    std::vector<int> u(static_cast<std::size_t>(S), 0);
    for (int i = 0; i < S - 1; ++i) {
      const int boarders = rpois(rng, cfg.boarding_profile[static_cast<std::size_t>(i)]);
      u[static_cast<std::size_t>(i)] = boarders;
      if (boarders == 0) continue;
      draw_multinomial_row(rng, boarders, tables[static_cast<std::size_t>(n)].row(i), S - 1 - i,
                           y.counts.data() + od_flat_index(S, i, i + 1));
    }
    auto [u_check, v] = od_to_counts(y, cfg.route);

    TripObservation trip;
    trip.trip_id = "trip" + std::to_string(n + 1);
    trip.boardings = std::move(u);
    trip.alightings = std::move(v);
    trip.departure_s = times[n];
    const auto verdict = validate_observation(trip);
    if (!verdict.ok())
      throw std::logic_error("synthesized trip failed validation: " + verdict.describe());
    result.data.trips.push_back(std::move(trip));
    result.truth.push_back(std::move(y));
  }
  return result;
}

}  // namespace

SynthResult synthesize(const SynthConfig& cfg, Rng& rng) {
  validate_config(cfg);

  const Eigen::VectorXd times = draw_departure_times(cfg, rng);

  LatentState state;
  state.rho = std::exp(rnorm(rng, cfg.prior.mu_rho, std::sqrt(cfg.prior.sigma2_rho)));
  const double sigma0 = std::sqrt(cfg.prior.sigma2_phi);
  state.Phi.resize(logit_rows(cfg.route), cfg.rank);
  for (Eigen::Index c = 0; c < state.Phi.cols(); ++c)
    for (Eigen::Index r = 0; r < state.Phi.rows(); ++r) state.Phi(r, c) = rnorm(rng, 0.0, sigma0);

  // Psi columns are GP draws over the departure times.
  const Eigen::MatrixXd chol = kernel_cholesky(times, cfg.kernel).lower;
  state.Psi.resize(cfg.n_trips, cfg.rank);
  Eigen::VectorXd white(cfg.n_trips);
  for (int d = 0; d < cfg.rank; ++d) {
    for (int n = 0; n < cfg.n_trips; ++n) white[n] = rnorm(rng);
    state.Psi.col(d) = chol.triangularView<Eigen::Lower>() * white;
  }
  return generate_trips(cfg, state, times, rng);
}

SynthResult synthesize_from_state(const SynthConfig& cfg, const LatentState& state, Rng& rng) {
  validate_config(cfg);
  const Eigen::VectorXd times = draw_departure_times(cfg, rng);
  return generate_trips(cfg, state, times, rng);
}

std::vector<std::vector<EmpiricalLambdaRow>> empirical_lambdas(const std::vector<ODVector>& truth,
                                                               const Dataset& data) {
  if (truth.size() != data.trips.size())
    throw std::invalid_argument("truth/trip count mismatch");
  const int S = data.route.stops;
  std::vector<std::vector<EmpiricalLambdaRow>> out(truth.size());
  for (std::size_t n = 0; n < truth.size(); ++n) {
    out[n].resize(static_cast<std::size_t>(S - 1));
    for (int i = 0; i < S - 1; ++i) {
      const int u = data.trips[n].boardings[static_cast<std::size_t>(i)];
      auto& row = out[n][static_cast<std::size_t>(i)];
      if (u == 0) continue;
      row.present = true;
      row.probs.resize(static_cast<std::size_t>(S - 1 - i));
      for (int k = 0; k < S - 1 - i; ++k)
        row.probs[static_cast<std::size_t>(k)] =
            static_cast<double>(truth[n][od_flat_index(S, i, i + 1) + k]) / u;
    }
  }
  return out;
}

}  // namespace busod
