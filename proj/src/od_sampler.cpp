#include "busod/od_sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "busod/logmath.hpp"

namespace busod {

namespace {

void require_valid(const TripObservation& obs) {
  const auto verdict = validate_observation(obs);
  if (!verdict.ok())
    throw std::invalid_argument("invalid observation for trip '" + obs.trip_id +
                                "': " + verdict.describe());
}

}  // namespace

ProposalDraw propose_od(const TripObservation& obs, Rng& rng) {
  require_valid(obs);
  const int S = static_cast<int>(obs.boardings.size());
  ProposalDraw draw;
  draw.y_star.counts.assign(static_cast<std::size_t>(S * (S - 1) / 2), 0);

  std::vector<int> z(static_cast<std::size_t>(S), 0);  // onboard per boarding group
  z[0] = obs.boardings[0];
  int onboard = obs.boardings[0];  // w_{j-1}

  for (int j = 1; j < S; ++j) {
    const int vj = obs.alightings[static_cast<std::size_t>(j)];
    draw.log_q -= log_binom(onboard, vj);
    int pool = onboard;
    int remaining = vj;
    for (int i = 0; i < j && remaining > 0; ++i) {
      const int zi = z[static_cast<std::size_t>(i)];
      const int take = rhypergeom(rng, pool, zi, remaining);
      if (take > 0) {
        draw.y_star[od_flat_index(S, i, j)] = take;
        draw.log_q += log_binom(zi, take);
        z[static_cast<std::size_t>(i)] -= take;
        remaining -= take;
      }
      pool -= zi;
    }
    onboard -= vj;
    if (j < S - 1) {
      z[static_cast<std::size_t>(j)] = obs.boardings[static_cast<std::size_t>(j)];
      onboard += obs.boardings[static_cast<std::size_t>(j)];
    }
  }
  return draw;
}

double proposal_logdensity(const ODVector& y, const TripObservation& obs) {
  require_valid(obs);
  const int S = static_cast<int>(obs.boardings.size());
  RouteConfig route{S};
  const auto [u, v] = od_to_counts(y, route);
  if (u != obs.boardings || v != obs.alightings)
    throw std::invalid_argument("OD vector is infeasible for the observed counts of trip '" +
                                obs.trip_id + "'");

  std::vector<int> z(static_cast<std::size_t>(S), 0);
  z[0] = obs.boardings[0];
  int onboard = obs.boardings[0];
  double log_q = 0.0;
  for (int j = 1; j < S; ++j) {
    const int vj = obs.alightings[static_cast<std::size_t>(j)];
    log_q -= log_binom(onboard, vj);
    for (int i = 0; i < j; ++i) {
      const int yij = y[od_flat_index(S, i, j)];
      if (yij == 0) continue;
      log_q += log_binom(z[static_cast<std::size_t>(i)], yij);
      z[static_cast<std::size_t>(i)] -= yij;
    }
    onboard -= vj;
    if (j < S - 1) {
      z[static_cast<std::size_t>(j)] = obs.boardings[static_cast<std::size_t>(j)];
      onboard += obs.boardings[static_cast<std::size_t>(j)];
    }
  }
  return log_q;
}

MhResult mh_update_od(const ODVector& y_cur, const TripObservation& obs,
                      const LambdaTable& lambdas, Rng& rng) {
  const ProposalDraw draw = propose_od(obs, rng);
  const double ll_star = trip_loglik(draw.y_star, obs, lambdas);
  const double ll_cur = trip_loglik(y_cur, obs, lambdas);
  const double log_q_cur = proposal_logdensity(y_cur, obs);
  const double log_ratio = (ll_star + log_q_cur) - (ll_cur + draw.log_q);

  MhResult result;
  result.log_accept_ratio = log_ratio;
  if (log_ratio >= 0.0 || std::log(runif(rng)) < log_ratio) {
    result.y = draw.y_star;
    result.accepted = true;
  } else {
    result.y = y_cur;
    result.accepted = false;
  }
  return result;
}

ODVector init_feasible(const TripObservation& obs, Rng& rng) {
  return propose_od(obs, rng).y_star;
}

}  // namespace busod
