// Markov-chain moves over the feasible OD set of a single journey.
//
// The proposal sweeps the stops in order and splits the v_j alighters at stop
// j uniformly without replacement among the groups currently on board (a
// multivariate hypergeometric draw, realized as sequential univariate draws in
// boarding-stop order). Every draw satisfies A y = x by construction, and its
// density q(y) = prod_j [ C(w_{j-1}, v_j)^-1 prod_i C(z_{i,j}, y_{i,j}) ] can
// be recomputed exactly for any feasible y by replaying the sweep, which is
// what the Metropolis-Hastings ratio needs at the current state.
#pragma once

#include "busod/latent_model.hpp"
#include "busod/route_model.hpp"
#include "busod/rng.hpp"

namespace busod {

struct ProposalDraw {
  ODVector y_star;
  double log_q = 0.0;  // log density of the draw under the proposal, <= 0
};

// Draw a feasible OD vector for `obs`. Throws std::invalid_argument if the
// observation is invalid; cannot fail on a valid one.
ProposalDraw propose_od(const TripObservation& obs, Rng& rng);

// log q(y) for any feasible y; throws std::invalid_argument if A y != x.
double proposal_logdensity(const ODVector& y, const TripObservation& obs);

struct MhResult {
  ODVector y;
  bool accepted = false;
  double log_accept_ratio = 0.0;  // before truncation at 0
};

// One Metropolis-Hastings step targeting p(y | x, lambda) proportional to
// exp(trip_loglik). Feasibility of the returned state is invariant.
MhResult mh_update_od(const ODVector& y_cur, const TripObservation& obs,
                      const LambdaTable& lambdas, Rng& rng);

// Feasible chain start: a plain proposal draw.
ODVector init_feasible(const TripObservation& obs, Rng& rng);

}  // namespace busod
