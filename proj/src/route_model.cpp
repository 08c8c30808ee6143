#include "busod/route_model.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace busod {

Eigen::VectorXd Dataset::departure_times() const {
  Eigen::VectorXd t(trips.size());
  for (std::size_t n = 0; n < trips.size(); ++n) t[static_cast<Eigen::Index>(n)] = trips[n].departure_s;
  return t;
}

std::string ValidationResult::describe() const {
  std::ostringstream out;
  for (std::size_t k = 0; k < violations.size(); ++k) {
    if (k > 0) out << "; ";
    out << violations[k].message;
  }
  return out.str();
}

Eigen::MatrixXi build_routing_matrix(const RouteConfig& route) {
  const int S = route.stops;
  Eigen::MatrixXi a = Eigen::MatrixXi::Zero(2 * S, route.od_pairs());
  for (int i = 0; i < S - 1; ++i) {
    for (int j = i + 1; j < S; ++j) {
      const int col = od_flat_index(S, i, j);
      a(i, col) = 1;      // boarding row of stop i+1
      a(S + j, col) = 1;  // alighting row of stop j+1
    }
  }
  return a;
}

std::pair<std::vector<int>, std::vector<int>> od_to_counts(const ODVector& y,
                                                           const RouteConfig& route) {
  const int S = route.stops;
  std::vector<int> u(static_cast<std::size_t>(S), 0);
  std::vector<int> v(static_cast<std::size_t>(S), 0);
  for (int i = 0; i < S - 1; ++i) {
    for (int j = i + 1; j < S; ++j) {
      const int c = y[od_flat_index(S, i, j)];
      u[static_cast<std::size_t>(i)] += c;
      v[static_cast<std::size_t>(j)] += c;
    }
  }
  return {std::move(u), std::move(v)};
}

ValidationResult validate_observation(const TripObservation& obs) {
  ValidationResult result;
  auto add = [&result](std::string msg) { result.violations.push_back({std::move(msg)}); };

  const std::size_t S = obs.boardings.size();
  if (S < 2) {
    add("route must have at least 2 stops, got " + std::to_string(S));
    return result;
  }
  if (obs.alightings.size() != S) {
    add("boarding/alighting vectors differ in length (" + std::to_string(S) + " vs " +
        std::to_string(obs.alightings.size()) + ")");
    return result;
  }
  for (std::size_t i = 0; i < S; ++i) {
    if (obs.boardings[i] < 0)
      add("negative boarding count at stop " + std::to_string(i + 1));
    if (obs.alightings[i] < 0)
      add("negative alighting count at stop " + std::to_string(i + 1));
  }
  if (!result.ok()) return result;

  if (obs.alightings.front() != 0) add("alighting count at stop 1 must be 0");
  if (obs.boardings.back() != 0)
    add("boarding count at stop " + std::to_string(S) + " (terminal) must be 0");

  const int total_u = std::accumulate(obs.boardings.begin(), obs.boardings.end(), 0);
  const int total_v = std::accumulate(obs.alightings.begin(), obs.alightings.end(), 0);
  if (total_u != total_v)
    add("total boardings (" + std::to_string(total_u) + ") != total alightings (" +
        std::to_string(total_v) + ")");

  // Occupancy must stay non-negative through the alighting phase of each
  // stop (v_j <= w_{j-1}); otherwise no feasible OD vector exists even when
  // the end-of-stop recursion stays non-negative.
  int w = 0;
  for (std::size_t i = 0; i < S; ++i) {
    if (obs.alightings[i] > std::max(w, 0))
      add("occupancy goes negative at stop " + std::to_string(i + 1) + " (" +
          std::to_string(obs.alightings[i]) + " alighting, " + std::to_string(w) + " on board)");
    w += obs.boardings[i] - obs.alightings[i];
  }
  if (w != 0 && total_u == total_v)
    add("occupancy after the terminal stop is " + std::to_string(w) + ", expected 0");
  return result;
}

std::vector<int> occupancy(const TripObservation& obs) {
  const auto verdict = validate_observation(obs);
  if (!verdict.ok())
    throw std::invalid_argument("invalid observation for trip '" + obs.trip_id +
                                "': " + verdict.describe());
  std::vector<int> w(obs.boardings.size());
  int cur = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    cur += obs.boardings[i] - obs.alightings[i];
    w[i] = cur;
  }
  return w;
}

namespace {

// Depth-first sweep over stops: at stop j every split of v_j alighters among
// the onboard groups z is expanded. Visits each member of H(x) exactly once.
struct FeasibleEnumerator {
  int S;
  const TripObservation& obs;
  std::size_t cap;
  std::vector<int> z;  // z[i] = onboard from boarding stop i as the bus approaches the current stop
  ODVector current;
  std::vector<ODVector> out;

  FeasibleEnumerator(const RouteConfig& route, const TripObservation& o, std::size_t c)
      : S(route.stops), obs(o), cap(c), z(static_cast<std::size_t>(route.stops), 0) {
    current.counts.assign(static_cast<std::size_t>(route.stops * (route.stops - 1) / 2), 0);
  }

  void run() {
    z[0] = obs.boardings[0];
    visit_stop(1);
  }

  void visit_stop(int j) {
    if (j == S) {
      out.push_back(current);
      if (out.size() > cap)
        throw std::runtime_error("feasible-set enumeration exceeded cap of " +
                                 std::to_string(cap));
      return;
    }
    split_alighters(j, 0, obs.alightings[static_cast<std::size_t>(j)]);
  }

  // Choose y[i][j] for group i at stop j, with `remaining` alighters left to place.
  void split_alighters(int j, int i, int remaining) {
    if (i == j) {
      if (remaining != 0) return;
      for (int g = 0; g < j; ++g) z[static_cast<std::size_t>(g)] -= current[od_flat_index(S, g, j)];
      z[static_cast<std::size_t>(j)] = j < S - 1 ? obs.boardings[static_cast<std::size_t>(j)] : 0;
      visit_stop(j + 1);
      z[static_cast<std::size_t>(j)] = 0;
      for (int g = 0; g < j; ++g) z[static_cast<std::size_t>(g)] += current[od_flat_index(S, g, j)];
      return;
    }
    // Upper bound from what later groups can still absorb.
    int later = 0;
    for (int g = i + 1; g < j; ++g) later += z[static_cast<std::size_t>(g)];
    const int hi = std::min(z[static_cast<std::size_t>(i)], remaining);
    const int lo = std::max(0, remaining - later);
    const int col = od_flat_index(S, i, j);
    for (int take = lo; take <= hi; ++take) {
      current[col] = take;
      split_alighters(j, i + 1, remaining - take);
    }
    current[col] = 0;
  }
};

}  // namespace

std::vector<ODVector> enumerate_feasible(const TripObservation& obs, std::size_t cap) {
  const auto verdict = validate_observation(obs);
  if (!verdict.ok())
    throw std::invalid_argument("invalid observation for trip '" + obs.trip_id +
                                "': " + verdict.describe());
  RouteConfig route{static_cast<int>(obs.boardings.size())};
  FeasibleEnumerator e(route, obs, cap);
  e.run();
  return std::move(e.out);
}

Eigen::MatrixXd od_vector_to_matrix(const std::vector<double>& flat, const RouteConfig& route) {
  const int S = route.stops;
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(S, S);
  for (int i = 0; i < S - 1; ++i)
    for (int j = i + 1; j < S; ++j) m(i, j) = flat[static_cast<std::size_t>(od_flat_index(S, i, j))];
  return m;
}

Eigen::MatrixXd od_vector_to_matrix(const ODVector& y, const RouteConfig& route) {
  std::vector<double> flat(y.counts.begin(), y.counts.end());
  return od_vector_to_matrix(flat, route);
}

std::vector<double> od_matrix_to_vector(const Eigen::MatrixXd& m, const RouteConfig& route) {
  const int S = route.stops;
  std::vector<double> flat(static_cast<std::size_t>(route.od_pairs()), 0.0);
  for (int i = 0; i < S - 1; ++i)
    for (int j = i + 1; j < S; ++j) flat[static_cast<std::size_t>(od_flat_index(S, i, j))] = m(i, j);
  return flat;
}

}  // namespace busod
