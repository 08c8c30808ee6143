#include "busod/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace busod {

namespace {

// Total L1 marginal error; provably non-increasing along IPF passes, which
// makes it safe to assert (the max-norm error can wiggle between passes).
double marginal_violation_l1(const Eigen::MatrixXd& m, const Eigen::VectorXd& u,
                             const Eigen::VectorXd& v) {
  const Eigen::Index s = m.rows();
  double total = 0.0;
  for (Eigen::Index i = 0; i < s; ++i) {
    double row = 0.0;
    for (Eigen::Index j = i + 1; j < s; ++j) row += m(i, j);
    total += std::abs(row - u[i]);
  }
  for (Eigen::Index j = 0; j < s; ++j) {
    double col = 0.0;
    for (Eigen::Index i = 0; i < j; ++i) col += m(i, j);
    total += std::abs(col - v[j]);
  }
  return total;
}

double marginal_violation_max(const Eigen::MatrixXd& m, const Eigen::VectorXd& u,
                              const Eigen::VectorXd& v) {
  const Eigen::Index s = m.rows();
  double worst = 0.0;
  for (Eigen::Index i = 0; i < s; ++i) {
    double row = 0.0;
    for (Eigen::Index j = i + 1; j < s; ++j) row += m(i, j);
    worst = std::max(worst, std::abs(row - u[i]));
  }
  for (Eigen::Index j = 0; j < s; ++j) {
    double col = 0.0;
    for (Eigen::Index i = 0; i < j; ++i) col += m(i, j);
    worst = std::max(worst, std::abs(col - v[j]));
  }
  return worst;
}

}  // namespace

IpfResult ipf(const Eigen::MatrixXd& seed, const Eigen::VectorXd& u, const Eigen::VectorXd& v,
              double tol, int max_iter) {
  const Eigen::Index s = seed.rows();
  if (seed.cols() != s) throw std::invalid_argument("seed must be square");
  if (u.size() != s || v.size() != s)
    throw std::invalid_argument("marginal lengths must match the seed size");
  if (std::abs(u.sum() - v.sum()) > 1e-9 * (1.0 + u.sum()))
    throw std::invalid_argument("boarding and alighting totals must agree");
  if ((seed.array() < 0.0).any()) throw std::invalid_argument("seed entries must be >= 0");

  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(s, s);
  for (Eigen::Index i = 0; i < s; ++i)
    for (Eigen::Index j = i + 1; j < s; ++j) m(i, j) = seed(i, j);

  // Zero-marginal rows/columns stay exactly zero.
  for (Eigen::Index i = 0; i < s; ++i)
    if (u[i] == 0.0) m.row(i).setZero();
  for (Eigen::Index j = 0; j < s; ++j)
    if (v[j] == 0.0) m.col(j).setZero();

  IpfResult result;
  double prev_violation = marginal_violation_l1(m, u, v);
  Eigen::MatrixXd before(s, s);
  for (int iter = 1; iter <= max_iter; ++iter) {
    before = m;
    for (Eigen::Index i = 0; i < s; ++i) {
      double row = 0.0;
      for (Eigen::Index j = i + 1; j < s; ++j) row += m(i, j);
      if (row > 0.0) {
        const double f = u[i] / row;
        for (Eigen::Index j = i + 1; j < s; ++j) m(i, j) *= f;
      } else if (u[i] > 0.0) {
        result.matrix = m;
        result.iterations = iter;
        result.converged = false;
        return result;  // structural starvation: no seed mass left for this row
      }
    }
    for (Eigen::Index j = 0; j < s; ++j) {
      double col = 0.0;
      for (Eigen::Index i = 0; i < j; ++i) col += m(i, j);
      if (col > 0.0) {
        const double f = v[j] / col;
        for (Eigen::Index i = 0; i < j; ++i) m(i, j) *= f;
      } else if (v[j] > 0.0) {
        result.matrix = m;
        result.iterations = iter;
        result.converged = false;
        return result;
      }
    }

    const double violation = marginal_violation_l1(m, u, v);
    if (violation > prev_violation + 1e-9 * (1.0 + prev_violation))
      throw std::logic_error("IPF marginal violation increased between iterations");
    prev_violation = violation;

    result.iterations = iter;
    result.max_change = (m - before).cwiseAbs().maxCoeff();
    // Degenerate instances whose fit sits on the polytope boundary converge
    // sublinearly: entry changes die out long before the marginals match, so
    // convergence demands both.
    if (result.max_change < tol &&
        marginal_violation_max(m, u, v) <= tol * static_cast<double>(s)) {
      result.converged = true;
      break;
    }
  }
  result.matrix = std::move(m);
  return result;
}

Eigen::MatrixXd add_structural_offset(const Eigen::MatrixXd& seed, const RouteConfig& route,
                                      double value) {
  Eigen::MatrixXd out = seed;
  for (int i = 0; i < route.stops - 1; ++i)
    for (int j = i + 1; j < route.stops; ++j) out(i, j) += value;
  return out;
}

std::vector<Eigen::MatrixXd> build_seed(const std::vector<ODVector>& truth, const Dataset& data,
                                        const std::vector<TimeWindow>& periods,
                                        int picks_per_period, Rng& rng) {
  if (truth.size() != data.trips.size())
    throw std::invalid_argument("truth/trip count mismatch");
  if (picks_per_period < 1) throw std::invalid_argument("picks_per_period must be >= 1");

  std::vector<Eigen::MatrixXd> seeds;
  seeds.reserve(periods.size());
  for (std::size_t p = 0; p < periods.size(); ++p) {
    std::vector<std::size_t> members;
    for (std::size_t n = 0; n < data.trips.size(); ++n)
      if (periods[p].contains(data.trips[n].departure_s)) members.push_back(n);
    if (members.size() < static_cast<std::size_t>(picks_per_period))
      throw std::invalid_argument("period " + std::to_string(p + 1) + " has only " +
                                  std::to_string(members.size()) + " trips, need " +
                                  std::to_string(picks_per_period));
    // Sample picks without replacement.
    for (std::size_t k = 0; k < static_cast<std::size_t>(picks_per_period); ++k) {
      const std::size_t j =
          k + static_cast<std::size_t>(runif(rng) * static_cast<double>(members.size() - k));
      std::swap(members[k], members[std::min(j, members.size() - 1)]);
    }
    Eigen::MatrixXd seed = Eigen::MatrixXd::Zero(data.route.stops, data.route.stops);
    for (int k = 0; k < picks_per_period; ++k)
      seed += od_vector_to_matrix(truth[members[static_cast<std::size_t>(k)]], data.route);
    seeds.push_back(seed / static_cast<double>(picks_per_period));
  }
  return seeds;
}

std::vector<IpfResult> aggregated_ipf(const Dataset& data, const std::vector<TimeWindow>& periods,
                                      const std::vector<Eigen::MatrixXd>& seeds, double tol,
                                      int max_iter) {
  if (seeds.size() != periods.size())
    throw std::invalid_argument("one seed per period required");
  const int s = data.route.stops;
  std::vector<IpfResult> out;
  out.reserve(periods.size());
  for (std::size_t p = 0; p < periods.size(); ++p) {
    Eigen::VectorXd u = Eigen::VectorXd::Zero(s);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(s);
    for (const auto& trip : data.trips) {
      if (!periods[p].contains(trip.departure_s)) continue;
      for (int i = 0; i < s; ++i) {
        u[i] += trip.boardings[static_cast<std::size_t>(i)];
        v[i] += trip.alightings[static_cast<std::size_t>(i)];
      }
    }
    out.push_back(ipf(seeds[p], u, v, tol, max_iter));
  }
  return out;
}

ChainConfig static_model_config(const ChainConfig& base) {
  ChainConfig cfg = base;
  cfg.rank = 1;
  cfg.freeze_psi_ones = true;
  return cfg;
}

std::vector<TimeWindow> default_periods() {
  return {{7 * 3600.0, 9 * 3600.0},
          {9 * 3600.0, 17 * 3600.0},
          {17 * 3600.0, 19 * 3600.0},
          {19 * 3600.0, 23 * 3600.0}};
}

}  // namespace busod
