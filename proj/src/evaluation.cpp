#include "busod/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "busod/logmath.hpp"

namespace busod {

double rmse(const std::vector<double>& truth, const std::vector<double>& estimate) {
  if (truth.empty() || truth.size() != estimate.size())
    throw std::invalid_argument("rmse needs equal-length non-empty sequences");
  double ss = 0.0;
  for (std::size_t k = 0; k < truth.size(); ++k) {
    const double d = truth[k] - estimate[k];
    ss += d * d;
  }
  return std::sqrt(ss / static_cast<double>(truth.size()));
}

double crps_samples(const std::vector<double>& samples, double y) {
  if (samples.empty()) throw std::invalid_argument("CRPS needs at least one sample");
  const double m = static_cast<double>(samples.size());
  double first = 0.0;
  for (double x : samples) first += std::abs(x - y);
  double second = 0.0;
  for (double xi : samples)
    for (double xj : samples) second += std::abs(xi - xj);
  return first / m - second / (2.0 * m * m);
}

double crps_integral_oracle(const std::vector<double>& samples, double y, double grid_step) {
  if (samples.empty()) throw std::invalid_argument("CRPS needs at least one sample");
  if (!(grid_step > 0.0)) throw std::invalid_argument("grid step must be positive");

  // The integrand is 0 outside [lo, hi] and piecewise constant between
  // breakpoints, so each segment is integrated on its own sub-grid.
  std::vector<double> breaks = samples;
  breaks.push_back(y);
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());

  std::vector<double> sorted = samples;
  std::sort(sorted.begin(), sorted.end());
  auto cdf = [&](double x) {
    return static_cast<double>(std::upper_bound(sorted.begin(), sorted.end(), x) -
                               sorted.begin()) /
           static_cast<double>(sorted.size());
  };

  double integral = 0.0;
  for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
    const double a = breaks[k];
    const double b = breaks[k + 1];
    const long cells = std::max(1L, static_cast<long>(std::ceil((b - a) / grid_step)));
    const double h = (b - a) / static_cast<double>(cells);
    for (long c = 0; c < cells; ++c) {
      const double x = a + (static_cast<double>(c) + 0.5) * h;
      const double f = cdf(x) - (x >= y ? 1.0 : 0.0);
      integral += f * f * h;
    }
  }
  return integral;
}

std::vector<double> od_loglik_under_lambda(
    const std::vector<ODVector>& truth, const Dataset& data,
    const std::vector<std::vector<LambdaTable>>& lambda_draws) {
  if (truth.size() != data.trips.size())
    throw std::invalid_argument("truth/trip count mismatch");
  const int S = data.route.stops;
  std::vector<double> out;
  out.reserve(lambda_draws.size());
  for (const auto& tables : lambda_draws) {
    if (tables.size() != data.trips.size())
      throw std::invalid_argument("lambda draw does not cover every trip");
    double ll = 0.0;
    for (std::size_t n = 0; n < data.trips.size(); ++n) {
      for (int i = 0; i < S - 1; ++i) {
        const int u = data.trips[n].boardings[static_cast<std::size_t>(i)];
        if (u == 0) continue;
        ll += multinomial_logpmf(truth[n].counts.data() + od_flat_index(S, i, i + 1), S - 1 - i,
                                 u, tables[n].row(i));
      }
    }
    out.push_back(ll);
  }
  return out;
}

PeriodAggregate aggregate_periods(const std::vector<Eigen::MatrixXd>& od_estimates,
                                  const Dataset& data, const std::vector<TimeWindow>& periods) {
  if (od_estimates.size() != data.trips.size())
    throw std::invalid_argument("estimate/trip count mismatch");
  for (std::size_t p = 0; p < periods.size(); ++p) {
    if (!(periods[p].end_s > periods[p].start_s))
      throw std::invalid_argument("empty period window");
    for (std::size_t q = p + 1; q < periods.size(); ++q)
      if (periods[p].start_s < periods[q].end_s && periods[q].start_s < periods[p].end_s)
        throw std::invalid_argument("periods must be disjoint");
  }

  PeriodAggregate out;
  const int s = data.route.stops;
  out.hourly.assign(periods.size(), Eigen::MatrixXd::Zero(s, s));
  for (std::size_t n = 0; n < data.trips.size(); ++n) {
    bool assigned = false;
    for (std::size_t p = 0; p < periods.size(); ++p) {
      if (periods[p].contains(data.trips[n].departure_s)) {
        out.hourly[p] += od_estimates[n];
        assigned = true;
        break;
      }
    }
    if (!assigned) out.unassigned_trips.push_back(static_cast<int>(n));
  }
  for (std::size_t p = 0; p < periods.size(); ++p) out.hourly[p] /= periods[p].hours();
  return out;
}

double interval_coverage(const PosteriorSummary& summary, const std::vector<ODVector>& truth) {
  if (summary.trips.size() != truth.size())
    throw std::invalid_argument("summary/truth trip count mismatch");
  long covered = 0;
  long total = 0;
  for (std::size_t n = 0; n < truth.size(); ++n) {
    if (truth[n].counts.size() != summary.trips[n].size())
      throw std::invalid_argument("summary/truth entry count mismatch");
    for (std::size_t k = 0; k < summary.trips[n].size(); ++k) {
      const auto& e = summary.trips[n][k];
      const double t = truth[n].counts[k];
      covered += (t >= e.q025 && t <= e.q975) ? 1 : 0;
      ++total;
    }
  }
  if (total == 0) throw std::invalid_argument("no entries to cover");
  return static_cast<double>(covered) / static_cast<double>(total);
}

}  // namespace busod
