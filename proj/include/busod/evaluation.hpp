// Point and probabilistic accuracy metrics, plus period aggregation.
#pragma once

#include <Eigen/Dense>
#include <vector>

#include "busod/latent_model.hpp"
#include "busod/param_sampler.hpp"
#include "busod/route_model.hpp"
#include "busod/stats.hpp"

namespace busod {

// sqrt(mean squared error); sequences must have equal positive length.
double rmse(const std::vector<double>& truth, const std::vector<double>& estimate);

// Sample CRPS estimator: (1/m) sum |X_i - y| - 1/(2 m^2) sum_ij |X_i - X_j|.
double crps_samples(const std::vector<double>& samples, double y);

// Validation route for crps_samples: integrates (F_hat(x) - 1[x >= y])^2 over
// the hull of {samples, y}, on a grid refined to at most grid_step within each
// segment between adjacent jump points of the piecewise-constant integrand.
double crps_integral_oracle(const std::vector<double>& samples, double y, double grid_step);

// Log-likelihood of the true OD rows under each retained lambda draw:
// result[m] = sum_n sum_i log Multinomial(y_i^n | u_i^n, lambda_i^n(m)).
std::vector<double> od_loglik_under_lambda(
    const std::vector<ODVector>& truth, const Dataset& data,
    const std::vector<std::vector<LambdaTable>>& lambda_draws);

struct PeriodAggregate {
  std::vector<Eigen::MatrixXd> hourly;   // per period, summed matrices / window hours
  std::vector<int> unassigned_trips;     // indices of trips outside every window
};

// Sums per-trip OD matrices over each window and divides by the window length
// in hours. Trips outside all windows are reported, never silently dropped.
PeriodAggregate aggregate_periods(const std::vector<Eigen::MatrixXd>& od_estimates,
                                  const Dataset& data, const std::vector<TimeWindow>& periods);

// Fraction of true entries inside [q025, q975], inclusive.
double interval_coverage(const PosteriorSummary& summary, const std::vector<ODVector>& truth);

}  // namespace busod
