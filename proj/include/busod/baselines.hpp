// Iterative proportional fitting baselines and the static-model configuration.
//
// IPF alternately rescales the rows and columns of an upper-triangular seed
// until the marginals match the observed boarding/alighting counts. Seeds
// built from sampled true matrices get a 0.01 offset on every structural cell
// (add_structural_offset) so zero cells cannot block mass; ipf() itself takes
// the seed verbatim, which keeps exactly matching seeds exact fixed points.
#pragma once

#include <Eigen/Dense>
#include <vector>

#include "busod/param_sampler.hpp"
#include "busod/route_model.hpp"
#include "busod/rng.hpp"

namespace busod {

struct IpfResult {
  Eigen::MatrixXd matrix;
  bool converged = false;
  int iterations = 0;
  double max_change = 0.0;  // last full-iteration max absolute entry change
};

// Fits the upper triangle of `seed` to row sums u and column sums v (both
// length S, sum(u) == sum(v)). Rows with u_i == 0 and columns with v_j == 0
// are zeroed. Stops when the max absolute entry change of a full row+column
// pass drops below tol, or flags non-convergence after max_iter passes.
IpfResult ipf(const Eigen::MatrixXd& seed, const Eigen::VectorXd& u, const Eigen::VectorXd& v,
              double tol = 1e-8, int max_iter = 10000);

// value added to every structural (upper-triangular) cell.
Eigen::MatrixXd add_structural_offset(const Eigen::MatrixXd& seed, const RouteConfig& route,
                                      double value = 0.01);

// Per-period seed: the mean of `picks_per_period` randomly chosen true OD
// matrices among the period's trips. Throws if a period has too few trips.
std::vector<Eigen::MatrixXd> build_seed(const std::vector<ODVector>& truth, const Dataset& data,
                                        const std::vector<TimeWindow>& periods,
                                        int picks_per_period, Rng& rng);

// Sums (u, v) over each period's trips and runs one IPF per period against
// the period seed. seeds[k] pairs with periods[k].
std::vector<IpfResult> aggregated_ipf(const Dataset& data, const std::vector<TimeWindow>& periods,
                                      const std::vector<Eigen::MatrixXd>& seeds, double tol = 1e-8,
                                      int max_iter = 10000);

// The non-temporal variant: rank 1 with Psi frozen at all-ones, so every
// journey shares one lambda table.
ChainConfig static_model_config(const ChainConfig& base);

// Paper-default analysis windows: 7-9, 9-17, 17-19 and 19-23 o'clock.
std::vector<TimeWindow> default_periods();

}  // namespace busod
