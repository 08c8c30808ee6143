// Latent parameterization of alighting probabilities.
//
// Logits for journey n live in column n of G = Phi * Psi^T. Rows of G stack
// blocks for boarding stops i = 1..S-2 (block i has S-i-1 rows, one per
// reachable stop j = i+1..S-1); the terminal stop S is the softmax reference
// category with implicit logit 0, and boarding stop S-1 has the single
// degenerate probability 1. Row counts y_i are multinomial draws with these
// probabilities, and Psi columns carry a squared-exponential GP prior over
// departure times.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <vector>

#include "busod/route_model.hpp"

namespace busod {

struct LatentState {
  Eigen::MatrixXd Phi;  // (S-2)(S-1)/2 x D, stacked boarding-stop blocks
  Eigen::MatrixXd Psi;  // N x D, one row per journey in departure-time order
  double rho = 0.1;     // softmax temperature, > 0

  int rank() const { return static_cast<int>(Phi.cols()); }
};

struct KernelSpec {
  double sigma = 1.0;         // amplitude
  double lengthscale = 3600.0;  // seconds
  double jitter = 1e-6;       // added to the diagonal; default 1e-6 * sigma^2
};

struct PriorSpec {
  double mu_rho = std::log(0.1);
  double sigma2_rho = 1.0;
  double sigma2_phi = 1.0;  // entrywise Phi variance
  KernelSpec kernel{};
};

// Alighting probabilities of one journey, flattened like an ODVector:
// probs[od_flat_index(S, i, j)] is the probability that a passenger boarding
// stop i alights at stop j.
struct LambdaTable {
  int stops = 0;
  std::vector<double> probs;

  // Row for boarding stop i (0-based): probabilities over stops i+1..S-1.
  const double* row(int i) const { return probs.data() + od_flat_index(stops, i, i + 1); }
  int row_length(int i) const { return stops - 1 - i; }
};

// Number of logit rows, (S-2)(S-1)/2.
inline int logit_rows(const RouteConfig& route) {
  const int s = route.stops;
  return (s - 2) * (s - 1) / 2;
}

// Flat row of logit pair (i, j), 0-based, j <= S-2.
inline int logit_flat_index(int stops, int i, int j) {
  return i * (stops - 2) - i * (i - 1) / 2 + (j - i - 1);
}

// Throws std::invalid_argument on shape/positivity violations.
void validate_state(const LatentState& state, const RouteConfig& route, int n_trips);

// G = Phi * Psi^T; column n holds all logits of journey n.
Eigen::MatrixXd compute_G(const LatentState& state);

// Softmax over (rho * g, 0): the final entry is the zero-logit reference
// category. Log-space with max subtraction. g may be empty (returns {1}).
std::vector<double> softmax_lambda(const Eigen::VectorXd& g_block, double rho);

// Lambda table of journey n under `state`.
LambdaTable lambdas_for_trip(const LatentState& state, int n, const RouteConfig& route);

// Tables for all journeys (computes G once).
std::vector<LambdaTable> all_lambdas(const LatentState& state, const RouteConfig& route);

// log Multinomial(y_row | u_i, lam) over `len` categories. 0 when u_i == 0,
// -inf if mass sits on a zero probability. Throws if sum(y_row) != u_i.
double multinomial_logpmf(const int* y_row, int len, int u_i, const double* lam);

// Sum of row log-pmfs for one journey; throws std::invalid_argument if y is
// infeasible for the observed counts.
double trip_loglik(const ODVector& y, const TripObservation& obs, const LambdaTable& lambdas);

// Sum of trip_loglik over the dataset; the likelihood handle handed to the
// elliptical slice and slice samplers. Accumulated in trip order.
double dataset_loglik(const std::vector<ODVector>& od, const Dataset& data,
                      const LatentState& state);

// K[i][j] = sigma^2 exp(-(t_i-t_j)^2 / (2 l^2)) + jitter * 1[i==j].
Eigen::MatrixXd kernel_matrix(const Eigen::VectorXd& times, const KernelSpec& spec);

struct KernelCholesky {
  Eigen::MatrixXd lower;  // L with K = L L^T
  double jitter_used = 0.0;
};

// Cholesky of the kernel matrix. Departure times may nearly coincide, so the
// jitter escalates x10 from spec.jitter up to 1e-2 * sigma^2 before failing
// with std::runtime_error.
KernelCholesky kernel_cholesky(const Eigen::VectorXd& times, const KernelSpec& spec);

// Joint log prior density: sum_d N(psi_d; 0, K) + entrywise N(phi; 0,
// sigma2_phi) + N(log rho; mu_rho, sigma2_rho). The last term is the density
// of the log-transformed temperature; the natural-scale density used by the
// slice sampler is log_prior_rho below. -inf when rho <= 0.
double log_prior(const LatentState& state, const PriorSpec& prior,
                 const Eigen::MatrixXd& kernel_chol_lower);

// Natural-scale log prior of rho: N(log rho; mu, sigma2) with the change of
// variables Jacobian -log rho. -inf when rho <= 0.
double log_prior_rho(double rho, const PriorSpec& prior);

}  // namespace busod
