// Metropolis-within-Gibbs over the latent OD vectors and the parameter set.
//
// Each sweep refreshes the alighting probabilities, Metropolis-updates every
// journey's OD vector (conditionally independent, per-trip RNG streams),
// records retained draws, then updates Psi column-wise and Phi block-wise by
// elliptical slice sampling (Murray, Adams and MacKay, 2010) and the
// temperature rho by shrinkage slice sampling on a randomly positioned
// fixed-width bracket (Neal, 2003).
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

#include "busod/latent_model.hpp"
#include "busod/od_sampler.hpp"
#include "busod/route_model.hpp"
#include "busod/rng.hpp"

namespace busod {

struct ChainConfig {
  int burn_in = 4000;    // M1
  int retained = 1000;   // M2, sweeps after burn-in
  int thin = 1;          // keep every thin-th post-burn-in sweep
  int od_steps_per_sweep = 1;
  double slice_width_rho = 0.5;
  std::uint64_t seed = 1;
  int rank = 4;  // D
  int threads = 1;
  bool freeze_psi_ones = false;  // static variant: rank 1, Psi fixed at ones
  bool freeze_parameters = false;  // validation hook: hold Theta at its
                                   // initial value, sampling only OD vectors

  // 100,000 total iterations, last 5,000 retained.
  static ChainConfig paper_scale();
};

struct SweepRecord {
  int sweep = 0;
  double loglik = 0.0;         // dataset log-likelihood after the OD updates
  double od_accept_rate = 0.0;
  double rho = 0.0;            // value at the end of the sweep
};

struct PosteriorSamples {
  RouteConfig route;
  std::vector<std::string> trip_ids;
  std::vector<std::vector<ODVector>> od_draws;        // [draw][trip]
  std::vector<std::vector<LambdaTable>> lambda_draws;  // [draw][trip]
  std::vector<SweepRecord> diagnostics;

  int n_draws() const { return static_cast<int>(od_draws.size()); }
};

// One elliptical slice sampling transition for a zero-mean Gaussian prior
// given by its lower Cholesky factor. Always returns a point satisfying the
// slice threshold; throws std::runtime_error on NaN likelihood.
Eigen::VectorXd ess_step(const Eigen::VectorXd& current, const Eigen::MatrixXd& chol_lower,
                         const std::function<double(const Eigen::VectorXd&)>& loglik, Rng& rng);

// Column-wise ESS refresh of Psi with GP prior Cholesky `kernel_chol_lower`.
LatentState update_Psi(const LatentState& state, const std::vector<ODVector>& od,
                       const Dataset& data, const Eigen::MatrixXd& kernel_chol_lower, Rng& rng);

// Block-by-block, column-by-column ESS refresh of Phi with the isotropic
// N(0, sigma2_phi I) prior.
LatentState update_Phi(const LatentState& state, const std::vector<ODVector>& od,
                       const Dataset& data, const PriorSpec& prior, Rng& rng);

// Shrinkage slice sampling step for rho on its natural scale; the target is
// loglik(rho) + log_prior_rho(rho). Proposals <= 0 score -inf and shrink.
double slice_step_rho(double rho, const std::function<double(double)>& loglik,
                      const PriorSpec& prior, double eps, Rng& rng);

// Full sampler. Deterministic function of (data, prior, cfg): all streams
// derive from cfg.seed and results are bit-identical for any thread count.
// `on_sweep`, when set, receives one record per sweep for live monitoring.
PosteriorSamples run_gibbs(const Dataset& data, const PriorSpec& prior, const ChainConfig& cfg,
                           const std::function<void(const SweepRecord&)>& on_sweep = {});

struct ODSummaryEntry {
  double mean = 0.0;
  double sd = 0.0;  // n-1 denominator
  double q025 = 0.0;
  double q975 = 0.0;
};

struct PosteriorSummary {
  RouteConfig route;
  std::vector<std::string> trip_ids;
  std::vector<std::vector<ODSummaryEntry>> trips;  // [trip][od flat index]
};

// Entrywise Monte Carlo summaries over retained draws; quantiles by linear
// interpolation of the empirical CDF. Requires at least 2 draws.
PosteriorSummary posterior_od_summary(const PosteriorSamples& samples);

}  // namespace busod
