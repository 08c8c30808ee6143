#include "busod/param_sampler.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "busod/logmath.hpp"
#include "busod/stats.hpp"

namespace busod {

namespace {

constexpr std::uint64_t kInitContext = 0;      // sweep index 0 is reserved for initialization
constexpr std::uint64_t kParamContext = ~0ULL; // sequential parameter-update stream

// Chunked parallel loop; fn(begin, end) over disjoint ranges. Results must not
// depend on the partition.
template <typename Fn>
void parallel_for(int n, int threads, Fn&& fn) {
  if (threads <= 1 || n <= 1) {
    fn(0, n);
    return;
  }
  const int workers = std::min(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  const int chunk = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const int begin = w * chunk;
    const int end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  for (auto& t : pool) t.join();
}

void validate_chain_config(const ChainConfig& cfg) {
  if (cfg.burn_in < 0) throw std::invalid_argument("burn_in must be >= 0");
  if (cfg.retained < 1) throw std::invalid_argument("retained must be >= 1");
  if (cfg.thin < 1) throw std::invalid_argument("thin must be >= 1");
  if (cfg.od_steps_per_sweep < 1) throw std::invalid_argument("od_steps_per_sweep must be >= 1");
  if (!(cfg.slice_width_rho > 0.0)) throw std::invalid_argument("slice_width_rho must be > 0");
  if (cfg.rank < 1) throw std::invalid_argument("rank must be >= 1");
  if (cfg.freeze_psi_ones && cfg.rank != 1)
    throw std::invalid_argument("the static variant requires rank 1");
}

}  // namespace

ChainConfig ChainConfig::paper_scale() {
  ChainConfig cfg;
  cfg.burn_in = 95000;
  cfg.retained = 5000;
  return cfg;
}

Eigen::VectorXd ess_step(const Eigen::VectorXd& current, const Eigen::MatrixXd& chol_lower,
                         const std::function<double(const Eigen::VectorXd&)>& loglik, Rng& rng) {
  const Eigen::Index n = current.size();
  Eigen::VectorXd white(n);
  for (Eigen::Index i = 0; i < n; ++i) white[i] = rnorm(rng);
  const Eigen::VectorXd nu = chol_lower.triangularView<Eigen::Lower>() * white;

  const double ll_cur = loglik(current);
  if (std::isnan(ll_cur)) throw std::runtime_error("ESS: likelihood returned NaN");
  const double log_c = ll_cur + std::log(runif(rng));

  constexpr double tau = 2.0 * M_PI;
  double theta = runif(rng, 0.0, tau);
  double theta_min = theta - tau;
  double theta_max = theta;

  // The bracket always contains 0, and the proposal at theta = 0 is the
  // current point, which satisfies the threshold; shrinkage terminates.
  for (long iter = 0; iter < 1000000; ++iter) {
    const Eigen::VectorXd prop = std::cos(theta) * current + std::sin(theta) * nu;
    const double ll = loglik(prop);
    if (std::isnan(ll)) throw std::runtime_error("ESS: likelihood returned NaN");
    if (ll > log_c) return prop;
    if (theta < 0.0)
      theta_min = theta;
    else
      theta_max = theta;
    theta = runif(rng, theta_min, theta_max);
  }
  throw std::runtime_error("ESS: bracket failed to terminate (inconsistent likelihood?)");
}

LatentState update_Psi(const LatentState& state, const std::vector<ODVector>& od,
                       const Dataset& data, const Eigen::MatrixXd& kernel_chol_lower, Rng& rng) {
  LatentState out = state;
  for (int d = 0; d < out.rank(); ++d) {
    auto loglik = [&](const Eigen::VectorXd& psi) {
      LatentState candidate = out;
      candidate.Psi.col(d) = psi;
      return dataset_loglik(od, data, candidate);
    };
    out.Psi.col(d) = ess_step(out.Psi.col(d), kernel_chol_lower, loglik, rng);
  }
  return out;
}

LatentState update_Phi(const LatentState& state, const std::vector<ODVector>& od,
                       const Dataset& data, const PriorSpec& prior, Rng& rng) {
  const int S = data.route.stops;
  LatentState out = state;
  const double sigma0 = std::sqrt(prior.sigma2_phi);
  for (int i = 0; i < S - 2; ++i) {
    const int offset = logit_flat_index(S, i, i + 1);
    const int len = S - i - 2;  // logits for stops i+1..S-1
    const Eigen::MatrixXd chol = sigma0 * Eigen::MatrixXd::Identity(len, len);
    for (int d = 0; d < out.rank(); ++d) {
      auto loglik = [&](const Eigen::VectorXd& block) {
        LatentState candidate = out;
        candidate.Phi.col(d).segment(offset, len) = block;
        return dataset_loglik(od, data, candidate);
      };
      out.Phi.col(d).segment(offset, len) =
          ess_step(out.Phi.col(d).segment(offset, len), chol, loglik, rng);
    }
  }
  return out;
}

double slice_step_rho(double rho, const std::function<double(double)>& loglik,
                      const PriorSpec& prior, double eps, Rng& rng) {
  if (!(rho > 0.0)) throw std::invalid_argument("rho must be positive");
  if (!(eps > 0.0)) throw std::invalid_argument("slice width must be positive");
  auto target = [&](double r) {
    const double lp = log_prior_rho(r, prior);
    if (lp == neg_inf) return neg_inf;  // r <= 0: never evaluate the likelihood
    const double ll = loglik(r);
    if (std::isnan(ll)) throw std::runtime_error("slice sampler: likelihood returned NaN");
    return ll + lp;
  };

  const double log_c = target(rho) + std::log(runif(rng));
  const double kappa = runif(rng, 0.0, eps);
  double lo = rho - kappa;
  double hi = lo + eps;

  for (long iter = 0; iter < 1000000; ++iter) {
    const double prop = runif(rng, lo, hi);
    if (target(prop) > log_c) return prop;
    if (prop < rho)
      lo = prop;
    else
      hi = prop;
  }
  throw std::runtime_error("slice sampler: bracket failed to terminate");
}

PosteriorSamples run_gibbs(const Dataset& data, const PriorSpec& prior, const ChainConfig& cfg,
                           const std::function<void(const SweepRecord&)>& on_sweep) {
  validate_chain_config(cfg);
  const int n_trips = data.n_trips();
  if (n_trips < 1) throw std::invalid_argument("run_gibbs needs at least one trip");
  for (const auto& trip : data.trips) {
    const auto verdict = validate_observation(trip);
    if (!verdict.ok())
      throw std::invalid_argument("invalid observation for trip '" + trip.trip_id +
                                  "': " + verdict.describe());
  }

  // Kernel Cholesky once per run; the static variant never samples Psi and
  // skips the O(N^3) factorization.
  Eigen::MatrixXd kernel_chol;
  if (!cfg.freeze_psi_ones && !cfg.freeze_parameters)
    kernel_chol = kernel_cholesky(data.departure_times(), prior.kernel).lower;

  Rng param_rng = make_stream(cfg.seed, kParamContext);
  LatentState state;
  state.Phi.resize(logit_rows(data.route), cfg.rank);
  for (Eigen::Index c = 0; c < state.Phi.cols(); ++c)
    for (Eigen::Index r = 0; r < state.Phi.rows(); ++r) state.Phi(r, c) = rnorm(param_rng);
  if (cfg.freeze_psi_ones) {
    state.Psi = Eigen::MatrixXd::Ones(n_trips, 1);
  } else {
    state.Psi.resize(n_trips, cfg.rank);
    for (Eigen::Index c = 0; c < state.Psi.cols(); ++c)
      for (Eigen::Index r = 0; r < state.Psi.rows(); ++r) state.Psi(r, c) = rnorm(param_rng);
  }
  state.rho = std::exp(prior.mu_rho);

  std::vector<ODVector> od(static_cast<std::size_t>(n_trips));
  parallel_for(n_trips, cfg.threads, [&](int begin, int end) {
    for (int n = begin; n < end; ++n) {
      Rng rng = make_stream(cfg.seed, kInitContext, static_cast<std::uint64_t>(n));
      od[static_cast<std::size_t>(n)] = init_feasible(data.trips[static_cast<std::size_t>(n)], rng);
    }
  });

  PosteriorSamples samples;
  samples.route = data.route;
  samples.trip_ids.reserve(static_cast<std::size_t>(n_trips));
  for (const auto& trip : data.trips) samples.trip_ids.push_back(trip.trip_id);
  const int n_retained = cfg.retained / cfg.thin;
  samples.od_draws.reserve(static_cast<std::size_t>(n_retained));
  samples.lambda_draws.reserve(static_cast<std::size_t>(n_retained));
  samples.diagnostics.reserve(static_cast<std::size_t>(cfg.burn_in + cfg.retained));

  const int total_sweeps = cfg.burn_in + cfg.retained;
  std::vector<int> accepted(static_cast<std::size_t>(n_trips), 0);
  std::vector<double> trip_ll(static_cast<std::size_t>(n_trips), 0.0);

  for (int sweep = 1; sweep <= total_sweeps; ++sweep) {
    const std::vector<LambdaTable> tables = all_lambdas(state, data.route);

    parallel_for(n_trips, cfg.threads, [&](int begin, int end) {
      for (int n = begin; n < end; ++n) {
        const auto idx = static_cast<std::size_t>(n);
        Rng rng = make_stream(cfg.seed, static_cast<std::uint64_t>(sweep),
                              static_cast<std::uint64_t>(n));
        int n_accepted = 0;
        for (int step = 0; step < cfg.od_steps_per_sweep; ++step) {
          MhResult result = mh_update_od(od[idx], data.trips[idx], tables[idx], rng);
          od[idx] = std::move(result.y);
          n_accepted += result.accepted ? 1 : 0;
        }
        accepted[idx] = n_accepted;
        trip_ll[idx] = trip_loglik(od[idx], data.trips[idx], tables[idx]);
      }
    });

    // Reductions in trip order so thread counts cannot change the chain.
    double sweep_ll = 0.0;
    long n_accepted = 0;
    for (int n = 0; n < n_trips; ++n) {
      sweep_ll += trip_ll[static_cast<std::size_t>(n)];
      n_accepted += accepted[static_cast<std::size_t>(n)];
    }

    if (sweep > cfg.burn_in && (sweep - cfg.burn_in) % cfg.thin == 0) {
      samples.od_draws.push_back(od);
      samples.lambda_draws.push_back(tables);
    }

    if (!cfg.freeze_parameters) {
      if (!cfg.freeze_psi_ones) state = update_Psi(state, od, data, kernel_chol, param_rng);
      state = update_Phi(state, od, data, prior, param_rng);
      auto rho_loglik = [&](double r) {
        LatentState candidate = state;
        candidate.rho = r;
        return dataset_loglik(od, data, candidate);
      };
      state.rho = slice_step_rho(state.rho, rho_loglik, prior, cfg.slice_width_rho, param_rng);
    }

    SweepRecord record{sweep, sweep_ll,
                       static_cast<double>(n_accepted) /
                           (static_cast<double>(n_trips) * cfg.od_steps_per_sweep),
                       state.rho};
    samples.diagnostics.push_back(record);
    if (on_sweep) on_sweep(record);
  }
  return samples;
}

PosteriorSummary posterior_od_summary(const PosteriorSamples& samples) {
  const int n_draws = samples.n_draws();
  if (n_draws < 2) throw std::invalid_argument("posterior summary needs at least 2 retained draws");
  const int n_trips = static_cast<int>(samples.trip_ids.size());
  const int m = samples.route.od_pairs();

  PosteriorSummary summary;
  summary.route = samples.route;
  summary.trip_ids = samples.trip_ids;
  summary.trips.assign(static_cast<std::size_t>(n_trips),
                       std::vector<ODSummaryEntry>(static_cast<std::size_t>(m)));

  std::vector<double> values(static_cast<std::size_t>(n_draws));
  for (int n = 0; n < n_trips; ++n) {
    for (int k = 0; k < m; ++k) {
      for (int d = 0; d < n_draws; ++d)
        values[static_cast<std::size_t>(d)] =
            samples.od_draws[static_cast<std::size_t>(d)][static_cast<std::size_t>(n)][k];
      const MeanSd ms = mean_sd(values);
      std::sort(values.begin(), values.end());
      summary.trips[static_cast<std::size_t>(n)][static_cast<std::size_t>(k)] = {
          ms.mean, ms.sd, linear_quantile(values, 0.025), linear_quantile(values, 0.975)};
    }
  }
  return summary;
}

}  // namespace busod
