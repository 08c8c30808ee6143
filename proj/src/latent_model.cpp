#include "busod/latent_model.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "busod/logmath.hpp"

namespace busod {

void validate_state(const LatentState& state, const RouteConfig& route, int n_trips) {
  if (!(state.rho > 0.0)) throw std::invalid_argument("temperature rho must be positive");
  if (state.Phi.rows() != logit_rows(route))
    throw std::invalid_argument("Phi has " + std::to_string(state.Phi.rows()) +
                                " rows, expected " + std::to_string(logit_rows(route)) +
                                " for a route with " + std::to_string(route.stops) + " stops");
  if (state.Psi.rows() != n_trips)
    throw std::invalid_argument("Psi has " + std::to_string(state.Psi.rows()) +
                                " rows, expected one per trip (" + std::to_string(n_trips) + ")");
  if (state.Phi.cols() != state.Psi.cols())
    throw std::invalid_argument("Phi and Psi must share the factor rank");
}

Eigen::MatrixXd compute_G(const LatentState& state) {
  if (state.Phi.cols() != state.Psi.cols())
    throw std::invalid_argument("Phi and Psi must share the factor rank");
  return state.Phi * state.Psi.transpose();
}

namespace {

// Softmax over (rho * g[0..k-1], 0) written into out[0..k]; the trailing slot
// is the zero-logit reference category.
void softmax_into(const double* g, int k, double rho, double* out) {
  double max_logit = 0.0;
  for (int m = 0; m < k; ++m) {
    if (!std::isfinite(g[m])) throw std::invalid_argument("non-finite logit");
    max_logit = std::max(max_logit, rho * g[m]);
  }
  double denom = std::exp(-max_logit);
  for (int m = 0; m < k; ++m) {
    out[m] = std::exp(rho * g[m] - max_logit);
    denom += out[m];
  }
  for (int m = 0; m < k; ++m) out[m] /= denom;
  out[k] = std::exp(-max_logit) / denom;
}

LambdaTable lambdas_from_logits(const Eigen::VectorXd& g_col, double rho,
                                const RouteConfig& route) {
  if (!(rho > 0.0)) throw std::invalid_argument("temperature rho must be positive");
  const int S = route.stops;
  LambdaTable table;
  table.stops = S;
  table.probs.resize(static_cast<std::size_t>(route.od_pairs()));
  for (int i = 0; i < S - 2; ++i)
    softmax_into(g_col.data() + logit_flat_index(S, i, i + 1), S - i - 2, rho,
                 table.probs.data() + od_flat_index(S, i, i + 1));
  table.probs.back() = 1.0;  // boarding stop S-1 can only reach stop S
  return table;
}

}  // namespace

std::vector<double> softmax_lambda(const Eigen::VectorXd& g_block, double rho) {
  if (!(rho > 0.0)) throw std::invalid_argument("temperature rho must be positive");
  std::vector<double> p(static_cast<std::size_t>(g_block.size()) + 1);
  softmax_into(g_block.data(), static_cast<int>(g_block.size()), rho, p.data());
  return p;
}

LambdaTable lambdas_for_trip(const LatentState& state, int n, const RouteConfig& route) {
  if (n < 0 || n >= state.Psi.rows()) throw std::invalid_argument("trip index out of range");
  const Eigen::VectorXd g_col = state.Phi * state.Psi.row(n).transpose();
  return lambdas_from_logits(g_col, state.rho, route);
}

std::vector<LambdaTable> all_lambdas(const LatentState& state, const RouteConfig& route) {
  const Eigen::MatrixXd g = compute_G(state);
  std::vector<LambdaTable> tables;
  tables.reserve(static_cast<std::size_t>(g.cols()));
  for (Eigen::Index n = 0; n < g.cols(); ++n)
    tables.push_back(lambdas_from_logits(g.col(n), state.rho, route));
  return tables;
}

double multinomial_logpmf(const int* y_row, int len, int u_i, const double* lam) {
  int total = 0;
  for (int k = 0; k < len; ++k) total += y_row[k];
  if (total != u_i)
    throw std::invalid_argument("multinomial counts sum to " + std::to_string(total) +
                                ", expected " + std::to_string(u_i));
  if (u_i == 0) return 0.0;
  double ll = log_factorial(u_i);
  for (int k = 0; k < len; ++k) {
    if (y_row[k] == 0) continue;
    if (lam[k] <= 0.0) return neg_inf;
    ll += y_row[k] * std::log(lam[k]) - log_factorial(y_row[k]);
  }
  return ll;
}

double trip_loglik(const ODVector& y, const TripObservation& obs, const LambdaTable& lambdas) {
  const int S = static_cast<int>(obs.boardings.size());
  RouteConfig route{S};
  const auto [u, v] = od_to_counts(y, route);
  if (u != obs.boardings || v != obs.alightings)
    throw std::invalid_argument("OD vector is infeasible for the observed counts of trip '" +
                                obs.trip_id + "'");
  double ll = 0.0;
  for (int i = 0; i < S - 1; ++i) {
    if (obs.boardings[static_cast<std::size_t>(i)] == 0) continue;
    const int base = od_flat_index(S, i, i + 1);
    ll += multinomial_logpmf(y.counts.data() + base, S - 1 - i,
                             obs.boardings[static_cast<std::size_t>(i)], lambdas.row(i));
  }
  return ll;
}

double dataset_loglik(const std::vector<ODVector>& od, const Dataset& data,
                      const LatentState& state) {
  if (od.size() != data.trips.size())
    throw std::invalid_argument("OD vector count does not match trip count");
  const auto tables = all_lambdas(state, data.route);
  double ll = 0.0;
  for (std::size_t n = 0; n < data.trips.size(); ++n)
    ll += trip_loglik(od[n], data.trips[n], tables[n]);
  return ll;
}

Eigen::MatrixXd kernel_matrix(const Eigen::VectorXd& times, const KernelSpec& spec) {
  if (!(spec.sigma > 0.0) || !(spec.lengthscale > 0.0) || !(spec.jitter > 0.0))
    throw std::invalid_argument("kernel hyperparameters must be positive");
  const Eigen::Index n = times.size();
  const double s2 = spec.sigma * spec.sigma;
  const double inv2l2 = 1.0 / (2.0 * spec.lengthscale * spec.lengthscale);
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::isfinite(times[i])) throw std::invalid_argument("non-finite departure time");
    k(i, i) = s2 + spec.jitter;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double d = times[i] - times[j];
      const double val = s2 * std::exp(-d * d * inv2l2);
      k(i, j) = val;
      k(j, i) = val;
    }
  }
  return k;
}

KernelCholesky kernel_cholesky(const Eigen::VectorXd& times, const KernelSpec& spec) {
  const double s2 = spec.sigma * spec.sigma;
  KernelSpec attempt = spec;
  while (true) {
    const Eigen::MatrixXd k = kernel_matrix(times, attempt);
    Eigen::LLT<Eigen::MatrixXd> llt(k);
    if (llt.info() == Eigen::Success) return {llt.matrixL(), attempt.jitter};
    if (attempt.jitter >= 1e-2 * s2)
      throw std::runtime_error("kernel Cholesky failed at maximum jitter " +
                               std::to_string(attempt.jitter));
    attempt.jitter = std::min(attempt.jitter * 10.0, 1e-2 * s2);
  }
}

namespace {

// log N(x; 0, K) via the lower Cholesky factor of K.
double log_mvn_zero_mean(const Eigen::VectorXd& x, const Eigen::MatrixXd& chol_lower) {
  const Eigen::VectorXd alpha =
      chol_lower.triangularView<Eigen::Lower>().solve(x);
  const double log_det_half = chol_lower.diagonal().array().log().sum();
  return -0.5 * (static_cast<double>(x.size()) * std::log(2.0 * M_PI) + alpha.squaredNorm()) -
         log_det_half;
}

}  // namespace

double log_prior(const LatentState& state, const PriorSpec& prior,
                 const Eigen::MatrixXd& kernel_chol_lower) {
  if (!(state.rho > 0.0)) return neg_inf;
  double lp = 0.0;
  for (Eigen::Index d = 0; d < state.Psi.cols(); ++d)
    lp += log_mvn_zero_mean(state.Psi.col(d), kernel_chol_lower);
  for (Eigen::Index c = 0; c < state.Phi.cols(); ++c)
    for (Eigen::Index r = 0; r < state.Phi.rows(); ++r)
      lp += log_normal_pdf(state.Phi(r, c), 0.0, prior.sigma2_phi);
  lp += log_normal_pdf(std::log(state.rho), prior.mu_rho, prior.sigma2_rho);
  return lp;
}

double log_prior_rho(double rho, const PriorSpec& prior) {
  if (!(rho > 0.0)) return neg_inf;
  const double lr = std::log(rho);
  return log_normal_pdf(lr, prior.mu_rho, prior.sigma2_rho) - lr;
}

}  // namespace busod
