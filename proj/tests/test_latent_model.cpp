#include <doctest.h>

#include <cmath>

#include "busod/latent_model.hpp"
#include "busod/logmath.hpp"
#include "busod/route_model.hpp"
#include "support.hpp"

using namespace busod;
using test::make_obs;

namespace {

LatentState make_state(int stops, int rank, int n_trips, double rho, Rng& rng,
                       double scale = 1.0) {
  LatentState state;
  state.rho = rho;
  state.Phi.resize((stops - 2) * (stops - 1) / 2, rank);
  state.Psi.resize(n_trips, rank);
  for (Eigen::Index c = 0; c < state.Phi.cols(); ++c)
    for (Eigen::Index r = 0; r < state.Phi.rows(); ++r) state.Phi(r, c) = scale * rnorm(rng);
  for (Eigen::Index c = 0; c < state.Psi.cols(); ++c)
    for (Eigen::Index r = 0; r < state.Psi.rows(); ++r) state.Psi(r, c) = scale * rnorm(rng);
  return state;
}

}  // namespace

TEST_CASE("compute_G multiplies the factors") {
  LatentState ones;
  ones.Phi = Eigen::MatrixXd::Ones(3, 1);
  ones.Psi = Eigen::MatrixXd::Ones(4, 1);
  CHECK((compute_G(ones) - Eigen::MatrixXd::Ones(3, 4)).cwiseAbs().maxCoeff() == 0.0);

  ones.Phi.setZero();
  CHECK(compute_G(ones).cwiseAbs().maxCoeff() == 0.0);

  // Entrywise match against a naive triple loop.
  Rng rng(11);
  LatentState state;
  state.Phi.resize(5, 2);
  state.Psi.resize(7, 2);
  for (Eigen::Index c = 0; c < 2; ++c) {
    for (Eigen::Index r = 0; r < 5; ++r) state.Phi(r, c) = rnorm(rng);
    for (Eigen::Index r = 0; r < 7; ++r) state.Psi(r, c) = rnorm(rng);
  }
  const Eigen::MatrixXd g = compute_G(state);
  for (int r = 0; r < 5; ++r)
    for (int n = 0; n < 7; ++n) {
      double dot = 0.0;
      for (int d = 0; d < 2; ++d) dot += state.Phi(r, d) * state.Psi(n, d);
      CHECK(g(r, n) == doctest::Approx(dot).epsilon(1e-14));
    }

  state.Psi.resize(7, 3);
  CHECK_THROWS_AS(compute_G(state), std::invalid_argument);
}

TEST_CASE("softmax_lambda handles the reference category") {
  const auto uniform = softmax_lambda(Eigen::VectorXd::Zero(3), 2.7);
  REQUIRE(uniform.size() == 4);
  for (double p : uniform) CHECK(p == doctest::Approx(0.25).epsilon(1e-14));

  const auto degenerate = softmax_lambda(Eigen::VectorXd(0), 1.0);
  REQUIRE(degenerate.size() == 1);
  CHECK(degenerate[0] == 1.0);

  Eigen::VectorXd g(1);
  g << std::log(2.0);
  const auto two = softmax_lambda(g, 1.0);
  CHECK(two[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(two[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));

  Eigen::VectorXd bad(1);
  bad << std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(softmax_lambda(bad, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(softmax_lambda(g, 0.0), std::invalid_argument);
}

TEST_CASE("softmax_lambda properties") {
  Rng rng(21);
  for (int rep = 0; rep < 200; ++rep) {
    const int len = 1 + static_cast<int>(runif(rng) * 5);
    Eigen::VectorXd g(len);
    for (int k = 0; k < len; ++k) g[k] = 4.0 * rnorm(rng);
    const double rho = std::exp(rnorm(rng));
    const auto p = softmax_lambda(g, rho);

    double sum = 0.0;
    for (double x : p) {
      CHECK(x > 0.0);
      CHECK(x <= 1.0);
      sum += x;
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);

    // Temperature folds into the logits exactly.
    const auto folded = softmax_lambda(rho * g, 1.0);
    for (std::size_t k = 0; k < p.size(); ++k) CHECK(p[k] == folded[k]);

    // Swapping two logits swaps the probabilities (reference entry fixed).
    if (len >= 2) {
      Eigen::VectorXd swapped = g;
      std::swap(swapped[0], swapped[1]);
      const auto q = softmax_lambda(swapped, rho);
      CHECK(q[0] == doctest::Approx(p[1]).epsilon(1e-14));
      CHECK(q[1] == doctest::Approx(p[0]).epsilon(1e-14));
    }
  }
}

TEST_CASE("lambdas_for_trip assembles rows per boarding stop") {
  Rng rng(31);

  SUBCASE("zero logits give uniform rows") {
    LatentState state;
    state.rho = 0.4;
    state.Phi = Eigen::MatrixXd::Zero(logit_rows(RouteConfig{5}), 2);
    state.Psi = Eigen::MatrixXd::Random(3, 2);
    const auto table = lambdas_for_trip(state, 1, RouteConfig{5});
    for (int i = 0; i < 4; ++i)
      for (int k = 0; k < table.row_length(i); ++k)
        CHECK(table.row(i)[k] == doctest::Approx(1.0 / (5 - 1 - i)).epsilon(1e-14));
  }

  SUBCASE("three stops: a 2-vector row and the forced singleton") {
    const auto state = make_state(3, 2, 4, 0.7, rng);
    const auto table = lambdas_for_trip(state, 0, RouteConfig{3});
    REQUIRE(table.probs.size() == 3);
    CHECK(table.row_length(0) == 2);
    CHECK(table.row_length(1) == 1);
    CHECK(table.row(1)[0] == 1.0);
    CHECK(table.row(0)[0] + table.row(0)[1] == doctest::Approx(1.0).epsilon(1e-14));
  }

  SUBCASE("rows sum to one for a random six-stop state") {
    const auto state = make_state(6, 3, 5, 1.3, rng);
    const auto tables = all_lambdas(state, RouteConfig{6});
    REQUIRE(tables.size() == 5);
    for (const auto& table : tables)
      for (int i = 0; i < 5; ++i) {
        double sum = 0.0;
        for (int k = 0; k < table.row_length(i); ++k) sum += table.row(i)[k];
        CHECK(std::abs(sum - 1.0) < 1e-12);
      }
    // all_lambdas and the per-trip path agree.
    for (int n = 0; n < 5; ++n) {
      const auto one = lambdas_for_trip(state, n, RouteConfig{6});
      CHECK(one.probs == tables[static_cast<std::size_t>(n)].probs);
    }
  }
}

TEST_CASE("multinomial_logpmf") {
  const double lam2[] = {0.25, 0.75};
  const int y_zero[] = {0, 0};
  CHECK(multinomial_logpmf(y_zero, 2, 0, lam2) == 0.0);

  const int y_one[] = {0, 1};
  CHECK(multinomial_logpmf(y_one, 2, 1, lam2) == doctest::Approx(std::log(0.75)).epsilon(1e-14));

  const double lam_half[] = {0.5, 0.5};
  const int y_21[] = {2, 1};
  CHECK(multinomial_logpmf(y_21, 2, 3, lam_half) ==
        doctest::Approx(std::log(0.375)).epsilon(1e-14));

  CHECK_THROWS_AS(multinomial_logpmf(y_21, 2, 4, lam_half), std::invalid_argument);

  const double lam_zero[] = {0.0, 1.0};
  const int y_mass_on_zero[] = {1, 0};
  CHECK(multinomial_logpmf(y_mass_on_zero, 2, 1, lam_zero) == neg_inf);
}

TEST_CASE("multinomial_logpmf normalizes over its support") {
  // Brute force over {y : sum y = u} for u <= 5, dimension <= 4.
  Rng rng(5150);
  for (int dim = 2; dim <= 4; ++dim) {
    for (int u = 1; u <= 5; ++u) {
      std::vector<double> lam(static_cast<std::size_t>(dim));
      double norm = 0.0;
      for (auto& l : lam) {
        l = runif(rng) + 0.05;
        norm += l;
      }
      for (auto& l : lam) l /= norm;

      double total = 0.0;
      std::vector<int> y(static_cast<std::size_t>(dim), 0);
      // Odometer over compositions of u.
      std::function<void(int, int)> walk = [&](int pos, int left) {
        if (pos == dim - 1) {
          y[static_cast<std::size_t>(pos)] = left;
          total += std::exp(multinomial_logpmf(y.data(), dim, u, lam.data()));
          return;
        }
        for (int take = 0; take <= left; ++take) {
          y[static_cast<std::size_t>(pos)] = take;
          walk(pos + 1, left - take);
        }
      };
      walk(0, u);
      CHECK(total == doctest::Approx(1.0).epsilon(1e-10));
    }
  }
}

TEST_CASE("trip_loglik sums row pmfs and rejects infeasible vectors") {
  RouteConfig route{3};
  const auto obs = make_obs({1, 1, 0}, {0, 0, 2});
  Rng rng(42);
  const auto table = test::random_lambda(rng, 3);

  SUBCASE("all-zero trip scores zero") {
    const auto zero_obs = make_obs({0, 0, 0}, {0, 0, 0});
    CHECK(trip_loglik(ODVector{{0, 0, 0}}, zero_obs, table) == 0.0);
  }

  SUBCASE("uniquely determined trip equals the sum of single draws") {
    const ODVector y{{0, 1, 1}};
    const double expected = std::log(table.row(0)[1]) + std::log(table.row(1)[0]);
    CHECK(trip_loglik(y, obs, table) == doctest::Approx(expected).epsilon(1e-13));
  }

  SUBCASE("infeasible vector is an error") {
    CHECK_THROWS_AS(trip_loglik(ODVector{{1, 0, 1}}, obs, table), std::invalid_argument);
  }

  SUBCASE("exp(trip_loglik) sums to the marginal likelihood over H(x)") {
    const auto big_obs = make_obs({2, 1, 0, 0}, {0, 1, 1, 1});
    const auto table4 = test::random_lambda(rng, 4);
    const auto feasible = enumerate_feasible(big_obs, 10000);
    double marginal = 0.0;
    for (const auto& y : feasible) marginal += std::exp(trip_loglik(y, big_obs, table4));
    CHECK(marginal > 0.0);
    CHECK(marginal <= 1.0 + 1e-12);

    // Independent evaluation of the same sum: explicit multinomial products.
    double oracle = 0.0;
    for (const auto& y : feasible) {
      double prob = 1.0;
      for (int i = 0; i < 3; ++i) {
        const int u = big_obs.boardings[static_cast<std::size_t>(i)];
        if (u == 0) continue;
        double row = log_factorial(u);
        for (int k = 0; k < 3 - i; ++k) {
          const int c = y[od_flat_index(4, i, i + 1) + k];
          row += c * std::log(table4.row(i)[k]) - log_factorial(c);
        }
        prob *= std::exp(row);
      }
      oracle += prob;
    }
    CHECK(marginal == doctest::Approx(oracle).epsilon(1e-12));
  }
}

TEST_CASE("dataset_loglik is additive and order-invariant") {
  Rng rng(77);
  Dataset data;
  data.route = RouteConfig{4};
  data.trips = {make_obs({2, 1, 0, 0}, {0, 1, 1, 1}, 0.0, "a"),
                make_obs({1, 1, 0, 0}, {0, 0, 1, 1}, 600.0, "b")};
  const auto state = make_state(4, 2, 2, 0.5, rng);

  std::vector<ODVector> od;
  for (const auto& trip : data.trips) od.push_back(enumerate_feasible(trip, 100).front());

  SUBCASE("empty dataset scores zero") {
    Dataset empty;
    empty.route = data.route;
    CHECK(dataset_loglik({}, empty, state) == 0.0);
  }

  SUBCASE("single trip equals trip_loglik") {
    Dataset one;
    one.route = data.route;
    one.trips = {data.trips[0]};
    LatentState s1 = state;
    s1.Psi = state.Psi.row(0);
    const auto table = lambdas_for_trip(s1, 0, data.route);
    CHECK(dataset_loglik({od[0]}, one, s1) ==
          doctest::Approx(trip_loglik(od[0], data.trips[0], table)).epsilon(1e-13));
  }

  SUBCASE("two trips add up and reordering trips is immaterial") {
    const double both = dataset_loglik(od, data, state);

    Dataset swapped;
    swapped.route = data.route;
    swapped.trips = {data.trips[1], data.trips[0]};
    LatentState sswap = state;
    sswap.Psi.row(0) = state.Psi.row(1);
    sswap.Psi.row(1) = state.Psi.row(0);
    CHECK(dataset_loglik({od[1], od[0]}, swapped, sswap) ==
          doctest::Approx(both).epsilon(1e-13));

    double separate = 0.0;
    for (int n = 0; n < 2; ++n) {
      const auto table = lambdas_for_trip(state, n, data.route);
      separate += trip_loglik(od[static_cast<std::size_t>(n)],
                              data.trips[static_cast<std::size_t>(n)], table);
    }
    CHECK(both == doctest::Approx(separate).epsilon(1e-13));
  }
}

TEST_CASE("kernel_matrix values and spectrum") {
  KernelSpec spec;  // sigma 1, lengthscale 3600, jitter 1e-6
  Eigen::VectorXd times(4);
  times << 0.0, 3600.0, 7200.0, 36000.0;
  const Eigen::MatrixXd k = kernel_matrix(times, spec);

  CHECK(k(0, 0) == doctest::Approx(1.0 + 1e-6).epsilon(1e-15));
  CHECK(k(0, 1) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
  CHECK(k(0, 3) == doctest::Approx(std::exp(-50.0)).epsilon(1e-6));
  CHECK((k - k.transpose()).cwiseAbs().maxCoeff() == 0.0);

  const Eigen::VectorXd eigs = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(k).eigenvalues();
  CHECK(eigs.minCoeff() >= spec.jitter - 1e-12);

  CHECK_THROWS_AS(kernel_matrix(times, KernelSpec{0.0, 3600.0, 1e-6}), std::invalid_argument);
}

TEST_CASE("kernel_cholesky escalates jitter on coincident departures") {
  KernelSpec spec;
  Eigen::VectorXd spread(3);
  spread << 0.0, 1800.0, 3600.0;
  const auto normal = kernel_cholesky(spread, spec);
  CHECK(normal.jitter_used == spec.jitter);
  const Eigen::MatrixXd k = kernel_matrix(spread, spec);
  CHECK((normal.lower * normal.lower.transpose() - k).cwiseAbs().maxCoeff() < 1e-12);

  // Fifty identical departure times: near-singular but factorizable, possibly
  // after escalation; the factor must reproduce a valid kernel matrix.
  Eigen::VectorXd bunched = Eigen::VectorXd::Constant(50, 3600.0);
  const auto result = kernel_cholesky(bunched, spec);
  CHECK(result.jitter_used >= spec.jitter);
  CHECK(result.jitter_used <= 1e-2);
  CHECK(result.lower.rows() == 50);
}

TEST_CASE("log_prior matches the closed-form Gaussian oracle") {
  PriorSpec prior;
  RouteConfig route{4};
  Eigen::VectorXd times(3);
  times << 0.0, 1800.0, 3600.0;
  const auto chol = kernel_cholesky(times, prior.kernel);

  LatentState state;
  state.Phi = Eigen::MatrixXd::Zero(logit_rows(route), 2);
  state.Psi = Eigen::MatrixXd::Zero(3, 2);
  state.rho = 0.1;

  // At the mode every term is its log-normalizing constant.
  const double log_det_k = 2.0 * chol.lower.diagonal().array().log().sum();
  const double gp_terms = 2.0 * (-0.5 * (3.0 * std::log(2.0 * M_PI) + log_det_k));
  const double phi_terms = 3.0 * 2.0 * (-0.5 * std::log(2.0 * M_PI * prior.sigma2_phi));
  const double rho_term = -0.5 * std::log(2.0 * M_PI * prior.sigma2_rho);
  CHECK(log_prior(state, prior, chol.lower) ==
        doctest::Approx(gp_terms + phi_terms + rho_term).epsilon(1e-12));

  SUBCASE("quadratic change when one phi entry doubles") {
    LatentState a = state;
    a.Phi(2, 1) = 0.8;
    LatentState b = a;
    b.Phi(2, 1) = 1.6;
    const double delta = log_prior(b, prior, chol.lower) - log_prior(a, prior, chol.lower);
    CHECK(delta == doctest::Approx(-(0.8 * 0.8 * 3.0) / (2.0 * prior.sigma2_phi)).epsilon(1e-12));
  }

  SUBCASE("non-positive temperature is impossible") {
    LatentState bad = state;
    bad.rho = 0.0;
    CHECK(log_prior(bad, prior, chol.lower) == neg_inf);
    bad.rho = -1.0;
    CHECK(log_prior(bad, prior, chol.lower) == neg_inf);
  }
}

TEST_CASE("log_prior_rho carries the change-of-variables term") {
  PriorSpec prior;
  const double rho = 0.37;
  const double expected =
      log_normal_pdf(std::log(rho), prior.mu_rho, prior.sigma2_rho) - std::log(rho);
  CHECK(log_prior_rho(rho, prior) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(log_prior_rho(0.0, prior) == neg_inf);
  CHECK(log_prior_rho(-2.0, prior) == neg_inf);
}

TEST_CASE("validate_state checks shapes") {
  Rng rng(1);
  auto state = make_state(5, 2, 7, 0.3, rng);
  CHECK_NOTHROW(validate_state(state, RouteConfig{5}, 7));
  CHECK_THROWS_AS(validate_state(state, RouteConfig{6}, 7), std::invalid_argument);
  CHECK_THROWS_AS(validate_state(state, RouteConfig{5}, 8), std::invalid_argument);
  state.rho = 0.0;
  CHECK_THROWS_AS(validate_state(state, RouteConfig{5}, 7), std::invalid_argument);
}
