#include <doctest.h>

#include <cmath>
#include <map>

#include "busod/od_sampler.hpp"
#include "support.hpp"

using namespace busod;
using test::make_obs;
using test::memoryless_lambda;
using test::random_lambda;
using test::random_obs;

TEST_CASE("propose_od on forced allocations") {
  Rng rng(101);

  SUBCASE("single boarding group has probability one") {
    const auto obs = make_obs({2, 0, 0}, {0, 1, 1});
    for (int rep = 0; rep < 10; ++rep) {
      const auto draw = propose_od(obs, rng);
      CHECK(draw.log_q == 0.0);
      CHECK(draw.y_star == ODVector{{1, 1, 0}});
    }
  }

  SUBCASE("two equally likely sweeps") {
    const auto obs = make_obs({1, 1, 0, 0}, {0, 0, 1, 1});
    std::map<std::vector<int>, int> counts;
    for (int rep = 0; rep < 4000; ++rep) {
      const auto draw = propose_od(obs, rng);
      CHECK(draw.log_q == doctest::Approx(std::log(0.5)).epsilon(1e-14));
      counts[draw.y_star.counts] += 1;
    }
    REQUIRE(counts.size() == 2);
    for (const auto& [y, c] : counts) CHECK(c > 1700);  // ~N(2000, 31^2)
  }
}

TEST_CASE("proposal density normalizes over the feasible set") {
  const auto obs = make_obs({2, 1, 0, 0}, {0, 1, 1, 1});
  const auto feasible = enumerate_feasible(obs, 10000);
  double total = 0.0;
  for (const auto& y : feasible) total += std::exp(proposal_logdensity(y, obs));
  CHECK(std::abs(total - 1.0) < 1e-10);
}

TEST_CASE("proposal_logdensity replays a draw exactly") {
  Rng rng(202);
  for (int rep = 0; rep < 300; ++rep) {
    const int stops = 3 + static_cast<int>(runif(rng) * 3);
    const auto obs = random_obs(rng, stops, 12);
    const auto draw = propose_od(obs, rng);
    CHECK(proposal_logdensity(draw.y_star, obs) == draw.log_q);
    CHECK(draw.log_q <= 0.0);
  }

  SUBCASE("unique solution scores zero") {
    CHECK(proposal_logdensity(ODVector{{0, 1, 1}}, make_obs({1, 1, 0}, {0, 0, 2})) == 0.0);
  }

  SUBCASE("infeasible vectors are rejected") {
    CHECK_THROWS_AS(proposal_logdensity(ODVector{{1, 0, 1}}, make_obs({1, 1, 0}, {0, 0, 2})),
                    std::invalid_argument);
  }
}

TEST_CASE("mh_update_od keeps the chain feasible") {
  Rng rng(303);

  SUBCASE("singleton feasible set always accepts in place") {
    const auto obs = make_obs({1, 1, 0}, {0, 0, 2});
    const ODVector unique{{0, 1, 1}};
    const auto table = random_lambda(rng, 3);
    for (int rep = 0; rep < 20; ++rep) {
      const auto result = mh_update_od(unique, obs, table, rng);
      CHECK(result.accepted);
      CHECK(result.y == unique);
      CHECK(std::abs(result.log_accept_ratio) < 1e-12);
    }
  }

  SUBCASE("memoryless lambda accepts every proposal") {
    for (int inst = 0; inst < 10; ++inst) {
      const int stops = 4 + static_cast<int>(runif(rng) * 2);
      std::vector<double> hazards(static_cast<std::size_t>(stops), 0.0);
      for (int j = 1; j < stops - 1; ++j) hazards[static_cast<std::size_t>(j)] = runif(rng, 0.1, 0.9);
      hazards.back() = 1.0;
      const auto table = memoryless_lambda(stops, hazards);
      const auto obs = random_obs(rng, stops, 10);
      ODVector y = init_feasible(obs, rng);
      for (int step = 0; step < 50; ++step) {
        const auto result = mh_update_od(y, obs, table, rng);
        CHECK(std::abs(result.log_accept_ratio) < 1e-10);
        CHECK(result.accepted);
        y = result.y;
      }
    }
  }

  SUBCASE("stationary distribution matches the exact conditional") {
    // Heterogeneous lambda on a 4-stop instance; compare the chain's visit
    // frequencies over H(x) with p(y | x, lambda) from the enumeration oracle.
    const auto obs = make_obs({3, 2, 0, 0}, {0, 1, 2, 2});
    const auto table = random_lambda(rng, 4, 1.5);
    const auto feasible = enumerate_feasible(obs, 10000);

    std::map<std::vector<int>, double> exact;
    double norm = 0.0;
    for (const auto& y : feasible) {
      const double w = std::exp(trip_loglik(y, obs, table));
      exact[y.counts] = w;
      norm += w;
    }
    for (auto& [y, w] : exact) w /= norm;

    std::map<std::vector<int>, long> visits;
    ODVector y = init_feasible(obs, rng);
    const long steps = 50000;
    for (long step = 0; step < steps; ++step) {
      y = mh_update_od(y, obs, table, rng).y;
      visits[y.counts] += 1;
    }

    double tv = 0.0;
    for (const auto& [states, p] : exact)
      tv += std::abs(p - static_cast<double>(visits[states]) / static_cast<double>(steps));
    tv *= 0.5;
    CHECK(tv < 0.05);
  }
}

TEST_CASE("init_feasible honors the linear constraints") {
  Rng rng(404);

  CHECK(init_feasible(make_obs({1, 1, 0}, {0, 0, 2}), rng) == ODVector{{0, 1, 1}});
  CHECK(init_feasible(make_obs({0, 0, 0}, {0, 0, 0}), rng) == ODVector{{0, 0, 0}});

  for (int rep = 0; rep < 200; ++rep) {
    const int stops = 2 + static_cast<int>(runif(rng) * 5);
    const auto obs = random_obs(rng, stops, 15);
    const auto y = init_feasible(obs, rng);
    const auto [u, v] = od_to_counts(y, RouteConfig{stops});
    CHECK(u == obs.boardings);
    CHECK(v == obs.alightings);
  }

  CHECK_THROWS_AS(init_feasible(make_obs({1, 0, 0}, {0, 2, 0}), rng), std::invalid_argument);
}
