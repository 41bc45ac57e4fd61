#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "pgmgnn/model.hpp"
#include "pgmgnn/oracle.hpp"

using namespace pgmgnn;

namespace {

BinaryMRF single(double b) { return BinaryMRF(GraphTopology(1, {}), {}, {b}); }

BinaryMRF random_model(int n, double q, Rng& rng) { return sample_mrf(sample_erdos_renyi_connected(n, q, rng), rng); }

}  // namespace

TEST_SUITE("oracle") {
  TEST_CASE("unnormalized log-probability") {
    const int plus[] = {1};
    CHECK(unnormalized_log_prob(single(0.3), plus) == doctest::Approx(0.3).epsilon(1e-15));

    BinaryMRF two(GraphTopology(2, {{0, 1}}), {1.0}, {0.2, 0.0});
    const int pp[] = {1, 1};
    CHECK(unnormalized_log_prob(two, pp) == doctest::Approx(1.2).epsilon(1e-15));

    BinaryMRF tri(GraphTopology(3, {{0, 1}, {1, 2}, {0, 2}}), {0.5, 0.5, 0.5}, {0, 0, 0});
    const int ppm[] = {1, 1, -1};
    CHECK(unnormalized_log_prob(tri, ppm) == doctest::Approx(-0.5).epsilon(1e-15));

    const int bad[] = {1, 0, -1};
    CHECK_THROWS_AS(unnormalized_log_prob(tri, bad), std::invalid_argument);
    CHECK_THROWS_AS(unnormalized_log_prob(tri, pp), std::invalid_argument);
  }

  TEST_CASE("single node closed forms") {
    const auto r0 = enumerate(single(0.0));
    CHECK(r0.marginals_p1[0] == 0.5);
    CHECK(r0.log_z == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    const auto r = enumerate(single(0.3));
    CHECK(std::abs(r.marginals_p1[0] - 0.6456563062257954) < 1e-12);
    CHECK(r.map_state == std::vector<int>{1});
  }

  TEST_CASE("two-node MAP") {
    // Scores: (+,+) 1.2, (+,-) -1.0, (-,+) -1.0, (-,-) 0.8.
    BinaryMRF two(GraphTopology(2, {{0, 1}}), {1.0}, {0.1, 0.1});
    const auto r = enumerate(two);
    CHECK(r.map_state == std::vector<int>{1, 1});
    CHECK(r.map_log_score == doctest::Approx(1.2).epsilon(1e-14));
    const double z = std::exp(1.2) + 2 * std::exp(-1.0) + std::exp(0.8);
    CHECK(r.log_z == doctest::Approx(std::log(z)).epsilon(1e-14));
    CHECK(r.marginals_p1[0] == doctest::Approx((std::exp(1.2) + std::exp(-1.0)) / z).epsilon(1e-14));
  }

  TEST_CASE("zero bias gives exactly one half") {
    Rng rng(1);
    for (int t = 0; t < 30; ++t) {
      auto m = random_model(8, 0.5, rng);
      BinaryMRF zb(m.topology(), m.couplings(), std::vector<double>(8, 0.0));
      const auto r = enumerate(zb);
      for (double p : r.marginals_p1) CHECK(p == 0.5);
      // Tie between x* and -x*: the +1-leading state wins.
      CHECK(r.map_state[0] == 1);
    }
  }

  TEST_CASE("normalization, range and MAP dominance") {
    Rng rng(2);
    for (int t = 0; t < 20; ++t) {
      const int n = 3 + t % 8;
      const auto m = random_model(n, 0.6, rng);
      const auto r = enumerate(m);
      double total = 0.0;
      std::vector<int> x(static_cast<std::size_t>(n));
      for (std::uint64_t s = 0; s < (1ull << n); ++s) {
        for (int i = 0; i < n; ++i) x[static_cast<std::size_t>(i)] = (s >> i) & 1 ? -1 : 1;
        const double lp = unnormalized_log_prob(m, x);
        total += std::exp(lp - r.log_z);
        CHECK(lp <= r.map_log_score + 1e-12);
      }
      CHECK(std::abs(total - 1.0) < 1e-10);
      for (double p : r.marginals_p1) {
        CHECK(p > 0.0);
        CHECK(p < 1.0);
      }
      CHECK(unnormalized_log_prob(m, r.map_state) == r.map_log_score);
    }
  }

  TEST_CASE("sign-flip covariance") {
    Rng rng(3);
    for (int t = 0; t < 20; ++t) {
      const auto m = random_model(7, 0.5, rng);
      std::vector<double> nb = m.biases();
      for (double& b : nb) b = -b;
      const auto r = enumerate(m);
      const auto f = enumerate(BinaryMRF(m.topology(), m.couplings(), nb));
      for (std::size_t i = 0; i < r.marginals_p1.size(); ++i) {
        CHECK(f.marginals_p1[i] == doctest::Approx(1.0 - r.marginals_p1[i]).epsilon(1e-12));
        CHECK(f.map_state[i] == -r.map_state[i]);
      }
      CHECK(f.log_z == doctest::Approx(r.log_z).epsilon(1e-12));
    }
  }

  TEST_CASE("raising a bias raises its marginal") {
    Rng rng(4);
    for (int t = 0; t < 10; ++t) {
      const auto m = random_model(6, 0.6, rng);
      const auto r = enumerate(m);
      for (int i = 0; i < 6; ++i) {
        auto b = m.biases();
        b[static_cast<std::size_t>(i)] += 1e-3;
        const auto up = enumerate(BinaryMRF(m.topology(), m.couplings(), b));
        CHECK(up.marginals_p1[static_cast<std::size_t>(i)] > r.marginals_p1[static_cast<std::size_t>(i)]);
      }
    }
  }

  TEST_CASE("strong fields do not overflow") {
    const auto topo = build_topology(ClassicKind::complete, 12);
    BinaryMRF m(topo, std::vector<double>(topo.num_edges(), 3.0), std::vector<double>(12, 0.5));
    const auto r = enumerate(m);
    CHECK(std::isfinite(r.log_z));
    // All-up scores 66·3 + 6, all-down 66·3 − 6; every other state trails by
    // at least 2·11·3 − 1, so p(+1) = 1 / (1 + e^-12) to ~e^-60.
    for (double p : r.marginals_p1) CHECK(std::abs(p - 1.0 / (1.0 + std::exp(-12.0))) < 1e-14);
    CHECK(r.map_state == std::vector<int>(12, 1));
  }

  TEST_CASE("enumeration cap") {
    Rng rng(5);
    const auto m = sample_mrf(build_topology(ClassicKind::chain, 16), rng);
    CHECK_THROWS_AS(enumerate(m, 15), std::runtime_error);
    CHECK_NOTHROW(enumerate(m, 16));
  }
}
