#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "mf4d/combinatorics.hpp"

using mf4d::Integer;
using mf4d::Rational;

namespace {

// Independent oracle: nonnegative Pascal triangle built by additions only,
// extended to negative upper index through the reflection
//   binom(m, k) = (-1)^k binom(k - m - 1, k).
// The library uses the product formula, so the two share no code path.
struct PascalOracle {
  std::vector<std::vector<Integer>> c;
  explicit PascalOracle(int nmax) : c(nmax + 1) {
    for (int n = 0; n <= nmax; ++n) {
      c[n].resize(n + 1);
      c[n][0] = 1;
      c[n][n] = 1;
      for (int k = 1; k < n; ++k) c[n][k] = c[n - 1][k - 1] + c[n - 1][k];
    }
  }
  Integer operator()(long long m, long long k) const {
    if (k < 0) return 0;
    if (m >= 0) return k <= m ? c[static_cast<size_t>(m)][static_cast<size_t>(k)] : Integer(0);
    Integer v = c[static_cast<size_t>(k - m - 1)][static_cast<size_t>(k)];
    return (k % 2 == 0) ? v : Integer(-v);
  }
};

}  // namespace

TEST_CASE("binomial matches the Pascal oracle on both signs of the upper index") {
  PascalOracle oracle(141);
  for (long long m = -70; m <= 70; ++m)
    for (long long k = 0; k <= 70; ++k)
      REQUIRE(mf4d::binomial(m, k) == oracle(m, k));
}

TEST_CASE("generalized binomial frozen examples and the zero-row convention") {
  REQUIRE(mf4d::generalized_binomial(5, 2) == 10);
  REQUIRE(mf4d::generalized_binomial(0, 7) == 1);
  REQUIRE(mf4d::generalized_binomial(-2, 2) == 3);
  REQUIRE(mf4d::generalized_binomial(3, 5) == 0);
  // Standard semantics differ exactly on the zero row.
  REQUIRE(mf4d::binomial(0, 7) == 0);
  REQUIRE(mf4d::binomial(0, 0) == 1);
  REQUIRE(mf4d::generalized_binomial(0, 0) == 1);
  for (long long m = -40; m <= 40; ++m) {
    if (m == 0) continue;
    for (long long k = 0; k <= 40; ++k)
      REQUIRE(mf4d::generalized_binomial(m, k) == mf4d::binomial(m, k));
  }
  REQUIRE_THROWS_AS(mf4d::binomial(3, -1), std::invalid_argument);
  REQUIRE_THROWS_AS(mf4d::generalized_binomial(3, -1), std::invalid_argument);
}

TEST_CASE("config space characteristic: frozen examples and factorial identity") {
  REQUIRE(mf4d::config_space_euler(1, 2) == 0);
  REQUIRE(mf4d::config_space_euler(-1, 2) == 2);
  REQUIRE(mf4d::config_space_euler(0, 3) == 0);
  REQUIRE_THROWS_AS(mf4d::config_space_euler(3, 0), std::invalid_argument);
  for (long long chi = -10; chi <= 10; ++chi)
    for (long long k = 1; k <= 20; ++k)
      REQUIRE(mf4d::config_space_euler(chi, k) ==
              mf4d::factorial(k) * mf4d::binomial(chi, k));
}

TEST_CASE("stratum contributions are additive and telescope to the closed form") {
  for (long long chi = -10; chi <= 10; ++chi) {
    Integer running = 0;  // chi(Sigma_0), the empty set
    for (long long k = 1; k <= 20; ++k) {
      Integer pair = mf4d::barycenter_pair_euler(chi, k);
      REQUIRE(mf4d::barycenter_euler(chi, k) ==
              mf4d::barycenter_euler(chi, k - 1) + pair);
      running += pair;
      REQUIRE(running == Integer(1) - mf4d::binomial(k - chi, k));
    }
  }
}

TEST_CASE("stratum contribution equals the exact Morse count target") {
  // chi(Sigma_k, Sigma_{k-1}) = (-1)^{k-1} chi(X_k) / k!; both sides exact.
  for (long long chi = -10; chi <= 10; ++chi)
    for (long long k = 1; k <= 20; ++k)
      REQUIRE(Rational(mf4d::barycenter_pair_euler(chi, k)) ==
              mf4d::morse_count_sum(chi, k));
}

TEST_CASE("morse count frozen examples and the defining identity") {
  REQUIRE(mf4d::morse_count_sum(0, 2) == 0);
  REQUIRE(mf4d::morse_count_sum(1, 1) == 1);
  REQUIRE(mf4d::morse_count_sum(-1, 2) == -1);
  for (long long chi = -10; chi <= 10; ++chi)
    for (long long k = 1; k <= 20; ++k) {
      Rational lhs = mf4d::morse_count_sum(chi, k) * Rational(mf4d::factorial(k));
      if (k % 2 == 0) lhs = -lhs;
      REQUIRE(lhs == Rational(mf4d::config_space_euler(chi, k)));
    }
}

TEST_CASE("barycenter characteristic frozen examples") {
  for (long long k = 1; k <= 8; ++k) REQUIRE(mf4d::barycenter_euler(1, k) == 1);
  REQUIRE(mf4d::barycenter_euler(0, 3) == 0);
  REQUIRE(mf4d::barycenter_euler(-1, 2) == -2);
  REQUIRE(mf4d::barycenter_euler(0, 0) == 0);
}

TEST_CASE("degree windows: frozen examples, thresholds, bad input") {
  const double p2 = mf4d::pi * mf4d::pi;
  REQUIRE(mf4d::degree_from_tau(32.0 * p2, -3) == 1);
  REQUIRE(mf4d::degree_from_tau(32.0 * p2, 2) == 1);
  REQUIRE(mf4d::degree_from_tau(80.0 * p2, 1) == 0);
  REQUIRE_THROWS_AS(mf4d::degree_from_tau(64.0 * p2, 0), mf4d::ThresholdError);
  REQUIRE_THROWS_AS(mf4d::degree_from_tau(128.0 * p2, 0), mf4d::ThresholdError);
  REQUIRE_THROWS_AS(mf4d::window_of_tau(128.0 * p2 * (1.0 + 1e-15)), mf4d::ThresholdError);
  REQUIRE(mf4d::window_of_tau(128.0 * p2 * (1.0 + 1e-9)) == 2);
  REQUIRE(mf4d::window_of_tau(128.0 * p2 * (1.0 - 1e-9)) == 1);
  REQUIRE(mf4d::window_of_tau(1e-8) == 0);
  REQUIRE_THROWS_AS(mf4d::window_of_tau(0.0), std::invalid_argument);
  REQUIRE_THROWS_AS(mf4d::window_of_tau(-5.0), std::invalid_argument);
  REQUIRE_THROWS_AS(mf4d::window_of_tau(std::nan("")), std::invalid_argument);
  REQUIRE_THROWS_AS(mf4d::window_of_tau(std::numeric_limits<double>::infinity()),
                    std::invalid_argument);
}

TEST_CASE("degree equals the closed form at window midpoints") {
  for (long long chi = -3; chi <= 2; ++chi)
    for (long long k = 0; k <= 8; ++k) {
      double tau = mf4d::window_midpoint(k);
      REQUIRE(mf4d::window_of_tau(tau) == k);
      REQUIRE(mf4d::degree_from_tau(tau, chi) == mf4d::binomial(k - chi, k));
    }
}

TEST_CASE("degree consistency with the barycenter characteristic and sign pattern") {
  for (long long chi = -10; chi <= 10; ++chi)
    for (long long k = 0; k <= 12; ++k) {
      double tau = mf4d::window_midpoint(k);
      Integer deg = mf4d::degree_from_tau(tau, chi);
      REQUIRE(deg == Integer(1) - mf4d::barycenter_euler(chi, k));
      if (chi <= 0) REQUIRE(deg >= 1);
    }
}

TEST_CASE("preconditions of the stratum operations") {
  REQUIRE_THROWS_AS(mf4d::barycenter_pair_euler(0, 0), std::invalid_argument);
  REQUIRE_THROWS_AS(mf4d::morse_count_sum(0, 0), std::invalid_argument);
  REQUIRE_THROWS_AS(mf4d::barycenter_euler(0, -1), std::invalid_argument);
  REQUIRE_THROWS_AS(mf4d::factorial(-1), std::invalid_argument);
}
