#pragma once

// Exact combinatorics behind the degree counting: generalized binomials,
// Euler characteristics of configuration and barycenter spaces, and the
// jump formula for the degree across the thresholds 64*k*pi^2.
//
// Everything here is exact integer / rational arithmetic. Intermediate
// values overflow 128-bit integers already for moderate (chi, k), hence
// arbitrary precision throughout.

#include <boost/multiprecision/cpp_int.hpp>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "mf4d/errors.hpp"

namespace mf4d {

using Integer = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;

inline constexpr double pi = std::numbers::pi;

// Thresholds sit at 64*k*pi^2, k = 1, 2, ...
inline double tau_threshold(long long k) {
  return 64.0 * static_cast<double>(k) * pi * pi;
}

// Product-formula binomial with integer upper argument of either sign:
//   binomial(k1, k2) = k1 (k1-1) ... (k1-k2+1) / k2!
// The partial product after j factors equals binomial(k1, j), an integer,
// so every division below is exact.
inline Integer binomial(long long k1, long long k2) {
  if (k2 < 0) throw std::invalid_argument("binomial: lower index must be >= 0");
  Integer acc = 1;
  for (long long j = 1; j <= k2; ++j) {
    acc *= Integer(k1 - j + 1);
    acc /= j;
  }
  return acc;
}

// Convention used by the counting formulas: the k1 = 0 row is identically 1.
// For k1 != 0 this agrees with the product formula.
inline Integer generalized_binomial(long long k1, long long k2) {
  if (k2 < 0)
    throw std::invalid_argument("generalized_binomial: lower index must be >= 0");
  if (k1 == 0) return 1;
  return binomial(k1, k2);
}

inline Integer factorial(long long k) {
  if (k < 0) throw std::invalid_argument("factorial: negative argument");
  Integer acc = 1;
  for (long long j = 2; j <= k; ++j) acc *= j;
  return acc;
}

// Euler characteristic of the configuration space of k ordered distinct
// points on a space of Euler characteristic chi:
//   chi (chi - 1) ... (chi - k + 1) = k! * binomial(chi, k).
inline Integer config_space_euler(long long chi, long long k) {
  if (k < 1) throw std::invalid_argument("config_space_euler: k must be >= 1");
  Integer acc = 1;
  for (long long i = 0; i < k; ++i) acc *= Integer(chi - i);
  return acc;
}

// chi(Sigma_k) = 1 - binomial(k - chi, k) for k >= 1. Sigma_0 is empty, so
// the k = 0 value is 0; it is the base making the stratum contributions
// telescope exactly.
inline Integer barycenter_euler(long long chi, long long k) {
  if (k < 0) throw std::invalid_argument("barycenter_euler: k must be >= 0");
  if (k == 0) return 0;
  return Integer(1) - binomial(k - chi, k);
}

// Stratum contribution chi(Sigma_k, Sigma_{k-1}) = (-1)^{k-1} binomial(chi, k).
// Equals config_space_euler(chi, k) / k! up to the alternating sign, and makes
// barycenter_euler additive over strata.
inline Integer barycenter_pair_euler(long long chi, long long k) {
  if (k < 1) throw std::invalid_argument("barycenter_pair_euler: k must be >= 1");
  Integer b = binomial(chi, k);
  return (k % 2 == 1) ? b : Integer(-b);
}

// Expected Morse-theoretic count for the k-th stratum, kept exact:
//   (-1)^{k-1} chi(X_k) / k!
inline Rational morse_count_sum(long long chi, long long k) {
  if (k < 1) throw std::invalid_argument("morse_count_sum: k must be >= 1");
  Rational r(config_space_euler(chi, k), factorial(k));
  return (k % 2 == 1) ? r : Rational(-r);
}

// Window index k with tau in (64 k pi^2, 64 (k+1) pi^2). Rejects tau within
// relative tolerance of a threshold: the degree jumps there and reporting a
// value would be wrong in either window.
inline long long window_of_tau(double tau, double threshold_rel_tol = 1e-12) {
  if (!std::isfinite(tau) || tau <= 0.0)
    throw std::invalid_argument("window_of_tau: tau must be positive and finite");
  const double q = tau / tau_threshold(1);
  if (q >= 9.0e15)
    throw std::invalid_argument("window_of_tau: tau out of supported range");
  const long long m = std::llround(q);
  if (m >= 1 &&
      std::abs(tau - tau_threshold(m)) <= threshold_rel_tol * tau_threshold(m))
    throw ThresholdError("tau within tolerance of threshold 64*k*pi^2 at k = " +
                         std::to_string(m));
  return static_cast<long long>(std::floor(q));
}

// Midpoint of the k-th window, handy for sampling one tau per window.
inline double window_midpoint(long long k) {
  if (k < 0) throw std::invalid_argument("window_midpoint: k must be >= 0");
  return 64.0 * (static_cast<double>(k) + 0.5) * pi * pi;
}

// Total degree for tau in window k: binomial(k - chi, k). In particular 1 in
// the coercive window k = 0, and 1 - barycenter_euler(chi, k) in general.
inline Integer degree_from_tau(double tau, long long chi) {
  const long long k = window_of_tau(tau);
  return binomial(k - chi, k);
}

}  // namespace mf4d
