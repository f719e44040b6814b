#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "madp/random.hpp"
#include "madp/types.hpp"

namespace madp::coupon {

// Quota vector m and weight vector p; draw probability of type i is
// p_i / sum(p).
struct CouponSpec {
  std::vector<double> weights;
  std::vector<int> quotas;

  int k() const { return static_cast<int>(weights.size()); }

  void validate() const {
    if (weights.empty() || weights.size() != quotas.size())
      throw ConfigError("coupon spec needs matching positive-length weights and quotas");
    for (double w : weights)
      if (!(w > 0)) throw ConfigError("coupon weights must be positive");
    for (int m : quotas)
      if (m < 1) throw ConfigError("coupon quotas must be at least 1");
  }

  static CouponSpec uniform(int k, int m) {
    return CouponSpec{std::vector<double>(static_cast<std::size_t>(k), 1.0),
                      std::vector<int>(static_cast<std::size_t>(k), m)};
  }
};

// S_m(t): the first m terms of the Taylor series of e^t.
inline double partial_exp_sum(int m, double t) {
  double term = 1.0;
  double sum = 1.0;
  for (int j = 1; j < m; ++j) {
    term *= t / j;
    sum += term;
  }
  return sum;
}

namespace detail {

// P[Poisson(x) < m] = S_m(x) e^{-x}, accumulated from e^{-x} so large x
// underflows to zero instead of overflowing.
inline double survival(int m, double x) {
  double term = std::exp(-x);
  double sum = term;
  for (int j = 1; j < m; ++j) {
    term *= x / j;
    sum += term;
  }
  return sum;
}

}  // namespace detail

// Expected draws to collect quota m_i of every type i: the exact integral
//   T_k = P_k * Int_0^inf (1 - Prod_i (1 - S_{m_i}(p_i t) e^{-p_i t})) dt.
inline double expected_draws(const CouponSpec& spec) {
  spec.validate();
  const auto& p = spec.weights;
  const auto& m = spec.quotas;
  double total_weight = 0;
  for (double w : p) total_weight += w;

  auto integrand = [&](double t) {
    double log_miss = 0;  // log Prod (1 - g_i)
    for (std::size_t i = 0; i < p.size(); ++i) {
      double g = detail::survival(m[i], p[i] * t);
      if (g >= 1.0) return 1.0;
      log_miss += std::log1p(-g);
    }
    return -std::expm1(log_miss);
  };

  // The integrand decays like e^{-p_min t} t^{m-1}; double the horizon until
  // it drops below truncation level.
  double horizon = 1.0;
  while (integrand(horizon) > 1e-12 && horizon < 0x1p40) horizon *= 2;

  double value = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      integrand, 0.0, horizon, 15, 1e-9);
  return total_weight * value;
}

// Asymptotic k(ln k + (m-1) ln ln k) with the o(1) term dropped.
inline double uniform_closed_form(long k, long m) {
  if (k < 3) throw DomainTooSmall("closed form needs k >= 3 so ln ln k is positive");
  if (m < 1) throw ConfigError("quota must be at least 1");
  double lk = std::log(static_cast<double>(k));
  return static_cast<double>(k) * (lk + static_cast<double>(m - 1) * std::log(lk));
}

// (p_max / p_min) * uniform_closed_form(k, m_max).
inline double nonuniform_upper_bound(const CouponSpec& spec) {
  spec.validate();
  if (spec.k() < 3) throw DomainTooSmall("upper bound needs k >= 3");
  double p_max = *std::max_element(spec.weights.begin(), spec.weights.end());
  double p_min = *std::min_element(spec.weights.begin(), spec.weights.end());
  int m_max = *std::max_element(spec.quotas.begin(), spec.quotas.end());
  return p_max / p_min * uniform_closed_form(spec.k(), m_max);
}

struct McEstimate {
  double mean = 0;
  double stderr_of_mean = 0;
};

// Direct simulation of the draw process; the independent oracle for
// expected_draws.
inline McEstimate monte_carlo_draws(const CouponSpec& spec, long trials,
                                    std::uint64_t seed) {
  spec.validate();
  if (trials < 1) throw ConfigError("trials must be at least 1");
  Rng rng(derive_seed(seed, 0x636f75706f6eull));
  std::vector<double> cumulative(spec.weights.size());
  double acc = 0;
  for (std::size_t i = 0; i < spec.weights.size(); ++i) {
    acc += spec.weights[i];
    cumulative[i] = acc;
  }
  double total_weight = acc;

  double sum = 0;
  double sum_sq = 0;
  std::vector<int> counts(spec.weights.size());
  for (long t = 0; t < trials; ++t) {
    std::fill(counts.begin(), counts.end(), 0);
    std::size_t unmet = spec.weights.size();
    long draws = 0;
    while (unmet > 0) {
      double u = rng.uniform01() * total_weight;
      std::size_t i = 0;
      while (i + 1 < cumulative.size() && u >= cumulative[i]) ++i;
      ++draws;
      if (++counts[i] == spec.quotas[i]) --unmet;
    }
    sum += static_cast<double>(draws);
    sum_sq += static_cast<double>(draws) * static_cast<double>(draws);
  }
  double mean = sum / static_cast<double>(trials);
  double var = std::max(0.0, sum_sq / static_cast<double>(trials) - mean * mean);
  double se = trials > 1 ? std::sqrt(var / static_cast<double>(trials - 1)) : 0.0;
  return {mean, se};
}

}  // namespace madp::coupon
