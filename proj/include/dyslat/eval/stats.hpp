// SPDX-License-Identifier: Apache-2.0
/**
 * @file   stats.hpp
 * @brief  Wilson intervals, Pearson correlation and the Wilcoxon signed-rank test.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include <boost/math/special_functions/beta.hpp>
#include <json.hpp>

#include <dyslat/error.hpp>

namespace dyslat::eval {

/// Two-sided 95% normal quantile.
inline constexpr double kZ95 = 1.959963984540054;

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Wilson score interval for `successes` out of `n` trials.
inline Interval wilson_interval(std::size_t successes, std::size_t n, double z = kZ95) {
  require(n > 0, ErrorCode::EmptySequence, "Wilson interval needs at least one trial");
  require(successes <= n, ErrorCode::BadConfig, "more successes than trials");
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(successes) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double centre = (p + z2 / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
  // at the boundaries the exact endpoint is 0 or 1; rounding must not cut it off
  return {successes == 0 ? 0.0 : std::max(0.0, centre - half),
          successes == n ? 1.0 : std::min(1.0, centre + half)};
}

// ---------------------------------------------------------------------------
// Pearson

struct PearsonResult {
  double r = 0.0;
  double p = 1.0; ///< two-sided
  std::size_t n = 0;
};

/// Two-sided p of Student's t with `df` degrees of freedom:
/// P(|T| >= |t|) = I_{df / (df + t^2)}(df / 2, 1 / 2).
inline double student_t_two_sided(double t, double df) {
  require(df > 0.0, ErrorCode::DegenerateInput, "t distribution needs df > 0");
  if (!std::isfinite(t))
    return 0.0;
  return boost::math::ibeta(df / 2.0, 0.5, df / (df + t * t));
}

inline PearsonResult pearson(const std::vector<double> &x, const std::vector<double> &y) {
  require(x.size() == y.size(), ErrorCode::ShapeMismatch,
          "pearson needs equal lengths (" + std::to_string(x.size()) + " vs " +
            std::to_string(y.size()) + ")");
  require(x.size() >= 3, ErrorCode::DegenerateInput,
          "pearson needs at least 3 points, got " + std::to_string(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i)
    require(std::isfinite(x[i]) && std::isfinite(y[i]), ErrorCode::NonFiniteInput,
            "pearson input is not finite");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  require(sxx > 0.0, ErrorCode::DegenerateInput, "pearson: x has zero variance");
  require(syy > 0.0, ErrorCode::DegenerateInput, "pearson: y has zero variance");
  PearsonResult out;
  out.n = x.size();
  out.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double df = n - 2.0;
  if (std::abs(out.r) == 1.0) {
    out.p = 0.0;
  } else {
    const double t = out.r * std::sqrt(df / (1.0 - out.r * out.r));
    out.p = student_t_two_sided(t, df);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank

enum class WilcoxonMethod { automatic, exact, normal };

NLOHMANN_JSON_SERIALIZE_ENUM(WilcoxonMethod, {{WilcoxonMethod::automatic, "automatic"},
                                              {WilcoxonMethod::exact, "exact"},
                                              {WilcoxonMethod::normal, "normal"}})

/// Largest effective sample size for which `automatic` enumerates exactly.
inline constexpr std::size_t kWilcoxonExactMax = 25;

struct WilcoxonResult {
  double w = 0.0;       ///< min(W+, W-)
  double w_plus = 0.0;  ///< rank sum of positive differences a - b
  double w_minus = 0.0;
  double p = 1.0;       ///< two-sided
  std::size_t n_effective = 0;
  WilcoxonMethod method = WilcoxonMethod::exact;
};

namespace detail {

/// Average ranks (1-based) of |d|; ties share the mean rank.
inline std::vector<double> average_ranks(const std::vector<double> &v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]])
      ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k)
      ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

/// P(W+ <= w) under H0, by dynamic programming over doubled (integer) ranks.
inline double exact_lower_tail(const std::vector<double> &ranks, double w) {
  std::vector<std::size_t> twice;
  std::size_t total = 0;
  for (double r : ranks) {
    twice.push_back(static_cast<std::size_t>(std::llround(2.0 * r)));
    total += twice.back();
  }
  std::vector<double> count(total + 1, 0.0);
  count[0] = 1.0;
  std::size_t reach = 0;
  for (std::size_t r : twice) {
    for (std::size_t s = reach + 1; s-- > 0;)
      if (count[s] != 0.0)
        count[s + r] += count[s];
    reach += r;
  }
  const auto limit = static_cast<std::size_t>(std::llround(2.0 * w));
  double below = 0.0;
  for (std::size_t s = 0; s <= std::min(limit, total); ++s)
    below += count[s];
  return below / std::ldexp(1.0, static_cast<int>(ranks.size()));
}

} // namespace detail

/// Paired two-sided test on a - b. Zero differences are dropped; ties among
/// |a - b| receive average ranks.
inline WilcoxonResult wilcoxon_signed_rank(const std::vector<double> &a,
                                           const std::vector<double> &b,
                                           WilcoxonMethod method = WilcoxonMethod::automatic) {
  require(a.size() == b.size(), ErrorCode::ShapeMismatch,
          "wilcoxon needs paired samples of equal length");
  std::vector<double> diff;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    require(std::isfinite(d), ErrorCode::NonFiniteInput, "wilcoxon input is not finite");
    if (d != 0.0)
      diff.push_back(d);
  }
  require(!diff.empty(), ErrorCode::DegenerateInput,
          "wilcoxon: all paired differences are zero");

  std::vector<double> magnitude(diff.size());
  std::transform(diff.begin(), diff.end(), magnitude.begin(),
                 [](double d) { return std::abs(d); });
  const auto ranks = detail::average_ranks(magnitude);

  WilcoxonResult out;
  out.n_effective = diff.size();
  for (std::size_t i = 0; i < diff.size(); ++i)
    (diff[i] > 0 ? out.w_plus : out.w_minus) += ranks[i];
  out.w = std::min(out.w_plus, out.w_minus);

  if (method == WilcoxonMethod::automatic)
    method = diff.size() <= kWilcoxonExactMax ? WilcoxonMethod::exact
                                              : WilcoxonMethod::normal;
  out.method = method;
  if (method == WilcoxonMethod::exact) {
    require(diff.size() <= 62, ErrorCode::BadConfig,
            "exact wilcoxon is limited to 62 pairs");
    out.p = std::min(1.0, 2.0 * detail::exact_lower_tail(ranks, out.w));
    return out;
  }

  const double n = static_cast<double>(diff.size());
  double tie_term = 0.0;
  auto sorted = magnitude;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i])
      ++j;
    const double t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }
  const double mean = n * (n + 1.0) / 4.0;
  const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
  require(var > 0.0, ErrorCode::DegenerateInput, "wilcoxon: zero variance");
  const double z = std::max(0.0, std::abs(out.w_plus - mean) - 0.5) / std::sqrt(var);
  out.p = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
  return out;
}

} // namespace dyslat::eval
