#pragma once

// Test-grade statistics helpers: lag-1 autocorrelation, two-sample KS,
// chi-square on count histograms. Kept dependency-free so test oracles and
// diagnostics stay independent of the simulation code paths.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

namespace apcrw {

inline double lag1_autocorrelation(const std::vector<double>& xs) {
  std::size_t n = xs.size();
  if (n < 3) return 0.0;
  double mean = 0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(n);
  double num = 0, den = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double d = xs[i] - mean;
    den += d * d;
    if (i + 1 < n) num += d * (xs[i + 1] - mean);
  }
  return den > 0 ? num / den : 0.0;
}

// Two-sample Kolmogorov-Smirnov D statistic.
inline double ks_two_sample_d(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0;
  while (i < a.size() && j < b.size()) {
    double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    double fa = static_cast<double>(i) / a.size();
    double fb = static_cast<double>(j) / b.size();
    d = std::max(d, std::fabs(fa - fb));
  }
  return d;
}

// Asymptotic Kolmogorov distribution tail: P(sqrt(n_eff) D > lambda).
inline double ks_p_value(double d, std::size_t na, std::size_t nb) {
  double ne = static_cast<double>(na) * nb / (na + nb);
  double lambda = (std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * d;
  double sum = 0;
  for (int k = 1; k <= 100; ++k) {
    double term = 2.0 * ((k % 2 == 1) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
    sum += term;
    if (std::fabs(term) < 1e-12) break;
  }
  return std::clamp(sum, 0.0, 1.0);
}

// Chi-square statistic for two count histograms over a common index set,
// pooling sparse bins (expected < min_expected) into the last bin.
// Returns the statistic and degrees of freedom.
struct ChiSquare {
  double statistic = 0;
  int dof = 0;
};

inline ChiSquare chi_square_two_sample(const std::map<int, std::int64_t>& ha,
                                       const std::map<int, std::int64_t>& hb,
                                       double min_expected = 8.0) {
  std::map<int, std::pair<double, double>> bins;
  for (auto& [k, c] : ha) bins[k].first += static_cast<double>(c);
  for (auto& [k, c] : hb) bins[k].second += static_cast<double>(c);
  // pool small bins
  std::vector<std::pair<double, double>> pooled;
  std::pair<double, double> acc{0, 0};
  for (auto& [k, ab] : bins) {
    acc.first += ab.first;
    acc.second += ab.second;
    if (acc.first + acc.second >= 2 * min_expected) {
      pooled.push_back(acc);
      acc = {0, 0};
    }
  }
  if (acc.first + acc.second > 0) {
    if (!pooled.empty()) {
      pooled.back().first += acc.first;
      pooled.back().second += acc.second;
    } else {
      pooled.push_back(acc);
    }
  }
  double na = 0, nb = 0;
  for (auto& [a, b] : pooled) { na += a; nb += b; }
  ChiSquare out;
  if (pooled.size() < 2 || na == 0 || nb == 0) return out;
  double k1 = std::sqrt(nb / na), k2 = std::sqrt(na / nb);
  for (auto& [a, b] : pooled) {
    double d = k1 * a - k2 * b;
    out.statistic += d * d / (a + b);
  }
  out.dof = static_cast<int>(pooled.size()) - 1;
  return out;
}

// Upper tail of the chi-square distribution via the regularized gamma Q.
inline double chi_square_tail(double x, int dof) {
  if (x <= 0 || dof <= 0) return 1.0;
  double a = dof / 2.0, z = x / 2.0;
  // series / continued fraction split as in standard incomplete-gamma code
  auto gamma_p_series = [&](double s, double t) {
    double sum = 1.0 / s, term = sum;
    for (int k = 1; k < 10000; ++k) {
      term *= t / (s + k);
      sum += term;
      if (std::fabs(term) < std::fabs(sum) * 1e-15) break;
    }
    return sum * std::exp(-t + s * std::log(t) - std::lgamma(s));
  };
  auto gamma_q_cf = [&](double s, double t) {
    double b = t + 1 - s, c = 1e300, d = 1 / b, h = d;
    for (int k = 1; k < 10000; ++k) {
      double an = -k * (k - s);
      b += 2;
      d = an * d + b;
      if (std::fabs(d) < 1e-300) d = 1e-300;
      c = b + an / c;
      if (std::fabs(c) < 1e-300) c = 1e-300;
      d = 1 / d;
      double delta = d * c;
      h *= delta;
      if (std::fabs(delta - 1) < 1e-15) break;
    }
    return h * std::exp(-t + s * std::log(t) - std::lgamma(s));
  };
  if (z < a + 1.0) return std::clamp(1.0 - gamma_p_series(a, z), 0.0, 1.0);
  return std::clamp(gamma_q_cf(a, z), 0.0, 1.0);
}

}  // namespace apcrw
