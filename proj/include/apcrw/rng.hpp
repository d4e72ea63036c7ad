#pragma once

// Counter-based keyed RNG and small exact samplers.
//
// Every random draw in the project is a pure function of a 64-bit key and a
// counter, so coupled objects can share or diverge randomness by key choice
// alone, and parallel replicas are reproducible regardless of scheduling.

#include <cassert>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

namespace apcrw {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

// SplitMix64 finalizer (Vigna); full-avalanche bijection on 64 bits.
inline constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ull;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBull;
  z ^= z >> 31;
  return z;
}

inline constexpr std::uint64_t hash_combine(std::uint64_t h, std::uint64_t w) noexcept {
  return mix64((h + kGolden) ^ w);
}

inline constexpr std::uint64_t key3(std::uint64_t a, std::uint64_t b, std::uint64_t c) noexcept {
  return hash_combine(hash_combine(mix64(a), b), c);
}

inline constexpr double u64_to_unit(std::uint64_t u) noexcept {
  return static_cast<double>(u >> 11) * 0x1.0p-53;  // [0,1)
}

// Stream tags keep draws for different purposes disjoint under one master seed.
enum class Stream : std::uint64_t {
  env_init = 1,
  env_step = 2,
  walk_field = 3,     // uniform field U_w, keyed by space-time point
  paired_particle = 4,
  slt_cloud = 5,
  experiment = 6,
  bridge = 7,
};

inline constexpr std::uint64_t stream_key(std::uint64_t master, Stream s,
                                          std::uint64_t a = 0, std::uint64_t b = 0) noexcept {
  return hash_combine(key3(master, static_cast<std::uint64_t>(s), a), b);
}

// Sequential stream: draw i is mix64(key + i*golden), i.e. SplitMix64.
class Rng {
 public:
  explicit Rng(std::uint64_t key) : state_(key) {}

  std::uint64_t next_u64() noexcept {
    state_ += kGolden;
    return mix64(state_);
  }
  double next_unit() noexcept { return u64_to_unit(next_u64()); }
  double next_exp() noexcept { return -std::log1p(-next_unit()); }

  // uniform in [0, n)
  std::uint64_t next_below(std::uint64_t n) noexcept {
    return static_cast<std::uint64_t>(next_unit() * static_cast<double>(n));
  }

 private:
  std::uint64_t state_;
};

// Point draw: the same (key, a, b) always yields the same uniform.
inline double unit_at(std::uint64_t key, std::int64_t a, std::int64_t b) noexcept {
  return u64_to_unit(hash_combine(hash_combine(key, static_cast<std::uint64_t>(a)),
                                  static_cast<std::uint64_t>(b)));
}

// Poisson sampler by CDF inversion. Truncated where the residual tail mass
// drops below 1e-18; sufficient for the densities used here (lambda <~ 30).
class PoissonTable {
 public:
  explicit PoissonTable(double lambda) : lambda_(lambda) {
    if (!(lambda >= 0.0)) throw std::invalid_argument("PoissonTable: lambda must be >= 0");
    double p = std::exp(-lambda);
    double cum = p;
    cdf_.push_back(cum);
    int k = 0;
    while (1.0 - cum > 1e-18 && k < 4096) {
      ++k;
      p *= lambda / k;
      cum += p;
      cdf_.push_back(cum);
    }
  }

  int sample(double u) const noexcept {
    // linear scan: tables are short and the low entries dominate
    for (std::size_t k = 0; k < cdf_.size(); ++k)
      if (u < cdf_[k]) return static_cast<int>(k);
    return static_cast<int>(cdf_.size()) - 1;
  }
  int sample(Rng& rng) const noexcept { return sample(rng.next_unit()); }
  double lambda() const noexcept { return lambda_; }

 private:
  double lambda_;
  std::vector<double> cdf_;
};

// CDF tables for Bin(m, p), m = 0..m_max, sampled by binary search.
// Used to fast-forward deferred particles by many steps at once.
class BinomialFamily {
 public:
  BinomialFamily() = default;
  BinomialFamily(double p, int m_max) : p_(p), m_max_(m_max) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("BinomialFamily: p out of range");
    offsets_.resize(m_max + 2);
    std::size_t total = 0;
    for (int m = 0; m <= m_max; ++m) {
      offsets_[m] = total;
      total += static_cast<std::size_t>(m) + 1;
    }
    offsets_[m_max + 1] = total;
    cdf_.resize(total);
    for (int m = 0; m <= m_max; ++m) {
      double* row = cdf_.data() + offsets_[m];
      if (p <= 0.0 || p >= 1.0) {
        for (int k = 0; k <= m; ++k) row[k] = (p <= 0.0 || k >= m) ? 1.0 : 0.0;
        continue;
      }
      double pmf = std::pow(1.0 - p, m);
      double cum = pmf;
      row[0] = cum;
      for (int k = 1; k <= m; ++k) {
        pmf *= (static_cast<double>(m - k + 1) / k) * (p / (1.0 - p));
        cum += pmf;
        row[k] = cum;
      }
      row[m] = 1.0;  // close the row against rounding
    }
  }

  int sample(int m, double u) const noexcept {
    assert(m >= 0 && m <= m_max_);
    const double* row = cdf_.data() + offsets_[m];
    int lo = 0, hi = m;
    while (lo < hi) {
      int mid = (lo + hi) / 2;
      if (u < row[mid])
        hi = mid;
      else
        lo = mid + 1;
    }
    return lo;
  }
  int sample(int m, Rng& rng) const noexcept { return sample(m, rng.next_unit()); }

  int m_max() const noexcept { return m_max_; }
  double p() const noexcept { return p_; }

 private:
  double p_ = 0.0;
  int m_max_ = -1;
  std::vector<std::size_t> offsets_;
  std::vector<double> cdf_;
};

}  // namespace apcrw
