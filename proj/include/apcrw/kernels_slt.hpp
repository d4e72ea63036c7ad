#pragma once

// Heat kernels of the lazy asymmetric walk, the leading-order local limit
// approximation, the soft-local-time endpoint sampler, and the domination
// coupling that sandwiches an evolved configuration between product-Poisson
// fields at densities rho -+ eps.

#include <cstdint>
#include <string>
#include <vector>

#include "apcrw/env_core.hpp"
#include "apcrw/rng.hpp"
#include "apcrw/types.hpp"

namespace apcrw {

// Exact step-t distribution. Offsets run over [-t, t]; the non-lazy kernel
// carries mass only on offsets with the parity of t.
struct KernelTable {
  std::int64_t t = 0;
  bool lazy = true;
  double alpha = 0, q = 0;
  std::int64_t lo = 0;                 // first offset
  std::vector<long double> mass;       // mass[i] = P(offset == lo + i)

  long double at(std::int64_t offset) const noexcept {
    std::int64_t i = offset - lo;
    if (i < 0 || i >= static_cast<std::int64_t>(mass.size())) return 0.0L;
    return mass[static_cast<std::size_t>(i)];
  }
  long double sum() const noexcept {
    long double s = 0;
    for (auto m : mass) s += m;
    return s;
  }
  long double mean() const noexcept {
    long double s = 0;
    for (std::size_t i = 0; i < mass.size(); ++i)
      s += mass[i] * static_cast<long double>(lo + static_cast<std::int64_t>(i));
    return s;
  }
  // Smallest offset range holding all but `tail` of the mass on each side.
  std::pair<std::int64_t, std::int64_t> effective_support(long double tail) const;
};

// Iterated convolution of the one-step law in long double. The non-lazy
// kernel takes one +-1 step per unit time with right probability q; the lazy
// kernel additionally stays put with probability 1 - alpha.
KernelTable exact_kernel(std::int64_t t, double alpha, double q, bool lazy);

// Convolution of two kernels with matching step laws.
KernelTable convolve(const KernelTable& a, const KernelTable& b);

// Leading-order value of the non-lazy kernel at even offsets, from the local
// limit expansion around the drift: for w = z - (2q-1)n,
//   q2n(2z) ~= sqrt(n / (pi (n^2 - z^2))) * exp(-w^2 / (4 q (1-q) n)).
// Requires |z| < n.
double asymptotic_kernel(std::int64_t n, std::int64_t z, double q);

// Exact binomial value of the non-lazy kernel, log-space, for large n.
double exact_nonlazy_kernel(std::int64_t n, std::int64_t z, double q);

struct SoftLocalTime {
  std::int64_t z_lo = 0;                  // first site of the tracked range
  std::vector<double> g;                  // soft local time G(z)
  std::vector<double> xi;                 // xi_1, xi_2, ... (one per particle)
  std::vector<std::int32_t> endpoints;    // endpoint site of each particle
  std::vector<std::int32_t> eta_t;        // realized endpoint counts per site
};

// Runs the greedy xi-iteration over a Poisson cloud on (site x intensity)
// strips: each particle claims the lowest unclaimed cloud point reachable by
// scaling its kernel row, which makes the joint endpoint law equal to that of
// independently evolved particles.
//
// `starts` are particle positions (possibly repeated). The site range is
// derived from the starts and the kernel's effective support (rows truncated
// where the residual mass drops below 1e-15 per side).
SoftLocalTime soft_local_time_sample(const std::vector<std::int32_t>& starts, std::int64_t t,
                                     const ApcrwParams& params, std::uint64_t seed);

// Same cloud, two configurations: both endpoint sets are sampled against one
// shared Poisson cloud, so the realized configurations can be compared
// pointwise. Used to recover domination after a finite-range resampling.
struct SltPair {
  SoftLocalTime lo;  // from starts_lo
  SoftLocalTime hi;  // from starts_hi
  std::int64_t z_lo = 0, z_hi = 0;  // common tracked range
};
SltPair slt_shared_pair(const std::vector<std::int32_t>& starts_lo,
                        const std::vector<std::int32_t>& starts_hi, std::int64_t t,
                        const ApcrwParams& params, std::uint64_t seed);

// Conditional stepping of a lazy asymmetric walk pinned to reach a given
// offset: P(step s | j steps left, target e) = p(s) q_{j-1}(e - s) / q_j(e).
class BridgeSampler {
 public:
  BridgeSampler(std::int64_t t, const ApcrwParams& params);
  // One step with j steps remaining toward relative offset e.
  int step(std::int64_t j, std::int64_t e, double u) const;

 private:
  std::vector<KernelTable> kernels_;  // 0..t
  long double pr_, pl_, pc_;
};

// Conditioned path of a lazy asymmetric walk from 0 to `endpoint` in t steps.
std::vector<std::int32_t> sample_bridge_path(std::int64_t endpoint, std::int64_t t,
                                             const ApcrwParams& params, Rng& rng);

struct SltCouplingReport {
  bool success = false;         // sandwich holds on [t, H-t]
  bool lower_ok = false;        // eta^{rho-eps} <= eta_t there
  bool upper_ok = false;        // eta_t <= eta^{rho+eps} there
  std::int64_t violations_lower = 0;
  std::int64_t violations_upper = 0;
  double g_mean = 0;            // mean of G over [t, H-t]
  double g_min = 0, g_max = 0;
  std::int64_t interval_lo = 0, interval_hi = 0;
  bool regime_ok = true;        // reported, not enforced
  std::string regime_note;
};

// Shared-cloud coupling of (eta^{rho-eps}, eta_t, eta^{rho+eps}): the two
// product-Poisson fields read the same cloud at constant intensity levels
// rho -+ eps while eta_t reads it under the soft local time curve, so
// domination on [t, H-t] reduces to per-site count comparisons.
// eta0 supplies the initial configuration on [0, H]; params.rho is the
// comparison density rho.
SltCouplingReport slt_domination_coupling(const EnvState& eta0, const ApcrwParams& params,
                                          double eps, std::int64_t t, std::int64_t H,
                                          std::uint64_t seed);

// Kernel dump CSV: offset,mass,asymptotic_value,rel_error (asymptotic columns
// only for the non-lazy kernel at matching parity).
std::string kernel_csv(const KernelTable& table);

}  // namespace apcrw
