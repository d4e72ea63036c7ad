#include "apcrw/kernels_slt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace apcrw {

std::pair<std::int64_t, std::int64_t> KernelTable::effective_support(long double tail) const {
  std::int64_t a = 0, b = static_cast<std::int64_t>(mass.size()) - 1;
  long double acc = 0;
  while (a < b && acc + mass[static_cast<std::size_t>(a)] < tail)
    acc += mass[static_cast<std::size_t>(a++)];
  acc = 0;
  while (b > a && acc + mass[static_cast<std::size_t>(b)] < tail)
    acc += mass[static_cast<std::size_t>(b--)];
  return {lo + a, lo + b};
}

KernelTable exact_kernel(std::int64_t t, double alpha, double q, bool lazy) {
  if (t < 0) throw std::invalid_argument("exact_kernel: t must be >= 0");
  const long double pr = lazy ? static_cast<long double>(alpha) * q : q;
  const long double pl = lazy ? static_cast<long double>(alpha) * (1.0L - q) : (1.0L - q);
  const long double pc = 1.0L - pr - pl;

  KernelTable table;
  table.t = t;
  table.lazy = lazy;
  table.alpha = lazy ? alpha : 1.0;
  table.q = q;
  table.lo = -t;
  table.mass.assign(static_cast<std::size_t>(2 * t + 1), 0.0L);
  std::vector<long double> cur(static_cast<std::size_t>(2 * t + 1), 0.0L);
  std::vector<long double> next(cur.size(), 0.0L);
  cur[static_cast<std::size_t>(t)] = 1.0L;  // offset 0
  for (std::int64_t s = 0; s < t; ++s) {
    std::fill(next.begin(), next.end(), 0.0L);
    const std::int64_t lo_i = t - s, hi_i = t + s;
    for (std::int64_t i = lo_i; i <= hi_i; ++i) {
      long double m = cur[static_cast<std::size_t>(i)];
      if (m == 0.0L) continue;
      next[static_cast<std::size_t>(i + 1)] += m * pr;
      next[static_cast<std::size_t>(i - 1)] += m * pl;
      if (pc > 0.0L) next[static_cast<std::size_t>(i)] += m * pc;
    }
    cur.swap(next);
  }
  table.mass = std::move(cur);
  return table;
}

KernelTable convolve(const KernelTable& a, const KernelTable& b) {
  KernelTable out;
  out.t = a.t + b.t;
  out.lazy = a.lazy;
  out.alpha = a.alpha;
  out.q = a.q;
  out.lo = a.lo + b.lo;
  out.mass.assign(a.mass.size() + b.mass.size() - 1, 0.0L);
  for (std::size_t i = 0; i < a.mass.size(); ++i) {
    if (a.mass[i] == 0.0L) continue;
    for (std::size_t j = 0; j < b.mass.size(); ++j)
      out.mass[i + j] += a.mass[i] * b.mass[j];
  }
  return out;
}

double asymptotic_kernel(std::int64_t n, std::int64_t z, double q) {
  if (std::llabs(z) >= n) throw std::domain_error("asymptotic_kernel: requires |z| < n");
  const double w = static_cast<double>(z) - (2.0 * q - 1.0) * static_cast<double>(n);
  const double nn = static_cast<double>(n);
  const double amp = std::sqrt(nn / (M_PI * (nn * nn - static_cast<double>(z) * z)));
  return amp * std::exp(-(w * w / nn) / (4.0 * q * (1.0 - q)));
}

double exact_nonlazy_kernel(std::int64_t n, std::int64_t z, double q) {
  if ((n + z) % 2 != 0 || std::llabs(z) > n) return 0.0;
  const std::int64_t k = (n + z) / 2;  // number of right steps
  long double lg = std::lgammal(static_cast<long double>(n) + 1) -
                   std::lgammal(static_cast<long double>(k) + 1) -
                   std::lgammal(static_cast<long double>(n - k) + 1) +
                   k * std::logl(static_cast<long double>(q)) +
                   (n - k) * std::logl(1.0L - static_cast<long double>(q));
  return static_cast<double>(std::expl(lg));
}

namespace {

// Per-site slice of the Poisson cloud on {z} x (0, inf): i.i.d. Exp(1) gaps,
// generated lazily and consumed lowest-first.
struct CloudSite {
  std::vector<double> levels;
  Rng rng;

  explicit CloudSite(std::uint64_t key) : rng(key) {}
  void ensure(std::size_t count) {
    while (levels.size() < count) {
      double prev = levels.empty() ? 0.0 : levels.back();
      levels.push_back(prev + rng.next_exp());
    }
  }
  void ensure_level(double level) {
    while (levels.empty() || levels.back() <= level) ensure(levels.size() + 1);
  }
  std::int64_t count_below(double level) {
    ensure_level(level);
    auto it = std::upper_bound(levels.begin(), levels.end(), level);
    return static_cast<std::int64_t>(it - levels.begin());
  }
};

struct CloudStrip {
  std::int64_t z_lo, z_hi;
  std::vector<CloudSite> sites;

  CloudStrip(std::int64_t lo, std::int64_t hi, std::uint64_t seed) : z_lo(lo), z_hi(hi) {
    sites.reserve(static_cast<std::size_t>(hi - lo + 1));
    for (std::int64_t z = lo; z <= hi; ++z)
      sites.emplace_back(stream_key(seed, Stream::slt_cloud, static_cast<std::uint64_t>(z)));
  }
  CloudSite& at(std::int64_t z) { return sites[static_cast<std::size_t>(z - z_lo)]; }
};

// One xi-iteration over a (possibly shared) cloud strip.
SoftLocalTime run_iteration(const std::vector<std::int32_t>& starts, const KernelTable& kernel,
                            std::int64_t s_lo, std::int64_t s_hi, CloudStrip& cloud) {
  const std::int64_t z_lo = cloud.z_lo, z_hi = cloud.z_hi;
  const std::size_t width = static_cast<std::size_t>(z_hi - z_lo + 1);

  SoftLocalTime out;
  out.z_lo = z_lo;
  out.g.assign(width, 0.0);
  out.eta_t.assign(width, 0);
  out.xi.reserve(starts.size());
  out.endpoints.reserve(starts.size());

  std::vector<std::int64_t> assigned(width, 0);
  std::vector<double> kern(static_cast<std::size_t>(s_hi - s_lo + 1));
  for (std::int64_t o = s_lo; o <= s_hi; ++o)
    kern[static_cast<std::size_t>(o - s_lo)] = static_cast<double>(kernel.at(o));

  for (std::int32_t x : starts) {
    const std::int64_t a = x + s_lo, b = x + s_hi;
    double best = std::numeric_limits<double>::infinity();
    std::int64_t best_z = a;
    for (std::int64_t z = a; z <= b; ++z) {
      double g = kern[static_cast<std::size_t>(z - a)];
      if (g <= 0.0) continue;
      std::size_t zi = static_cast<std::size_t>(z - z_lo);
      CloudSite& site = cloud.sites[zi];
      site.ensure(static_cast<std::size_t>(assigned[zi]) + 1);
      double gap = site.levels[static_cast<std::size_t>(assigned[zi])] - out.g[zi];
      double ratio = gap > 0.0 ? gap / g : 0.0;
      if (ratio < best) {
        best = ratio;
        best_z = z;
      }
    }
    // claim the touched point and raise the curve
    std::size_t bz = static_cast<std::size_t>(best_z - z_lo);
    ++assigned[bz];
    ++out.eta_t[bz];
    out.xi.push_back(best);
    out.endpoints.push_back(static_cast<std::int32_t>(best_z));
    for (std::int64_t z = a; z <= b; ++z)
      out.g[static_cast<std::size_t>(z - z_lo)] += best * kern[static_cast<std::size_t>(z - a)];
  }
  return out;
}

std::pair<std::int64_t, std::int64_t> strip_range(const std::vector<std::int32_t>& starts,
                                                  std::int64_t s_lo, std::int64_t s_hi) {
  auto [mn, mx] = std::minmax_element(starts.begin(), starts.end());
  return {*mn + s_lo, *mx + s_hi};
}

}  // namespace

SoftLocalTime soft_local_time_sample(const std::vector<std::int32_t>& starts, std::int64_t t,
                                     const ApcrwParams& params, std::uint64_t seed) {
  if (starts.empty()) throw std::invalid_argument("soft_local_time_sample: no particles");
  KernelTable kernel = exact_kernel(t, params.alpha, params.q, /*lazy=*/true);
  auto [s_lo, s_hi] = kernel.effective_support(1e-15L);
  auto [z_lo, z_hi] = strip_range(starts, s_lo, s_hi);
  CloudStrip cloud(z_lo, z_hi, seed);
  return run_iteration(starts, kernel, s_lo, s_hi, cloud);
}

SltPair slt_shared_pair(const std::vector<std::int32_t>& starts_lo,
                        const std::vector<std::int32_t>& starts_hi, std::int64_t t,
                        const ApcrwParams& params, std::uint64_t seed) {
  if (starts_lo.empty() || starts_hi.empty())
    throw std::invalid_argument("slt_shared_pair: both configurations need particles");
  KernelTable kernel = exact_kernel(t, params.alpha, params.q, /*lazy=*/true);
  auto [s_lo, s_hi] = kernel.effective_support(1e-15L);
  auto [alo, ahi] = strip_range(starts_lo, s_lo, s_hi);
  auto [blo, bhi] = strip_range(starts_hi, s_lo, s_hi);
  SltPair pair;
  pair.z_lo = std::min(alo, blo);
  pair.z_hi = std::max(ahi, bhi);
  CloudStrip cloud(pair.z_lo, pair.z_hi, seed);
  pair.lo = run_iteration(starts_lo, kernel, s_lo, s_hi, cloud);
  pair.hi = run_iteration(starts_hi, kernel, s_lo, s_hi, cloud);
  return pair;
}

BridgeSampler::BridgeSampler(std::int64_t t, const ApcrwParams& params) {
  kernels_.reserve(static_cast<std::size_t>(t) + 1);
  for (std::int64_t j = 0; j <= t; ++j)
    kernels_.push_back(exact_kernel(j, params.alpha, params.q, true));
  pr_ = static_cast<long double>(params.alpha) * params.q;
  pl_ = static_cast<long double>(params.alpha) * (1.0L - params.q);
  pc_ = 1.0L - pr_ - pl_;
}

int BridgeSampler::step(std::int64_t j, std::int64_t e, double u) const {
  if (j < 1 || j >= static_cast<std::int64_t>(kernels_.size()))
    throw std::out_of_range("BridgeSampler::step: j outside prepared range");
  const KernelTable& rest = kernels_[static_cast<std::size_t>(j - 1)];
  long double w_r = pr_ * rest.at(e - 1);
  long double w_c = pc_ * rest.at(e);
  long double w_l = pl_ * rest.at(e + 1);
  long double total = w_r + w_c + w_l;
  if (total <= 0.0L) throw std::invalid_argument("BridgeSampler::step: unreachable target");
  long double v = static_cast<long double>(u) * total;
  if (v < w_r) return +1;
  if (v >= w_r + w_c) return -1;
  return 0;
}

std::vector<std::int32_t> sample_bridge_path(std::int64_t endpoint, std::int64_t t,
                                             const ApcrwParams& params, Rng& rng) {
  BridgeSampler sampler(t, params);
  std::vector<std::int32_t> path{0};
  std::int64_t x = 0;
  for (std::int64_t j = t; j >= 1; --j) {
    x += sampler.step(j, endpoint - x, rng.next_unit());
    path.push_back(static_cast<std::int32_t>(x));
  }
  return path;
}

SltCouplingReport slt_domination_coupling(const EnvState& eta0, const ApcrwParams& params,
                                          double eps, std::int64_t t, std::int64_t H,
                                          std::uint64_t seed) {
  if (!(eps > 0) || !(t >= 1) || !(H > 2 * t))
    throw std::invalid_argument("slt_domination_coupling: need eps > 0 and 0 < 2t < H");
  if (eta0.window.lo > 0 || eta0.window.hi < H)
    throw std::invalid_argument("slt_domination_coupling: eta0 must cover [0, H]");

  std::vector<std::int32_t> starts;
  for (std::int64_t x = 0; x <= H; ++x) {
    int m = 0;
    for (int ty = 0; ty < eta0.n_types(); ++ty) m += eta0.count(ty, x);
    for (int i = 0; i < m; ++i) starts.push_back(static_cast<std::int32_t>(x));
  }

  SltCouplingReport rep;
  rep.interval_lo = t;
  rep.interval_hi = H - t;
  const double rho = params.rho;

  // regime notes from the coupling lemma, with surrogate constants
  const double ell = std::ceil(2.0 / eps);
  std::ostringstream note;
  if (!(ell * ell < static_cast<double>(t))) {
    rep.regime_ok = false;
    note << "t <= ell^2 at ell=" << ell << "; ";
  }
  if (!((rho + eps) * ell * std::sqrt(std::log(static_cast<double>(t)) / t) < eps)) {
    rep.regime_ok = false;
    note << "(rho+eps)*ell*sqrt(log t/t) >= eps; ";
  }
  rep.regime_note = note.str();

  if (starts.empty()) {
    // empty field: dominated by anything nonnegative
    rep.lower_ok = rep.upper_ok = rep.success = true;
    return rep;
  }

  SoftLocalTime slt = soft_local_time_sample(starts, t, params, seed);
  CloudStrip cloud(slt.z_lo, slt.z_lo + static_cast<std::int64_t>(slt.g.size()) - 1, seed);

  rep.lower_ok = rep.upper_ok = true;
  rep.g_min = std::numeric_limits<double>::infinity();
  rep.g_max = -rep.g_min;
  double g_sum = 0;
  std::int64_t n_sites = 0;
  for (std::int64_t z = rep.interval_lo; z <= rep.interval_hi; ++z) {
    std::size_t zi = static_cast<std::size_t>(z - slt.z_lo);
    double g = slt.g[zi];
    std::int64_t eta = slt.eta_t[zi];
    std::int64_t n_minus = cloud.at(z).count_below(rho - eps);
    std::int64_t n_plus = cloud.at(z).count_below(rho + eps);
    if (n_minus > eta) {
      rep.lower_ok = false;
      ++rep.violations_lower;
    }
    if (eta > n_plus) {
      rep.upper_ok = false;
      ++rep.violations_upper;
    }
    g_sum += g;
    rep.g_min = std::min(rep.g_min, g);
    rep.g_max = std::max(rep.g_max, g);
    ++n_sites;
  }
  rep.g_mean = n_sites > 0 ? g_sum / static_cast<double>(n_sites) : 0.0;
  rep.success = rep.lower_ok && rep.upper_ok;
  return rep;
}

std::string kernel_csv(const KernelTable& table) {
  std::ostringstream os;
  os << "offset,mass,asymptotic_value,rel_error\n";
  for (std::size_t i = 0; i < table.mass.size(); ++i) {
    std::int64_t off = table.lo + static_cast<std::int64_t>(i);
    os << off << ',' << static_cast<double>(table.mass[i]);
    if (!table.lazy && table.t % 2 == 0 && off % 2 == 0 && std::llabs(off / 2) < table.t / 2) {
      double asym = asymptotic_kernel(table.t / 2, off / 2, table.q);
      double exact = static_cast<double>(table.mass[i]);
      os << ',' << asym << ',' << (exact > 0 ? std::fabs(asym - exact) / exact : 0.0);
    } else {
      os << ",,";
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace apcrw
