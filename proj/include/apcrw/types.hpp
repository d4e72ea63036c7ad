#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace apcrw {

// Inclusive integer interval of sites.
struct Window {
  std::int64_t lo = 0;
  std::int64_t hi = 0;

  Window() = default;
  Window(std::int64_t l, std::int64_t h) : lo(l), hi(h) {
    if (lo > hi) throw std::invalid_argument("Window: lo > hi");
  }
  std::int64_t size() const noexcept { return hi - lo + 1; }
  bool contains(std::int64_t x) const noexcept { return x >= lo && x <= hi; }
};

// One particle species: density rho, activity alpha, right-step bias q.
// A particle stays put with probability 1-alpha, steps right with alpha*q
// and left with alpha*(1-q).
struct ApcrwParams {
  double rho = 1.0;
  double alpha = 0.5;
  double q = 0.6;

  double drift() const noexcept { return alpha * (2.0 * q - 1.0); }

  void validate() const {
    if (!(rho > 0.0)) throw std::invalid_argument("rho must be > 0");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0,1)");
    if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument("q must lie in (0,1)");
  }
};

// Superposition of independent species; site occupancy is "any type present".
struct EnvParams {
  struct Component {
    double rho;    // absolute density of this type
    double alpha;
    double q;
  };
  std::vector<Component> components;

  EnvParams() = default;
  explicit EnvParams(const ApcrwParams& p) : components{{p.rho, p.alpha, p.q}} {}

  static EnvParams superposition(double base_rho, const std::vector<double>& betas,
                                 const std::vector<double>& alphas,
                                 const std::vector<double>& qs) {
    if (betas.empty() || betas.size() != alphas.size() || betas.size() != qs.size())
      throw std::invalid_argument("superposition: component lists must be nonempty, equal length");
    EnvParams ep;
    for (std::size_t i = 0; i < betas.size(); ++i) {
      if (!(betas[i] > 0.0)) throw std::invalid_argument("superposition: betas must be > 0");
      ep.components.push_back({base_rho * betas[i], alphas[i], qs[i]});
    }
    ep.validate();
    return ep;
  }

  int n_types() const noexcept { return static_cast<int>(components.size()); }
  double total_rho() const noexcept {
    double s = 0;
    for (const auto& c : components) s += c.rho;
    return s;
  }
  // Environment particle drift; for mixtures, the density-weighted mean.
  double mean_drift() const noexcept {
    double s = 0;
    for (const auto& c : components) s += c.rho * c.alpha * (2.0 * c.q - 1.0);
    return total_rho() > 0 ? s / total_rho() : 0.0;
  }
  EnvParams scaled(double factor) const {
    EnvParams ep = *this;
    for (auto& c : ep.components) c.rho *= factor;
    return ep;
  }
  // Adds eps of density distributed across types proportionally to rho.
  EnvParams sprinkled(double eps) const {
    return scaled((total_rho() + eps) / total_rho());
  }
  void validate() const {
    if (components.empty()) throw std::invalid_argument("environment needs >= 1 component");
    for (const auto& c : components) {
      ApcrwParams p{c.rho, c.alpha, c.q};
      p.validate();
    }
  }
};

// Walker jump probabilities: p_occ on occupied sites, p_vac on empty ones.
struct WalkParams {
  double p_occ = 0.8;
  double p_vac = 0.3;

  void validate() const {
    if (!(p_vac > 0.0 && p_occ < 1.0 && p_vac < p_occ))
      throw std::invalid_argument(
          "walk parameters must satisfy 0 < p_vac < p_occ < 1 (occupied sites push right)");
  }
};

struct LatticePoint {
  std::int64_t x = 0;
  std::int64_t n = 0;  // time

  bool same_parity_class(const LatticePoint& o) const noexcept {
    return ((x + n) & 1) == ((o.x + o.n) & 1);
  }
};

struct Trajectory {
  LatticePoint start;
  std::vector<std::int32_t> positions;  // positions[k] = X_k, positions[0] = start.x

  std::int64_t steps() const noexcept {
    return static_cast<std::int64_t>(positions.size()) - 1;
  }
  std::int64_t at(std::int64_t k) const { return positions.at(static_cast<std::size_t>(k)); }
  std::int64_t final_position() const { return positions.back(); }
};

struct SpeedEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
  double ci_lo = 0.0, ci_hi = 0.0;  // 95% normal interval
  std::int64_t replicas = 0;
  std::int64_t n_steps = 0;

  bool valid = true;  // false when too few samples for an estimate
};

// Streaming mean/variance (Welford).
class RunningStats {
 public:
  void add(double x) noexcept {
    ++n_;
    double d = x - mean_;
    mean_ += d / static_cast<double>(n_);
    m2_ += d * (x - mean_);
  }
  void merge(const RunningStats& o) noexcept {
    if (o.n_ == 0) return;
    if (n_ == 0) { *this = o; return; }
    double d = o.mean_ - mean_;
    std::int64_t n = n_ + o.n_;
    m2_ += o.m2_ + d * d * (static_cast<double>(n_) * static_cast<double>(o.n_)) / n;
    mean_ += d * static_cast<double>(o.n_) / n;
    n_ = n;
  }
  std::int64_t count() const noexcept { return n_; }
  double mean() const noexcept { return mean_; }
  double variance() const noexcept { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
  double stderr_of_mean() const noexcept {
    return n_ > 1 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0;
  }

 private:
  std::int64_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

inline SpeedEstimate speed_from_stats(const RunningStats& s, std::int64_t n_steps) {
  SpeedEstimate e;
  e.replicas = s.count();
  e.n_steps = n_steps;
  e.valid = s.count() >= 2;
  e.mean = s.mean();
  e.stderr_ = s.stderr_of_mean();
  e.ci_lo = e.mean - 1.96 * e.stderr_;
  e.ci_hi = e.mean + 1.96 * e.stderr_;
  return e;
}

}  // namespace apcrw
