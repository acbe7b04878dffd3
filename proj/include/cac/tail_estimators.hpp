#pragma once

// Upper-tail probability Pr(X >= C) of the aggregate consumption of a class
// composition: exact pmf convolution, five large-deviation bounds and the
// normal approximation.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cac/error.hpp"
#include "cac/load_models.hpp"

namespace cac {

enum class EstimationMethod { Exact, Markov, Chebyshev, Hoeffding, Bennett, Chernoff, CLT };

inline constexpr std::array<EstimationMethod, 7> kAllMethods = {
    EstimationMethod::Exact,   EstimationMethod::CLT,       EstimationMethod::Chernoff, EstimationMethod::Bennett,
    EstimationMethod::Hoeffding, EstimationMethod::Chebyshev, EstimationMethod::Markov};

inline std::string_view method_name(EstimationMethod m) {
  switch (m) {
    case EstimationMethod::Exact: return "exact";
    case EstimationMethod::Markov: return "markov";
    case EstimationMethod::Chebyshev: return "chebyshev";
    case EstimationMethod::Hoeffding: return "hoeffding";
    case EstimationMethod::Bennett: return "bennett";
    case EstimationMethod::Chernoff: return "chernoff";
    case EstimationMethod::CLT: return "clt";
  }
  return "unknown";
}

inline EstimationMethod parse_method(std::string_view name) {
  for (auto m : kAllMethods)
    if (method_name(m) == name) return m;
  throw config_error("unknown estimation method '" + std::string(name) + "'");
}

/// True for the five bounds that provably dominate the exact tail.
inline bool is_upper_bound(EstimationMethod m) {
  return m != EstimationMethod::Exact && m != EstimationMethod::CLT;
}

/// True when the estimate of n identical appliances is non-decreasing in n.
inline bool is_monotone_in_count(EstimationMethod m) {
  return m != EstimationMethod::Chebyshev && m != EstimationMethod::Bennett;
}

struct CompositionEntry {
  ApplianceClass cls;
  int enabled = 0;
};

/// Enabled appliances by class plus a constant deterministic load (watts).
struct ClassComposition {
  std::vector<CompositionEntry> entries;
  double deterministic_load = 0.0;

  ClassComposition& add(const ApplianceClass& c, int enabled) {
    entries.push_back({c, enabled});
    return *this;
  }
};

inline void validate(const ClassComposition& comp) {
  if (!(comp.deterministic_load >= 0.0)) throw config_error("deterministic load must be >= 0");
  for (const auto& e : comp.entries) {
    validate(e.cls);
    if (e.enabled < 0 || e.enabled > e.cls.count)
      throw config_error("class '" + e.cls.name + "': enabled count outside [0, count]");
  }
}

/// X_det plus the constant contribution of enabled deterministic classes.
inline double effective_deterministic_load(const ClassComposition& comp) {
  double d = comp.deterministic_load;
  for (const auto& e : comp.entries)
    if (e.cls.deterministic) d += e.enabled * e.cls.on_power;
  return d;
}

namespace detail {

struct TwoState {
  double n;  // appliances
  double h;  // ON power
  double p;  // stationary ON probability
};

inline std::vector<TwoState> stochastic_sources(const ClassComposition& comp) {
  std::vector<TwoState> out;
  for (const auto& e : comp.entries)
    if (!e.cls.deterministic && e.enabled > 0) out.push_back({double(e.enabled), e.cls.on_power, class_p_on(e.cls)});
  return out;
}

}  // namespace detail

/// Probability mass function on the grid {offset*q, (offset+1)*q, ...}.
class PowerPmf {
 public:
  /// Point mass at 0 W.
  explicit PowerPmf(double quantum = 1.0) : quantum_(quantum), probabilities_{1.0} {
    if (!(quantum > 0.0)) throw config_error("quantum must be > 0");
  }

  PowerPmf(double quantum, std::int64_t offset, std::vector<double> probabilities)
      : quantum_(quantum), offset_(offset), probabilities_(std::move(probabilities)) {
    if (!(quantum_ > 0.0)) throw config_error("quantum must be > 0");
    if (probabilities_.empty()) throw config_error("pmf has empty support");
    double total = 0.0;
    for (double v : probabilities_) {
      if (!(v >= 0.0)) throw config_error("pmf probabilities must be >= 0");
      total += v;
    }
    if (std::abs(total - 1.0) > 1e-9) throw config_error("pmf probabilities must sum to 1");
    trim();
  }

  double quantum() const { return quantum_; }
  std::int64_t offset() const { return offset_; }
  const std::vector<double>& probabilities() const { return probabilities_; }
  std::size_t size() const { return probabilities_.size(); }
  double watts(std::size_t i) const { return static_cast<double>(offset_ + static_cast<std::int64_t>(i)) * quantum_; }
  double min_watts() const { return watts(0); }
  double max_watts() const { return watts(size() - 1); }

  /// Probability at `w` watts (0 off the support).
  double at(double w) const {
    const auto k = std::llround(w / quantum_) - offset_;
    if (k < 0 || k >= static_cast<std::int64_t>(size())) return 0.0;
    return probabilities_[static_cast<std::size_t>(k)];
  }

 private:
  // Drops extreme-tail entries whose cumulative mass is below 1e-300.
  void trim() {
    constexpr double kNegligible = 1e-300;
    std::size_t lo = 0;
    double dropped = 0.0;
    while (lo + 1 < probabilities_.size() && dropped + probabilities_[lo] < kNegligible) dropped += probabilities_[lo++];
    std::size_t hi = probabilities_.size();
    dropped = 0.0;
    while (hi - 1 > lo && dropped + probabilities_[hi - 1] < kNegligible) dropped += probabilities_[--hi];
    if (lo > 0 || hi < probabilities_.size()) {
      probabilities_ = std::vector<double>(probabilities_.begin() + static_cast<std::ptrdiff_t>(lo),
                                           probabilities_.begin() + static_cast<std::ptrdiff_t>(hi));
      offset_ += static_cast<std::int64_t>(lo);
    }
  }

  double quantum_;
  std::int64_t offset_ = 0;
  std::vector<double> probabilities_;
};

namespace detail {

/// Grid steps of `watts`; throws if it is not a multiple of the quantum.
inline std::int64_t grid_units(double watts, double quantum) {
  const double ratio = watts / quantum;
  const double rounded = std::round(ratio);
  if (std::abs(ratio - rounded) > 1e-9 * std::max(1.0, std::abs(ratio))) throw config_error("quantization mismatch");
  return static_cast<std::int64_t>(rounded);
}

/// Binomial(n, p) pmf, computed outward from the mode by the ratio recurrence
/// and renormalized.
inline std::vector<double> binomial_pmf(int n, double p) {
  std::vector<double> pmf(static_cast<std::size_t>(n) + 1, 0.0);
  if (p <= 0.0) {
    pmf.front() = 1.0;
    return pmf;
  }
  if (p >= 1.0) {
    pmf.back() = 1.0;
    return pmf;
  }
  const int mode = std::min(n, static_cast<int>(std::floor((n + 1) * p)));
  const double log_mode = std::lgamma(n + 1.0) - std::lgamma(mode + 1.0) - std::lgamma(n - mode + 1.0) +
                          mode * std::log(p) + (n - mode) * std::log1p(-p);
  const double odds = p / (1.0 - p);
  pmf[mode] = std::exp(log_mode);
  for (int k = mode; k < n; ++k) pmf[k + 1] = pmf[k] * (double(n - k) / double(k + 1)) * odds;
  for (int k = mode; k > 0; --k) pmf[k - 1] = pmf[k] * (double(k) / double(n - k + 1)) / odds;
  double total = 0.0;
  for (double v : pmf) total += v;
  for (double& v : pmf) v /= total;
  return pmf;
}

/// Dense convolution that iterates only over the non-zero entries of the
/// sparser operand.
inline std::vector<double> convolve(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out(a.size() + b.size() - 1, 0.0);
  auto nonzeros = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < v.size(); ++i)
      if (v[i] != 0.0) idx.push_back(i);
    return idx;
  };
  const auto na = nonzeros(a);
  const auto nb = nonzeros(b);
  if (na.size() <= nb.size()) {
    for (std::size_t i : na)
      for (std::size_t j : nb) out[i + j] += a[i] * b[j];
  } else {
    for (std::size_t j : nb)
      for (std::size_t i : na) out[i + j] += a[i] * b[j];
  }
  return out;
}

}  // namespace detail

/// Exact pmf of the stochastic part of the composition (X_det excluded).
/// Identical appliances of a class sum to Binomial(n, p_on) scaled by h;
/// classes are then convolved.
inline PowerPmf exact_pmf(const ClassComposition& comp, double quantum) {
  if (!(quantum > 0.0)) throw config_error("quantum must be > 0");
  std::vector<double> acc{1.0};
  std::int64_t offset = 0;
  for (const auto& e : comp.entries) {
    if (e.cls.deterministic || e.enabled == 0) continue;
    const std::int64_t stride = detail::grid_units(e.cls.on_power, quantum);
    const double p = class_p_on(e.cls);
    if (p <= 0.0) continue;
    if (p >= 1.0) {
      offset += stride * e.enabled;
      continue;
    }
    const auto binom = detail::binomial_pmf(e.enabled, p);
    std::vector<double> spread(static_cast<std::size_t>(stride * e.enabled) + 1, 0.0);
    for (std::size_t k = 0; k < binom.size(); ++k) spread[k * static_cast<std::size_t>(stride)] = binom[k];
    acc = detail::convolve(acc, spread);
  }
  return PowerPmf(quantum, offset, std::move(acc));
}

/// Pr(X >= threshold); off-grid thresholds count grid points at or above them.
inline double tail_from_pmf(const PowerPmf& pmf, double threshold) {
  const auto k = static_cast<std::int64_t>(std::ceil(threshold / pmf.quantum() - 1e-9)) - pmf.offset();
  if (k <= 0) return 1.0;
  const auto& v = pmf.probabilities();
  if (k >= static_cast<std::int64_t>(v.size())) return 0.0;
  double sum = 0.0;
  for (std::size_t i = v.size(); i-- > static_cast<std::size_t>(k);) sum += v[i];
  return std::clamp(sum, 0.0, 1.0);
}

/// Pr(X < threshold).
inline double lower_tail_from_pmf(const PowerPmf& pmf, double threshold) {
  const auto k = static_cast<std::int64_t>(std::ceil(threshold / pmf.quantum() - 1e-9)) - pmf.offset();
  if (k <= 0) return 0.0;
  const auto& v = pmf.probabilities();
  if (k >= static_cast<std::int64_t>(v.size())) return 1.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < static_cast<std::size_t>(k); ++i) sum += v[i];
  return std::clamp(sum, 0.0, 1.0);
}

struct AggregateStats {
  double mean = 0.0;
  double variance = 0.0;
  double sum_sq_ranges = 0.0;  // sum over appliances of (x_max - x_min)^2
  double max_abs = 0.0;        // largest single-appliance bound
};

inline AggregateStats aggregate_stats(const ClassComposition& comp) {
  AggregateStats s;
  for (const auto& src : detail::stochastic_sources(comp)) {
    s.mean += src.n * src.h * src.p;
    s.variance += src.n * src.h * src.h * src.p * (1.0 - src.p);
    s.sum_sq_ranges += src.n * src.h * src.h;
    s.max_abs = std::max(s.max_abs, src.h);
  }
  return s;
}

inline double bound_markov(const AggregateStats& s, double threshold) {
  if (!(threshold > 0.0)) throw config_error("invalid threshold");
  return std::min(1.0, s.mean / threshold);
}

inline double bound_chebyshev(const AggregateStats& s, double threshold) {
  if (threshold <= s.mean) return 1.0;
  const double gap = threshold - s.mean;
  return std::min(1.0, s.variance / (gap * gap));
}

inline double bound_hoeffding(const AggregateStats& s, double threshold) {
  if (threshold <= s.mean) return 1.0;
  if (s.sum_sq_ranges <= 0.0) return 0.0;
  const double gap = threshold - s.mean;
  return std::min(1.0, std::exp(-2.0 * gap * gap / s.sum_sq_ranges));
}

/// (1+u) ln(1+u) - u
inline double bennett_h(double u) { return (1.0 + u) * std::log1p(u) - u; }

inline double bound_bennett(const AggregateStats& s, double threshold) {
  if (threshold <= s.mean) return 1.0;
  if (s.variance <= 0.0 || s.max_abs <= 0.0) return 0.0;
  const double u = (threshold - s.mean) * s.max_abs / s.variance;
  return std::min(1.0, std::exp(-(s.variance / (s.max_abs * s.max_abs)) * bennett_h(u)));
}

namespace detail {

/// ln(1 - p + p e^{x}) for x >= 0, stable for large x.
inline double log_mgf_two_state(double x, double p) {
  if (p <= 0.0) return 0.0;
  if (p >= 1.0) return x;
  // 1 - p + p e^x = e^x (p + (1-p) e^{-x}) = e^x (1 - (1-p)(1 - e^{-x}))
  return x + std::log1p((1.0 - p) * std::expm1(-x));
}

/// p e^x / (1 - p + p e^x): the tilted ON probability.
inline double tilted_p_on(double x, double p) {
  if (p <= 0.0) return 0.0;
  if (p >= 1.0) return 1.0;
  return p / (p + (1.0 - p) * std::exp(-x));
}

}  // namespace detail

/// Chernoff bound exp(inf_{s>0} sum_j ln E[e^{s X_j}] - s C), in log domain.
/// The exponent is convex in s; its minimizer is found by bisection on the
/// derivative.
inline double bound_chernoff(const ClassComposition& comp, double threshold) {
  const auto sources = detail::stochastic_sources(comp);
  double mean = 0.0;
  double max_load = 0.0;
  double max_h = 0.0;
  for (const auto& src : sources) {
    mean += src.n * src.h * src.p;
    if (src.p > 0.0) {
      max_load += src.n * src.h;
      max_h = std::max(max_h, src.h);
    }
  }
  if (threshold <= mean) return 1.0;
  if (threshold > max_load || max_h == 0.0) return 0.0;
  if (threshold >= max_load * (1.0 - 1e-12)) {
    // The infimum is reached as s -> infinity: every appliance ON.
    double log_all_on = 0.0;
    for (const auto& src : sources) log_all_on += src.n * std::log(src.p);
    return std::min(1.0, std::exp(log_all_on));
  }

  auto exponent = [&](double s) {
    double g = -s * threshold;
    for (const auto& src : sources) g += src.n * detail::log_mgf_two_state(s * src.h, src.p);
    return g;
  };
  auto slope = [&](double s) {
    double d = -threshold;
    for (const auto& src : sources) d += src.n * src.h * detail::tilted_p_on(s * src.h, src.p);
    return d;
  };

  double lo = 1e-12;
  double hi = 1.0 / max_h;
  for (int i = 0; i < 1024 && slope(hi) <= 0.0; ++i) {
    lo = hi;
    hi *= 2.0;
  }
  double s = hi;
  if (slope(hi) > 0.0) {
    for (int iter = 0; iter < 200; ++iter) {
      s = 0.5 * (lo + hi);
      const double d = slope(s);
      if (std::abs(d) <= 1e-10 || !(hi - lo > 0.0) || s == lo || s == hi) break;
      (d < 0.0 ? lo : hi) = s;
    }
  }
  return std::min(1.0, std::exp(exponent(s)));
}

/// Standard normal cdf.
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

/// Normal approximation 1 - Phi((C - mean)/sigma); not a bound.
inline double clt_estimate(const AggregateStats& s, double threshold) {
  if (s.variance <= 0.0) return threshold <= s.mean ? 1.0 : 0.0;
  return normal_cdf(-(threshold - s.mean) / std::sqrt(s.variance));
}

/// Pr(X_stoch + X_det >= c_max) by `method`, tested as Pr(X_stoch >= c_max - X_det).
inline double estimate(EstimationMethod method, const ClassComposition& comp, double c_max, double quantum = 1.0) {
  const double threshold = c_max - effective_deterministic_load(comp);
  if (threshold <= 0.0) return 1.0;
  switch (method) {
    case EstimationMethod::Exact: return tail_from_pmf(exact_pmf(comp, quantum), threshold);
    case EstimationMethod::Chernoff: return bound_chernoff(comp, threshold);
    default: break;
  }
  const auto stats = aggregate_stats(comp);
  switch (method) {
    case EstimationMethod::Markov: return bound_markov(stats, threshold);
    case EstimationMethod::Chebyshev: return bound_chebyshev(stats, threshold);
    case EstimationMethod::Hoeffding: return bound_hoeffding(stats, threshold);
    case EstimationMethod::Bennett: return bound_bennett(stats, threshold);
    case EstimationMethod::CLT: return clt_estimate(stats, threshold);
    default: break;
  }
  throw config_error("unsupported estimation method");
}

/// Pr(X_stoch + X_det < c_min). Only Exact and CLT estimate the lower tail.
inline double lower_tail(EstimationMethod method, const ClassComposition& comp, double c_min, double quantum = 1.0) {
  if (method != EstimationMethod::Exact && method != EstimationMethod::CLT)
    throw config_error("lower tail supports only exact and clt");
  const double threshold = c_min - effective_deterministic_load(comp);
  if (threshold <= 0.0) return 0.0;
  if (method == EstimationMethod::Exact) return lower_tail_from_pmf(exact_pmf(comp, quantum), threshold);
  const auto s = aggregate_stats(comp);
  if (s.variance <= 0.0) return s.mean < threshold ? 1.0 : 0.0;
  return normal_cdf((threshold - s.mean) / std::sqrt(s.variance));
}

}  // namespace cac
