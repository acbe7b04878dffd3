#pragma once

// Two-state appliance load models: definition, stationary statistics,
// seeded series generation and fitting from measured power traces.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "cac/error.hpp"
#include "cac/random.hpp"

namespace cac {

/// Holding-time distribution over positive slot counts with finite support.
class DurationPmf {
 public:
  DurationPmf() = default;

  explicit DurationPmf(std::map<int, double> probabilities) : probabilities_(std::move(probabilities)) {
    if (probabilities_.empty()) throw config_error("duration pmf is empty");
    double total = 0.0;
    for (const auto& [duration, prob] : probabilities_) {
      if (duration < 1) throw config_error("duration pmf: durations must be >= 1");
      if (!(prob > 0.0 && prob <= 1.0)) throw config_error("duration pmf: probabilities must be in (0, 1]");
      total += prob;
    }
    if (std::abs(total - 1.0) > 1e-9) throw config_error("duration pmf: probabilities must sum to 1");
  }

  const std::map<int, double>& probabilities() const { return probabilities_; }
  bool empty() const { return probabilities_.empty(); }
  int max_duration() const { return probabilities_.empty() ? 0 : probabilities_.rbegin()->first; }

  double mean() const {
    double m = 0.0;
    for (const auto& [d, prob] : probabilities_) m += d * prob;
    return m;
  }

  int sample(Rng& rng) const {
    const double u = rng.uniform();
    double acc = 0.0;
    for (const auto& [d, prob] : probabilities_) {
      acc += prob;
      if (u < acc) return d;
    }
    return max_duration();
  }

  /// Draws the remaining length of a run observed at a random slot:
  /// P(R = k) = P(T >= k) / E[T].
  int sample_residual(Rng& rng) const {
    const double target = rng.uniform() * mean();
    double survival = 1.0;
    double acc = 0.0;
    auto it = probabilities_.begin();
    for (int k = 1; k <= max_duration(); ++k) {
      while (it != probabilities_.end() && it->first < k) {
        survival -= it->second;
        ++it;
      }
      acc += std::max(survival, 0.0);
      if (target < acc) return k;
    }
    return max_duration();
  }

  friend bool operator==(const DurationPmf&, const DurationPmf&) = default;

 private:
  std::map<int, double> probabilities_;
};

struct Bernoulli {
  double p_on = 0.0;
  friend bool operator==(const Bernoulli&, const Bernoulli&) = default;
};

struct TwoStateMarkov {
  double p_off_to_on = 0.0;
  double p_on_to_off = 0.0;
  friend bool operator==(const TwoStateMarkov&, const TwoStateMarkov&) = default;
};

/// Alternating ON/OFF runs with independent holding times (the
/// higher-order Markov model).
struct AlternatingRenewal {
  DurationPmf on_durations;
  DurationPmf off_durations;
  friend bool operator==(const AlternatingRenewal&, const AlternatingRenewal&) = default;
};

using LoadModel = std::variant<Bernoulli, TwoStateMarkov, AlternatingRenewal>;

enum class ModelFamily { Bernoulli, TwoStateMarkov, AlternatingRenewal };

inline std::string_view family_name(ModelFamily f) {
  switch (f) {
    case ModelFamily::Bernoulli: return "bernoulli";
    case ModelFamily::TwoStateMarkov: return "markov";
    case ModelFamily::AlternatingRenewal: return "renewal";
  }
  return "unknown";
}

inline ModelFamily parse_family(std::string_view name) {
  if (name == "bernoulli") return ModelFamily::Bernoulli;
  if (name == "markov") return ModelFamily::TwoStateMarkov;
  if (name == "renewal") return ModelFamily::AlternatingRenewal;
  throw config_error("unknown model family '" + std::string(name) + "' (expected bernoulli, markov or renewal)");
}

inline ModelFamily family_of(const LoadModel& model) { return static_cast<ModelFamily>(model.index()); }

inline void validate(const LoadModel& model) {
  std::visit(
      [](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, Bernoulli>) {
          if (!(m.p_on >= 0.0 && m.p_on <= 1.0)) throw config_error("bernoulli p_on must be in [0, 1]");
        } else if constexpr (std::is_same_v<T, TwoStateMarkov>) {
          if (!(m.p_off_to_on > 0.0 && m.p_off_to_on < 1.0 && m.p_on_to_off > 0.0 && m.p_on_to_off < 1.0))
            throw config_error("markov transition probabilities must be in (0, 1)");
        } else {
          if (m.on_durations.empty() || m.off_durations.empty())
            throw config_error("renewal model needs ON and OFF holding-time distributions");
        }
      },
      model);
}

struct ApplianceClass {
  std::string name;
  double on_power = 1.0;  // watts drawn in the ON state
  LoadModel model = Bernoulli{1.0};
  bool shiftable = true;
  bool deterministic = false;  // constant load while enabled; model ignored
  int count = 0;               // appliances in the class
};

inline void validate(const ApplianceClass& c) {
  if (!(c.on_power > 0.0) || !std::isfinite(c.on_power)) throw config_error("class '" + c.name + "': on_power must be > 0");
  if (c.count < 0) throw config_error("class '" + c.name + "': count must be >= 0");
  if (!c.deterministic) validate(c.model);
}

struct StationaryStats {
  double p_on = 0.0;
  double mean = 0.0;
  double variance = 0.0;
};

inline double stationary_p_on(const LoadModel& model) {
  return std::visit(
      [](const auto& m) -> double {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, Bernoulli>) {
          return m.p_on;
        } else if constexpr (std::is_same_v<T, TwoStateMarkov>) {
          const double total = m.p_off_to_on + m.p_on_to_off;
          if (!(total > 0.0)) throw config_error("no stationary distribution");
          return m.p_off_to_on / total;
        } else {
          const double on = m.on_durations.mean();
          const double off = m.off_durations.mean();
          if (!(on + off > 0.0)) throw config_error("no stationary distribution");
          return on / (on + off);
        }
      },
      model);
}

inline StationaryStats stationary_stats(const LoadModel& model, double on_power) {
  const double p = stationary_p_on(model);
  return {p, on_power * p, on_power * on_power * p * (1.0 - p)};
}

/// Stationary ON probability of a class; deterministic classes are always ON.
inline double class_p_on(const ApplianceClass& c) { return c.deterministic ? 1.0 : stationary_p_on(c.model); }

/// ON/OFF state sequence (1 = ON) of one appliance.
inline std::vector<std::uint8_t> sample_states(const LoadModel& model, std::size_t slots, Rng& rng) {
  std::vector<std::uint8_t> states(slots, 0);
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, Bernoulli>) {
          for (auto& s : states) s = rng.bernoulli(m.p_on) ? 1 : 0;
        } else if constexpr (std::is_same_v<T, TwoStateMarkov>) {
          if (slots == 0) return;
          bool on = rng.bernoulli(stationary_p_on(m));
          states[0] = on;
          for (std::size_t t = 1; t < slots; ++t) {
            on = on ? !rng.bernoulli(m.p_on_to_off) : rng.bernoulli(m.p_off_to_on);
            states[t] = on;
          }
        } else {
          bool on = rng.bernoulli(stationary_p_on(m));
          std::size_t t = 0;
          std::size_t run = static_cast<std::size_t>(on ? m.on_durations.sample_residual(rng)
                                                        : m.off_durations.sample_residual(rng));
          while (t < slots) {
            for (std::size_t i = 0; i < run && t < slots; ++i) states[t++] = on;
            on = !on;
            run = static_cast<std::size_t>(on ? m.on_durations.sample(rng) : m.off_durations.sample(rng));
          }
        }
      },
      model);
  return states;
}

inline std::vector<std::uint8_t> sample_states(const ApplianceClass& c, std::size_t slots, std::uint64_t seed) {
  if (c.deterministic) return std::vector<std::uint8_t>(slots, 1);
  Rng rng(seed);
  return sample_states(c.model, slots, rng);
}

/// Per-slot power of one appliance of class `c`; a pure function of its arguments.
inline std::vector<double> sample_series(const ApplianceClass& c, std::size_t slots, std::uint64_t seed) {
  if (slots < 1) throw config_error("slots must be >= 1");
  const auto states = sample_states(c, slots, seed);
  std::vector<double> out(slots);
  for (std::size_t t = 0; t < slots; ++t) out[t] = states[t] ? c.on_power : 0.0;
  return out;
}

struct TraceSeries {
  double sample_period = 1.0;  // seconds
  std::vector<double> samples;  // watts
};

inline void validate(const TraceSeries& trace) {
  if (trace.samples.empty()) throw config_error("trace is empty");
  if (!(trace.sample_period > 0.0)) throw config_error("trace sample period must be > 0");
  for (double w : trace.samples)
    if (!(w >= 0.0) || !std::isfinite(w)) throw config_error("trace samples must be finite and >= 0");
}

/// Mean-pools groups of `factor` consecutive samples; a trailing partial group is dropped.
inline TraceSeries resample_mean(const TraceSeries& trace, std::size_t factor) {
  if (factor == 0) throw config_error("pooling factor must be >= 1");
  if (factor == 1) return trace;
  TraceSeries out{trace.sample_period * static_cast<double>(factor), {}};
  const std::size_t groups = trace.samples.size() / factor;
  out.samples.reserve(groups);
  for (std::size_t g = 0; g < groups; ++g) {
    double sum = 0.0;
    for (std::size_t i = 0; i < factor; ++i) sum += trace.samples[g * factor + i];
    out.samples.push_back(sum / static_cast<double>(factor));
  }
  if (out.samples.empty()) throw config_error("trace shorter than pooling factor");
  return out;
}

struct FittedModel {
  LoadModel model;
  double on_power = 0.0;
};

namespace detail {

struct RunLengths {
  std::map<int, std::size_t> on;
  std::map<int, std::size_t> off;
};

/// Run lengths of interior runs; the first and last run touch the trace
/// boundary and are censored, so they are skipped.
inline RunLengths interior_runs(const std::vector<std::uint8_t>& states) {
  RunLengths runs;
  std::size_t start = 0;
  bool first = true;
  for (std::size_t t = 1; t <= states.size(); ++t) {
    if (t == states.size()) break;  // the run still open at the end is censored
    if (states[t] != states[t - 1]) {
      if (!first) {
        auto& hist = states[t - 1] ? runs.on : runs.off;
        ++hist[static_cast<int>(t - start)];
      }
      first = false;
      start = t;
    }
  }
  return runs;
}

inline DurationPmf normalize(const std::map<int, std::size_t>& hist) {
  std::size_t total = 0;
  for (const auto& [d, n] : hist) total += n;
  std::map<int, double> probs;
  for (const auto& [d, n] : hist) probs[d] = static_cast<double>(n) / static_cast<double>(total);
  return DurationPmf(std::move(probs));
}

}  // namespace detail

/// Fits a two-state model to a power trace binarized at `on_threshold`
/// (a sample is ON when it is >= the threshold).
inline FittedModel fit_model(const TraceSeries& trace, double on_threshold, ModelFamily family) {
  validate(trace);
  if (!(on_threshold > 0.0)) throw config_error("on_threshold must be > 0");

  std::vector<std::uint8_t> states(trace.samples.size());
  double on_sum = 0.0;
  std::size_t on_count = 0;
  for (std::size_t t = 0; t < states.size(); ++t) {
    states[t] = trace.samples[t] >= on_threshold;
    if (states[t]) {
      on_sum += trace.samples[t];
      ++on_count;
    }
  }
  if (on_count == 0 || on_count == states.size()) throw config_error("degenerate trace");
  const double on_power = on_sum / static_cast<double>(on_count);

  switch (family) {
    case ModelFamily::Bernoulli:
      return {Bernoulli{static_cast<double>(on_count) / static_cast<double>(states.size())}, on_power};
    case ModelFamily::TwoStateMarkov: {
      std::size_t n[2][2] = {{0, 0}, {0, 0}};
      for (std::size_t t = 1; t < states.size(); ++t) ++n[states[t - 1]][states[t]];
      // add-one smoothing keeps both probabilities strictly inside (0, 1)
      const double p01 = (n[0][1] + 1.0) / (n[0][0] + n[0][1] + 2.0);
      const double p10 = (n[1][0] + 1.0) / (n[1][0] + n[1][1] + 2.0);
      return {TwoStateMarkov{p01, p10}, on_power};
    }
    case ModelFamily::AlternatingRenewal: {
      const auto runs = detail::interior_runs(states);
      if (runs.on.empty() || runs.off.empty()) throw config_error("degenerate trace");
      return {AlternatingRenewal{detail::normalize(runs.on), detail::normalize(runs.off)}, on_power};
    }
  }
  throw config_error("unknown model family");
}

}  // namespace cac
