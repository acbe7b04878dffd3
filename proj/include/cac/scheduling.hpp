#pragma once

// Handling of demand from temporarily disabled appliances, random fair
// selection, and the load-factor metric.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "cac/error.hpp"
#include "cac/random.hpp"

namespace cac {

enum class SchedulingStrategy { Drop, OneStepShift };

inline std::string_view strategy_name(SchedulingStrategy s) {
  return s == SchedulingStrategy::Drop ? "drop" : "one_step";
}

inline SchedulingStrategy parse_strategy(std::string_view name) {
  if (name == "drop") return SchedulingStrategy::Drop;
  if (name == "one_step" || name == "one-step") return SchedulingStrategy::OneStepShift;
  throw config_error("unknown scheduling strategy '" + std::string(name) + "'");
}

/// One slot's worth of demand from one appliance. Energy is counted in grid
/// units (watts / quantum per slot) so the ledger balances exactly.
struct Demand {
  int appliance_id = 0;
  std::string class_name;
  std::int64_t energy_units = 0;
};

/// Carried demand, oldest first.
using Backlog = std::deque<Demand>;

struct SlotOutcome {
  double served_w = 0.0;
  double dropped_w = 0.0;
  std::size_t backlog_depth = 0;
  std::vector<int> disabled_ids;
};

struct Selection {
  std::vector<int> chosen;  // in draw order
  std::size_t residual = 0;  // requested but unavailable
};

/// Uniform random subset of `excess` ids drawn without replacement (partial
/// Fisher-Yates). Asking for more than available takes all and reports the
/// shortfall as `residual`.
inline Selection select_to_disable(const std::vector<int>& demanding, std::size_t excess, Rng& rng) {
  Selection out;
  std::vector<int> pool = demanding;
  const std::size_t k = std::min(excess, pool.size());
  out.residual = excess - k;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + std::size_t(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  out.chosen = std::move(pool);
  return out;
}

struct StrategyResult {
  Backlog backlog;
  std::int64_t dropped_units = 0;
};

/// Drop discards disabled demand. OneStepShift appends it to the backlog in
/// the given order; the caller re-presents the backlog next slot.
inline StrategyResult apply_strategy(SchedulingStrategy strategy, const std::vector<Demand>& disabled, Backlog backlog) {
  StrategyResult out{std::move(backlog), 0};
  for (const auto& d : disabled) {
    if (strategy == SchedulingStrategy::Drop)
      out.dropped_units += d.energy_units;
    else
      out.backlog.push_back(d);
  }
  return out;
}

/// Average over peak.
inline double load_factor(const std::vector<double>& series) {
  if (series.empty()) throw config_error("undefined load factor");
  double sum = 0.0;
  double peak = 0.0;
  for (double v : series) {
    sum += v;
    peak = std::max(peak, v);
  }
  if (!(peak > 0.0)) throw config_error("undefined load factor");
  return sum / double(series.size()) / peak;
}

}  // namespace cac
