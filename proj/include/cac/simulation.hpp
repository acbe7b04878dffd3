#pragma once

// Monte Carlo harness: sizes or schedules appliances with CAC, runs their
// load series, and measures the empirical overconsumption probability.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "cac/admission.hpp"
#include "cac/error.hpp"
#include "cac/load_models.hpp"
#include "cac/random.hpp"
#include "cac/scheduling.hpp"
#include "cac/tail_estimators.hpp"

namespace cac {

enum class SimMode { Composition, SlotDynamic };

inline std::string_view mode_name(SimMode m) { return m == SimMode::Composition ? "composition" : "slot_dynamic"; }

inline SimMode parse_mode(std::string_view name) {
  if (name == "composition") return SimMode::Composition;
  if (name == "slot_dynamic" || name == "slot-dynamic") return SimMode::SlotDynamic;
  throw config_error("unknown simulation mode '" + std::string(name) + "'");
}

struct SimConfig {
  std::vector<ApplianceClass> classes;
  QosPolicy policy;
  EstimationMethod method = EstimationMethod::Exact;
  std::vector<EstimationMethod> methods;  // sweep set; empty means {method}
  SchedulingStrategy strategy = SchedulingStrategy::Drop;
  std::size_t slots = 1;
  std::uint64_t seed = 0;
  SimMode mode = SimMode::Composition;
  double quantum = 1.0;
  double deterministic_load = 0.0;  // external X_det, watts
};

inline void validate(const SimConfig& c) {
  if (c.slots < 1) throw config_error("slots must be >= 1");
  if (c.classes.empty()) throw config_error("at least one appliance class is required");
  if (!(c.quantum > 0.0)) throw config_error("quantum must be > 0");
  if (!(c.deterministic_load >= 0.0)) throw config_error("deterministic load must be >= 0");
  validate(c.policy);
  std::set<std::string> names;
  for (const auto& cls : c.classes) {
    validate(cls);
    if (!names.insert(cls.name).second) throw config_error("duplicate class name '" + cls.name + "'");
    detail::grid_units(cls.on_power, c.quantum);
  }
}

/// Energy accounting in grid units (watts / quantum per slot).
struct EnergyLedger {
  std::int64_t demanded = 0;
  std::int64_t served = 0;
  std::int64_t dropped = 0;
  std::int64_t backlog = 0;  // still queued after the last slot
};

struct SimResult {
  double p_hat = 0.0;
  double k = 0.0;
  double std_error = 0.0;  // Monte Carlo standard error of k
  bool low_confidence = false;
  std::optional<double> lf_baseline;  // empty when the series is all zero
  std::optional<double> lf_managed;
  std::vector<int> enabled_counts;  // per class, config order
  std::vector<double> series_baseline;
  std::vector<double> series_managed;
  std::size_t overload_slots = 0;
  std::vector<SlotOutcome> outcomes;  // slot-dynamic runs only
  EnergyLedger energy;
};

namespace detail {

/// ON/OFF states of every appliance, indexed globally in class order.
struct ApplianceBank {
  std::vector<int> class_of;
  std::vector<int> first_of_class;
  std::vector<std::vector<std::uint8_t>> states;
};

inline ApplianceBank make_bank(const SimConfig& c) {
  ApplianceBank bank;
  for (std::size_t ci = 0; ci < c.classes.size(); ++ci) {
    bank.first_of_class.push_back(int(bank.class_of.size()));
    for (int i = 0; i < c.classes[ci].count; ++i) {
      const auto index = bank.class_of.size();
      bank.class_of.push_back(int(ci));
      bank.states.push_back(sample_states(c.classes[ci], c.slots, appliance_seed(c.seed, index)));
    }
  }
  return bank;
}

/// Aggregate power when the first `counts[c]` appliances of each class run.
inline std::vector<double> prefix_series(const SimConfig& c, const ApplianceBank& bank, const std::vector<int>& counts) {
  std::vector<double> out(c.slots, 0.0);
  for (std::size_t ci = 0; ci < c.classes.size(); ++ci) {
    const double h = c.classes[ci].on_power;
    for (int i = 0; i < counts[ci]; ++i) {
      const auto& s = bank.states[std::size_t(bank.first_of_class[ci] + i)];
      for (std::size_t t = 0; t < c.slots; ++t)
        if (s[t]) out[t] += h;
    }
  }
  return out;
}

inline std::optional<double> safe_load_factor(const std::vector<double>& series) {
  for (double v : series)
    if (v > 0.0) return load_factor(series);
  return std::nullopt;
}

inline bool overloaded(double served, const SimConfig& c) {
  const double tol = 1e-9 * std::max(1.0, std::abs(c.policy.c_max));
  return served + c.deterministic_load >= c.policy.c_max - tol;
}

inline void fill_metrics(SimResult& r, const SimConfig& c) {
  r.overload_slots = 0;
  for (double v : r.series_managed)
    if (overloaded(v, c)) ++r.overload_slots;
  const double T = double(c.slots);
  r.p_hat = double(r.overload_slots) / T;
  r.k = r.p_hat / c.policy.p;
  r.std_error = std::sqrt(r.p_hat * (1.0 - r.p_hat) / T) / c.policy.p;
  // Fewer than ten expected overload slots: k is too noisy to read.
  r.low_confidence = c.policy.p * T < 10.0;
  r.lf_baseline = safe_load_factor(r.series_baseline);
  r.lf_managed = safe_load_factor(r.series_managed);
}

/// Statistical sizing: non-shiftable classes are always fully enabled, then
/// deterministic and finally stochastic shiftable classes are sized in
/// config order, each on top of what is already enabled.
inline std::vector<int> size_classes(const SimConfig& c, const QosPolicy& policy, EstimationMethod method) {
  std::vector<int> counts(c.classes.size(), 0);
  ClassComposition base;
  base.deterministic_load = c.deterministic_load;
  for (std::size_t ci = 0; ci < c.classes.size(); ++ci) {
    if (c.classes[ci].shiftable) continue;
    counts[ci] = c.classes[ci].count;
    base.add(c.classes[ci], counts[ci]);
  }
  for (bool deterministic_pass : {true, false}) {
    for (std::size_t ci = 0; ci < c.classes.size(); ++ci) {
      const auto& cls = c.classes[ci];
      if (!cls.shiftable || cls.deterministic != deterministic_pass) continue;
      counts[ci] = max_admissible(cls, policy, method, c.quantum, base);
      base.add(cls, counts[ci]);
    }
  }
  return counts;
}

inline std::vector<int> class_totals(const SimConfig& c) {
  std::vector<int> out;
  for (const auto& cls : c.classes) out.push_back(cls.count);
  return out;
}

inline SimResult composition_run(const SimConfig& c, const ApplianceBank& bank, const QosPolicy& policy,
                                 EstimationMethod method, const std::vector<double>& baseline) {
  SimConfig cell = c;
  cell.policy = policy;
  SimResult r;
  r.enabled_counts = size_classes(cell, policy, method);
  r.series_baseline = baseline;
  r.series_managed = prefix_series(cell, bank, r.enabled_counts);
  fill_metrics(r, cell);
  return r;
}

/// Runs `n` independent jobs on up to `jobs` threads.
template <class Fn>
void parallel_for(std::size_t n, unsigned jobs, Fn&& fn) {
  jobs = std::max(1u, std::min<unsigned>(jobs, unsigned(std::max<std::size_t>(n, 1))));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  for (unsigned w = 0; w < jobs; ++w)
    workers.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += jobs) fn(i);
    });
  for (auto& t : workers) t.join();
}

}  // namespace detail

/// Sizes every class with `max_admissible`, then lets the enabled appliances
/// run freely. Disabled appliances never run, so the strategy is unused.
inline SimResult run_composition(const SimConfig& config) {
  validate(config);
  const auto bank = detail::make_bank(config);
  const auto baseline = detail::prefix_series(config, bank, detail::class_totals(config));
  return detail::composition_run(config, bank, config.policy, config.method, baseline);
}

/// Per-slot CAC. Every appliance follows its demand series; shiftable
/// demand is admitted greedily, backlog first (FIFO) and then new requests
/// in random order, while the estimate for the admitted set stays within p.
/// The admitted set is evaluated as stationary sources of its classes, so
/// decisions depend only on the per-class admitted counts.
inline SimResult run_slot_dynamic(const SimConfig& config) {
  validate(config);
  const auto& classes = config.classes;
  const auto bank = detail::make_bank(config);
  const std::size_t total = bank.class_of.size();
  Rng rng(appliance_seed(config.seed, total));

  std::vector<std::int64_t> units(classes.size());
  double det_load = config.deterministic_load;
  std::int64_t det_units = 0;
  for (std::size_t ci = 0; ci < classes.size(); ++ci) {
    units[ci] = detail::grid_units(classes[ci].on_power, config.quantum);
    if (classes[ci].deterministic) {
      det_load += classes[ci].count * classes[ci].on_power;
      det_units += classes[ci].count * units[ci];
    }
  }

  std::map<std::vector<int>, bool> memo;
  auto fits = [&](const std::vector<int>& counts) {
    auto it = memo.find(counts);
    if (it != memo.end()) return it->second;
    ClassComposition comp;
    comp.deterministic_load = det_load;
    for (std::size_t ci = 0; ci < classes.size(); ++ci)
      if (!classes[ci].deterministic) comp.add(classes[ci], counts[ci]);
    const bool ok = estimate(config.method, comp, config.policy.c_max, config.quantum) <= config.policy.p;
    memo.emplace(counts, ok);
    return ok;
  };

  SimResult r;
  r.series_baseline.assign(config.slots, 0.0);
  r.series_managed.assign(config.slots, 0.0);
  r.enabled_counts.assign(classes.size(), 0);
  r.outcomes.reserve(config.slots);
  for (std::size_t ci = 0; ci < classes.size(); ++ci)
    if (classes[ci].deterministic) r.enabled_counts[ci] = classes[ci].count;

  Backlog backlog;
  std::vector<std::size_t> served_stamp(total, 0);  // slot + 1 when last served
  std::vector<int> shiftable_ids;
  std::vector<Demand> presented;
  std::vector<Demand> disabled;

  for (std::size_t t = 0; t < config.slots; ++t) {
    std::vector<int> counts(classes.size(), 0);
    std::int64_t new_units = det_units;
    std::int64_t served_units = det_units;
    shiftable_ids.clear();
    for (std::size_t a = 0; a < total; ++a) {
      const auto ci = std::size_t(bank.class_of[a]);
      if (classes[ci].deterministic || !bank.states[a][t]) continue;
      new_units += units[ci];
      if (classes[ci].shiftable) {
        shiftable_ids.push_back(int(a));
      } else {
        ++counts[ci];
        served_units += units[ci];
        served_stamp[a] = t + 1;
      }
    }

    presented.assign(backlog.begin(), backlog.end());
    backlog.clear();
    for (int a : select_to_disable(shiftable_ids, shiftable_ids.size(), rng).chosen) {
      const auto ci = std::size_t(bank.class_of[std::size_t(a)]);
      presented.push_back({a, classes[ci].name, units[ci]});
    }

    disabled.clear();
    for (const auto& d : presented) {
      const auto a = std::size_t(d.appliance_id);
      const auto ci = std::size_t(bank.class_of[a]);
      // An appliance draws at most one slot's worth of energy per slot.
      if (served_stamp[a] == t + 1) {
        disabled.push_back(d);
        continue;
      }
      ++counts[ci];
      if (fits(counts)) {
        served_units += d.energy_units;
        served_stamp[a] = t + 1;
      } else {
        --counts[ci];
        disabled.push_back(d);
      }
    }

    auto applied = apply_strategy(config.strategy, disabled, std::move(backlog));
    backlog = std::move(applied.backlog);

    SlotOutcome out;
    out.served_w = double(served_units) * config.quantum;
    out.dropped_w = double(applied.dropped_units) * config.quantum;
    out.backlog_depth = backlog.size();
    for (const auto& d : disabled) out.disabled_ids.push_back(d.appliance_id);
    std::sort(out.disabled_ids.begin(), out.disabled_ids.end());
    r.outcomes.push_back(std::move(out));

    r.series_baseline[t] = double(new_units) * config.quantum;
    r.series_managed[t] = double(served_units) * config.quantum;
    r.energy.demanded += new_units;
    r.energy.served += served_units;
    r.energy.dropped += applied.dropped_units;
    for (std::size_t ci = 0; ci < classes.size(); ++ci) r.enabled_counts[ci] = std::max(r.enabled_counts[ci], counts[ci]);
  }
  for (const auto& d : backlog) r.energy.backlog += d.energy_units;
  detail::fill_metrics(r, config);
  return r;
}

inline SimResult run(const SimConfig& config) {
  return config.mode == SimMode::Composition ? run_composition(config) : run_slot_dynamic(config);
}

struct SweepRow {
  double p = 0.0;
  EstimationMethod method = EstimationMethod::Exact;
  int enabled = 0;  // summed over classes
  std::vector<int> enabled_counts;
  double p_hat = 0.0;
  double k = 0.0;
  double std_error = 0.0;
  bool low_confidence = false;
};

/// One composition run per (p, method). All cells share one set of appliance
/// series, and enabled sets are prefixes of the same ordering, so cells
/// differ only through the sizing method and p.
inline std::vector<SweepRow> sweep_qos(const SimConfig& config, const std::vector<double>& p_values, unsigned jobs = 1) {
  validate(config);
  if (!std::is_sorted(p_values.begin(), p_values.end())) throw config_error("p values must be sorted ascending");
  for (double p : p_values)
    if (!(p > 0.0 && p < 1.0)) throw config_error("p values must be in (0, 1)");
  const auto methods = config.methods.empty() ? std::vector<EstimationMethod>{config.method} : config.methods;

  const auto bank = detail::make_bank(config);
  const auto baseline = detail::prefix_series(config, bank, detail::class_totals(config));
  std::vector<SweepRow> rows(p_values.size() * methods.size());
  detail::parallel_for(rows.size(), jobs, [&](std::size_t i) {
    QosPolicy policy = config.policy;
    policy.p = p_values[i / methods.size()];
    const auto method = methods[i % methods.size()];
    const auto r = detail::composition_run(config, bank, policy, method, baseline);
    auto& row = rows[i];
    row.p = policy.p;
    row.method = method;
    row.enabled_counts = r.enabled_counts;
    for (int n : r.enabled_counts) row.enabled += n;
    row.p_hat = r.p_hat;
    row.k = r.k;
    row.std_error = r.std_error;
    row.low_confidence = r.low_confidence;
  });
  return rows;
}

struct EnabledRow {
  EstimationMethod method = EstimationMethod::Exact;
  int enabled = 0;
  double percent_of_exact = 0.0;  // NaN when Exact admits nothing but this method does
};

/// Largest admissible count of `target` on top of `base` for each method, and
/// its share of the Exact count.
inline std::vector<EnabledRow> enabled_percentage_table(const ApplianceClass& target, const QosPolicy& policy,
                                                        const std::vector<EstimationMethod>& methods,
                                                        double quantum = 1.0, const ClassComposition& base = {}) {
  const int exact = max_admissible(target, policy, EstimationMethod::Exact, quantum, base);
  std::vector<EnabledRow> out;
  for (auto m : methods) {
    EnabledRow row;
    row.method = m;
    row.enabled = m == EstimationMethod::Exact ? exact : max_admissible(target, policy, m, quantum, base);
    if (exact > 0)
      row.percent_of_exact = 100.0 * row.enabled / exact;
    else
      row.percent_of_exact = row.enabled == 0 ? 100.0 : std::nan("");
    out.push_back(row);
  }
  return out;
}

}  // namespace cac
