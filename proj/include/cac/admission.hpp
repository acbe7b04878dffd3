#pragma once

// Consumption admission control: accept an appliance only while the
// overconsumption probability of the enabled set stays within the QoS limit.

#include <algorithm>
#include <cstddef>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "cac/error.hpp"
#include "cac/load_models.hpp"
#include "cac/tail_estimators.hpp"

namespace cac {

struct QosPolicy {
  double c_max = 0.0;  // W, upper capacity limit per slot
  double p = 0.0;      // allowed Pr(X >= c_max)
  std::optional<double> c_min;  // W, lower limit
  std::optional<double> r;      // allowed Pr(X < c_min)
  std::optional<double> c_sys;  // W, physical ceiling on c_max
};

inline void validate(const QosPolicy& q) {
  if (!(q.p > 0.0 && q.p < 1.0)) throw config_error("qos p must be in (0, 1)");
  if (q.c_min && !(*q.c_min < q.c_max)) throw config_error("c_min must be below c_max");
  if (q.c_sys && !(q.c_max <= *q.c_sys)) throw config_error("c_max must not exceed c_sys");
  if (q.r && !(*q.r > 0.0 && *q.r < 1.0)) throw config_error("qos r must be in (0, 1)");
}

struct AdmissionState {
  ClassComposition composition;
  QosPolicy policy;
  EstimationMethod method = EstimationMethod::Exact;
  double quantum = 1.0;
};

enum class Verdict { Accept, Reject };

struct Decision {
  Verdict verdict = Verdict::Reject;
  double estimate = 1.0;
  EstimationMethod method = EstimationMethod::Exact;
  double effective_threshold = 0.0;  // c_max - X_det
};

/// Composition with one more appliance of class `incoming`. A deterministic
/// appliance raises X_det instead of joining a class entry.
inline ClassComposition with_incoming(ClassComposition comp, const ApplianceClass& incoming) {
  if (incoming.deterministic) {
    comp.deterministic_load += incoming.on_power;
    return comp;
  }
  for (auto& e : comp.entries) {
    if (e.cls.name == incoming.name) {
      if (e.enabled + 1 > e.cls.count)
        throw config_error("class '" + incoming.name + "' has no disabled appliance left to enable");
      ++e.enabled;
      return comp;
    }
  }
  if (incoming.count < 1) throw config_error("class '" + incoming.name + "' has no appliances");
  comp.entries.push_back({incoming, 1});
  return comp;
}

/// Tests the enabled set plus `incoming`; equality with the limit accepts.
inline Decision decide(const AdmissionState& state, const ApplianceClass& incoming) {
  const auto next = with_incoming(state.composition, incoming);
  Decision d;
  d.method = state.method;
  d.effective_threshold = state.policy.c_max - effective_deterministic_load(next);
  d.estimate = estimate(state.method, next, state.policy.c_max, state.quantum);
  d.verdict = d.estimate <= state.policy.p ? Verdict::Accept : Verdict::Reject;
  return d;
}

struct UnderconsumptionCheck {
  double probability = 0.0;
  bool satisfied = true;
};

/// Evaluates Pr(X < c_min) <= r. The large-deviation methods bound only the
/// upper tail, so everything except CLT is evaluated exactly here.
inline UnderconsumptionCheck check_underconsumption(const AdmissionState& state) {
  if (!state.policy.c_min || !state.policy.r) throw config_error("lower limit not configured");
  const auto method = state.method == EstimationMethod::CLT ? EstimationMethod::CLT : EstimationMethod::Exact;
  UnderconsumptionCheck out;
  out.probability = lower_tail(method, state.composition, *state.policy.c_min, state.quantum);
  out.satisfied = out.probability <= *state.policy.r;
  return out;
}

/// Largest n <= cls.count such that `base` plus n appliances of `cls` meets
/// the QoS. Monotone methods use exponential-then-binary search; Chebyshev
/// and Bennett are scanned linearly.
inline int max_admissible(const ApplianceClass& cls, const QosPolicy& policy, EstimationMethod method,
                          double quantum = 1.0, const ClassComposition& base = {}) {
  auto fits = [&](int n) {
    ClassComposition comp = base;
    comp.entries.push_back({cls, n});
    return estimate(method, comp, policy.c_max, quantum) <= policy.p;
  };
  const int cap = cls.count;
  if (!is_monotone_in_count(method)) {
    int best = 0;
    for (int n = 0; n <= cap; ++n)
      if (fits(n)) best = n;
    return best;
  }
  if (!fits(0)) return 0;
  int lo = 0;  // fits
  int step = 1;
  int hi = -1;  // first known failure
  while (hi < 0) {
    const int probe = std::min(cap, lo + step);
    if (probe == lo) return lo;
    if (fits(probe)) {
      lo = probe;
      if (probe == cap) return cap;
      step *= 2;
    } else {
      hi = probe;
    }
  }
  while (hi - lo > 1) {
    const int mid = lo + (hi - lo) / 2;
    (fits(mid) ? lo : hi) = mid;
  }
  return lo;
}

/// accept(n1, n2) for n1 in [0, count1], n2 in [0, count2].
class DecisionRegion {
 public:
  DecisionRegion(int count1, int count2)
      : count1_(count1), count2_(count2), cells_(std::size_t(count1 + 1) * std::size_t(count2 + 1), 0) {}

  int count1() const { return count1_; }
  int count2() const { return count2_; }
  bool accept(int n1, int n2) const { return cells_[index(n1, n2)] != 0; }
  void set(int n1, int n2, bool v) { cells_[index(n1, n2)] = v; }

  /// Largest accepted n1 for each n2, or -1 when none is accepted.
  std::vector<int> frontier() const {
    std::vector<int> out(std::size_t(count2_) + 1, -1);
    for (int n2 = 0; n2 <= count2_; ++n2)
      for (int n1 = 0; n1 <= count1_; ++n1)
        if (accept(n1, n2)) out[std::size_t(n2)] = n1;
    return out;
  }

  bool subset_of(const DecisionRegion& other) const {
    if (count1_ != other.count1_ || count2_ != other.count2_) return false;
    for (std::size_t i = 0; i < cells_.size(); ++i)
      if (cells_[i] && !other.cells_[i]) return false;
    return true;
  }

  bool downward_closed() const {
    for (int n1 = 0; n1 <= count1_; ++n1)
      for (int n2 = 0; n2 <= count2_; ++n2)
        if (accept(n1, n2) && ((n1 > 0 && !accept(n1 - 1, n2)) || (n2 > 0 && !accept(n1, n2 - 1)))) return false;
    return true;
  }

  /// CSV rows `n1,n2,accept` with a header line.
  void write_csv(std::ostream& os) const {
    os << "n1,n2,accept\n";
    for (int n1 = 0; n1 <= count1_; ++n1)
      for (int n2 = 0; n2 <= count2_; ++n2) os << n1 << ',' << n2 << ',' << (accept(n1, n2) ? "true" : "false") << '\n';
  }

 private:
  std::size_t index(int n1, int n2) const { return std::size_t(n1) * std::size_t(count2_ + 1) + std::size_t(n2); }

  int count1_;
  int count2_;
  std::vector<unsigned char> cells_;
};

/// Evaluates every (n1, n2) cell of two classes on top of `base`. Rows are
/// independent and are split across `jobs` threads.
inline DecisionRegion decision_region(const ApplianceClass& class1, const ApplianceClass& class2, const QosPolicy& policy,
                                      EstimationMethod method, double quantum = 1.0,
                                      const ClassComposition& base = {}, unsigned jobs = 1) {
  DecisionRegion region(class1.count, class2.count);
  std::vector<std::vector<unsigned char>> rows(std::size_t(class1.count) + 1);
  auto fill_row = [&](int n1) {
    auto& row = rows[std::size_t(n1)];
    row.resize(std::size_t(class2.count) + 1);
    for (int n2 = 0; n2 <= class2.count; ++n2) {
      ClassComposition comp = base;
      comp.entries.push_back({class1, n1});
      comp.entries.push_back({class2, n2});
      row[std::size_t(n2)] = estimate(method, comp, policy.c_max, quantum) <= policy.p;
    }
  };
  jobs = std::max(1u, std::min(jobs, unsigned(class1.count) + 1));
  if (jobs == 1) {
    for (int n1 = 0; n1 <= class1.count; ++n1) fill_row(n1);
  } else {
    std::vector<std::thread> workers;
    for (unsigned w = 0; w < jobs; ++w)
      workers.emplace_back([&, w] {
        for (int n1 = int(w); n1 <= class1.count; n1 += int(jobs)) fill_row(n1);
      });
    for (auto& t : workers) t.join();
  }
  for (int n1 = 0; n1 <= class1.count; ++n1)
    for (int n2 = 0; n2 <= class2.count; ++n2) region.set(n1, n2, rows[std::size_t(n1)][std::size_t(n2)] != 0);
  return region;
}

}  // namespace cac
