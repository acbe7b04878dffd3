#include <gtest/gtest.h>

#include <cmath>

#include "cac/simulation.hpp"

using namespace cac;

namespace {

ApplianceClass make_class(std::string name, double h, LoadModel model, int count, bool shiftable = true) {
  ApplianceClass c;
  c.name = std::move(name);
  c.on_power = h;
  c.model = std::move(model);
  c.count = count;
  c.shiftable = shiftable;
  return c;
}

SimConfig bernoulli_config(double c_max, double p, EstimationMethod m, std::size_t slots = 50000) {
  SimConfig c;
  c.classes = {make_class("b", 1, Bernoulli{0.1}, 400)};
  c.policy.c_max = c_max;
  c.policy.p = p;
  c.method = m;
  c.slots = slots;
  c.seed = 12345;
  return c;
}

SimConfig renewal_config(SchedulingStrategy strategy, double c_max, double p, std::uint64_t seed) {
  SimConfig c;
  const AlternatingRenewal bursts{DurationPmf({{2, 0.3}, {5, 0.4}, {9, 0.3}}), DurationPmf({{6, 0.5}, {20, 0.5}})};
  c.classes = {make_class("washer", 1, bursts, 40), make_class("dryer", 2, TwoStateMarkov{0.05, 0.2}, 10),
               make_class("fridge", 1, Bernoulli{0.3}, 5, false)};
  c.policy.c_max = c_max;
  c.policy.p = p;
  c.strategy = strategy;
  c.mode = SimMode::SlotDynamic;
  c.slots = 3000;
  c.seed = seed;
  return c;
}

}  // namespace

TEST(SimConfig, Validation) {
  auto c = bernoulli_config(9, 0.01, EstimationMethod::Exact);
  EXPECT_NO_THROW(validate(c));
  c.slots = 0;
  EXPECT_THROW(validate(c), config_error);
  c = bernoulli_config(9, 0.01, EstimationMethod::Exact);
  c.classes.clear();
  EXPECT_THROW(validate(c), config_error);
  c = bernoulli_config(9, 0.01, EstimationMethod::Exact);
  c.classes.push_back(c.classes.front());
  EXPECT_THROW(validate(c), config_error);
  c = bernoulli_config(9, 0.01, EstimationMethod::Exact);
  c.classes[0].on_power = 1.5;
  EXPECT_THROW(validate(c), config_error);
}

TEST(RunComposition, ExactSizingMeetsQos) {
  const auto r = run_composition(bernoulli_config(9, 1e-2, EstimationMethod::Exact));
  EXPECT_EQ(r.enabled_counts, (std::vector<int>{37}));
  EXPECT_GE(r.k, 0.3);
  EXPECT_LE(r.k, 3.0);
  EXPECT_FALSE(r.low_confidence);
  EXPECT_EQ(r.series_managed.size(), 50000u);
  EXPECT_EQ(r.series_baseline.size(), 50000u);
  EXPECT_DOUBLE_EQ(r.p_hat, double(r.overload_slots) / 50000.0);
  EXPECT_DOUBLE_EQ(r.k, r.p_hat / 1e-2);
}

TEST(RunComposition, LooseCapacityEnablesEverything) {
  // 400 appliances at C_max = 60 W: the full class already meets p = 1e-2.
  const auto r = run_composition(bernoulli_config(60, 1e-2, EstimationMethod::Exact));
  EXPECT_EQ(r.enabled_counts, (std::vector<int>{400}));
  EXPECT_EQ(r.series_managed, r.series_baseline);
  EXPECT_LT(r.k, 1.0);
}

TEST(RunComposition, MarkovIsOverlyConservative) {
  const auto exact = run_composition(bernoulli_config(9, 1e-2, EstimationMethod::Exact));
  const auto markov = run_composition(bernoulli_config(9, 1e-2, EstimationMethod::Markov));
  EXPECT_LT(markov.enabled_counts[0], exact.enabled_counts[0] / 4);
  EXPECT_EQ(markov.p_hat, 0.0);
  EXPECT_LT(markov.k, 0.1);
}

TEST(RunComposition, NoLoad) {
  auto c = bernoulli_config(9, 1e-2, EstimationMethod::Exact, 1000);
  c.classes[0].model = Bernoulli{0.0};
  const auto r = run_composition(c);
  EXPECT_EQ(r.p_hat, 0.0);
  EXPECT_EQ(r.overload_slots, 0u);
  EXPECT_FALSE(r.lf_managed.has_value());
}

TEST(RunComposition, SingleSlot) {
  const auto r = run_composition(bernoulli_config(9, 1e-2, EstimationMethod::Exact, 1));
  EXPECT_TRUE(r.p_hat == 0.0 || r.p_hat == 1.0);
  EXPECT_TRUE(r.low_confidence);
}

TEST(RunComposition, EmpiricalTailMatchesExactTail) {
  // All 400 enabled at C_max = 60: p_hat must sit in the 99.9% interval
  // around Pr(Bin(400, 0.1) >= 60).
  auto c = bernoulli_config(60, 1e-2, EstimationMethod::Exact);
  const auto r = run_composition(c);
  ClassComposition comp;
  comp.add(c.classes[0], 400);
  const double q = estimate(EstimationMethod::Exact, comp, 60);
  EXPECT_LE(std::abs(r.p_hat - q), 3.29 * std::sqrt(q * (1 - q) / 50000.0));

  c.policy.c_max = 9;
  const auto r2 = run_composition(c);
  ClassComposition comp2;
  comp2.add(c.classes[0], r2.enabled_counts[0]);
  const double q2 = estimate(EstimationMethod::Exact, comp2, 9);
  EXPECT_LE(std::abs(r2.p_hat - q2), 3.29 * std::sqrt(q2 * (1 - q2) / 50000.0));
}

TEST(RunComposition, Reproducible) {
  const auto c = bernoulli_config(9, 1e-2, EstimationMethod::Chernoff, 5000);
  const auto a = run_composition(c);
  const auto b = run_composition(c);
  EXPECT_EQ(a.series_managed, b.series_managed);
  EXPECT_EQ(a.p_hat, b.p_hat);
  auto other = c;
  other.seed = c.seed + 1000;
  EXPECT_NE(run_composition(other).series_baseline, a.series_baseline);
}

TEST(RunComposition, NonShiftableClassesStayEnabled) {
  SimConfig c = bernoulli_config(9, 1e-2, EstimationMethod::Exact, 2000);
  c.classes.insert(c.classes.begin(), make_class("base", 1, Bernoulli{0.1}, 20, false));
  const auto r = run_composition(c);
  EXPECT_EQ(r.enabled_counts[0], 20);
  // The remaining headroom is shared with the always-on class.
  EXPECT_EQ(r.enabled_counts[0] + r.enabled_counts[1], 37);
}

TEST(RunSlotDynamic, NonBindingDropIsTransparent) {
  auto c = renewal_config(SchedulingStrategy::Drop, 1000, 0.01, 9);
  const auto r = run_slot_dynamic(c);
  EXPECT_EQ(r.series_managed, r.series_baseline);
  EXPECT_EQ(r.energy.dropped, 0);
  for (const auto& o : r.outcomes) EXPECT_TRUE(o.disabled_ids.empty());
}

TEST(RunSlotDynamic, DropNeverBacklogs) {
  const auto r = run_slot_dynamic(renewal_config(SchedulingStrategy::Drop, 10, 0.01, 4));
  EXPECT_GT(r.energy.dropped, 0);
  EXPECT_EQ(r.energy.backlog, 0);
  for (const auto& o : r.outcomes) EXPECT_EQ(o.backlog_depth, 0u);
  EXPECT_EQ(r.energy.served + r.energy.dropped, r.energy.demanded);
}

TEST(RunSlotDynamic, OneStepConservesEnergy) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto r = run_slot_dynamic(renewal_config(SchedulingStrategy::OneStepShift, 10, 0.01, seed));
    EXPECT_EQ(r.energy.dropped, 0);
    EXPECT_EQ(r.energy.served + r.energy.backlog, r.energy.demanded);
    for (const auto& o : r.outcomes) EXPECT_EQ(o.dropped_w, 0.0);
    double served = 0.0;
    for (double v : r.series_managed) served += v;
    EXPECT_EQ(served, double(r.energy.served));
  }
}

TEST(RunSlotDynamic, NonShiftableDemandIsAlwaysServed) {
  // Zero headroom: only the non-shiftable class gets through.
  auto c = renewal_config(SchedulingStrategy::Drop, 0.5, 0.01, 2);
  const auto r = run_slot_dynamic(c);
  for (std::size_t t = 0; t < c.slots; ++t) EXPECT_LE(r.series_managed[t], 5.0);
  EXPECT_GT(r.energy.served, 0);
}

TEST(RunSlotDynamic, Reproducible) {
  const auto c = renewal_config(SchedulingStrategy::OneStepShift, 10, 0.01, 3);
  const auto a = run_slot_dynamic(c);
  const auto b = run_slot_dynamic(c);
  EXPECT_EQ(a.series_managed, b.series_managed);
  ASSERT_EQ(a.outcomes.size(), b.outcomes.size());
  for (std::size_t t = 0; t < a.outcomes.size(); ++t) EXPECT_EQ(a.outcomes[t].disabled_ids, b.outcomes[t].disabled_ids);
}

TEST(RunSlotDynamic, ShiftingFlattensLoad) {
  const auto r = run_slot_dynamic(renewal_config(SchedulingStrategy::OneStepShift, 10, 0.01, 7));
  ASSERT_TRUE(r.lf_baseline && r.lf_managed);
  EXPECT_GT(*r.lf_managed, *r.lf_baseline);
}

TEST(SweepQos, MonotoneAndCommonRandomNumbers) {
  auto c = bernoulli_config(9, 1e-2, EstimationMethod::Exact, 20000);
  c.methods = {EstimationMethod::Exact, EstimationMethod::Chernoff, EstimationMethod::Hoeffding,
               EstimationMethod::Markov};
  const std::vector<double> ps{1e-3, 1e-2, 1e-1};
  const auto rows = sweep_qos(c, ps, 2);
  ASSERT_EQ(rows.size(), ps.size() * c.methods.size());
  for (std::size_t m = 0; m < c.methods.size(); ++m)
    for (std::size_t i = 1; i < ps.size(); ++i)
      EXPECT_GE(rows[i * c.methods.size() + m].enabled, rows[(i - 1) * c.methods.size() + m].enabled);
  // Enabled sets are prefixes of one ordering, so overloads can only grow
  // with the enabled count.
  for (std::size_t a = 0; a < rows.size(); ++a)
    for (std::size_t b = 0; b < rows.size(); ++b)
      if (rows[a].enabled <= rows[b].enabled) {
        EXPECT_LE(rows[a].p_hat, rows[b].p_hat);
      }
  // A sweep cell equals a standalone run with the same p and method.
  auto single = c;
  single.policy.p = 1e-2;
  single.method = EstimationMethod::Chernoff;
  const auto r = run_composition(single);
  EXPECT_EQ(rows[1 * c.methods.size() + 1].p_hat, r.p_hat);
}

TEST(SweepQos, ParallelMatchesSerial) {
  auto c = bernoulli_config(9, 1e-2, EstimationMethod::Exact, 5000);
  c.methods = {EstimationMethod::Exact, EstimationMethod::CLT, EstimationMethod::Bennett};
  const auto a = sweep_qos(c, {1e-3, 1e-1}, 1);
  const auto b = sweep_qos(c, {1e-3, 1e-1}, 3);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].enabled, b[i].enabled);
    EXPECT_EQ(a[i].p_hat, b[i].p_hat);
  }
}

TEST(SweepQos, RejectsUnsortedP) {
  const auto c = bernoulli_config(9, 1e-2, EstimationMethod::Exact, 10);
  EXPECT_THROW(sweep_qos(c, {0.1, 0.01}), config_error);
  EXPECT_THROW(sweep_qos(c, {0.0}), config_error);
}

TEST(EnabledTable, ExactIsReference) {
  QosPolicy q;
  q.c_max = 94;
  q.p = 3e-6;
  const auto cls = make_class("b", 1, Bernoulli{0.1}, 2000);
  const auto rows = enabled_percentage_table(cls, q, {kAllMethods.begin(), kAllMethods.end()});
  ASSERT_EQ(rows.size(), kAllMethods.size());
  EXPECT_EQ(rows[0].method, EstimationMethod::Exact);
  EXPECT_DOUBLE_EQ(rows[0].percent_of_exact, 100.0);
  // The normal approximation is not a bound and may exceed the exact count.
  EXPECT_EQ(rows[1].method, EstimationMethod::CLT);
  EXPECT_GE(rows[1].enabled, rows[0].enabled);
  for (std::size_t i = 2; i < rows.size(); ++i) EXPECT_LE(rows[i].enabled, rows[i - 1].enabled);
  EXPECT_LE(rows[2].enabled, rows[0].enabled);
}
