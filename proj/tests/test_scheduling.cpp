#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "cac/scheduling.hpp"

using namespace cac;

TEST(SelectToDisable, Edges) {
  Rng rng(1);
  const std::vector<int> ids{4, 8, 15, 16, 23, 42};
  EXPECT_TRUE(select_to_disable(ids, 0, rng).chosen.empty());
  auto all = select_to_disable(ids, ids.size(), rng);
  std::sort(all.chosen.begin(), all.chosen.end());
  EXPECT_EQ(all.chosen, ids);
  EXPECT_EQ(all.residual, 0u);
  auto over = select_to_disable(ids, 9, rng);
  EXPECT_EQ(over.chosen.size(), ids.size());
  EXPECT_EQ(over.residual, 3u);
  EXPECT_TRUE(select_to_disable({}, 2, rng).chosen.empty());
}

TEST(SelectToDisable, DistinctAndReproducible) {
  const std::vector<int> ids{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  Rng a(77);
  Rng b(77);
  for (int i = 0; i < 100; ++i) {
    const auto x = select_to_disable(ids, 4, a);
    const auto y = select_to_disable(ids, 4, b);
    EXPECT_EQ(x.chosen, y.chosen);
    EXPECT_EQ(std::set<int>(x.chosen.begin(), x.chosen.end()).size(), 4u);
  }
}

TEST(SelectToDisable, UniformFrequencies) {
  const std::vector<int> ids{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  Rng rng(2023);
  std::vector<int> hits(10, 0);
  const int trials = 10000;
  for (int i = 0; i < trials; ++i)
    for (int id : select_to_disable(ids, 3, rng).chosen) ++hits[std::size_t(id)];
  for (int h : hits) EXPECT_NEAR(h / double(trials), 0.3, 0.02);

  // Chi-square against the uniform expectation; 9 degrees of freedom,
  // critical value 21.666 at significance 0.01.
  const double expected = trials * 0.3;
  double chi2 = 0.0;
  for (int h : hits) chi2 += (h - expected) * (h - expected) / expected;
  EXPECT_LT(chi2, 21.666);
}

TEST(SelectToDisable, FairnessAcrossSeedSuite) {
  // Every seed of a fixed suite passes the chi-square test at 0.01 on pairs.
  const std::vector<int> ids{0, 1, 2, 3, 4};
  int failures = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    std::vector<int> hits(5, 0);
    for (int i = 0; i < 2000; ++i)
      for (int id : select_to_disable(ids, 2, rng).chosen) ++hits[std::size_t(id)];
    const double expected = 2000 * 0.4;
    double chi2 = 0.0;
    for (int h : hits) chi2 += (h - expected) * (h - expected) / expected;
    if (chi2 >= 13.277) ++failures;  // 4 dof
  }
  EXPECT_LE(failures, 1);
}

TEST(ApplyStrategy, Drop) {
  const auto r = apply_strategy(SchedulingStrategy::Drop, {{1, "a", 2}}, {});
  EXPECT_EQ(r.dropped_units, 2);
  EXPECT_TRUE(r.backlog.empty());
}

TEST(ApplyStrategy, OneStepShiftKeepsFifoOrder) {
  Backlog backlog{{9, "z", 5}};
  const auto r = apply_strategy(SchedulingStrategy::OneStepShift, {{1, "a", 2}, {3, "b", 4}}, backlog);
  EXPECT_EQ(r.dropped_units, 0);
  ASSERT_EQ(r.backlog.size(), 3u);
  EXPECT_EQ(r.backlog[0].appliance_id, 9);
  EXPECT_EQ(r.backlog[1].appliance_id, 1);
  EXPECT_EQ(r.backlog[1].energy_units, 2);
  EXPECT_EQ(r.backlog[2].class_name, "b");
}

TEST(LoadFactor, Examples) {
  EXPECT_NEAR(load_factor({1, 2, 3, 2}), 2.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(load_factor({4, 4, 4}), 1.0);
  const std::vector<double> s{0.5, 3, 1.25, 7};
  std::vector<double> scaled;
  for (double v : s) scaled.push_back(v * 13.5);
  EXPECT_NEAR(load_factor(scaled), load_factor(s), 1e-15);
  try {
    load_factor({0, 0});
    FAIL();
  } catch (const config_error& e) {
    EXPECT_NE(std::string(e.what()).find("undefined load factor"), std::string::npos);
  }
  EXPECT_THROW(load_factor({}), config_error);
}

TEST(Strategy, NamesRoundTrip) {
  for (auto s : {SchedulingStrategy::Drop, SchedulingStrategy::OneStepShift})
    EXPECT_EQ(parse_strategy(strategy_name(s)), s);
  EXPECT_THROW(parse_strategy("later"), config_error);
}
