#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <thread>

#include "fairmix/controller.h"
#include "test_worlds.h"

namespace fairmix {
namespace {

Vector v2(double a, double b) { return (Vector(2) << a, b).finished(); }

using Counts = std::vector<std::vector<std::uint64_t>>;

TEST(Memory, LookupExamples) {
  MemoryModule m(testing::gender_schema(), 4, 1.0);
  EXPECT_FALSE(m.lookup(v2(0, 0)).has_value());
  m.record(v2(0, 0), {0});
  m.record(v2(5, 5), {1});
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m.lookup(v2(0.1, 0)), std::optional<std::size_t>(0));
  // nearest is sqrt(2*2.5^2) ~ 3.54 away
  EXPECT_FALSE(m.lookup(v2(2.5, 2.5)).has_value());
  EXPECT_THROW(m.lookup(Vector::Zero(3)), MemoryError);
}

TEST(Memory, LookupTieTakesLowestIndex) {
  MemoryModule m(testing::gender_schema(), 4, 10.0);
  m.record(v2(-1, 0), {0});
  m.record(v2(1, 0), {0});
  EXPECT_EQ(m.lookup(v2(0, 0)), std::optional<std::size_t>(0));
}

TEST(Memory, ThresholdIsStrict) {
  MemoryModule m(testing::gender_schema(), 4, 1.0);
  m.record(v2(0, 0), {0});
  EXPECT_FALSE(m.lookup(v2(1, 0)).has_value());
  EXPECT_TRUE(m.lookup(v2(0.999, 0)).has_value());
}

TEST(Memory, RecordCreatesAndUpdatesRunningMean) {
  MemoryModule m(testing::gender_schema(), 4, 10.0);
  m.record(v2(0, 0), {1});
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m.clusters()[0].total, 1u);
  EXPECT_EQ(m.clusters()[0].counts[0], (std::vector<std::uint64_t>{0, 1}));
  for (int i = 0; i < 3; ++i) m.record(v2(0, 0), {0});
  m.record(v2(1, 0), {0});
  EXPECT_EQ(m.clusters()[0].total, 5u);
  EXPECT_NEAR(m.clusters()[0].centroid[0], 0.2, 1e-15);
  EXPECT_EQ(m.clusters()[0].centroid[1], 0.0);
}

TEST(Memory, RejectsBadOutcome) {
  MemoryModule m(testing::gender_schema(), 2, 1.0);
  EXPECT_THROW(m.record(v2(0, 0), {}), MemoryError);
  EXPECT_THROW(m.record(v2(0, 0), {2}), MemoryError);
  EXPECT_THROW(MemoryModule(testing::gender_schema(), 0, 1.0), ConfigError);
  EXPECT_THROW(MemoryModule(testing::gender_schema(), 1, 0.0), ConfigError);
}

TEST(Memory, ConsolidateWeightedMerge) {
  MemoryModule m(testing::gender_schema(), 3, 0.01);
  for (int i = 0; i < 10; ++i) m.record(v2(0, 0), {0});
  m.record(v2(5, 0), {1});
  for (int i = 0; i < 4; ++i) m.record(v2(0.1, 0), {1});
  ASSERT_EQ(m.size(), 3u);
  m.consolidate();
  ASSERT_EQ(m.size(), 2u);
  const auto it = std::find_if(m.clusters().begin(), m.clusters().end(),
                               [](const Cluster& c) { return c.total == 14; });
  ASSERT_NE(it, m.clusters().end());
  EXPECT_NEAR(it->centroid[0], 0.4 / 14, 1e-15);
  EXPECT_NEAR(it->centroid[0], 0.0285714, 1e-7);
  EXPECT_EQ(it->counts[0], (std::vector<std::uint64_t>{10, 4}));
  EXPECT_EQ(m.total_recorded(), 15u);
}

TEST(Memory, ConsolidateNeedsTwo) {
  MemoryModule m(testing::gender_schema(), 2, 1.0);
  EXPECT_THROW(m.consolidate(), MemoryError);
  m.record(v2(0, 0), {0});
  EXPECT_THROW(m.consolidate(), MemoryError);
  m.record(v2(3, 0), {1});
  m.consolidate();
  EXPECT_EQ(m.size(), 1u);
  EXPECT_EQ(m.clusters()[0].total, 2u);
}

TEST(Memory, FullMemoryConsolidatesThenInserts) {
  MemoryModule m(testing::gender_schema(), 2, 0.5);
  m.record(v2(0, 0), {0});
  m.record(v2(1, 0), {0});
  m.record(v2(10, 0), {1});
  EXPECT_EQ(m.size(), 2u);
  EXPECT_EQ(m.total_recorded(), 3u);
  EXPECT_TRUE(m.lookup(v2(10, 0)).has_value());
}

TEST(Memory, BudgetOneMergesEverything) {
  MemoryModule m(testing::gender_schema(), 1, 0.5);
  m.record(v2(0, 0), {0});
  m.record(v2(4, 0), {1});
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m.clusters()[0].total, 2u);
  EXPECT_NEAR(m.clusters()[0].centroid[0], 2.0, 1e-15);
}

TEST(Memory, PropertyBudgetAndConservation) {
  AttributeSchema schema(std::vector<Attribute>{{"gender", {"male", "female"}},
                                                {"age", {"young", "mid", "old"}}});
  std::mt19937_64 rng(3);
  for (int seq = 0; seq < 300; ++seq) {
    const std::size_t budget = 1 + seq % 6;
    const double tau = 0.1 + (seq % 5) * 0.4;
    MemoryModule m(schema, budget, tau);
    std::uint64_t recorded = 0;
    std::normal_distribution<double> g(0, 2);
    for (int op = 0; op < 60; ++op) {
      if (rng() % 7 == 0 && m.size() >= 2) {
        m.consolidate();
      } else {
        m.record(v2(g(rng), g(rng)), {rng() % 2, rng() % 3});
        ++recorded;
      }
      ASSERT_LE(m.size(), budget);
      ASSERT_EQ(m.total_recorded(), recorded);
      for (const auto& c : m.clusters()) {
        ASSERT_TRUE(c.centroid.allFinite());
        for (const auto& row : c.counts) {
          std::uint64_t s = 0;
          for (auto x : row) s += x;
          ASSERT_EQ(s, c.total);
        }
      }
    }
  }
}

TEST(DefaultTau, HalfMinimumConceptDistance) {
  const MixtureWorld w = testing::occupations();
  EXPECT_DOUBLE_EQ(default_tau(w), 4.0);
  MixtureWorld one(1, testing::gender_schema(), {"c"},
                   {testing::component(0, {0}, {0}), testing::component(0, {1}, {1})});
  EXPECT_TRUE(std::isinf(default_tau(one)));
}

TEST(Policy, Names) {
  EXPECT_EQ(parse_policy_kind("static"), PolicyKind::fixed);
  EXPECT_EQ(to_string(PolicyKind::fixed), "static");
  EXPECT_EQ(parse_policy_kind("deficit"), PolicyKind::deficit);
  EXPECT_EQ(parse_policy_kind("probabilistic"), PolicyKind::probabilistic);
  EXPECT_THROW(parse_policy_kind("vanilla"), ConfigError);
  EXPECT_NO_THROW(IndicatorPolicy::deficit().validate(testing::gender_schema()));
  IndicatorPolicy bad = IndicatorPolicy::deficit();
  bad.static_pair = GuidancePlan{{{0, 1, 0, 1}}};
  EXPECT_THROW(bad.validate(testing::gender_schema()), ConfigError);
}

TEST(DeficitPlan, HandExamples) {
  const auto schema = testing::gender_schema();
  const auto uniform = TargetDistribution::uniform(schema);
  auto p = deficit_plan(Counts{{3, 1}}, schema, uniform);
  EXPECT_EQ(p.directives[0], (AttributeDirective{0, 1, 0, 1}));
  p = deficit_plan(Counts{{0, 0}}, schema, TargetDistribution(schema, {{1.0, 0.0}}));
  EXPECT_EQ(p.directives[0].target, 0u);
  p = deficit_plan(Counts{{5, 5}}, schema, uniform);
  EXPECT_EQ(p.directives[0].target, 0u);
  EXPECT_EQ(p.directives[0].reference, 1u);
}

TEST(DeficitPlan, ReferenceIsLargestSurplus) {
  AttributeSchema schema(std::vector<Attribute>{{"age", {"young", "mid", "old"}}});
  const auto uniform = TargetDistribution::uniform(schema);
  const auto p = deficit_plan(Counts{{1, 6, 2}}, schema, uniform);
  EXPECT_EQ(p.directives[0].target, 0u);
  EXPECT_EQ(p.directives[0].reference, 1u);
}

TEST(Decide, ColdStartAndMatchedCluster) {
  const MixtureWorld w = testing::occupations();
  const auto schema = w.schema();
  MemoryModule m(schema, 4, default_tau(w));
  const auto target = TargetDistribution::uniform(schema);
  auto policy = IndicatorPolicy::deficit();
  const Condition eng = w.make_condition("engineer");
  const Condition tea = w.make_condition("teacher");
  EXPECT_EQ(decide(m, eng, schema, target, policy).directives[0].target, 0u);
  m.record(eng.embedding, {0});
  EXPECT_EQ(decide(m, eng, schema, target, policy).directives[0].target, 1u);
  // The teacher prompt does not see the engineer cluster.
  EXPECT_EQ(decide(m, tea, schema, target, policy).directives[0].target, 0u);
}

TEST(Decide, StaticAndProbabilistic) {
  const MixtureWorld w = testing::occupations();
  const auto schema = w.schema();
  MemoryModule m(schema, 4, 1.0);
  const TargetDistribution target(schema, {{0.3, 0.7}});
  const Condition c = w.make_condition("engineer");
  auto fixed = IndicatorPolicy::fixed({{{0, 0, 1, 1}}});
  for (int i = 0; i < 5; ++i)
    EXPECT_EQ(decide(m, c, schema, target, fixed), (GuidancePlan{{{0, 0, 1, 1}}}));
  auto prob = IndicatorPolicy::probabilistic(11);
  int female = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const auto plan = decide(m, c, schema, target, prob);
    EXPECT_NE(plan.directives[0].target, plan.directives[0].reference);
    female += plan.directives[0].target == 1;
  }
  EXPECT_NEAR(double(female) / n, 0.7, 4 * std::sqrt(0.21 / n));
  auto again = IndicatorPolicy::probabilistic(11);
  auto prob2 = IndicatorPolicy::probabilistic(11);
  EXPECT_EQ(decide(m, c, schema, target, again), decide(m, c, schema, target, prob2));
}

// Closed loop: the outcome is always the decided target.
std::uint64_t perfect_loop(const AttributeSchema& schema, const TargetDistribution& t,
                           int n, IndicatorPolicy& policy, std::vector<std::uint64_t>* worst = nullptr) {
  MemoryModule m(schema, 1, 1.0);
  const Vector e = v2(0, 0);
  const Condition c{0, {}, e};
  for (int i = 0; i < n; ++i) {
    const auto plan = decide(m, c, schema, t, policy);
    AttributeAssignment out;
    for (const auto& d : plan.directives) out.push_back(d.target);
    m.record(e, out);
    if (worst) {
      const auto& counts = m.clusters()[0].counts[0];
      for (std::size_t v = 0; v < counts.size(); ++v) {
        const double dev = std::abs(double(counts[v]) - (i + 1) * t(0, v));
        if (dev > 1.0 + 1e-9) ++(*worst)[v];
      }
    }
  }
  return m.clusters()[0].counts[0][0];
}

TEST(Deficit, BoundedDeviationWithPerfectEnforcer) {
  const auto schema = testing::gender_schema();
  for (double p : {0.5, 0.3, 0.25, 0.1, 1.0 / 3, 0.9}) {
    const TargetDistribution t = TargetDistribution::with_proportion(schema, 0, 0, p);
    auto policy = IndicatorPolicy::deficit();
    std::vector<std::uint64_t> worst(2, 0);
    perfect_loop(schema, t, 2000, policy, &worst);
    EXPECT_EQ(worst[0], 0u) << "p " << p;
    EXPECT_EQ(worst[1], 0u) << "p " << p;
  }
}

TEST(Deficit, VarianceBelowProbabilistic) {
  const auto schema = testing::gender_schema();
  const auto t = TargetDistribution::uniform(schema);
  std::vector<double> det, prob;
  for (int trial = 0; trial < 100; ++trial) {
    auto d = IndicatorPolicy::deficit();
    auto p = IndicatorPolicy::probabilistic(derive_seed(5, std::uint64_t(trial)));
    det.push_back(perfect_loop(schema, t, 50, d) / 50.0);
    prob.push_back(perfect_loop(schema, t, 50, p) / 50.0);
  }
  auto sd = [](const std::vector<double>& v) {
    double m = 0, s = 0;
    for (double x : v) m += x;
    m /= v.size();
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / (v.size() - 1));
  };
  EXPECT_LT(sd(det), sd(prob));
  EXPECT_EQ(sd(det), 0.0);
}

TEST(MemoryService, ConcurrentRecordsConserveCounts) {
  const auto schema = testing::gender_schema();
  MemoryService service(MemoryModule(schema, 3, 0.5));
  std::vector<std::thread> threads;
  for (int k = 0; k < 4; ++k)
    threads.emplace_back([&, k] {
      for (int i = 0; i < 500; ++i) service.record(v2(k, 0), {std::size_t(i % 2)});
    });
  for (auto& th : threads) th.join();
  const MemoryModule m = service.copy();
  EXPECT_EQ(m.total_recorded(), 2000u);
  EXPECT_LE(m.size(), 3u);
}

}  // namespace
}  // namespace fairmix
