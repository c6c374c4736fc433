// Copyright 2026 The wugflow Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "wug/graph.h"

#include <algorithm>
#include <string>
#include <vector>

#include "gmock/gmock.h"
#include "gtest/gtest.h"
#include "wug/rng.h"

namespace wug {
namespace {

using ::testing::ElementsAre;
using ::testing::HasSubstr;
using ::testing::Optional;

Usage U(std::string id, int grouping = 1) {
  return Usage{id, "plane", "nn", grouping, "the plane landed", 4, 9, 1900};
}

Judgment J(std::string a, std::string b, int score, std::string ann = "a1") {
  return Judgment{std::move(a), std::move(b), std::move(ann), score, "", 1};
}

TEST(MedianTest, MidpointOfEvenMultiset) {
  EXPECT_THAT(MedianNonZero(std::vector<int>{4, 3}), Optional(3.5));
  EXPECT_THAT(MedianNonZero(std::vector<int>{1, 2, 4}), Optional(2.0));
  EXPECT_THAT(MedianNonZero(std::vector<int>{0, 3}), Optional(3.0));
  EXPECT_EQ(MedianNonZero(std::vector<int>{0, 0}), std::nullopt);
  EXPECT_EQ(MedianNonZero(std::vector<int>{}), std::nullopt);
}

TEST(ShiftTest, FixedPoints) {
  EXPECT_EQ(Shift(4).value, 1.5);
  EXPECT_EQ(Shift(2.5).value, 0.0);
  EXPECT_TRUE(Shift(2.5).IsPositive());
  EXPECT_EQ(Shift(1).value, -1.5);
  EXPECT_FALSE(Shift(2).IsPositive());
}

TEST(ShiftTest, BijectionOnHalfSteps) {
  for (double w = 1.0; w <= 4.0; w += 0.5) {
    EXPECT_EQ(Shift(w).value + 2.5, w);
  }
}

TEST(BuildWugTest, MedianWeights) {
  std::vector<Usage> usages = {U("u1"), U("u2"), U("u3"), U("u4")};
  std::vector<Judgment> js = {J("u1", "u2", 4), J("u2", "u1", 3, "a2"),
                              J("u1", "u3", 4), J("u3", "u4", 0),
                              J("u4", "u3", 3, "a2"), J("u2", "u4", 0)};
  auto g = Wug::Build(usages, js);
  ASSERT_TRUE(g.ok()) << g.status();
  EXPECT_EQ(g->edges().size(), 4u);
  EXPECT_THAT(g->Weight("u1", "u2"), Optional(3.5));
  EXPECT_THAT(g->Weight("u2", "u1"), Optional(3.5));
  EXPECT_THAT(g->Weight("u1", "u3"), Optional(4.0));
  EXPECT_EQ(g->FindEdge("u1", "u3")->shifted(), 1.5);
  EXPECT_THAT(g->Weight("u3", "u4"), Optional(3.0));
  // All-zero edge is kept structurally but carries no weight.
  ASSERT_NE(g->FindEdge("u2", "u4"), nullptr);
  EXPECT_FALSE(g->FindEdge("u2", "u4")->has_weight());
  EXPECT_EQ(g->FindEdge("u1", "u4"), nullptr);
}

TEST(BuildWugTest, JudgmentsAreStoredCanonically) {
  std::vector<Usage> usages = {U("b"), U("a")};
  auto g = Wug::Build(usages, std::vector<Judgment>{J("b", "a", 2)});
  ASSERT_TRUE(g.ok());
  const Judgment& j = g->edges()[0].judgments[0];
  EXPECT_EQ(j.node1, "a");
  EXPECT_EQ(j.node2, "b");
}

TEST(BuildWugTest, RejectsUnknownNode) {
  std::vector<Usage> usages = {U("u1"), U("u2")};
  auto g = Wug::Build(usages, std::vector<Judgment>{J("u1", "zz", 3)});
  ASSERT_FALSE(g.ok());
  EXPECT_THAT(g.status().message(), HasSubstr("zz"));
}

TEST(BuildWugTest, RejectsScoreOutOfRange) {
  std::vector<Usage> usages = {U("u1"), U("u2")};
  EXPECT_FALSE(Wug::Build(usages, std::vector<Judgment>{J("u1", "u2", 5)}).ok());
  EXPECT_FALSE(Wug::Build(usages, std::vector<Judgment>{J("u1", "u2", -1)}).ok());
}

TEST(BuildWugTest, RejectsInvalidUsages) {
  EXPECT_FALSE(Wug::Build(std::vector<Usage>{U("u1"), U("u1")}, {}).ok());
  Usage bad_span = U("u1");
  bad_span.target_end = 100;
  EXPECT_FALSE(Wug::Build(std::vector<Usage>{bad_span}, {}).ok());
  Usage empty_span = U("u1");
  empty_span.target_end = empty_span.target_start;
  EXPECT_FALSE(Wug::Build(std::vector<Usage>{empty_span}, {}).ok());
  EXPECT_FALSE(Wug::Build(std::vector<Usage>{U("u1", 3)}, {}).ok());
  EXPECT_TRUE(Wug::Build(std::vector<Usage>{U("u1", 3)}, {},
                         GraphOptions{{1, 2, 3}})
                  .ok());
  EXPECT_FALSE(Wug::Build(std::vector<Usage>{U("u1")},
                          std::vector<Judgment>{J("u1", "u1", 3)})
                   .ok());
}

TEST(BuildWugTest, MedianIsPermutationInvariant) {
  Rng rng(11);
  std::vector<Usage> usages = {U("x"), U("y")};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Judgment> js;
    const int n = rng.UniformInt(1, 7);
    for (int i = 0; i < n; ++i) {
      js.push_back(J("x", "y", rng.UniformInt(0, 4), "a" + std::to_string(i)));
    }
    auto g1 = Wug::Build(usages, js);
    rng.Shuffle(js);
    auto g2 = Wug::Build(usages, js);
    ASSERT_TRUE(g1.ok() && g2.ok());
    EXPECT_EQ(g1->Weight("x", "y"), g2->Weight("x", "y"));
    if (auto w = g1->Weight("x", "y")) {
      EXPECT_GE(*w, 1.0);
      EXPECT_LE(*w, 4.0);
      EXPECT_EQ(std::fmod(*w * 2.0, 1.0), 0.0);
    }
  }
}

TEST(FilterZeroNodesTest, StrictMajorityRule) {
  // u1 judgments: {0 (u2), 0 (u3), 3 (u4)} -> removed.
  // u4 judgments: {3 (u1), 0 (u5)} -> 1 of 2 zeros, kept.
  std::vector<Usage> usages = {U("u1"), U("u2"), U("u3"), U("u4"), U("u5"),
                               U("u6")};
  std::vector<Judgment> js = {J("u1", "u2", 0), J("u1", "u3", 0),
                              J("u1", "u4", 3), J("u4", "u5", 0),
                              J("u4", "u6", 3), J("u2", "u6", 4),
                              J("u3", "u6", 4), J("u5", "u6", 4)};
  auto g = Wug::Build(usages, js);
  ASSERT_TRUE(g.ok());
  FilterResult r = FilterZeroNodes(*g);
  EXPECT_THAT(r.removed, ElementsAre("u1"));
  EXPECT_EQ(r.graph.IndexOf("u1"), std::nullopt);
  EXPECT_TRUE(r.graph.IndexOf("u4").has_value());
  EXPECT_EQ(r.graph.FindEdge("u1", "u4"), nullptr);
}

TEST(FilterZeroNodesTest, BoundaryHalfIsKept) {
  std::vector<Usage> usages = {U("u1"), U("u2"), U("u3")};
  std::vector<Judgment> js = {J("u1", "u2", 0), J("u1", "u3", 3),
                              J("u2", "u3", 4), J("u2", "u3", 4, "a2")};
  auto g = Wug::Build(usages, js);
  FilterResult r = FilterZeroNodes(*g);
  EXPECT_TRUE(r.removed.empty());
  EXPECT_EQ(r.graph.num_nodes(), 3);
}

TEST(FilterZeroNodesTest, NoZerosIsIdentity) {
  std::vector<Usage> usages = {U("u1"), U("u2"), U("u3")};
  std::vector<Judgment> js = {J("u1", "u2", 1), J("u2", "u3", 4)};
  auto g = Wug::Build(usages, js);
  FilterResult r = FilterZeroNodes(*g);
  EXPECT_TRUE(r.removed.empty());
  EXPECT_EQ(r.graph.edges().size(), 2u);
}

// Independent count of the rule: a node qualifies if zeros*2 > total.
TEST(FilterZeroNodesTest, RandomGraphsMatchCountOracleAndAreIdempotent) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Usage> usages;
    for (int i = 0; i < 8; ++i) usages.push_back(U("n" + std::to_string(i)));
    std::vector<Judgment> js;
    for (int i = 0; i < 8; ++i) {
      for (int k = i + 1; k < 8; ++k) {
        if (rng.Bernoulli(0.4)) {
          js.push_back(J(usages[i].identifier, usages[k].identifier,
                         rng.Bernoulli(0.35) ? 0 : rng.UniformInt(1, 4)));
        }
      }
    }
    auto g = Wug::Build(usages, js);
    ASSERT_TRUE(g.ok());
    FilterResult once = FilterZeroNodes(*g);
    FilterResult twice = FilterZeroNodes(once.graph);
    EXPECT_TRUE(twice.removed.empty());
    EXPECT_EQ(twice.graph.num_nodes(), once.graph.num_nodes());
    // No surviving node violates the rule.
    for (const Node& n : once.graph.nodes()) {
      int zeros = 0, total = 0;
      for (const Judgment& j : js) {
        if (j.node1 != n.id && j.node2 != n.id) continue;
        const std::string& other = j.node1 == n.id ? j.node2 : j.node1;
        if (!once.graph.IndexOf(other)) continue;
        ++total;
        zeros += j.score == 0;
      }
      EXPECT_LE(2 * zeros, total) << n.id;
    }
  }
}

TEST(SubgraphByPeriodTest, PartitionsUsages) {
  std::vector<Usage> usages;
  for (int i = 0; i < 100; ++i) {
    usages.push_back(U("u" + std::to_string(100 + i), i < 60 ? 1 : 2));
  }
  std::vector<Judgment> js;
  Rng rng(3);
  for (int k = 0; k < 400; ++k) {
    int a = rng.UniformInt(0, 99), b = rng.UniformInt(0, 99);
    if (a == b) continue;
    js.push_back(J(usages[a].identifier, usages[b].identifier,
                   rng.UniformInt(1, 4)));
  }
  auto g = Wug::Build(usages, js);
  ASSERT_TRUE(g.ok());
  auto g1 = SubgraphByPeriod(*g, 1);
  auto g2 = SubgraphByPeriod(*g, 2);
  ASSERT_TRUE(g1.ok() && g2.ok());
  EXPECT_EQ(g1->num_nodes(), 60);
  EXPECT_EQ(g2->num_nodes(), 40);
  size_t cross = 0;
  for (const Edge& e : g->edges()) {
    cross += g->nodes()[e.u].grouping != g->nodes()[e.v].grouping;
  }
  EXPECT_EQ(g1->edges().size() + g2->edges().size() + cross,
            g->edges().size());
  for (const Edge& e : g2->edges()) {
    EXPECT_EQ(g2->nodes()[e.u].grouping, 2);
    EXPECT_EQ(g2->nodes()[e.v].grouping, 2);
  }
  EXPECT_FALSE(SubgraphByPeriod(*g, 7).ok());
}

TEST(SubgraphByPeriodTest, SinglePeriodIsIdentity) {
  std::vector<Usage> usages = {U("a"), U("b"), U("c")};
  auto g = Wug::Build(usages, std::vector<Judgment>{J("a", "b", 4), J("b", "c", 1)});
  auto g1 = SubgraphByPeriod(*g, 1);
  ASSERT_TRUE(g1.ok());
  EXPECT_EQ(g1->num_nodes(), 3);
  EXPECT_EQ(g1->edges().size(), 2u);
  EXPECT_THAT(g1->Weight("b", "c"), Optional(1.0));
}

TEST(UsgTest, SenseNodesKeptInEveryPeriod) {
  std::vector<Usage> usages = {U("u1", 1), U("u2", 2)};
  std::vector<SenseDescription> senses = {{"s1", "plane", "aircraft"}};
  std::vector<Judgment> js = {J("u1", "sense:s1", 4), J("u2", "sense:s1", 1)};
  auto g = Wug::BuildUsg(usages, senses, js);
  ASSERT_TRUE(g.ok()) << g.status();
  auto g2 = SubgraphByPeriod(*g, 2);
  ASSERT_TRUE(g2.ok());
  EXPECT_EQ(g2->num_nodes(), 2);
  EXPECT_THAT(g2->Weight("u2", "sense:s1"), Optional(1.0));
}

TEST(UsgTest, RejectsUsageUsageEdges) {
  std::vector<Usage> usages = {U("u1"), U("u2")};
  std::vector<SenseDescription> senses = {{"s1", "plane", "aircraft"}};
  EXPECT_FALSE(
      Wug::BuildUsg(usages, senses, std::vector<Judgment>{J("u1", "u2", 4)}).ok());
  std::vector<SenseDescription> clash = {{"u1", "plane", "aircraft"}};
  EXPECT_FALSE(Wug::BuildUsg(usages, clash, {}).ok());
}

TEST(BuildUsgPairsTest, FullBipartiteSet) {
  std::vector<Usage> usages;
  for (int i = 0; i < 60; ++i) usages.push_back(U("u" + std::to_string(i)));
  std::vector<SenseDescription> senses;
  for (int k = 0; k < 4; ++k) senses.push_back({"s" + std::to_string(k), "x", ""});
  auto pairs = BuildUsgPairs(usages, senses);
  ASSERT_TRUE(pairs.ok());
  EXPECT_EQ(pairs->size(), 240u);

  auto one = BuildUsgPairs(std::vector<Usage>{U("u")},
                           std::vector<SenseDescription>{{"s", "x", ""}});
  ASSERT_TRUE(one.ok());
  EXPECT_EQ(one->size(), 1u);

  EXPECT_FALSE(BuildUsgPairs(usages, {}).ok());
}

TEST(BuildUsgPairsTest, SmallCaseMatchesEnumeration) {
  std::vector<Usage> usages = {U("a"), U("b"), U("c")};
  std::vector<SenseDescription> senses = {{"x", "", ""}, {"y", "", ""}};
  auto pairs = BuildUsgPairs(usages, senses);
  ASSERT_TRUE(pairs.ok());
  std::vector<NodePair> expected;
  for (std::string u : {"a", "b", "c"}) {
    for (std::string s : {"sense:x", "sense:y"}) {
      expected.push_back(CanonicalPair(u, s));
    }
  }
  std::sort(expected.begin(), expected.end());
  EXPECT_EQ(*pairs, expected);
  for (const auto& [a, b] : *pairs) EXPECT_LT(a, b);
}

}  // namespace
}  // namespace wug
