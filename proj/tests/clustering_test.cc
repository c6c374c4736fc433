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

#include "wug/clustering.h"

#include <string>
#include <vector>

#include "gmock/gmock.h"
#include "gtest/gtest.h"
#include "partition_oracle.h"
#include "wug/graph.h"
#include "wug/rng.h"

namespace wug {
namespace {

using ::testing::ElementsAre;
using ::testing::IsEmpty;
using testing::BruteClusterAccuracy;
using testing::BruteLoss;
using testing::ExhaustiveMinimum;
using testing::WeightedPair;

std::string Id(int i) { return "n" + std::to_string(i); }

Wug MakeGraph(int n, const std::vector<WeightedPair>& edges) {
  std::vector<Usage> usages;
  for (int i = 0; i < n; ++i) {
    usages.push_back(Usage{Id(i), "w", "nn", 1, "ctx", 0, 3, std::nullopt});
  }
  std::vector<Judgment> js;
  for (const WeightedPair& e : edges) {
    js.push_back(Judgment{Id(e.a), Id(e.b), "a1", static_cast<int>(e.weight),
                          "", 1});
  }
  auto g = Wug::Build(usages, js);
  EXPECT_TRUE(g.ok()) << g.status();
  return *std::move(g);
}

Clustering FromLabels(const std::vector<int>& labels) {
  std::vector<std::vector<std::string>> groups;
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= static_cast<int>(groups.size())) groups.resize(labels[i] + 1);
    groups[labels[i]].push_back(Id(static_cast<int>(i)));
  }
  return ClusteringFromGroups(groups);
}

std::vector<int> Labels(const Clustering& c, int n) {
  std::vector<int> out(n, -1);
  for (int i = 0; i < n; ++i) {
    auto it = c.assignment.find(Id(i));
    if (it != c.assignment.end()) out[i] = it->second;
  }
  return out;
}

std::vector<WeightedPair> RandomEdges(Rng& rng, int n, double density) {
  std::vector<WeightedPair> edges;
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      if (rng.Bernoulli(density)) {
        edges.push_back({a, b, static_cast<double>(rng.UniformInt(1, 4))});
      }
    }
  }
  return edges;
}

TEST(LossTest, SingleClusterAllPositiveIsZero) {
  Wug g = MakeGraph(3, {{0, 1, 4}, {1, 2, 4}, {0, 2, 4}});
  EXPECT_EQ(*Loss(g, FromLabels({0, 0, 0})), 0.0);
}

TEST(LossTest, CutWeightFourEdgeCostsOneAndAHalf) {
  Wug g = MakeGraph(2, {{0, 1, 4}});
  EXPECT_EQ(*Loss(g, FromLabels({0, 1})), 1.5);
}

TEST(LossTest, NegativeWithinAndZeroWeightEdges) {
  Wug g = MakeGraph(3, {{0, 1, 1}, {1, 2, 2}});
  EXPECT_EQ(*Loss(g, FromLabels({0, 0, 0})), 2.0);
  // A median of 2.5 contributes nothing on either side.
  std::vector<Usage> usages = {{"a", "w", "", 1, "ctx", 0, 1, {}},
                               {"b", "w", "", 1, "ctx", 0, 1, {}}};
  std::vector<Judgment> js = {{"a", "b", "x", 2, "", 1}, {"a", "b", "y", 3, "", 1}};
  Wug h = *Wug::Build(usages, js);
  EXPECT_EQ(*Loss(h, ClusteringFromGroups({{"a"}, {"b"}})), 0.0);
  EXPECT_EQ(*Loss(h, ClusteringFromGroups({{"a", "b"}})), 0.0);
}

TEST(LossTest, TriangleMatchesExhaustiveMinimum) {
  const std::vector<WeightedPair> edges = {{0, 1, 4}, {1, 2, 4}, {0, 2, 1}};
  Wug g = MakeGraph(3, edges);
  // Frozen by the exhaustive oracle over the 5 partitions of 3 nodes.
  const auto brute = ExhaustiveMinimum(3, edges);
  EXPECT_EQ(brute.partitions_visited, 5);
  EXPECT_EQ(brute.loss, 1.5);
  double best = 1e9;
  testing::ForEachPartition(3, [&](const std::vector<int>& labels) {
    best = std::min(best, *Loss(g, FromLabels(labels)));
  });
  EXPECT_EQ(best, brute.loss);
  EXPECT_EQ(Cluster(g, AnnealConfig{}).loss, 1.5);
}

TEST(LossTest, UnassignedNodeIsAnError) {
  Wug g = MakeGraph(3, {{0, 1, 4}, {1, 2, 4}});
  EXPECT_FALSE(Loss(g, ClusteringFromGroups({{Id(0), Id(1)}})).ok());
}

TEST(LossTest, InvariantUnderLabelPermutation) {
  Rng rng(17);
  for (int t = 0; t < 50; ++t) {
    Wug g = MakeGraph(7, RandomEdges(rng, 7, 0.6));
    std::vector<int> labels(7);
    for (int& l : labels) l = rng.UniformInt(0, 3);
    std::vector<int> perm = {2, 0, 3, 1};
    std::vector<int> relabeled(7);
    for (int i = 0; i < 7; ++i) relabeled[i] = perm[labels[i]];
    Clustering a, b;
    for (int i = 0; i < 7; ++i) {
      a.assignment[Id(i)] = labels[i];
      b.assignment[Id(i)] = relabeled[i];
    }
    EXPECT_EQ(*Loss(g, a), *Loss(g, b));
  }
}

TEST(NormalizedLossTest, Bounds) {
  Wug g = MakeGraph(4, {{0, 1, 4}, {2, 3, 1}, {1, 2, 3}});
  EXPECT_EQ(*NormalizedLoss(g, FromLabels({0, 0, 0, 1})), 0.0);
  EXPECT_EQ(*NormalizedLoss(g, FromLabels({0, 1, 1, 1})), 3.0 / 3.5);
  // Worst case: positive edges cut, negative edge inside.
  Wug h = MakeGraph(4, {{0, 1, 4}, {2, 3, 1}});
  EXPECT_EQ(*NormalizedLoss(h, FromLabels({0, 1, 2, 2})), 1.0);
  EXPECT_EQ(*NormalizedLoss(h, FromLabels({0, 0, 1, 2})), 0.0);
}

TEST(NormalizedLossTest, MatchesIndependentRecomputation) {
  Rng rng(23);
  for (int t = 0; t < 30; ++t) {
    auto edges = RandomEdges(rng, 6, 0.7);
    if (edges.empty()) continue;
    Wug g = MakeGraph(6, edges);
    std::vector<int> labels(6);
    for (int& l : labels) l = rng.UniformInt(0, 2);
    double bound = 0.0;
    for (const auto& e : edges) bound += std::abs(e.weight - 2.5);
    // Every node of MakeGraph with an edge is assigned, isolated ones too.
    EXPECT_DOUBLE_EQ(*NormalizedLoss(g, FromLabels(labels)),
                     BruteLoss(edges, labels) / bound);
  }
}

TEST(ClusterTest, TwoCliquesJoinedByWeakEdge) {
  std::vector<WeightedPair> edges;
  for (int base : {0, 5}) {
    for (int a = 0; a < 5; ++a) {
      for (int b = a + 1; b < 5; ++b) edges.push_back({base + a, base + b, 4});
    }
  }
  edges.push_back({4, 5, 1});
  Wug g = MakeGraph(10, edges);
  Clustering c = Cluster(g, AnnealConfig{.seed = 3});
  EXPECT_EQ(c.loss, 0.0);
  EXPECT_EQ(c.num_clusters(), 2);
  EXPECT_THAT(Labels(c, 10), ElementsAre(0, 0, 0, 0, 0, 1, 1, 1, 1, 1));
  EXPECT_THAT(c.isolates, IsEmpty());
}

TEST(ClusterTest, NoWeightedEdgesGivesTrivialClustering) {
  std::vector<Usage> usages = {{"a", "w", "", 1, "ctx", 0, 1, {}},
                               {"b", "w", "", 1, "ctx", 0, 1, {}}};
  Wug g = *Wug::Build(usages, std::vector<Judgment>{{"a", "b", "x", 0, "", 1}});
  Clustering c = Cluster(g, AnnealConfig{});
  EXPECT_THAT(c.assignment, IsEmpty());
  EXPECT_THAT(c.isolates, ElementsAre("a", "b"));
  EXPECT_EQ(c.loss, 0.0);
}

TEST(ClusterTest, IsolatesReportedSeparately) {
  Wug g = MakeGraph(4, {{0, 1, 4}});
  Clustering c = Cluster(g, AnnealConfig{});
  EXPECT_THAT(c.isolates, ElementsAre(Id(2), Id(3)));
  EXPECT_EQ(c.assignment.size(), 2u);
}

TEST(ClusterTest, SmallGraphsReachExhaustiveOptimum) {
  Rng rng(101);
  int attained = 0;
  const int trials = 25;
  for (int t = 0; t < trials; ++t) {
    const int n = rng.UniformInt(3, 8);
    auto edges = RandomEdges(rng, n, 0.7);
    if (edges.empty()) edges.push_back({0, 1, 4});
    Wug g = MakeGraph(n, edges);
    Clustering c = Cluster(g, AnnealConfig{.seed = static_cast<uint64_t>(t)});
    // Clustered nodes only; isolates never change the loss.
    const double brute = ExhaustiveMinimum(n, edges).loss;
    EXPECT_GE(c.loss, brute);
    attained += c.loss == brute;
  }
  EXPECT_GE(attained, trials - 1);
}

TEST(ClusterTest, PlantedPositiveStructureHasNoCutBlackEdges) {
  // Three planted groups; every intra pair >= 3, inter pairs 1 or 2, with a
  // sparse observation pattern. A zero-loss partition exists.
  Rng rng(8);
  const int n = 15;
  std::vector<WeightedPair> edges;
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      if (!rng.Bernoulli(0.6)) continue;
      const bool same = a / 5 == b / 5;
      edges.push_back({a, b, static_cast<double>(same ? rng.UniformInt(3, 4)
                                                       : rng.UniformInt(1, 2))});
    }
  }
  Wug g = MakeGraph(n, edges);
  Clustering c = Cluster(g, AnnealConfig{.seed = 1});
  EXPECT_EQ(c.loss, 0.0);
  for (const Edge& e : g.edges()) {
    if (*e.weight >= 2.5) {
      EXPECT_EQ(c.assignment.at(g.nodes()[e.u].id),
                c.assignment.at(g.nodes()[e.v].id));
    }
  }
}

TEST(ClusterTest, SameSeedIsReproducibleAcrossWorkerCounts) {
  Rng rng(4);
  for (int t = 0; t < 5; ++t) {
    Wug g = MakeGraph(12, RandomEdges(rng, 12, 0.5));
    AnnealConfig one{.seed = 99, .workers = 1};
    AnnealConfig four{.seed = 99, .workers = 4};
    Clustering a = Cluster(g, one);
    Clustering b = Cluster(g, one);
    Clustering c = Cluster(g, four);
    EXPECT_EQ(a.assignment, b.assignment);
    EXPECT_EQ(a.assignment, c.assignment);
    EXPECT_EQ(a.loss, c.loss);
  }
}

TEST(ClusterTest, NormalizedLossPopulated) {
  Wug g = MakeGraph(3, {{0, 1, 4}, {1, 2, 4}, {0, 2, 1}});
  Clustering c = Cluster(g, AnnealConfig{});
  EXPECT_DOUBLE_EQ(c.normalized_loss, 1.5 / 4.5);
}

TEST(ConflictsTest, Definitions) {
  Wug g = MakeGraph(4, {{0, 1, 4}, {1, 2, 1}, {2, 3, 4}});
  auto none = Conflicts(g, FromLabels({0, 0, 1, 1}));
  ASSERT_TRUE(none.ok());
  EXPECT_THAT(none->positive_across, IsEmpty());
  EXPECT_THAT(none->negative_within, IsEmpty());

  auto some = Conflicts(g, FromLabels({0, 1, 1, 1}));
  ASSERT_TRUE(some.ok());
  EXPECT_THAT(some->positive_across, ElementsAre(NodePair{Id(0), Id(1)}));
  EXPECT_THAT(some->negative_within, ElementsAre(NodePair{Id(1), Id(2)}));
}

TEST(ConflictsTest, ZeroLossIffNoConflicts) {
  Rng rng(31);
  for (int t = 0; t < 100; ++t) {
    auto edges = RandomEdges(rng, 6, 0.5);
    Wug g = MakeGraph(6, edges);
    std::vector<int> labels(6);
    for (int& l : labels) l = rng.UniformInt(0, 2);
    Clustering c = FromLabels(labels);
    auto conf = Conflicts(g, c);
    const bool empty = conf->positive_across.empty() && conf->negative_within.empty();
    EXPECT_EQ(*Loss(g, c) == 0.0, empty);
  }
}

TEST(ClusteringPropertyTest, MergingPositiveOnlyClustersNeverIncreasesLoss) {
  Rng rng(77);
  int checked = 0;
  for (int t = 0; t < 300; ++t) {
    auto edges = RandomEdges(rng, 7, 0.5);
    Wug g = MakeGraph(7, edges);
    std::vector<int> labels(7);
    for (int& l : labels) l = rng.UniformInt(0, 2);
    // Are clusters 0 and 1 linked only by positive (>= 2.5) edges?
    bool only_positive = true;
    for (const auto& e : edges) {
      const bool between = (labels[e.a] == 0 && labels[e.b] == 1) ||
                           (labels[e.a] == 1 && labels[e.b] == 0);
      if (between && e.weight < 2.5) only_positive = false;
    }
    if (!only_positive) continue;
    std::vector<int> merged = labels;
    for (int& l : merged) l = l == 1 ? 0 : l;
    EXPECT_LE(BruteLoss(edges, merged), BruteLoss(edges, labels));
    EXPECT_LE(*Loss(g, FromLabels(merged)), *Loss(g, FromLabels(labels)));
    ++checked;
  }
  EXPECT_GT(checked, 20);
}

TEST(MaxWeightMatchingTest, MatchesBruteForceOnRandomTables) {
  Rng rng(2);
  for (int t = 0; t < 200; ++t) {
    const int rows = rng.UniformInt(1, 4);
    const int cols = rng.UniformInt(1, 4);
    std::vector<int> ref, hyp;
    for (int i = 0; i < 12; ++i) {
      ref.push_back(rng.UniformInt(0, rows - 1));
      hyp.push_back(rng.UniformInt(0, cols - 1));
    }
    Clustering a, b;
    for (int i = 0; i < 12; ++i) {
      a.assignment[Id(i)] = ref[i];
      b.assignment[Id(i)] = hyp[i];
    }
    // Make labels dense, as Clustering requires.
    a = FromLabels(ref);
    b = FromLabels(hyp);
    std::vector<int> ra = Labels(a, 12), rb = Labels(b, 12);
    EXPECT_DOUBLE_EQ(*ClusterAccuracy(a, b), BruteClusterAccuracy(ra, rb));
  }
}

TEST(ClusterAccuracyTest, Examples) {
  Clustering ref = ClusteringFromGroups({{"a", "b"}, {"c", "d"}});
  EXPECT_EQ(*ClusterAccuracy(ref, ref), 1.0);
  Clustering swapped;
  swapped.assignment = {{"a", 1}, {"b", 1}, {"c", 0}, {"d", 0}};
  EXPECT_EQ(*ClusterAccuracy(ref, swapped), 1.0);
  Clustering hyp = ClusteringFromGroups({{"a"}, {"b", "c", "d"}});
  // Frozen from enumerating both label matchings: {a,b}->{a} & {c,d}->{b,c,d}
  // agrees on a,c,d.
  EXPECT_EQ(BruteClusterAccuracy({0, 0, 1, 1}, {0, 1, 1, 1}), 0.75);
  EXPECT_EQ(*ClusterAccuracy(ref, hyp), 0.75);
  EXPECT_EQ(*ClusterAccuracy(hyp, ref), 0.75);
  Clustering other = ClusteringFromGroups({{"a", "b"}, {"c", "x"}});
  EXPECT_FALSE(ClusterAccuracy(ref, other).ok());
  EXPECT_FALSE(ClusterAccuracy(ref, ClusteringFromGroups({{"a", "b"}})).ok());
}

TEST(ClusterAccuracyTest, OneIffIdenticalPartitions) {
  Rng rng(9);
  for (int t = 0; t < 200; ++t) {
    std::vector<int> x(6), y(6);
    for (int& l : x) l = rng.UniformInt(0, 2);
    for (int& l : y) l = rng.UniformInt(0, 2);
    Clustering a = FromLabels(x), b = FromLabels(y);
    const bool same = a.assignment == b.assignment;
    EXPECT_EQ(*ClusterAccuracy(a, b) == 1.0, same);
  }
}

}  // namespace
}  // namespace wug
