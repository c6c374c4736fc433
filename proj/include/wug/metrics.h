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

// Annotation agreement, judgment distributions and diachronic change scores.
// Score 0 ("cannot decide") is treated as a missing judgment throughout.

#ifndef WUG_METRICS_H_
#define WUG_METRICS_H_

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "absl/status/statusor.h"
#include "wug/clustering.h"
#include "wug/graph.h"

namespace wug {

// Spearman's rho with average ranks for ties. nullopt when either side has
// no variance or fewer than 2 values.
std::optional<double> SpearmanRho(std::span<const double> x,
                                  std::span<const double> y);

struct PairCorrelation {
  double rho = 0.0;
  int n_shared = 0;
};

struct AgreementReport {
  std::map<std::pair<std::string, std::string>, PairCorrelation> pairwise_spearman;
  std::optional<double> weighted_mean_spearman;
  std::optional<double> krippendorff_alpha;
};

// Per annotator pair, rho over the edges both judged with a non-zero score.
// Pairs with fewer than 2 shared edges, or undefined rho, are left out. The
// mean is weighted by n_shared. If an annotator judged an edge more than once
// the latest round counts.
AgreementReport PairwiseSpearman(std::span<const Judgment> judgments);

// Interval-metric alpha over units of values.
// Units with fewer than 2 values are not pairable and are ignored. nullopt if
// nothing is pairable. Returns 1 when no pairable value disagrees.
std::optional<double> KrippendorffAlphaInterval(
    const std::vector<std::vector<double>>& units);

// Alpha over edges as units, non-zero scores as values.
std::optional<double> KrippendorffAlpha(std::span<const Judgment> judgments);

// Spearman and alpha together, optionally restricted to one round.
AgreementReport Agreement(std::span<const Judgment> judgments,
                          std::optional<int> round = std::nullopt);

// Over edges with exactly two non-zero judgments: share of |s1 - s2| = 0..3.
struct DisagreementHistogram {
  std::array<double, 4> proportion{};
  int edges = 0;
};
DisagreementHistogram ComputeDisagreementHistogram(
    std::span<const Judgment> judgments);

struct JudgmentFrequencies {
  std::array<int, 5> counts{};
  std::array<double, 5> proportions{};
  int total = 0;
};
JudgmentFrequencies ComputeJudgmentFrequencies(std::span<const Judgment> judgments);

// Clustered usages of one period per full-graph cluster id.
absl::StatusOr<std::vector<int>> ClusterFrequencyDist(const Wug& g,
                                                      const Clustering& c,
                                                      int grouping);

// Jensen-Shannon distance (square root of the base-2 divergence) between two
// count vectors after normalization. Vectors are zero-padded to equal length.
absl::StatusOr<double> JensenShannonDistance(std::span<const int> p,
                                             std::span<const int> q);

struct ChangeThresholds {
  int k = 2;  // minimum attestations to claim a sense is present
  int n = 0;  // maximum attestations to claim a sense is absent
};

// True iff some cluster has frequency >= k in one period and <= n in the
// other.
bool BinaryChangeFromCounts(std::span<const int> p, std::span<const int> q,
                            const ChangeThresholds& t);

struct ChangeScores {
  std::vector<int> freq_first;
  std::vector<int> freq_second;
  double graded = 0.0;
  bool binary = false;
  ChangeThresholds thresholds;
};

// Change between the two smallest declared periods. Fails if either period
// has no clustered usage.
absl::StatusOr<ChangeScores> ComputeChange(const Wug& g, const Clustering& c,
                                           const ChangeThresholds& t = {});

absl::StatusOr<double> GradedChange(const Wug& g, const Clustering& c);
absl::StatusOr<bool> BinaryChange(const Wug& g, const Clustering& c,
                                  const ChangeThresholds& t = {});

}  // namespace wug

#endif  // WUG_METRICS_H_
