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

// Correlation clustering of word usage graphs.
//
// Edge weights are shifted by -2.5; an edge with shifted weight >= 0 is
// positive, otherwise negative. The loss of a clustering is the sum of
// positive shifted weights across clusters plus the sum of absolute negative
// shifted weights within clusters. Cluster() minimizes it with simulated
// annealing over a sweep of cluster-count caps and several initial states.

#ifndef WUG_CLUSTERING_H_
#define WUG_CLUSTERING_H_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "absl/status/statusor.h"
#include "wug/graph.h"

namespace wug {

struct Clustering {
  // Non-isolated node id -> dense cluster id in [0, num_clusters).
  std::map<std::string, int> assignment;
  // Nodes without any weighted edge; not part of the clustering.
  std::vector<std::string> isolates;
  double loss = 0.0;
  double normalized_loss = 0.0;

  int num_clusters() const;
  // Members per cluster id, each sorted.
  std::vector<std::vector<std::string>> Clusters() const;
};

// Builds a clustering from explicit groups of node ids. Cluster ids are made
// dense in order of each group's smallest member. Loss fields are left 0.
Clustering ClusteringFromGroups(const std::vector<std::vector<std::string>>& groups);

struct AnnealConfig {
  int min_clusters = 1;
  int max_clusters = 10;  // capped at the number of clustered nodes
  int restarts_per_k = 5;  // random starts; one heuristic start is added
  double initial_temperature = 1.0;
  double cooling_factor = 0.99;
  int max_iterations = 10000;
  uint64_t seed = 0;
  int workers = 1;
};

absl::Status ValidateAnnealConfig(const AnnealConfig& cfg);

// Sum of positive shifted weights across clusters plus absolute negative
// shifted weights within clusters. Fails if a weighted edge touches a node
// the clustering does not assign.
absl::StatusOr<double> Loss(const Wug& g, const Clustering& c);

// Loss divided by the sum of |shifted weight| over all weighted edges; 0 when
// that sum is 0.
absl::StatusOr<double> NormalizedLoss(const Wug& g, const Clustering& c);

// Deterministic in (g, cfg.seed), independent of cfg.workers. Isolated nodes
// are reported in `isolates`. Restart results are reduced by lowest loss,
// then fewest clusters, then smallest canonical assignment.
Clustering Cluster(const Wug& g, const AnnealConfig& cfg);

struct ConflictSet {
  std::vector<NodePair> positive_across;  // shifted weight > 0
  std::vector<NodePair> negative_within;  // shifted weight < 0
};

// Edges with shifted weight exactly 0 are never conflicts.
absl::StatusOr<ConflictSet> Conflicts(const Wug& g, const Clustering& c);

// Fraction of nodes on which the two clusterings agree under the best
// one-to-one matching of cluster labels. Both must cover the same node set.
absl::StatusOr<double> ClusterAccuracy(const Clustering& reference,
                                       const Clustering& hypothesis);

// Maximum-weight one-to-one assignment of rows to columns; returns the
// column matched to each row, or -1. Exposed for tests.
std::vector<int> MaxWeightMatching(const std::vector<std::vector<double>>& weights);

}  // namespace wug

#endif  // WUG_CLUSTERING_H_
