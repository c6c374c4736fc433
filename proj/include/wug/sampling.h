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

// Round-based edge sampling. Round 1 annotates a random walk over a small
// usage sample; later rounds compare unclustered usages against the current
// multi-clusters (combination), walk among usages that fit no multi-cluster
// (exploration), and add corroboration, disagreement and conflict pairs.

#ifndef WUG_SAMPLING_H_
#define WUG_SAMPLING_H_

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "absl/status/statusor.h"
#include "wug/clustering.h"
#include "wug/graph.h"
#include "wug/rng.h"

namespace wug {

enum class Provenance {
  kExploration,
  kCombination,
  kCorroboration,
  kDisagreement,
  kConflict,
};

const char* ProvenanceName(Provenance p);
absl::StatusOr<Provenance> ParseProvenance(std::string_view name);

struct SampledPair {
  NodePair pair;
  Provenance provenance = Provenance::kExploration;
};

struct AnnotationBatch {
  std::vector<SampledPair> pairs;
  std::map<NodePair, std::vector<std::string>> assignments;
  std::vector<std::string> warnings;

  size_t NumAssignments() const;
  // Counts per provenance.
  std::map<Provenance, int> Composition() const;
};

struct SamplingConfig {
  double node_fraction_round1 = 0.10;
  double edge_fraction = 0.30;
  int corroboration_count = 5;
  double multi_annotation_fraction = 0.5;
  uint64_t seed = 0;
};

absl::Status ValidateSamplingConfig(const SamplingConfig& cfg);

// Number of distinct edges a walk over `nodes` nodes emits:
// max(nodes - 1, ceil(fraction * nodes * (nodes - 1) / 2)), capped at the
// complete graph. The lower bound keeps the walk spanning.
int WalkEdgeBudget(int nodes, double fraction);

// Random walk over the complete graph on `nodes`, emitting `budget` distinct
// canonical pairs that connect all of them. Steps prefer unvisited nodes;
// once every node is visited they prefer unemitted edges, jumping to a node
// with unemitted edges when the current one is saturated.
std::vector<NodePair> RandomWalkPairs(const std::vector<std::string>& nodes,
                                      int budget, Rng& rng);

// Snapshot of a lemma after clustering, input to every later-round step.
struct RoundState {
  int round = 1;  // the round that was just clustered
  Wug graph;
  Clustering clustering;
  std::set<int> multi_clusters;  // clusters with >= 2 usages
  std::vector<std::string> unassigned;      // usages in no multi-cluster
  std::vector<std::string> non_assignable;  // unassigned, compared to all
  // For each unassigned usage, the multi-clusters it has been compared to.
  std::map<std::string, std::set<int>> compared;
};

// Derives the multi-cluster bookkeeping. A usage has been compared to a
// cluster if any annotated edge links it to a current member.
RoundState MakeRoundState(int round, Wug graph, Clustering clustering);

// Selects ceil(node_fraction * n) usages (at least 2) and walks over them.
absl::StatusOr<std::vector<NodePair>> Round1Pairs(
    const std::vector<std::string>& usage_ids, const SamplingConfig& cfg,
    Rng& rng);

// Round-1 batch with annotator assignments.
absl::StatusOr<AnnotationBatch> Round1Sample(
    const std::vector<std::string>& usage_ids,
    const std::vector<std::string>& annotators, const SamplingConfig& cfg);

// One pair per (unassigned usage, multi-cluster it was not compared to),
// pairing it with a random member of the cluster.
std::vector<NodePair> CombinationStep(const RoundState& state, Rng& rng);

// Random walk among the non-assignable usages; empty for fewer than 2.
std::vector<NodePair> ExplorationStep(const RoundState& state,
                                      const SamplingConfig& cfg, Rng& rng);

// corroboration_count random unannotated usage pairs plus one random
// unannotated pair between every two multi-clusters.
std::vector<NodePair> CorroborationSample(const RoundState& state,
                                          const SamplingConfig& cfg, Rng& rng);

// Edges whose non-zero scores span >= 2 points or whose median lies within
// kDisagreementEpsilon of 2.5.
inline constexpr double kDisagreementEpsilon = 0.25;
std::vector<NodePair> DisagreementEdges(const Wug& g);

// For every endpoint of a conflicting edge, one new unannotated pair to a
// uniformly chosen usage. Deduplicated.
std::vector<NodePair> ConflictResample(const RoundState& state, Rng& rng);

// True if nothing but corroboration is left to sample: no combination,
// exploration or conflict pairs, and every two multi-clusters are linked by
// an annotated edge.
bool StoppingConditionMet(const RoundState& state, const SamplingConfig& cfg);

struct NextRoundOptions {
  // Disagreement pairs are taken only from edges judged in this round (0 =
  // any round).
  int disagreement_round = 0;
};

// Union of all steps for the next round. Pairs that are already annotated
// are dropped, except disagreement pairs which go to annotators who have
// not judged them yet. A multi_annotation_fraction share of the remaining
// pairs is assigned to two annotators, the rest to one.
absl::StatusOr<AnnotationBatch> NextRound(
    const RoundState& state, const std::vector<std::string>& annotators,
    const SamplingConfig& cfg, const NextRoundOptions& options = {});

// Assigns annotators to non-disagreement pairs of `batch` in place.
void AssignAnnotators(AnnotationBatch& batch,
                      const std::vector<std::string>& annotators,
                      double multi_annotation_fraction, Rng& rng);

// Word-level removal report. Flags, never deletes.
struct WordFlagConfig {
  double max_zero_fraction = 0.20;
  int max_pending_pairs = 2000;
};

struct WordFlag {
  bool flagged = false;
  double zero_fraction = 0.0;
  int pending_pairs = 0;
  std::string reason;
};

WordFlag FlagWord(const Wug& g, int pending_pairs, const WordFlagConfig& cfg);

}  // namespace wug

#endif  // WUG_SAMPLING_H_
