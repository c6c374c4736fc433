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

// Word usage graphs: usages (and, for usage-sense graphs, sense descriptions)
// connected by edges carrying human relatedness judgments on the 0-4 scale.
// Graphs are immutable once built and can be shared between threads.

#ifndef WUG_GRAPH_H_
#define WUG_GRAPH_H_

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "absl/status/statusor.h"

namespace wug {

// Prefix that turns a sense id into a graph node id.
inline constexpr std::string_view kSensePrefix = "sense:";

// Weights at or above this value are "positive" edges.
inline constexpr double kWeightThreshold = 2.5;

struct Usage {
  std::string identifier;
  std::string lemma;
  std::string pos;
  int grouping = 1;
  std::string context;
  // Character offsets [target_start, target_end) into `context`.
  int target_start = 0;
  int target_end = 0;
  std::optional<int> date;
};

struct SenseDescription {
  std::string sense_id;
  std::string lemma;
  std::string definition;

  std::string NodeId() const { return std::string(kSensePrefix) + sense_id; }
};

struct Judgment {
  std::string node1;
  std::string node2;
  std::string annotator;
  int score = 0;  // 0 = cannot decide, 1 = unrelated ... 4 = identical
  std::string comment;
  int round = 1;
};

using NodePair = std::pair<std::string, std::string>;

// Lexicographic order on identifiers.
NodePair CanonicalPair(std::string_view a, std::string_view b);

// Puts node1/node2 in canonical order.
Judgment Canonicalized(Judgment j);

bool IsSenseNode(std::string_view id);

// Checks the per-usage invariants: nonempty id, target span inside the
// context, grouping in `periods`.
absl::Status ValidateUsage(const Usage& usage, const std::set<int>& periods);

struct ShiftedWeight {
  double value = 0.0;
  bool IsPositive() const { return value >= 0.0; }
};

// Maps a median weight in [1, 4] onto [-1.5, 1.5].
inline ShiftedWeight Shift(double weight) {
  return ShiftedWeight{weight - kWeightThreshold};
}

// Median of the non-zero scores; absent if every score is 0 or the list is
// empty. Even-sized multisets use the midpoint of the two central values.
std::optional<double> MedianNonZero(std::span<const Judgment> judgments);
std::optional<double> MedianNonZero(std::span<const int> scores);

enum class NodeKind { kUsage, kSense };

struct Node {
  std::string id;
  NodeKind kind = NodeKind::kUsage;
  int grouping = 0;  // 0 for sense nodes
};

struct Edge {
  int u = 0;  // nodes[u].id < nodes[v].id
  int v = 0;
  std::vector<Judgment> judgments;
  std::optional<double> weight;

  bool has_weight() const { return weight.has_value(); }
  // Requires has_weight().
  double shifted() const { return Shift(*weight).value; }
};

struct GraphOptions {
  std::set<int> periods = {1, 2};
};

class Wug {
 public:
  Wug() = default;

  // Usage-usage graph. Every usage becomes a node; one edge per judged pair.
  static absl::StatusOr<Wug> Build(std::span<const Usage> usages,
                                   std::span<const Judgment> judgments,
                                   const GraphOptions& options = {});

  // Usage-sense graph; judgments must link a usage with a sense node.
  static absl::StatusOr<Wug> BuildUsg(
      std::span<const Usage> usages, std::span<const SenseDescription> senses,
      std::span<const Judgment> judgments, const GraphOptions& options = {});

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::set<int>& periods() const { return periods_; }
  bool is_usg() const { return usg_; }
  int num_nodes() const { return static_cast<int>(nodes_.size()); }

  std::optional<int> IndexOf(std::string_view id) const;
  // Edge indices incident to node `index`.
  const std::vector<int>& Incident(int index) const { return incident_[index]; }

  const Edge* FindEdge(int a, int b) const;
  const Edge* FindEdge(std::string_view a, std::string_view b) const;
  std::optional<double> Weight(std::string_view a, std::string_view b) const;

  // True if the pair carries at least one judgment (including 0s).
  bool IsAnnotated(std::string_view a, std::string_view b) const {
    return FindEdge(a, b) != nullptr;
  }

  // All judgments, in edge order.
  std::vector<Judgment> AllJudgments() const;

  // Re-indexes already validated parts (edge endpoints refer to `nodes`).
  // Used by the graph transformations below.
  static Wug Assemble(std::vector<Node> nodes, std::vector<Edge> edges,
                      std::set<int> periods, bool usg);

 private:
  static absl::StatusOr<Wug> BuildImpl(std::vector<Node> nodes,
                                       std::span<const Judgment> judgments,
                                       std::set<int> periods, bool usg);

  std::vector<Node> nodes_;
  std::vector<Edge> edges_;
  std::vector<std::vector<int>> incident_;
  std::unordered_map<std::string, int> index_;
  std::unordered_map<uint64_t, int> edge_index_;
  std::set<int> periods_;
  bool usg_ = false;
};

struct FilterResult {
  Wug graph;
  std::vector<std::string> removed;  // sorted
};

// Removes every node whose 0-judgments make up strictly more than half of its
// judgments, together with incident edges. Repeats until no node qualifies,
// so the result is a fixpoint.
FilterResult FilterZeroNodes(const Wug& g);

// Usage nodes of one period and the edges among them. Sense nodes are kept in
// every period subgraph.
absl::StatusOr<Wug> SubgraphByPeriod(const Wug& g, int grouping);

// Full bipartite usage x sense pair set in canonical order.
absl::StatusOr<std::vector<NodePair>> BuildUsgPairs(
    std::span<const Usage> usages, std::span<const SenseDescription> senses);

}  // namespace wug

#endif  // WUG_GRAPH_H_
