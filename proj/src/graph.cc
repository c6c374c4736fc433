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
#include <map>

#include "absl/status/status.h"
#include "absl/strings/str_cat.h"

namespace wug {

namespace {

uint64_t EdgeKey(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<uint64_t>(static_cast<uint32_t>(a)) << 32) |
         static_cast<uint32_t>(b);
}

}  // namespace

NodePair CanonicalPair(std::string_view a, std::string_view b) {
  if (b < a) std::swap(a, b);
  return {std::string(a), std::string(b)};
}

Judgment Canonicalized(Judgment j) {
  if (j.node2 < j.node1) std::swap(j.node1, j.node2);
  return j;
}

bool IsSenseNode(std::string_view id) {
  return id.substr(0, kSensePrefix.size()) == kSensePrefix;
}

absl::Status ValidateUsage(const Usage& usage, const std::set<int>& periods) {
  if (usage.identifier.empty()) {
    return absl::InvalidArgumentError("usage with empty identifier");
  }
  if (IsSenseNode(usage.identifier)) {
    return absl::InvalidArgumentError(absl::StrCat(
        "usage identifier '", usage.identifier, "' uses the sense prefix"));
  }
  const int len = static_cast<int>(usage.context.size());
  if (usage.target_start < 0 || usage.target_end > len ||
      usage.target_start >= usage.target_end) {
    return absl::InvalidArgumentError(absl::StrCat(
        "usage '", usage.identifier, "': target span [", usage.target_start,
        ", ", usage.target_end, ") outside context of length ", len));
  }
  if (!periods.contains(usage.grouping)) {
    return absl::InvalidArgumentError(absl::StrCat(
        "usage '", usage.identifier, "': unknown grouping ", usage.grouping));
  }
  return absl::OkStatus();
}

std::optional<double> MedianNonZero(std::span<const int> scores) {
  std::vector<int> s;
  s.reserve(scores.size());
  for (int x : scores) {
    if (x != 0) s.push_back(x);
  }
  if (s.empty()) return std::nullopt;
  std::sort(s.begin(), s.end());
  const size_t mid = s.size() / 2;
  if (s.size() % 2 == 1) return static_cast<double>(s[mid]);
  return (s[mid - 1] + s[mid]) / 2.0;
}

std::optional<double> MedianNonZero(std::span<const Judgment> judgments) {
  std::vector<int> scores;
  scores.reserve(judgments.size());
  for (const Judgment& j : judgments) scores.push_back(j.score);
  return MedianNonZero(scores);
}

Wug Wug::Assemble(std::vector<Node> nodes, std::vector<Edge> edges,
                  std::set<int> periods, bool usg) {
  Wug g;
  g.nodes_ = std::move(nodes);
  g.periods_ = std::move(periods);
  g.usg_ = usg;
  for (int i = 0; i < g.num_nodes(); ++i) g.index_[g.nodes_[i].id] = i;
  std::sort(edges.begin(), edges.end(), [&g](const Edge& a, const Edge& b) {
    const auto& na = g.nodes_;
    return std::tie(na[a.u].id, na[a.v].id) < std::tie(na[b.u].id, na[b.v].id);
  });
  g.edges_ = std::move(edges);
  g.incident_.assign(g.nodes_.size(), {});
  for (int e = 0; e < static_cast<int>(g.edges_.size()); ++e) {
    Edge& edge = g.edges_[e];
    edge.weight = MedianNonZero(edge.judgments);
    g.incident_[edge.u].push_back(e);
    g.incident_[edge.v].push_back(e);
    g.edge_index_[EdgeKey(edge.u, edge.v)] = e;
  }
  return g;
}

absl::StatusOr<Wug> Wug::BuildImpl(std::vector<Node> nodes,
                                   std::span<const Judgment> judgments,
                                   std::set<int> periods, bool usg) {
  std::sort(nodes.begin(), nodes.end(),
            [](const Node& a, const Node& b) { return a.id < b.id; });
  std::unordered_map<std::string, int> index;
  for (int i = 0; i < static_cast<int>(nodes.size()); ++i) {
    if (!index.emplace(nodes[i].id, i).second) {
      return absl::InvalidArgumentError(
          absl::StrCat("duplicate identifier '", nodes[i].id, "'"));
    }
  }

  std::map<std::pair<int, int>, std::vector<Judgment>> grouped;
  for (const Judgment& raw : judgments) {
    Judgment j = Canonicalized(raw);
    auto a = index.find(j.node1);
    if (a == index.end()) {
      return absl::InvalidArgumentError(
          absl::StrCat("judgment references unknown node '", j.node1, "'"));
    }
    auto b = index.find(j.node2);
    if (b == index.end()) {
      return absl::InvalidArgumentError(
          absl::StrCat("judgment references unknown node '", j.node2, "'"));
    }
    if (a->second == b->second) {
      return absl::InvalidArgumentError(
          absl::StrCat("self-pair judgment on '", j.node1, "'"));
    }
    if (j.score < 0 || j.score > 4) {
      return absl::InvalidArgumentError(
          absl::StrCat("score ", j.score, " on (", j.node1, ", ", j.node2,
                       ") outside 0..4"));
    }
    if (usg && (nodes[a->second].kind == nodes[b->second].kind)) {
      return absl::InvalidArgumentError(
          absl::StrCat("usage-sense graph edge (", j.node1, ", ", j.node2,
                       ") is not a usage-sense pair"));
    }
    grouped[{a->second, b->second}].push_back(std::move(j));
  }

  std::vector<Edge> edges;
  edges.reserve(grouped.size());
  for (auto& [key, js] : grouped) {
    edges.push_back(Edge{key.first, key.second, std::move(js), std::nullopt});
  }
  return Assemble(std::move(nodes), std::move(edges), std::move(periods), usg);
}

absl::StatusOr<Wug> Wug::Build(std::span<const Usage> usages,
                               std::span<const Judgment> judgments,
                               const GraphOptions& options) {
  std::vector<Node> nodes;
  nodes.reserve(usages.size());
  for (const Usage& u : usages) {
    if (absl::Status s = ValidateUsage(u, options.periods); !s.ok()) return s;
    nodes.push_back(Node{u.identifier, NodeKind::kUsage, u.grouping});
  }
  return BuildImpl(std::move(nodes), judgments, options.periods, false);
}

absl::StatusOr<Wug> Wug::BuildUsg(std::span<const Usage> usages,
                                  std::span<const SenseDescription> senses,
                                  std::span<const Judgment> judgments,
                                  const GraphOptions& options) {
  std::vector<Node> nodes;
  nodes.reserve(usages.size() + senses.size());
  std::set<std::string_view> usage_ids;
  for (const Usage& u : usages) {
    if (absl::Status s = ValidateUsage(u, options.periods); !s.ok()) return s;
    nodes.push_back(Node{u.identifier, NodeKind::kUsage, u.grouping});
    usage_ids.insert(u.identifier);
  }
  for (const SenseDescription& s : senses) {
    if (s.sense_id.empty()) {
      return absl::InvalidArgumentError("sense with empty sense_id");
    }
    if (usage_ids.contains(s.sense_id)) {
      return absl::InvalidArgumentError(absl::StrCat(
          "sense id '", s.sense_id, "' collides with a usage identifier"));
    }
    nodes.push_back(Node{s.NodeId(), NodeKind::kSense, 0});
  }
  return BuildImpl(std::move(nodes), judgments, options.periods, true);
}

std::optional<int> Wug::IndexOf(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const Edge* Wug::FindEdge(int a, int b) const {
  auto it = edge_index_.find(EdgeKey(a, b));
  return it == edge_index_.end() ? nullptr : &edges_[it->second];
}

const Edge* Wug::FindEdge(std::string_view a, std::string_view b) const {
  auto ia = IndexOf(a);
  auto ib = IndexOf(b);
  if (!ia || !ib) return nullptr;
  return FindEdge(*ia, *ib);
}

std::optional<double> Wug::Weight(std::string_view a,
                                  std::string_view b) const {
  const Edge* e = FindEdge(a, b);
  if (e == nullptr) return std::nullopt;
  return e->weight;
}

std::vector<Judgment> Wug::AllJudgments() const {
  std::vector<Judgment> out;
  for (const Edge& e : edges_) {
    out.insert(out.end(), e.judgments.begin(), e.judgments.end());
  }
  return out;
}

namespace {

// Keeps the nodes with keep[i] set and the edges between them.
Wug Restrict(const Wug& g, const std::vector<bool>& keep) {
  std::vector<int> remap(g.num_nodes(), -1);
  std::vector<Node> nodes;
  for (int i = 0; i < g.num_nodes(); ++i) {
    if (!keep[i]) continue;
    remap[i] = static_cast<int>(nodes.size());
    nodes.push_back(g.nodes()[i]);
  }
  std::vector<Edge> edges;
  for (const Edge& e : g.edges()) {
    if (remap[e.u] < 0 || remap[e.v] < 0) continue;
    Edge copy = e;
    copy.u = remap[e.u];
    copy.v = remap[e.v];
    edges.push_back(std::move(copy));
  }
  return Wug::Assemble(std::move(nodes), std::move(edges), g.periods(),
                       g.is_usg());
}

}  // namespace

FilterResult FilterZeroNodes(const Wug& g) {
  FilterResult result{g, {}};
  while (true) {
    const Wug& cur = result.graph;
    std::vector<bool> keep(cur.num_nodes(), true);
    bool any = false;
    for (int i = 0; i < cur.num_nodes(); ++i) {
      int zeros = 0;
      int total = 0;
      for (int e : cur.Incident(i)) {
        for (const Judgment& j : cur.edges()[e].judgments) {
          ++total;
          if (j.score == 0) ++zeros;
        }
      }
      if (2 * zeros > total) {
        keep[i] = false;
        any = true;
        result.removed.push_back(cur.nodes()[i].id);
      }
    }
    if (!any) break;
    result.graph = Restrict(cur, keep);
  }
  std::sort(result.removed.begin(), result.removed.end());
  return result;
}

absl::StatusOr<Wug> SubgraphByPeriod(const Wug& g, int grouping) {
  if (!g.periods().contains(grouping)) {
    return absl::InvalidArgumentError(
        absl::StrCat("unknown grouping ", grouping));
  }
  std::vector<bool> keep(g.num_nodes());
  for (int i = 0; i < g.num_nodes(); ++i) {
    const Node& n = g.nodes()[i];
    keep[i] = n.kind == NodeKind::kSense || n.grouping == grouping;
  }
  return Restrict(g, keep);
}

absl::StatusOr<std::vector<NodePair>> BuildUsgPairs(
    std::span<const Usage> usages, std::span<const SenseDescription> senses) {
  if (senses.empty()) {
    return absl::InvalidArgumentError("usage-sense pairs need at least one sense");
  }
  std::set<NodePair> pairs;
  for (const Usage& u : usages) {
    for (const SenseDescription& s : senses) {
      pairs.insert(CanonicalPair(u.identifier, s.NodeId()));
    }
  }
  if (pairs.size() != usages.size() * senses.size()) {
    return absl::InvalidArgumentError("duplicate usage or sense identifiers");
  }
  return std::vector<NodePair>(pairs.begin(), pairs.end());
}

}  // namespace wug
