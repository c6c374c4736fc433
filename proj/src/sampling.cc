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

#include "wug/sampling.h"

#include <algorithm>
#include <cmath>

#include "absl/status/status.h"
#include "absl/strings/str_cat.h"

namespace wug {

const char* ProvenanceName(Provenance p) {
  switch (p) {
    case Provenance::kExploration:
      return "exploration";
    case Provenance::kCombination:
      return "combination";
    case Provenance::kCorroboration:
      return "corroboration";
    case Provenance::kDisagreement:
      return "disagreement";
    case Provenance::kConflict:
      return "conflict";
  }
  return "?";
}

absl::StatusOr<Provenance> ParseProvenance(std::string_view name) {
  for (Provenance p :
       {Provenance::kExploration, Provenance::kCombination,
        Provenance::kCorroboration, Provenance::kDisagreement,
        Provenance::kConflict}) {
    if (name == ProvenanceName(p)) return p;
  }
  return absl::InvalidArgumentError(absl::StrCat("unknown provenance '", std::string(name), "'"));
}

size_t AnnotationBatch::NumAssignments() const {
  size_t n = 0;
  for (const auto& [pair, anns] : assignments) n += anns.size();
  return n;
}

std::map<Provenance, int> AnnotationBatch::Composition() const {
  std::map<Provenance, int> out;
  for (const SampledPair& p : pairs) ++out[p.provenance];
  return out;
}

absl::Status ValidateSamplingConfig(const SamplingConfig& cfg) {
  auto in_unit = [](double f) { return f > 0.0 && f <= 1.0; };
  if (!in_unit(cfg.node_fraction_round1) || !in_unit(cfg.edge_fraction)) {
    return absl::InvalidArgumentError("sampling fractions must lie in (0, 1]");
  }
  if (cfg.multi_annotation_fraction < 0.0 || cfg.multi_annotation_fraction > 1.0) {
    return absl::InvalidArgumentError(
        "multi_annotation_fraction must lie in [0, 1]");
  }
  if (cfg.corroboration_count < 0) {
    return absl::InvalidArgumentError("corroboration_count must be >= 0");
  }
  return absl::OkStatus();
}

namespace {

// ceil() that ignores representation error in products like 0.3 * 190.
int CeilCount(double x) { return static_cast<int>(std::ceil(x - 1e-9)); }

std::vector<std::string> UsageIds(const Wug& g) {
  std::vector<std::string> ids;
  for (const Node& n : g.nodes()) {
    if (n.kind == NodeKind::kUsage) ids.push_back(n.id);
  }
  return ids;
}

// Members of every multi-cluster, sorted.
std::map<int, std::vector<std::string>> MultiClusterMembers(
    const RoundState& state) {
  std::map<int, std::vector<std::string>> out;
  for (const auto& [id, label] : state.clustering.assignment) {
    if (state.multi_clusters.contains(label) && !IsSenseNode(id)) {
      out[label].push_back(id);
    }
  }
  return out;
}

std::vector<NodePair> UnannotatedPairs(const Wug& g,
                                       const std::vector<std::string>& a,
                                       const std::vector<std::string>& b) {
  std::vector<NodePair> out;
  for (const std::string& x : a) {
    for (const std::string& y : b) {
      if (x != y && !g.IsAnnotated(x, y)) out.push_back(CanonicalPair(x, y));
    }
  }
  return out;
}

}  // namespace

int WalkEdgeBudget(int nodes, double fraction) {
  if (nodes < 2) return 0;
  const int complete = nodes * (nodes - 1) / 2;
  const int target = CeilCount(fraction * complete);
  return std::min(complete, std::max(nodes - 1, target));
}

std::vector<NodePair> RandomWalkPairs(const std::vector<std::string>& nodes,
                                      int budget, Rng& rng) {
  const int s = static_cast<int>(nodes.size());
  if (s < 2) return {};
  budget = std::clamp(budget, s - 1, s * (s - 1) / 2);

  std::vector<std::vector<bool>> emitted(s, std::vector<bool>(s, false));
  std::vector<int> degree(s, 0);  // emitted edges per node
  std::vector<bool> visited(s, false);
  std::vector<NodePair> out;
  auto emit = [&](int a, int b) {
    emitted[a][b] = emitted[b][a] = true;
    ++degree[a];
    ++degree[b];
    out.push_back(CanonicalPair(nodes[a], nodes[b]));
  };

  int cur = static_cast<int>(rng.Uniform(s));
  visited[cur] = true;
  int num_visited = 1;
  std::vector<int> candidates;
  while (static_cast<int>(out.size()) < budget) {
    candidates.clear();
    if (num_visited < s) {
      for (int j = 0; j < s; ++j) {
        if (!visited[j]) candidates.push_back(j);
      }
      const int next = rng.Pick(candidates);
      emit(cur, next);
      visited[next] = true;
      ++num_visited;
      cur = next;
      continue;
    }
    for (int j = 0; j < s; ++j) {
      if (j != cur && !emitted[cur][j]) candidates.push_back(j);
    }
    if (candidates.empty()) {
      for (int j = 0; j < s; ++j) {
        if (degree[j] < s - 1) candidates.push_back(j);
      }
      cur = rng.Pick(candidates);
      continue;
    }
    const int next = rng.Pick(candidates);
    emit(cur, next);
    cur = next;
  }
  return out;
}

RoundState MakeRoundState(int round, Wug graph, Clustering clustering) {
  RoundState s;
  s.round = round;
  s.graph = std::move(graph);
  s.clustering = std::move(clustering);

  std::map<int, int> usage_count;
  for (const auto& [id, label] : s.clustering.assignment) {
    if (!IsSenseNode(id)) ++usage_count[label];
  }
  for (const auto& [label, count] : usage_count) {
    if (count >= 2) s.multi_clusters.insert(label);
  }

  for (const std::string& u : UsageIds(s.graph)) {
    auto it = s.clustering.assignment.find(u);
    if (it != s.clustering.assignment.end() &&
        s.multi_clusters.contains(it->second)) {
      continue;
    }
    std::set<int>& compared = s.compared[u];
    const int idx = *s.graph.IndexOf(u);
    for (int e : s.graph.Incident(idx)) {
      const Edge& edge = s.graph.edges()[e];
      const std::string& other =
          s.graph.nodes()[edge.u == idx ? edge.v : edge.u].id;
      auto o = s.clustering.assignment.find(other);
      if (o != s.clustering.assignment.end() &&
          s.multi_clusters.contains(o->second)) {
        compared.insert(o->second);
      }
    }
    s.unassigned.push_back(u);
    if (compared.size() == s.multi_clusters.size()) {
      s.non_assignable.push_back(u);
    }
  }
  return s;
}

absl::StatusOr<std::vector<NodePair>> Round1Pairs(
    const std::vector<std::string>& usage_ids, const SamplingConfig& cfg,
    Rng& rng) {
  const int n = static_cast<int>(usage_ids.size());
  if (n < 2) {
    return absl::InvalidArgumentError(
        absl::StrCat("round 1 needs at least 2 usages, got ", n));
  }
  if (absl::Status s = ValidateSamplingConfig(cfg); !s.ok()) return s;
  const int take =
      std::min(n, std::max(2, CeilCount(cfg.node_fraction_round1 * n)));
  std::vector<std::string> pool = usage_ids;
  std::sort(pool.begin(), pool.end());
  rng.Shuffle(pool);
  pool.resize(take);
  std::sort(pool.begin(), pool.end());
  return RandomWalkPairs(pool, WalkEdgeBudget(take, cfg.edge_fraction), rng);
}

absl::StatusOr<AnnotationBatch> Round1Sample(
    const std::vector<std::string>& usage_ids,
    const std::vector<std::string>& annotators, const SamplingConfig& cfg) {
  if (annotators.empty()) {
    return absl::InvalidArgumentError("no annotators");
  }
  Rng rng(DeriveSeed(cfg.seed, {1}));
  auto pairs = Round1Pairs(usage_ids, cfg, rng);
  if (!pairs.ok()) return pairs.status();
  AnnotationBatch batch;
  for (NodePair& p : *pairs) {
    batch.pairs.push_back({std::move(p), Provenance::kExploration});
  }
  AssignAnnotators(batch, annotators, cfg.multi_annotation_fraction, rng);
  return batch;
}

std::vector<NodePair> CombinationStep(const RoundState& state, Rng& rng) {
  const auto members = MultiClusterMembers(state);
  std::vector<NodePair> out;
  for (const std::string& u : state.unassigned) {
    const std::set<int>& done = state.compared.at(u);
    for (const auto& [label, ids] : members) {
      if (done.contains(label)) continue;
      out.push_back(CanonicalPair(u, rng.Pick(ids)));
    }
  }
  return out;
}

std::vector<NodePair> ExplorationStep(const RoundState& state,
                                      const SamplingConfig& cfg, Rng& rng) {
  const int s = static_cast<int>(state.non_assignable.size());
  if (s < 2) return {};
  return RandomWalkPairs(state.non_assignable,
                         WalkEdgeBudget(s, cfg.edge_fraction), rng);
}

std::vector<NodePair> CorroborationSample(const RoundState& state,
                                          const SamplingConfig& cfg,
                                          Rng& rng) {
  std::vector<NodePair> out;
  std::set<NodePair> seen;
  const std::vector<std::string> usages = UsageIds(state.graph);
  std::vector<NodePair> pool;
  for (size_t i = 0; i < usages.size(); ++i) {
    for (size_t j = i + 1; j < usages.size(); ++j) {
      if (!state.graph.IsAnnotated(usages[i], usages[j])) {
        pool.push_back(CanonicalPair(usages[i], usages[j]));
      }
    }
  }
  const size_t take =
      std::min(pool.size(), static_cast<size_t>(cfg.corroboration_count));
  for (size_t i = 0; i < take; ++i) {
    std::swap(pool[i], pool[i + rng.Uniform(pool.size() - i)]);
    seen.insert(pool[i]);
    out.push_back(pool[i]);
  }

  const auto members = MultiClusterMembers(state);
  for (auto a = members.begin(); a != members.end(); ++a) {
    for (auto b = std::next(a); b != members.end(); ++b) {
      std::vector<NodePair> between =
          UnannotatedPairs(state.graph, a->second, b->second);
      std::erase_if(between, [&](const NodePair& p) { return seen.contains(p); });
      if (between.empty()) continue;
      const NodePair& p = rng.Pick(between);
      seen.insert(p);
      out.push_back(p);
    }
  }
  return out;
}

std::vector<NodePair> DisagreementEdges(const Wug& g) {
  std::vector<NodePair> out;
  for (const Edge& e : g.edges()) {
    if (!e.has_weight()) continue;
    int lo = 5, hi = -1;
    for (const Judgment& j : e.judgments) {
      if (j.score == 0) continue;
      lo = std::min(lo, j.score);
      hi = std::max(hi, j.score);
    }
    const bool spread = hi - lo >= 2;
    const bool undecided =
        std::abs(*e.weight - kWeightThreshold) <= kDisagreementEpsilon;
    if (spread || undecided) {
      out.push_back({g.nodes()[e.u].id, g.nodes()[e.v].id});
    }
  }
  return out;
}

std::vector<NodePair> ConflictResample(const RoundState& state, Rng& rng) {
  auto conflicts = Conflicts(state.graph, state.clustering);
  if (!conflicts.ok()) return {};
  std::set<std::string> endpoints;
  for (const auto* list :
       {&conflicts->positive_across, &conflicts->negative_within}) {
    for (const auto& [a, b] : *list) {
      endpoints.insert(a);
      endpoints.insert(b);
    }
  }
  const std::vector<std::string> usages = UsageIds(state.graph);
  std::vector<NodePair> out;
  std::set<NodePair> seen;
  for (const std::string& v : endpoints) {
    std::vector<NodePair> candidates;
    for (const std::string& u : usages) {
      if (u == v || state.graph.IsAnnotated(u, v)) continue;
      NodePair p = CanonicalPair(u, v);
      if (!seen.contains(p)) candidates.push_back(std::move(p));
    }
    if (candidates.empty()) continue;
    const NodePair& p = rng.Pick(candidates);
    seen.insert(p);
    out.push_back(p);
  }
  return out;
}

bool StoppingConditionMet(const RoundState& state, const SamplingConfig& cfg) {
  if (state.unassigned.size() != state.non_assignable.size()) return false;
  const auto& na = state.non_assignable;
  for (size_t i = 0; i < na.size(); ++i) {
    for (size_t j = i + 1; j < na.size(); ++j) {
      if (!state.graph.IsAnnotated(na[i], na[j])) return false;
    }
  }
  Rng rng(DeriveSeed(cfg.seed, {static_cast<uint64_t>(state.round), 99}));
  if (!ConflictResample(state, rng).empty()) return false;
  const auto members = MultiClusterMembers(state);
  for (auto a = members.begin(); a != members.end(); ++a) {
    for (auto b = std::next(a); b != members.end(); ++b) {
      bool linked = false;
      for (const std::string& x : a->second) {
        for (const std::string& y : b->second) {
          if (state.graph.IsAnnotated(x, y)) {
            linked = true;
            break;
          }
        }
        if (linked) break;
      }
      if (!linked) return false;
    }
  }
  return true;
}

void AssignAnnotators(AnnotationBatch& batch,
                      const std::vector<std::string>& annotators,
                      double multi_annotation_fraction, Rng& rng) {
  std::map<std::string, int> load;
  for (const std::string& a : annotators) load[a] = 0;
  for (const auto& [pair, anns] : batch.assignments) {
    for (const std::string& a : anns) ++load[a];
  }
  std::vector<size_t> open;
  for (size_t i = 0; i < batch.pairs.size(); ++i) {
    if (!batch.assignments.contains(batch.pairs[i].pair)) open.push_back(i);
  }
  rng.Shuffle(open);
  const size_t doubles =
      annotators.size() < 2
          ? 0
          : static_cast<size_t>(
                std::llround(multi_annotation_fraction * open.size()));

  // Least-loaded annotator, random among ties.
  auto pick = [&](const std::string* exclude) {
    int best = INT32_MAX;
    std::vector<const std::string*> ties;
    for (const std::string& a : annotators) {
      if (exclude != nullptr && a == *exclude) continue;
      if (load[a] < best) {
        best = load[a];
        ties.clear();
      }
      if (load[a] == best) ties.push_back(&a);
    }
    const std::string* chosen = ties[rng.Uniform(ties.size())];
    ++load[*chosen];
    return chosen;
  };

  for (size_t k = 0; k < open.size(); ++k) {
    std::vector<std::string>& anns = batch.assignments[batch.pairs[open[k]].pair];
    const std::string* first = pick(nullptr);
    anns.push_back(*first);
    if (k < doubles) anns.push_back(*pick(first));
  }
}

absl::StatusOr<AnnotationBatch> NextRound(
    const RoundState& state, const std::vector<std::string>& annotators,
    const SamplingConfig& cfg, const NextRoundOptions& options) {
  if (state.round < 1) {
    return absl::FailedPreconditionError("next round needs a clustered round");
  }
  if (annotators.empty()) return absl::InvalidArgumentError("no annotators");
  if (absl::Status s = ValidateSamplingConfig(cfg); !s.ok()) return s;

  Rng rng(DeriveSeed(cfg.seed, {static_cast<uint64_t>(state.round + 1)}));
  AnnotationBatch batch;
  std::set<NodePair> seen;
  auto add_new = [&](std::vector<NodePair> pairs, Provenance prov) {
    for (NodePair& p : pairs) {
      if (state.graph.IsAnnotated(p.first, p.second)) continue;
      if (!seen.insert(p).second) continue;
      batch.pairs.push_back({std::move(p), prov});
    }
  };
  add_new(CombinationStep(state, rng), Provenance::kCombination);
  add_new(ExplorationStep(state, cfg, rng), Provenance::kExploration);
  add_new(CorroborationSample(state, cfg, rng), Provenance::kCorroboration);

  for (NodePair& p : DisagreementEdges(state.graph)) {
    if (seen.contains(p)) continue;
    const Edge* e = state.graph.FindEdge(p.first, p.second);
    std::set<std::string> judged;
    bool recent = options.disagreement_round == 0;
    for (const Judgment& j : e->judgments) {
      judged.insert(j.annotator);
      recent = recent || j.round == options.disagreement_round;
    }
    if (!recent) continue;
    std::vector<std::string> eligible;
    for (const std::string& a : annotators) {
      if (!judged.contains(a)) eligible.push_back(a);
    }
    if (eligible.empty()) {
      batch.warnings.push_back(absl::StrCat("disagreement pair (", p.first, ", ",
                                            p.second,
                                            ") skipped: no annotator left"));
      continue;
    }
    seen.insert(p);
    batch.assignments[p] = {rng.Pick(eligible)};
    batch.pairs.push_back({std::move(p), Provenance::kDisagreement});
  }

  add_new(ConflictResample(state, rng), Provenance::kConflict);
  AssignAnnotators(batch, annotators, cfg.multi_annotation_fraction, rng);
  return batch;
}

WordFlag FlagWord(const Wug& g, int pending_pairs, const WordFlagConfig& cfg) {
  WordFlag f;
  int zeros = 0, total = 0;
  for (const Edge& e : g.edges()) {
    for (const Judgment& j : e.judgments) {
      ++total;
      zeros += j.score == 0;
    }
  }
  f.zero_fraction = total == 0 ? 0.0 : static_cast<double>(zeros) / total;
  f.pending_pairs = pending_pairs;
  if (f.zero_fraction > cfg.max_zero_fraction) {
    f.flagged = true;
    f.reason = absl::StrCat("zero judgments make up ", f.zero_fraction,
                            " of all judgments");
  } else if (pending_pairs > cfg.max_pending_pairs) {
    f.flagged = true;
    f.reason = absl::StrCat(pending_pairs, " pairs still to annotate");
  }
  return f;
}

}  // namespace wug
