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

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <thread>
#include <tuple>
#include <utility>

#include "absl/status/status.h"
#include "absl/strings/str_cat.h"
#include "wug/rng.h"

namespace wug {

int Clustering::num_clusters() const {
  int c = 0;
  for (const auto& [id, label] : assignment) c = std::max(c, label + 1);
  return c;
}

std::vector<std::vector<std::string>> Clustering::Clusters() const {
  std::vector<std::vector<std::string>> out(num_clusters());
  for (const auto& [id, label] : assignment) out[label].push_back(id);
  return out;
}

Clustering ClusteringFromGroups(
    const std::vector<std::vector<std::string>>& groups) {
  std::vector<std::vector<std::string>> sorted;
  for (auto g : groups) {
    if (g.empty()) continue;
    std::sort(g.begin(), g.end());
    sorted.push_back(std::move(g));
  }
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });
  Clustering c;
  for (int i = 0; i < static_cast<int>(sorted.size()); ++i) {
    for (const std::string& id : sorted[i]) c.assignment[id] = i;
  }
  return c;
}

absl::Status ValidateAnnealConfig(const AnnealConfig& cfg) {
  if (cfg.min_clusters < 1 || cfg.max_clusters < cfg.min_clusters) {
    return absl::InvalidArgumentError("cluster range must satisfy 1 <= min <= max");
  }
  if (cfg.restarts_per_k < 0 || cfg.max_iterations < 1 || cfg.workers < 1) {
    return absl::InvalidArgumentError(
        "restarts must be >= 0, iterations and workers positive");
  }
  if (!(cfg.initial_temperature > 0.0)) {
    return absl::InvalidArgumentError("initial temperature must be positive");
  }
  if (!(cfg.cooling_factor > 0.0 && cfg.cooling_factor < 1.0)) {
    return absl::InvalidArgumentError("cooling factor must be in (0, 1)");
  }
  return absl::OkStatus();
}

namespace {

double EdgeCost(double shifted, bool same_cluster) {
  if (same_cluster) return shifted < 0.0 ? -shifted : 0.0;
  return shifted > 0.0 ? shifted : 0.0;
}

absl::StatusOr<std::pair<double, double>> LossAndBound(const Wug& g,
                                                       const Clustering& c) {
  double loss = 0.0;
  double bound = 0.0;
  for (const Edge& e : g.edges()) {
    if (!e.has_weight()) continue;
    const std::string& a = g.nodes()[e.u].id;
    const std::string& b = g.nodes()[e.v].id;
    auto ia = c.assignment.find(a);
    auto ib = c.assignment.find(b);
    if (ia == c.assignment.end() || ib == c.assignment.end()) {
      return absl::InvalidArgumentError(absl::StrCat(
          "node '", ia == c.assignment.end() ? a : b,
          "' has a weighted edge but no cluster"));
    }
    const double w = e.shifted();
    loss += EdgeCost(w, ia->second == ib->second);
    bound += std::abs(w);
  }
  return std::make_pair(loss, bound);
}

// Compact view of the weighted part of a graph for the annealer.
struct Problem {
  std::vector<int> node_of;  // compact index -> graph node index
  std::vector<std::vector<std::pair<int, double>>> adj;

  int size() const { return static_cast<int>(node_of.size()); }

  double Loss(const std::vector<int>& labels) const {
    double total = 0.0;
    for (int i = 0; i < size(); ++i) {
      for (auto [j, w] : adj[i]) {
        if (j > i) total += EdgeCost(w, labels[i] == labels[j]);
      }
    }
    return total;
  }

  double MoveDelta(const std::vector<int>& labels, int i, int to) const {
    const int from = labels[i];
    double d = 0.0;
    for (auto [j, w] : adj[i]) {
      const int lj = labels[j];
      d += EdgeCost(w, lj == to) - EdgeCost(w, lj == from);
    }
    return d;
  }
};

Problem MakeProblem(const Wug& g) {
  Problem p;
  std::vector<int> compact(g.num_nodes(), -1);
  for (int i = 0; i < g.num_nodes(); ++i) {
    for (int e : g.Incident(i)) {
      if (g.edges()[e].has_weight()) {
        compact[i] = static_cast<int>(p.node_of.size());
        p.node_of.push_back(i);
        break;
      }
    }
  }
  p.adj.resize(p.node_of.size());
  for (const Edge& e : g.edges()) {
    if (!e.has_weight()) continue;
    const int a = compact[e.u];
    const int b = compact[e.v];
    p.adj[a].emplace_back(b, e.shifted());
    p.adj[b].emplace_back(a, e.shifted());
  }
  return p;
}

// Relabels clusters densely in order of first appearance.
std::vector<int> Canonical(const std::vector<int>& labels) {
  std::vector<int> out(labels.size());
  std::vector<int> map;
  for (size_t i = 0; i < labels.size(); ++i) {
    const int l = labels[i];
    if (l >= static_cast<int>(map.size())) map.resize(l + 1, -1);
    if (map[l] < 0) {
      map[l] = static_cast<int>(std::count_if(
          map.begin(), map.end(), [](int x) { return x >= 0; }));
    }
    out[i] = map[l];
  }
  return out;
}

// Connected components of the positive-edge subgraph, merged down to at most
// k groups. Each merge joins the two groups whose connecting shifted weights
// sum highest, which is the merge that adds the least loss.
std::vector<int> HeuristicStart(const Problem& p, int k) {
  const int m = p.size();
  std::vector<int> comp(m, -1);
  int num = 0;
  for (int s = 0; s < m; ++s) {
    if (comp[s] >= 0) continue;
    std::vector<int> stack = {s};
    comp[s] = num;
    while (!stack.empty()) {
      const int x = stack.back();
      stack.pop_back();
      for (auto [y, w] : p.adj[x]) {
        if (w >= 0.0 && comp[y] < 0) {
          comp[y] = num;
          stack.push_back(y);
        }
      }
    }
    ++num;
  }
  if (num <= k) return comp;

  std::vector<std::vector<double>> between(num, std::vector<double>(num, 0.0));
  for (int x = 0; x < m; ++x) {
    for (auto [y, w] : p.adj[x]) {
      if (comp[x] != comp[y]) between[comp[x]][comp[y]] += w;
    }
  }
  std::vector<int> size(num, 0);
  for (int x = 0; x < m; ++x) ++size[comp[x]];
  std::vector<int> parent(num);
  std::iota(parent.begin(), parent.end(), 0);
  std::vector<bool> alive(num, true);
  for (int groups = num; groups > k; --groups) {
    int best_a = -1;
    int best_b = -1;
    for (int a = 0; a < num; ++a) {
      if (!alive[a]) continue;
      for (int b = a + 1; b < num; ++b) {
        if (!alive[b]) continue;
        if (best_a < 0) {
          best_a = a;
          best_b = b;
          continue;
        }
        const double cur = between[a][b];
        const double best = between[best_a][best_b];
        if (cur > best ||
            (cur == best && size[a] + size[b] < size[best_a] + size[best_b])) {
          best_a = a;
          best_b = b;
        }
      }
    }
    alive[best_b] = false;
    parent[best_b] = best_a;
    size[best_a] += size[best_b];
    for (int c = 0; c < num; ++c) {
      between[best_a][c] += between[best_b][c];
      between[c][best_a] += between[c][best_b];
    }
  }
  for (int x = 0; x < m; ++x) {
    int c = comp[x];
    while (parent[c] != c) c = parent[c];
    comp[x] = c;
  }
  return Canonical(comp);
}

// Splits every cluster into the connected components of its positive edges.
// Nothing positive is cut and negative edges can only leave clusters, so the
// loss never increases; clusters without positive support fall apart.
std::vector<int> SplitUnsupported(const Problem& p,
                                  const std::vector<int>& labels) {
  const int m = p.size();
  std::vector<int> out(m, -1);
  int next = 0;
  for (int s = 0; s < m; ++s) {
    if (out[s] >= 0) continue;
    std::vector<int> stack = {s};
    out[s] = next;
    while (!stack.empty()) {
      const int x = stack.back();
      stack.pop_back();
      for (auto [y, w] : p.adj[x]) {
        if (w >= 0.0 && out[y] < 0 && labels[y] == labels[x]) {
          out[y] = next;
          stack.push_back(y);
        }
      }
    }
    ++next;
  }
  return out;
}

struct Candidate {
  double loss = std::numeric_limits<double>::infinity();
  int clusters = 0;
  std::vector<int> labels;  // canonical

  bool BetterThan(const Candidate& o) const {
    return std::tie(loss, clusters, labels) <
           std::tie(o.loss, o.clusters, o.labels);
  }
};

Candidate Anneal(const Problem& p, std::vector<int> labels, int k,
                 const AnnealConfig& cfg, Rng& rng) {
  const int m = p.size();
  double cur = p.Loss(labels);
  double best = cur;
  std::vector<int> best_labels = labels;
  double temperature = cfg.initial_temperature;
  for (int it = 0; it < cfg.max_iterations && k > 1; ++it) {
    const int i = static_cast<int>(rng.Uniform(m));
    const int to = static_cast<int>(rng.Uniform(k));
    if (to != labels[i]) {
      const double d = p.MoveDelta(labels, i, to);
      if (d <= 0.0 || rng.UniformDouble() < std::exp(-d / temperature)) {
        labels[i] = to;
        cur += d;
        if (cur < best) {
          best = cur;
          best_labels = labels;
        }
      }
    }
    temperature *= cfg.cooling_factor;
  }
  Candidate c;
  c.labels = Canonical(SplitUnsupported(p, best_labels));
  c.loss = p.Loss(c.labels);
  c.clusters = c.labels.empty()
                   ? 0
                   : *std::max_element(c.labels.begin(), c.labels.end()) + 1;
  return c;
}

}  // namespace

absl::StatusOr<double> Loss(const Wug& g, const Clustering& c) {
  auto r = LossAndBound(g, c);
  if (!r.ok()) return r.status();
  return r->first;
}

absl::StatusOr<double> NormalizedLoss(const Wug& g, const Clustering& c) {
  auto r = LossAndBound(g, c);
  if (!r.ok()) return r.status();
  if (r->second == 0.0) return 0.0;
  return r->first / r->second;
}

Clustering Cluster(const Wug& g, const AnnealConfig& cfg) {
  const Problem p = MakeProblem(g);
  const int m = p.size();

  Clustering out;
  std::vector<bool> clustered(g.num_nodes(), false);
  for (int x : p.node_of) clustered[x] = true;
  for (int i = 0; i < g.num_nodes(); ++i) {
    if (!clustered[i]) out.isolates.push_back(g.nodes()[i].id);
  }
  if (m == 0) return out;

  struct Task {
    int k;
    int restart;  // == restarts_per_k for the heuristic start
  };
  std::vector<Task> tasks;
  const int k_lo = std::min(cfg.min_clusters, m);
  const int k_hi = std::min(cfg.max_clusters, m);
  for (int k = k_lo; k <= k_hi; ++k) {
    for (int r = 0; r <= cfg.restarts_per_k; ++r) tasks.push_back({k, r});
  }

  std::vector<Candidate> results(tasks.size());
  auto run = [&](size_t t) {
    const Task& task = tasks[t];
    Rng rng(DeriveSeed(cfg.seed, {static_cast<uint64_t>(task.k),
                                  static_cast<uint64_t>(task.restart)}));
    std::vector<int> init;
    if (task.restart == cfg.restarts_per_k) {
      init = HeuristicStart(p, task.k);
    } else {
      init.resize(m);
      for (int& l : init) l = static_cast<int>(rng.Uniform(task.k));
    }
    results[t] = Anneal(p, std::move(init), task.k, cfg, rng);
  };

  const int workers = std::max(1, std::min<int>(cfg.workers, tasks.size()));
  if (workers == 1) {
    for (size_t t = 0; t < tasks.size(); ++t) run(t);
  } else {
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (size_t t; (t = next.fetch_add(1)) < tasks.size();) run(t);
      });
    }
    for (auto& th : pool) th.join();
  }

  const Candidate* best = &results.front();
  for (const Candidate& c : results) {
    if (c.BetterThan(*best)) best = &c;
  }
  for (int i = 0; i < m; ++i) {
    out.assignment[g.nodes()[p.node_of[i]].id] = best->labels[i];
  }
  auto lb = LossAndBound(g, out);
  out.loss = lb->first;
  out.normalized_loss = lb->second == 0.0 ? 0.0 : lb->first / lb->second;
  return out;
}

absl::StatusOr<ConflictSet> Conflicts(const Wug& g, const Clustering& c) {
  ConflictSet out;
  for (const Edge& e : g.edges()) {
    if (!e.has_weight()) continue;
    const std::string& a = g.nodes()[e.u].id;
    const std::string& b = g.nodes()[e.v].id;
    auto ia = c.assignment.find(a);
    auto ib = c.assignment.find(b);
    if (ia == c.assignment.end() || ib == c.assignment.end()) {
      return absl::InvalidArgumentError(absl::StrCat(
          "edge (", a, ", ", b, ") touches an unclustered node"));
    }
    const double w = e.shifted();
    const bool same = ia->second == ib->second;
    if (!same && w > 0.0) out.positive_across.emplace_back(a, b);
    if (same && w < 0.0) out.negative_within.emplace_back(a, b);
  }
  return out;
}

std::vector<int> MaxWeightMatching(
    const std::vector<std::vector<double>>& weights) {
  const int rows = static_cast<int>(weights.size());
  int cols = 0;
  for (const auto& r : weights) cols = std::max<int>(cols, r.size());
  const int n = std::max(rows, cols);
  if (n == 0) return {};
  double max_w = 0.0;
  for (const auto& r : weights) {
    for (double w : r) max_w = std::max(max_w, w);
  }
  // Square cost matrix (1-based) for the potentials formulation of the
  // Hungarian method; padding cells cost max_w.
  auto cost = [&](int i, int j) {
    const double w = (i <= rows && j <= static_cast<int>(weights[i - 1].size()))
                         ? weights[i - 1][j - 1]
                         : 0.0;
    return max_w - w;
  };
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> match(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const int i0 = match[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0, j) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(rows, -1);
  for (int j = 1; j <= n; ++j) {
    const int i = match[j];
    if (i >= 1 && i <= rows && j <= static_cast<int>(weights[i - 1].size())) {
      row_to_col[i - 1] = j - 1;
    }
  }
  return row_to_col;
}

absl::StatusOr<double> ClusterAccuracy(const Clustering& reference,
                                       const Clustering& hypothesis) {
  if (reference.assignment.size() != hypothesis.assignment.size()) {
    return absl::InvalidArgumentError(absl::StrCat(
        "clusterings cover ", reference.assignment.size(), " and ",
        hypothesis.assignment.size(), " nodes"));
  }
  const int rc = reference.num_clusters();
  const int hc = hypothesis.num_clusters();
  std::vector<std::vector<double>> table(rc, std::vector<double>(hc, 0.0));
  for (const auto& [id, r] : reference.assignment) {
    auto it = hypothesis.assignment.find(id);
    if (it == hypothesis.assignment.end()) {
      return absl::InvalidArgumentError(
          absl::StrCat("node '", id, "' missing from hypothesis clustering"));
    }
    table[r][it->second] += 1.0;
  }
  if (reference.assignment.empty()) return 1.0;
  const std::vector<int> match = MaxWeightMatching(table);
  double matched = 0.0;
  for (int r = 0; r < rc; ++r) {
    if (match[r] >= 0) matched += table[r][match[r]];
  }
  return matched / static_cast<double>(reference.assignment.size());
}

}  // namespace wug
