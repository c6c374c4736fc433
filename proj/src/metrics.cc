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

#include "wug/metrics.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "absl/status/status.h"
#include "absl/strings/str_cat.h"

namespace wug {

namespace {

std::vector<double> AverageRanks(std::span<const double> x) {
  const size_t n = x.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(n);
  for (size_t i = 0; i < n;) {
    size_t j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    const double avg = (static_cast<double>(i + j) / 2.0) + 1.0;
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

// Latest non-zero score per (edge, annotator).
std::map<NodePair, std::map<std::string, int>> LatestScores(
    std::span<const Judgment> judgments) {
  std::map<NodePair, std::map<std::string, std::pair<int, int>>> latest;
  for (const Judgment& j : judgments) {
    auto& slot = latest[CanonicalPair(j.node1, j.node2)];
    auto it = slot.find(j.annotator);
    if (it == slot.end() || j.round >= it->second.first) {
      slot[j.annotator] = {j.round, j.score};
    }
  }
  std::map<NodePair, std::map<std::string, int>> out;
  for (const auto& [pair, by_annotator] : latest) {
    for (const auto& [annotator, rs] : by_annotator) {
      if (rs.second != 0) out[pair][annotator] = rs.second;
    }
  }
  return out;
}

}  // namespace

std::optional<double> SpearmanRho(std::span<const double> x,
                                  std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) return std::nullopt;
  const std::vector<double> rx = AverageRanks(x);
  const std::vector<double> ry = AverageRanks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

AgreementReport PairwiseSpearman(std::span<const Judgment> judgments) {
  const auto scores = LatestScores(judgments);
  std::set<std::string> annotators;
  for (const auto& [pair, by] : scores) {
    for (const auto& [a, s] : by) annotators.insert(a);
  }
  AgreementReport report;
  double weighted = 0.0;
  double weight = 0.0;
  for (auto a = annotators.begin(); a != annotators.end(); ++a) {
    for (auto b = std::next(a); b != annotators.end(); ++b) {
      std::vector<double> xs, ys;
      for (const auto& [pair, by] : scores) {
        auto ia = by.find(*a);
        auto ib = by.find(*b);
        if (ia == by.end() || ib == by.end()) continue;
        xs.push_back(ia->second);
        ys.push_back(ib->second);
      }
      if (xs.size() < 2) continue;
      std::optional<double> rho = SpearmanRho(xs, ys);
      if (!rho) continue;
      const int n = static_cast<int>(xs.size());
      report.pairwise_spearman[{*a, *b}] = {*rho, n};
      weighted += *rho * n;
      weight += n;
    }
  }
  if (weight > 0) report.weighted_mean_spearman = weighted / weight;
  return report;
}

std::optional<double> KrippendorffAlphaInterval(
    const std::vector<std::vector<double>>& units) {
  // Observed disagreement: within-unit squared differences, each unit scaled
  // by 1 / (m_u - 1). Expected: the same over all pairable values pooled.
  double within = 0.0;
  double n = 0.0;
  double sum = 0.0;
  double sum_sq = 0.0;
  for (const auto& unit : units) {
    const double m = static_cast<double>(unit.size());
    if (unit.size() < 2) continue;
    double us = 0.0, uss = 0.0;
    for (double v : unit) {
      us += v;
      uss += v * v;
    }
    within += (2.0 * m * uss - 2.0 * us * us) / (m - 1.0);
    n += m;
    sum += us;
    sum_sq += uss;
  }
  if (n < 2) return std::nullopt;
  const double observed = within / n;
  const double expected = (2.0 * n * sum_sq - 2.0 * sum * sum) / (n * (n - 1.0));
  if (expected == 0.0) return 1.0;
  return 1.0 - observed / expected;
}

std::optional<double> KrippendorffAlpha(std::span<const Judgment> judgments) {
  std::vector<std::vector<double>> units;
  for (const auto& [pair, by] : LatestScores(judgments)) {
    std::vector<double> values;
    for (const auto& [a, s] : by) values.push_back(s);
    units.push_back(std::move(values));
  }
  return KrippendorffAlphaInterval(units);
}

AgreementReport Agreement(std::span<const Judgment> judgments,
                          std::optional<int> round) {
  std::vector<Judgment> selected;
  for (const Judgment& j : judgments) {
    if (!round || j.round == *round) selected.push_back(j);
  }
  AgreementReport r = PairwiseSpearman(selected);
  r.krippendorff_alpha = KrippendorffAlpha(selected);
  return r;
}

DisagreementHistogram ComputeDisagreementHistogram(
    std::span<const Judgment> judgments) {
  std::map<NodePair, std::vector<int>> by_edge;
  for (const Judgment& j : judgments) {
    if (j.score != 0) by_edge[CanonicalPair(j.node1, j.node2)].push_back(j.score);
  }
  DisagreementHistogram h;
  std::array<int, 4> counts{};
  for (const auto& [pair, s] : by_edge) {
    if (s.size() != 2) continue;
    ++counts[std::abs(s[0] - s[1])];
    ++h.edges;
  }
  for (int d = 0; d < 4; ++d) {
    h.proportion[d] = h.edges == 0 ? 0.0 : static_cast<double>(counts[d]) / h.edges;
  }
  return h;
}

JudgmentFrequencies ComputeJudgmentFrequencies(
    std::span<const Judgment> judgments) {
  JudgmentFrequencies f;
  for (const Judgment& j : judgments) {
    if (j.score >= 0 && j.score <= 4) {
      ++f.counts[j.score];
      ++f.total;
    }
  }
  for (int s = 0; s <= 4; ++s) {
    f.proportions[s] = f.total == 0 ? 0.0 : static_cast<double>(f.counts[s]) / f.total;
  }
  return f;
}

absl::StatusOr<std::vector<int>> ClusterFrequencyDist(const Wug& g,
                                                      const Clustering& c,
                                                      int grouping) {
  if (!g.periods().contains(grouping)) {
    return absl::InvalidArgumentError(absl::StrCat("unknown grouping ", grouping));
  }
  std::vector<int> freq(c.num_clusters(), 0);
  for (const Node& n : g.nodes()) {
    if (n.kind != NodeKind::kUsage || n.grouping != grouping) continue;
    auto it = c.assignment.find(n.id);
    if (it != c.assignment.end()) ++freq[it->second];
  }
  return freq;
}

absl::StatusOr<double> JensenShannonDistance(std::span<const int> p,
                                             std::span<const int> q) {
  const double sp = std::accumulate(p.begin(), p.end(), 0.0);
  const double sq = std::accumulate(q.begin(), q.end(), 0.0);
  if (sp <= 0.0 || sq <= 0.0) {
    return absl::FailedPreconditionError("empty frequency distribution");
  }
  const size_t len = std::max(p.size(), q.size());
  double divergence = 0.0;
  for (size_t i = 0; i < len; ++i) {
    const double a = i < p.size() ? p[i] / sp : 0.0;
    const double b = i < q.size() ? q[i] / sq : 0.0;
    const double m = (a + b) / 2.0;
    if (a > 0.0) divergence += 0.5 * a * std::log2(a / m);
    if (b > 0.0) divergence += 0.5 * b * std::log2(b / m);
  }
  return std::sqrt(std::clamp(divergence, 0.0, 1.0));
}

bool BinaryChangeFromCounts(std::span<const int> p, std::span<const int> q,
                            const ChangeThresholds& t) {
  const size_t len = std::max(p.size(), q.size());
  for (size_t i = 0; i < len; ++i) {
    const int a = i < p.size() ? p[i] : 0;
    const int b = i < q.size() ? q[i] : 0;
    if ((a >= t.k && b <= t.n) || (b >= t.k && a <= t.n)) return true;
  }
  return false;
}

absl::StatusOr<ChangeScores> ComputeChange(const Wug& g, const Clustering& c,
                                           const ChangeThresholds& t) {
  if (g.periods().size() < 2) {
    return absl::FailedPreconditionError("change needs two declared periods");
  }
  auto it = g.periods().begin();
  const int first = *it++;
  const int second = *it;
  ChangeScores out;
  out.thresholds = t;
  auto f1 = ClusterFrequencyDist(g, c, first);
  auto f2 = ClusterFrequencyDist(g, c, second);
  if (!f1.ok()) return f1.status();
  if (!f2.ok()) return f2.status();
  out.freq_first = *std::move(f1);
  out.freq_second = *std::move(f2);
  auto graded = JensenShannonDistance(out.freq_first, out.freq_second);
  if (!graded.ok()) {
    return absl::FailedPreconditionError(
        "a period has no clustered usages; change is undefined");
  }
  out.graded = *graded;
  out.binary = BinaryChangeFromCounts(out.freq_first, out.freq_second, t);
  return out;
}

absl::StatusOr<double> GradedChange(const Wug& g, const Clustering& c) {
  auto s = ComputeChange(g, c);
  if (!s.ok()) return s.status();
  return s->graded;
}

absl::StatusOr<bool> BinaryChange(const Wug& g, const Clustering& c,
                                  const ChangeThresholds& t) {
  auto s = ComputeChange(g, c, t);
  if (!s.ok()) return s.status();
  return s->binary;
}

}  // namespace wug
