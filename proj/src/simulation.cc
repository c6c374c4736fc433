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

#include "wug/simulation.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>

#include "absl/status/status.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"

namespace wug {

namespace {

// Projects `hypothesis` onto the node set of `nodes`: unknown nodes become
// singletons, nodes outside the set are dropped.
Clustering ProjectOnto(const std::vector<std::string>& nodes,
                       const Clustering& hypothesis) {
  Clustering out;
  std::map<int, int> remap;
  int next = 0;
  for (const std::string& id : nodes) {
    auto it = hypothesis.assignment.find(id);
    if (it == hypothesis.assignment.end()) {
      out.assignment[id] = next++;
      continue;
    }
    auto [slot, inserted] = remap.try_emplace(it->second, next);
    if (inserted) ++next;
    out.assignment[id] = slot->second;
  }
  return out;
}

double AccuracyOn(const Clustering& reference, const Clustering& hypothesis) {
  std::vector<std::string> nodes;
  nodes.reserve(reference.assignment.size());
  for (const auto& [id, c] : reference.assignment) nodes.push_back(id);
  absl::StatusOr<double> acc =
      ClusterAccuracy(reference, ProjectOnto(nodes, hypothesis));
  // Same node set by construction.
  return acc.ok() ? *acc : 0.0;
}

}  // namespace

Clustering PlantedGraph::TrueClustering() const {
  std::vector<std::vector<std::string>> groups(n_senses);
  for (const auto& [id, sense] : true_clusters) groups[sense].push_back(id);
  return ClusteringFromGroups(groups);
}

std::vector<std::string> PlantedGraph::UsageIds() const {
  std::vector<std::string> ids;
  ids.reserve(usages.size());
  for (const Usage& u : usages) ids.push_back(u.identifier);
  return ids;
}

absl::StatusOr<PlantedGraph> GeneratePlantedGraph(int n_usages, int n_senses,
                                                  double period_split,
                                                  uint64_t seed) {
  if (n_senses < 1 || n_usages < n_senses) {
    return absl::InvalidArgumentError(absl::StrCat(
        "need 1 <= n_senses <= n_usages, got ", n_senses, " and ", n_usages));
  }
  if (!(period_split >= 0.0 && period_split <= 1.0)) {
    return absl::InvalidArgumentError("period_split must lie in [0, 1]");
  }
  Rng rng(DeriveSeed(seed, {0x91a7}));
  PlantedGraph out;
  out.n_senses = n_senses;

  std::vector<int> sense(n_usages);
  for (int i = 0; i < n_usages; ++i) {
    sense[i] = i < n_senses ? i : static_cast<int>(rng.Uniform(n_senses));
  }
  rng.Shuffle(sense);

  const int first_period = static_cast<int>(std::lround(period_split * n_usages));
  for (int i = 0; i < n_usages; ++i) {
    Usage u;
    u.identifier = absl::StrFormat("u%03d", i);
    u.lemma = "planted";
    u.pos = "nn";
    u.grouping = i < first_period ? 1 : 2;
    u.context = absl::StrCat("context ", i, " with planted target");
    u.target_start = static_cast<int>(u.context.size()) - 14;
    u.target_end = u.target_start + 7;
    out.true_clusters[u.identifier] = sense[i];
    out.usages.push_back(std::move(u));
  }
  for (int i = 0; i < n_usages; ++i) {
    for (int j = i + 1; j < n_usages; ++j) {
      const bool same = sense[i] == sense[j];
      const int base = same ? 3 : 1;
      out.true_proximity[CanonicalPair(out.usages[i].identifier,
                                       out.usages[j].identifier)] =
          base + static_cast<int>(rng.Uniform(2));
    }
  }
  return out;
}

absl::Status ValidateNoiseModel(const NoiseModel& noise) {
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(noise.p_deviate) || !prob(noise.p_zero)) {
    return absl::InvalidArgumentError("noise probabilities must lie in [0, 1]");
  }
  if (noise.p_deviate + noise.p_zero > 1.0) {
    return absl::InvalidArgumentError("p_deviate + p_zero must not exceed 1");
  }
  return absl::OkStatus();
}

Judgment SimulateAnnotator(const NodePair& pair, const PlantedGraph& planted,
                           const NoiseModel& noise, const std::string& annotator,
                           int round, Rng& rng) {
  Judgment j;
  j.node1 = pair.first;
  j.node2 = pair.second;
  j.annotator = annotator;
  j.round = round;
  j.score = planted.Proximity(pair.first, pair.second);
  const double u = rng.UniformDouble();
  if (u < noise.p_zero) {
    j.score = 0;
  } else if (u < noise.p_zero + noise.p_deviate) {
    j.score = std::clamp(j.score + (rng.Bernoulli(0.5) ? 1 : -1), 1, 4);
  }
  return Canonicalized(std::move(j));
}

std::vector<Judgment> AnnotateBatch(const AnnotationBatch& batch,
                                    const PlantedGraph& planted,
                                    const NoiseModel& noise, int round) {
  std::vector<Judgment> out;
  for (const auto& [pair, annotators] : batch.assignments) {
    for (const std::string& a : annotators) {
      // One stream per judgment so the outcome does not depend on batch order.
      Rng rng(DeriveSeed(noise.seed,
                         {StableHash(pair.first), StableHash(pair.second),
                          StableHash(a), static_cast<uint64_t>(round)}));
      out.push_back(SimulateAnnotator(pair, planted, noise, a, round, rng));
    }
  }
  return out;
}

absl::StatusOr<Wug> AnnotatePlanted(const PlantedGraph& planted, double density,
                                    uint64_t seed) {
  if (!(density >= 0.0 && density <= 1.0)) {
    return absl::InvalidArgumentError("density must lie in [0, 1]");
  }
  Rng rng(DeriveSeed(seed, {0xde75}));
  std::vector<Judgment> judgments;
  for (const auto& [pair, proximity] : planted.true_proximity) {
    if (density < 1.0 && !rng.Bernoulli(density)) continue;
    judgments.push_back(Judgment{.node1 = pair.first,
                                 .node2 = pair.second,
                                 .annotator = "oracle",
                                 .score = proximity,
                                 .comment = "",
                                 .round = 1});
  }
  return Wug::Build(planted.usages, judgments);
}

double AccuracyAgainstPlant(const PlantedGraph& planted,
                            const Clustering& hypothesis) {
  return AccuracyOn(planted.TrueClustering(), hypothesis);
}

int SimReport::RoundsToAccuracy(double accuracy) const {
  for (const RoundRecord& r : rounds) {
    if (r.accuracy >= accuracy) return r.round;
  }
  return -1;
}

absl::StatusOr<SimReport> RunPipelineSim(const PlantedGraph& planted,
                                         const NoiseModel& noise,
                                         const PipelineSimConfig& cfg) {
  if (absl::Status s = ValidateNoiseModel(noise); !s.ok()) return s;
  if (absl::Status s = ValidateAnnealConfig(cfg.anneal); !s.ok()) return s;
  if (cfg.max_rounds < 1) {
    return absl::InvalidArgumentError("max_rounds must be at least 1");
  }
  const Clustering truth = planted.TrueClustering();

  absl::StatusOr<AnnotationBatch> batch =
      Round1Sample(planted.UsageIds(), cfg.annotators, cfg.sampling);
  if (!batch.ok()) return batch.status();

  SimReport report;
  for (int round = 1; round <= cfg.max_rounds; ++round) {
    std::vector<Judgment> fresh = AnnotateBatch(*batch, planted, noise, round);
    report.judgments.insert(report.judgments.end(), fresh.begin(), fresh.end());

    absl::StatusOr<Wug> g = Wug::Build(planted.usages, report.judgments);
    if (!g.ok()) return g.status();
    FilterResult filtered = FilterZeroNodes(*g);

    AnnealConfig anneal = cfg.anneal;
    anneal.seed = DeriveSeed(cfg.anneal.seed, {static_cast<uint64_t>(round)});
    Clustering c = Cluster(filtered.graph, anneal);

    RoundRecord rec;
    rec.round = round;
    rec.batch_pairs = static_cast<int>(batch->pairs.size());
    rec.composition = batch->Composition();
    rec.judgments_total = static_cast<int>(report.judgments.size());
    rec.edges_annotated = static_cast<int>(g->edges().size());
    rec.clusters = c.num_clusters();
    rec.loss = c.loss;
    rec.normalized_loss = c.normalized_loss;
    rec.accuracy = AccuracyOn(truth, c);
    rec.removed_nodes = filtered.removed;

    RoundState state = MakeRoundState(round, filtered.graph, c);
    rec.multi_clusters = static_cast<int>(state.multi_clusters.size());
    report.rounds.push_back(std::move(rec));
    report.graph = *std::move(g);
    report.clustering = std::move(c);

    if (round == cfg.max_rounds) break;
    if (StoppingConditionMet(state, cfg.sampling)) {
      report.stopped = true;
      break;
    }
    batch = NextRound(state, cfg.annotators, cfg.sampling,
                      NextRoundOptions{.disagreement_round = round});
    if (!batch.ok()) return batch.status();
    if (batch->assignments.empty()) {
      report.stopped = true;
      break;
    }
  }
  return report;
}

Wug PerturbJudgments(const Wug& g, double fraction, Rng& rng) {
  std::vector<Edge> edges = g.edges();
  std::vector<std::pair<int, int>> slots;
  for (int e = 0; e < static_cast<int>(edges.size()); ++e) {
    for (int k = 0; k < static_cast<int>(edges[e].judgments.size()); ++k) {
      slots.emplace_back(e, k);
    }
  }
  const size_t count = std::min(
      slots.size(), static_cast<size_t>(std::lround(fraction * slots.size())));
  // Partial Fisher-Yates: the first `count` slots form a uniform sample.
  for (size_t i = 0; i < count; ++i) {
    std::swap(slots[i], slots[i + rng.Uniform(slots.size() - i)]);
    auto [e, k] = slots[i];
    edges[e].judgments[k].score = rng.UniformInt(1, 4);
  }
  return Wug::Assemble(g.nodes(), std::move(edges), g.periods(), g.is_usg());
}

std::pair<double, double> BootstrapMeanCi(std::span<const double> values,
                                          int resamples, Rng& rng) {
  if (values.empty()) return {0.0, 0.0};
  if (resamples < 1) {
    const double m =
        std::accumulate(values.begin(), values.end(), 0.0) / values.size();
    return {m, m};
  }
  std::vector<double> means(resamples);
  for (double& m : means) {
    double s = 0.0;
    for (size_t i = 0; i < values.size(); ++i) s += values[rng.Uniform(values.size())];
    m = s / values.size();
  }
  std::sort(means.begin(), means.end());
  auto at = [&](double q) {
    const size_t idx = static_cast<size_t>(
        std::clamp(std::floor(q * (resamples - 1) + 0.5), 0.0,
                   static_cast<double>(resamples - 1)));
    return means[idx];
  };
  return {at(0.025), at(0.975)};
}

absl::StatusOr<RobustnessCurve> RobustnessExperiment(const Wug& g,
                                                     const Clustering& reference,
                                                     const RobustnessConfig& cfg) {
  if (absl::Status s = ValidateAnnealConfig(cfg.anneal); !s.ok()) return s;
  if (cfg.trials < 1) return absl::InvalidArgumentError("trials must be >= 1");
  if (cfg.workers < 1) return absl::InvalidArgumentError("workers must be >= 1");
  for (double f : cfg.fractions) {
    if (!(f >= 0.0 && f <= 1.0)) {
      return absl::InvalidArgumentError(absl::StrCat("fraction ", f, " outside [0, 1]"));
    }
  }
  for (const auto& [id, c] : reference.assignment) {
    if (!g.IndexOf(id)) {
      return absl::InvalidArgumentError(
          absl::StrCat("reference node ", id, " is not in the graph"));
    }
  }

  RobustnessCurve curve;
  curve.fractions = cfg.fractions;
  curve.trials = cfg.trials;
  const size_t nf = cfg.fractions.size();
  curve.accuracies.assign(nf, std::vector<double>(cfg.trials, 0.0));

  AnnealConfig anneal = cfg.anneal;
  anneal.workers = 1;
  const size_t tasks = nf * cfg.trials;
  std::atomic<size_t> next{0};
  auto work = [&] {
    for (size_t t = next++; t < tasks; t = next++) {
      const size_t fi = t / cfg.trials;
      const size_t trial = t % cfg.trials;
      Rng rng(DeriveSeed(cfg.seed, {fi, trial}));
      Wug perturbed = PerturbJudgments(g, cfg.fractions[fi], rng);
      curve.accuracies[fi][trial] = AccuracyOn(reference, Cluster(perturbed, anneal));
    }
  };
  const int threads = std::min<int>(cfg.workers, static_cast<int>(tasks));
  std::vector<std::thread> pool;
  for (int i = 1; i < threads; ++i) pool.emplace_back(work);
  work();
  for (std::thread& t : pool) t.join();

  for (size_t fi = 0; fi < nf; ++fi) {
    const auto& acc = curve.accuracies[fi];
    curve.mean_accuracy.push_back(std::accumulate(acc.begin(), acc.end(), 0.0) /
                                  acc.size());
    Rng boot(DeriveSeed(cfg.seed, {0xb0075, fi}));
    auto [lo, hi] = BootstrapMeanCi(acc, cfg.bootstrap_resamples, boot);
    curve.ci_low.push_back(lo);
    curve.ci_high.push_back(hi);
  }
  return curve;
}

}  // namespace wug
