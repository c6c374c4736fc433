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

// Synthetic ground truth and experiments: planted sense partitions, noisy
// simulated annotators, the multi-round annotation pipeline run end to end,
// and the perturbation experiment that measures how stable a clustering is
// under random judgments.

#ifndef WUG_SIMULATION_H_
#define WUG_SIMULATION_H_

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "absl/status/statusor.h"
#include "wug/clustering.h"
#include "wug/graph.h"
#include "wug/rng.h"
#include "wug/sampling.h"

namespace wug {

struct PlantedGraph {
  std::vector<Usage> usages;
  std::map<std::string, int> true_clusters;  // usage id -> sense index
  // Proximity per canonical pair: 3-4 within a sense, 1-2 across senses.
  std::map<NodePair, int> true_proximity;
  int n_senses = 0;

  int Proximity(const std::string& a, const std::string& b) const {
    return true_proximity.at(CanonicalPair(a, b));
  }
  Clustering TrueClustering() const;
  std::vector<std::string> UsageIds() const;
};

// Every sense gets at least one usage; the first round(period_split * n)
// usages (in id order) belong to period 1, the rest to period 2.
absl::StatusOr<PlantedGraph> GeneratePlantedGraph(int n_usages, int n_senses,
                                                  double period_split,
                                                  uint64_t seed);

struct NoiseModel {
  double p_deviate = 0.0;  // +-1 step, clipped to 1..4
  double p_zero = 0.0;     // "cannot decide"
  uint64_t seed = 0;
};

absl::Status ValidateNoiseModel(const NoiseModel& noise);

Judgment SimulateAnnotator(const NodePair& pair, const PlantedGraph& planted,
                           const NoiseModel& noise, const std::string& annotator,
                           int round, Rng& rng);

// Judgments for every (pair, annotator) assignment in the batch.
std::vector<Judgment> AnnotateBatch(const AnnotationBatch& batch,
                                    const PlantedGraph& planted,
                                    const NoiseModel& noise, int round);

// Noise-free graph over the plant: each pair is judged once with its true
// proximity with probability `density` (1.0 judges every pair).
absl::StatusOr<Wug> AnnotatePlanted(const PlantedGraph& planted, double density,
                                    uint64_t seed);

// Cluster accuracy of `hypothesis` against the plant over all usages; usages
// the hypothesis does not cluster count as singletons.
double AccuracyAgainstPlant(const PlantedGraph& planted,
                            const Clustering& hypothesis);

struct RoundRecord {
  int round = 0;
  int batch_pairs = 0;
  std::map<Provenance, int> composition;
  int judgments_total = 0;
  int edges_annotated = 0;  // distinct annotated pairs after this round
  int clusters = 0;
  int multi_clusters = 0;
  double loss = 0.0;
  double normalized_loss = 0.0;
  double accuracy = 0.0;
  std::vector<std::string> removed_nodes;
};

struct SimReport {
  std::vector<RoundRecord> rounds;
  bool stopped = false;  // stopping condition reached before max_rounds
  std::vector<Judgment> judgments;
  Wug graph;
  Clustering clustering;

  double final_accuracy() const {
    return rounds.empty() ? 0.0 : rounds.back().accuracy;
  }
  // First round reaching `accuracy`, or -1.
  int RoundsToAccuracy(double accuracy) const;
};

struct PipelineSimConfig {
  SamplingConfig sampling;
  AnnealConfig anneal;
  int max_rounds = 6;
  std::vector<std::string> annotators = {"sim1", "sim2", "sim3", "sim4"};
};

absl::StatusOr<SimReport> RunPipelineSim(const PlantedGraph& planted,
                                         const NoiseModel& noise,
                                         const PipelineSimConfig& cfg);

// Replaces a uniformly chosen round(fraction * J) of the J judgments with
// uniform scores 1..4 and recomputes the medians. The edge set is unchanged.
Wug PerturbJudgments(const Wug& g, double fraction, Rng& rng);

struct RobustnessConfig {
  std::vector<double> fractions = {0.0, 0.1, 0.2, 0.25, 0.3, 0.4, 0.5};
  int trials = 50;
  AnnealConfig anneal;
  uint64_t seed = 0;
  int workers = 1;
  int bootstrap_resamples = 1000;
};

struct RobustnessCurve {
  std::vector<double> fractions;
  std::vector<double> mean_accuracy;
  std::vector<double> ci_low;
  std::vector<double> ci_high;
  int trials = 0;
  std::vector<std::vector<double>> accuracies;  // [fraction][trial]
};

// Percentile bootstrap 95% interval of the mean.
std::pair<double, double> BootstrapMeanCi(std::span<const double> values,
                                          int resamples, Rng& rng);

// For each fraction and trial: perturb, recluster with cfg.anneal, and score
// against `reference` on its node set. Trials run on cfg.workers threads with
// seeds derived per (fraction, trial).
absl::StatusOr<RobustnessCurve> RobustnessExperiment(const Wug& g,
                                                     const Clustering& reference,
                                                     const RobustnessConfig& cfg);

}  // namespace wug

#endif  // WUG_SIMULATION_H_
