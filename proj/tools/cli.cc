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


#include "cli.h"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/strings/numbers.h"
#include "absl/strings/str_format.h"
#include "httplib.h"
#include "json.hpp"
#include "wug/clustering.h"
#include "wug/graph.h"
#include "wug/metrics.h"
#include "wug/rng.h"
#include "wug/sampling.h"
#include "wug/service.h"
#include "wug/simulation.h"
#include "wug/storage.h"

namespace wug::cli {
namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

constexpr std::string_view kVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Failures carry their exit code up to Run().

struct Failure {
  int code = kExitInternal;
  std::string kind;
  std::string message;
};
using Result = std::optional<Failure>;

Failure UsageError(std::string message) { return {kExitUsage, "usage", std::move(message)}; }

Failure FromStatus(const absl::Status& s) {
  switch (s.code()) {
    case absl::StatusCode::kInvalidArgument:
    case absl::StatusCode::kNotFound:
    case absl::StatusCode::kFailedPrecondition:
    case absl::StatusCode::kOutOfRange:
    case absl::StatusCode::kAlreadyExists:
      return {kExitData, "data", std::string(s.message())};
    default:
      return {kExitInternal, "internal", std::string(s.message())};
  }
}

#define WUG_TRY(expr)                          \
  do {                                         \
    if (Result wug_try_ = (expr)) return wug_try_; \
  } while (0)

#define WUG_TRY_STATUS(expr)                            \
  do {                                                  \
    if (absl::Status wug_st_ = (expr); !wug_st_.ok()) { \
      return FromStatus(wug_st_);                       \
    }                                                   \
  } while (0)

// ---------------------------------------------------------------------------
// Settings: every tunable has a flat key, a default and a printed value.

struct RunConfig {
  uint64_t seed = 0;
  int workers = 1;
  std::set<int> periods = {1, 2};
  bool filter_zero_nodes = true;
  SamplingConfig sampling;
  AnnealConfig anneal;
  NoiseModel noise;
  ChangeThresholds change;
  WordFlagConfig flags;
};

std::string Show(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}
std::string Show(int v) { return std::to_string(v); }
std::string Show(uint64_t v) { return std::to_string(v); }
std::string Show(bool v) { return v ? "true" : "false"; }
std::string Show(const std::set<int>& v) {
  std::string s;
  for (int x : v) s += (s.empty() ? "" : ",") + std::to_string(x);
  return s;
}

std::vector<std::string> SplitList(std::string_view s) {
  std::vector<std::string> out;
  size_t start = 0;
  while (start <= s.size()) {
    size_t comma = s.find(',', start);
    if (comma == std::string_view::npos) comma = s.size();
    std::string item(s.substr(start, comma - start));
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
    start = comma + 1;
  }
  return out;
}

bool Read(std::string_view s, double& v) { return absl::SimpleAtod(std::string(s), &v); }
bool Read(std::string_view s, int& v) { return absl::SimpleAtoi(std::string(s), &v); }
bool Read(std::string_view s, uint64_t& v) { return absl::SimpleAtoi(std::string(s), &v); }
bool Read(std::string_view s, bool& v) { return absl::SimpleAtob(std::string(s), &v); }
bool Read(std::string_view s, std::set<int>& v) {
  std::set<int> parsed;
  for (const std::string& item : SplitList(s)) {
    int x = 0;
    if (!absl::SimpleAtoi(item, &x)) return false;
    parsed.insert(x);
  }
  if (parsed.empty()) return false;
  v = std::move(parsed);
  return true;
}

struct Field {
  std::string_view key;
  std::function<std::string(const RunConfig&)> get;
  std::function<bool(RunConfig&, std::string_view)> set;
};

#define WUG_FIELD(key, member)                                       \
  Field {                                                            \
    key, [](const RunConfig& c) { return Show(c.member); },          \
        [](RunConfig& c, std::string_view s) { return Read(s, c.member); } \
  }

const std::vector<Field>& Fields() {
  static const auto* fields = new std::vector<Field>{
      WUG_FIELD("seed", seed),
      WUG_FIELD("workers", workers),
      WUG_FIELD("periods", periods),
      WUG_FIELD("filter_zero_nodes", filter_zero_nodes),
      WUG_FIELD("sampling.node_fraction_round1", sampling.node_fraction_round1),
      WUG_FIELD("sampling.edge_fraction", sampling.edge_fraction),
      WUG_FIELD("sampling.corroboration_count", sampling.corroboration_count),
      WUG_FIELD("sampling.multi_annotation_fraction", sampling.multi_annotation_fraction),
      WUG_FIELD("anneal.min_clusters", anneal.min_clusters),
      WUG_FIELD("anneal.max_clusters", anneal.max_clusters),
      WUG_FIELD("anneal.restarts_per_k", anneal.restarts_per_k),
      WUG_FIELD("anneal.initial_temperature", anneal.initial_temperature),
      WUG_FIELD("anneal.cooling_factor", anneal.cooling_factor),
      WUG_FIELD("anneal.max_iterations", anneal.max_iterations),
      WUG_FIELD("noise.p_deviate", noise.p_deviate),
      WUG_FIELD("noise.p_zero", noise.p_zero),
      WUG_FIELD("change.k", change.k),
      WUG_FIELD("change.n", change.n),
      WUG_FIELD("flags.max_zero_fraction", flags.max_zero_fraction),
      WUG_FIELD("flags.max_pending_pairs", flags.max_pending_pairs),
  };
  return *fields;
}

#undef WUG_FIELD

Result Apply(RunConfig& rc, const std::string& key, const std::string& value,
             std::string_view origin) {
  for (const Field& f : Fields()) {
    if (f.key != key) continue;
    if (!f.set(rc, value)) {
      return UsageError(absl::StrFormat("%s: bad value '%s' for %s", std::string(origin),
                                        value, key));
    }
    return std::nullopt;
  }
  return UsageError(absl::StrFormat("%s: unknown setting '%s'", std::string(origin), key));
}

// Derived values and validation once all layers are applied.
Result Finalize(RunConfig& rc) {
  if (rc.workers < 1) return UsageError("workers must be >= 1");
  rc.sampling.seed = rc.seed;
  rc.anneal.seed = rc.seed;
  rc.anneal.workers = 1;
  rc.noise.seed = DeriveSeed(rc.seed, {0x4e01});
  for (const absl::Status& s :
       {ValidateSamplingConfig(rc.sampling), ValidateAnnealConfig(rc.anneal),
        ValidateNoiseModel(rc.noise)}) {
    if (!s.ok()) return UsageError(std::string(s.message()));
  }
  if (rc.change.k < 1 || rc.change.n < 0) return UsageError("change thresholds out of range");
  return std::nullopt;
}

ordered_json SettingsJson(const RunConfig& rc) {
  ordered_json j = ordered_json::object();
  for (const Field& f : Fields()) j[std::string(f.key)] = f.get(rc);
  return j;
}

// Hash of every setting that can change results; the worker count cannot.
std::string ConfigHash(const RunConfig& rc) {
  std::string canonical;
  for (const Field& f : Fields()) {
    if (f.key == "workers") continue;
    canonical += std::string(f.key) + "=" + f.get(rc) + "\n";
  }
  return absl::StrFormat("%016x", StableHash(canonical));
}

// ---------------------------------------------------------------------------
// Output directory and manifest.

class Output {
 public:
  explicit Output(fs::path dir) : dir_(std::move(dir)) {}

  Result Write(const fs::path& rel, std::string_view content) {
    const fs::path path = dir_ / rel;
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) return Failure{kExitInternal, "internal", "cannot create " + path.parent_path().string()};
    WUG_TRY_STATUS(WriteFileAtomic(path, content));
    files_.insert(rel.generic_string());
    return std::nullopt;
  }

  const fs::path& dir() const { return dir_; }
  const std::set<std::string>& files() const { return files_; }

 private:
  fs::path dir_;
  std::set<std::string> files_;
};

std::string LibraryVersions() {
  return absl::StrFormat("nlohmann_json %d.%d.%d; cpp-httplib %s; CLI11 %s",
                         NLOHMANN_JSON_VERSION_MAJOR, NLOHMANN_JSON_VERSION_MINOR,
                         NLOHMANN_JSON_VERSION_PATCH, CPPHTTPLIB_VERSION, CLI11_VERSION);
}

Result WriteManifest(Output& out, const std::string& command, const RunConfig& rc,
                     const ordered_json& arguments, const ordered_json& results) {
  ordered_json m;
  m["tool"] = "wugflow";
  m["version"] = std::string(kVersion);
  m["libraries"] = LibraryVersions();
  m["command"] = command;
  m["seed"] = rc.seed;
  m["config_hash"] = ConfigHash(rc);
  m["settings"] = SettingsJson(rc);
  m["arguments"] = arguments;
  m["results"] = results;
  std::set<std::string> files = out.files();
  files.insert("manifest.json");
  m["outputs"] = files;
  return out.Write("manifest.json", m.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Shared helpers.

// Runs fn(i) for i in [0, n) on up to `workers` threads. Results must be
// written to per-index slots so the outcome does not depend on scheduling.
void ParallelFor(size_t n, int workers, const std::function<void(size_t)>& fn) {
  const size_t threads = std::min<size_t>(std::max(workers, 1), n);
  if (threads <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::vector<std::thread> pool;
  for (size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (std::thread& t : pool) t.join();
}

std::string SafeName(std::string_view lemma) {
  std::string s(lemma);
  for (char& ch : s) {
    const bool ok = std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' ||
                    ch == '-' || ch == '.';
    if (!ok) ch = '_';
  }
  if (s.empty() || s == "." || s == "..") s = "_" + s;
  return s;
}

absl::StatusOr<Dataset> LoadData(const fs::path& dir, const std::set<int>& periods) {
  if (!fs::exists(dir / "usages.tsv")) {
    return absl::NotFoundError(absl::StrFormat("%s has no usages.tsv", dir.string()));
  }
  auto optional = [&](const char* name) -> std::optional<fs::path> {
    if (fs::exists(dir / name)) return dir / name;
    return std::nullopt;
  };
  return Ingest(dir / "usages.tsv", optional("senses.tsv"), optional("judgments.tsv"),
                periods);
}

absl::StatusOr<std::vector<std::string>> SelectLemmas(const Dataset& d,
                                                      const std::vector<std::string>& wanted) {
  const std::vector<std::string> all = d.Lemmas();
  if (wanted.empty()) return all;
  for (const std::string& w : wanted) {
    if (!std::binary_search(all.begin(), all.end(), w)) {
      return absl::NotFoundError("unknown lemma '" + w + "'");
    }
  }
  std::set<std::string> unique(wanted.begin(), wanted.end());
  return std::vector<std::string>(unique.begin(), unique.end());
}

struct LemmaClustering {
  Wug graph;  // after the zero-node filter, if enabled
  Clustering clustering;
  std::vector<std::string> removed;
};

absl::StatusOr<LemmaClustering> ClusterLemma(const Dataset& d, const std::string& lemma,
                                             const RunConfig& rc, uint64_t seed) {
  const std::vector<Judgment> judgments = d.JudgmentsOf(lemma);
  absl::StatusOr<Wug> g = BuildLemmaGraph(d, lemma, judgments, rc.periods);
  if (!g.ok()) return g.status();
  LemmaClustering out;
  if (rc.filter_zero_nodes) {
    FilterResult f = FilterZeroNodes(*g);
    out.graph = std::move(f.graph);
    out.removed = std::move(f.removed);
  } else {
    out.graph = *std::move(g);
  }
  AnnealConfig anneal = rc.anneal;
  anneal.seed = seed;
  out.clustering = Cluster(out.graph, anneal);
  return out;
}

uint64_t LemmaSeed(const RunConfig& rc, const std::string& lemma) {
  return DeriveSeed(rc.seed, {StableHash(lemma)});
}

std::string ClustersTsv(const LemmaClustering& lc) {
  std::string s = "identifier\tcluster\n";
  std::map<std::string, std::string> rows;
  for (const auto& [id, c] : lc.clustering.assignment) rows[id] = std::to_string(c);
  for (const std::string& id : lc.clustering.isolates) rows[id] = "isolate";
  for (const std::string& id : lc.removed) rows[id] = "removed";
  for (const auto& [id, c] : rows) s += EscapeField(id) + "\t" + c + "\n";
  return s;
}

template <typename T>
std::string JoinInts(const std::vector<T>& v) {
  std::string s;
  for (const T& x : v) s += (s.empty() ? "" : ",") + std::to_string(x);
  return s;
}

ordered_json Optional(const std::optional<double>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

ordered_json AgreementJson(const AgreementReport& r) {
  ordered_json pairs = ordered_json::array();
  for (const auto& [ab, pc] : r.pairwise_spearman) {
    pairs.push_back({{"a", ab.first}, {"b", ab.second}, {"rho", pc.rho}, {"n", pc.n_shared}});
  }
  return {{"pairwise_spearman", std::move(pairs)},
          {"weighted_mean_spearman", Optional(r.weighted_mean_spearman)},
          {"krippendorff_alpha", Optional(r.krippendorff_alpha)}};
}

std::vector<BatchRow> ToRows(const AnnotationBatch& batch, int round) {
  std::vector<BatchRow> rows;
  for (const SampledPair& sp : batch.pairs) {
    auto it = batch.assignments.find(sp.pair);
    if (it == batch.assignments.end()) continue;
    for (const std::string& a : it->second) rows.push_back({sp.pair, a, sp.provenance, round});
  }
  return rows;
}

ordered_json CompositionJson(const std::map<Provenance, int>& composition) {
  ordered_json j = ordered_json::object();
  for (const auto& [p, n] : composition) j[ProvenanceName(p)] = n;
  return j;
}

// ---------------------------------------------------------------------------
// Commands. Each receives the finalized settings and its own arguments.

struct Args {
  std::string out;
  std::string data;
  std::string project;
  std::vector<std::string> lemmas;
  std::string usages, senses, judgments;
  std::vector<std::string> annotators;
  // simulate
  int n_usages = 0;
  int n_senses = 0;
  double period_split = 0.5;
  int max_rounds = 6;
  // robustness
  std::string fractions = "0,0.1,0.2,0.25,0.3,0.4,0.5";
  int trials = 50;
  int graphs = 10;
  double density = 1.0;
  int bootstrap = 1000;
  // serve
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string create_from;
  std::string project_config;
  bool check_only = false;
};

Result CmdIngest(const Args& a, const RunConfig& rc, Output& out, ordered_json& results) {
  auto opt = [](const std::string& p) -> std::optional<fs::path> {
    if (p.empty()) return std::nullopt;
    return fs::path(p);
  };
  absl::StatusOr<Dataset> d = Ingest(a.usages, opt(a.senses), opt(a.judgments), rc.periods);
  if (!d.ok()) return FromStatus(d.status());
  WUG_TRY(out.Write("usages.tsv", FormatUsagesTsv(d->usages)));
  if (!d->senses.empty()) WUG_TRY(out.Write("senses.tsv", FormatSensesTsv(d->senses)));
  WUG_TRY(out.Write("judgments.tsv", FormatJudgmentsTsv(d->judgments)));
  ordered_json lemmas = ordered_json::object();
  for (const std::string& lemma : d->Lemmas()) {
    lemmas[lemma] = {{"usages", d->UsagesOf(lemma).size()},
                     {"senses", d->SensesOf(lemma).size()},
                     {"judgments", d->JudgmentsOf(lemma).size()}};
  }
  results["lemmas"] = std::move(lemmas);
  return std::nullopt;
}

Result CmdCluster(const Args& a, const RunConfig& rc, Output& out, ordered_json& results) {
  absl::StatusOr<Dataset> d = LoadData(a.data, rc.periods);
  if (!d.ok()) return FromStatus(d.status());
  absl::StatusOr<std::vector<std::string>> lemmas = SelectLemmas(*d, a.lemmas);
  if (!lemmas.ok()) return FromStatus(lemmas.status());
  std::vector<absl::StatusOr<LemmaClustering>> done(lemmas->size(), absl::UnknownError(""));
  ParallelFor(lemmas->size(), rc.workers, [&](size_t i) {
    const std::string& lemma = (*lemmas)[i];
    done[i] = ClusterLemma(*d, lemma, rc, LemmaSeed(rc, lemma));
  });
  ordered_json per_lemma = ordered_json::object();
  for (size_t i = 0; i < lemmas->size(); ++i) {
    const std::string& lemma = (*lemmas)[i];
    if (!done[i].ok()) return FromStatus(done[i].status());
    const LemmaClustering& lc = *done[i];
    const std::string dir = SafeName(lemma);
    WUG_TRY(out.Write(fs::path(dir) / "clusters.tsv", ClustersTsv(lc)));
    WUG_TRY(out.Write(fs::path(dir) / "graph.json",
                      ExportGraphJson(lc.graph, &lc.clustering, lemma)));
    absl::StatusOr<ConflictSet> conflicts = Conflicts(lc.graph, lc.clustering);
    if (!conflicts.ok()) return FromStatus(conflicts.status());
    per_lemma[lemma] = {
        {"nodes", lc.graph.num_nodes()},
        {"edges", lc.graph.edges().size()},
        {"clusters", lc.clustering.num_clusters()},
        {"loss", lc.clustering.loss},
        {"normalized_loss", lc.clustering.normalized_loss},
        {"isolates", lc.clustering.isolates.size()},
        {"removed_nodes", lc.removed},
        {"conflicts", conflicts->positive_across.size() + conflicts->negative_within.size()}};
  }
  results["lemmas"] = std::move(per_lemma);
  return std::nullopt;
}

Result CmdChange(const Args& a, const RunConfig& rc, Output& out, ordered_json& results) {
  absl::StatusOr<Dataset> d = LoadData(a.data, rc.periods);
  if (!d.ok()) return FromStatus(d.status());
  absl::StatusOr<std::vector<std::string>> lemmas = SelectLemmas(*d, a.lemmas);
  if (!lemmas.ok()) return FromStatus(lemmas.status());
  std::vector<absl::StatusOr<ChangeScores>> scores(lemmas->size(), absl::UnknownError(""));
  ParallelFor(lemmas->size(), rc.workers, [&](size_t i) {
    const std::string& lemma = (*lemmas)[i];
    absl::StatusOr<LemmaClustering> lc = ClusterLemma(*d, lemma, rc, LemmaSeed(rc, lemma));
    if (!lc.ok()) {
      scores[i] = lc.status();
      return;
    }
    scores[i] = ComputeChange(lc->graph, lc->clustering, rc.change);
  });
  std::string tsv = "lemma\tgraded\tbinary\tfreq_first\tfreq_second\n";
  ordered_json per_lemma = ordered_json::object();
  for (size_t i = 0; i < lemmas->size(); ++i) {
    const std::string& lemma = (*lemmas)[i];
    if (!scores[i].ok()) {
      return FromStatus(absl::Status(scores[i].status().code(),
                                     lemma + ": " + std::string(scores[i].status().message())));
    }
    const ChangeScores& s = *scores[i];
    tsv += absl::StrFormat("%s\t%s\t%d\t%s\t%s\n", EscapeField(lemma), Show(s.graded),
                           s.binary ? 1 : 0, JoinInts(s.freq_first), JoinInts(s.freq_second));
    per_lemma[lemma] = {{"graded", s.graded}, {"binary", s.binary}};
  }
  WUG_TRY(out.Write("change.tsv", tsv));
  results["lemmas"] = std::move(per_lemma);
  return std::nullopt;
}

Result CmdStats(const Args& a, const RunConfig& rc, Output& out, ordered_json& results) {
  absl::StatusOr<Dataset> d = LoadData(a.data, rc.periods);
  if (!d.ok()) return FromStatus(d.status());
  const std::vector<Judgment>& all = d->judgments;
  std::map<int, int> per_round;
  for (const Judgment& j : all) ++per_round[j.round];
  ordered_json rounds = ordered_json::object();
  for (const auto& [r, n] : per_round) rounds[std::to_string(r)] = n;
  const JudgmentFrequencies freq = ComputeJudgmentFrequencies(all);
  const DisagreementHistogram hist = ComputeDisagreementHistogram(all);
  ordered_json lemmas = ordered_json::object();
  for (const std::string& lemma : d->Lemmas()) {
    const std::vector<Judgment> js = d->JudgmentsOf(lemma);
    lemmas[lemma] = {{"judgments", js.size()}, {"agreement", AgreementJson(Agreement(js))}};
  }
  ordered_json stats = {
      {"judgments_total", all.size()},
      {"judgments_per_round", std::move(rounds)},
      {"agreement", AgreementJson(Agreement(all))},
      {"agreement_round1", AgreementJson(Agreement(all, 1))},
      {"judgment_frequencies",
       {{"counts", freq.counts}, {"proportions", freq.proportions}, {"total", freq.total}}},
      {"disagreement_histogram", {{"proportion", hist.proportion}, {"edges", hist.edges}}},
      {"lemmas", std::move(lemmas)}};
  WUG_TRY(out.Write("stats.json", stats.dump(2) + "\n"));
  results["judgments_total"] = all.size();
  results["krippendorff_alpha"] = stats["agreement"]["krippendorff_alpha"];
  return std::nullopt;
}

Result CmdSample(const Args& a, const RunConfig& rc, Output& out, ordered_json& results) {
  absl::StatusOr<Dataset> d = LoadData(a.data, rc.periods);
  if (!d.ok()) return FromStatus(d.status());
  absl::StatusOr<std::vector<std::string>> lemmas = SelectLemmas(*d, a.lemmas);
  if (!lemmas.ok()) return FromStatus(lemmas.status());
  std::vector<std::string> annotators = a.annotators;
  if (annotators.empty()) {
    std::set<std::string> seen;
    for (const Judgment& j : d->judgments) seen.insert(j.annotator);
    annotators.assign(seen.begin(), seen.end());
  }
  if (annotators.empty()) return UsageError("no annotators: pass --annotators");

  struct Planned {
    absl::Status status;
    int round = 1;
    bool complete = false;
    AnnotationBatch batch;
  };
  std::vector<Planned> plans(lemmas->size());
  ParallelFor(lemmas->size(), rc.workers, [&](size_t i) {
    const std::string& lemma = (*lemmas)[i];
    Planned& p = plans[i];
    const uint64_t h = StableHash(lemma);
    int last = 0;
    for (const Judgment& j : d->JudgmentsOf(lemma)) last = std::max(last, j.round);
    p.round = last + 1;
    SamplingConfig sampling = rc.sampling;
    sampling.seed = DeriveSeed(rc.seed, {h, static_cast<uint64_t>(p.round)});
    const std::vector<Usage> usages = d->UsagesOf(lemma);
    const std::vector<SenseDescription> senses = d->SensesOf(lemma);
    if (p.round == 1) {
      if (!senses.empty()) {
        absl::StatusOr<std::vector<NodePair>> pairs = BuildUsgPairs(usages, senses);
        if (!pairs.ok()) {
          p.status = pairs.status();
          return;
        }
        for (const NodePair& pair : *pairs) p.batch.pairs.push_back({pair, Provenance::kExploration});
        Rng rng(DeriveSeed(sampling.seed, {0x05a}));
        AssignAnnotators(p.batch, annotators, sampling.multi_annotation_fraction, rng);
        return;
      }
      std::vector<std::string> ids;
      for (const Usage& u : usages) ids.push_back(u.identifier);
      absl::StatusOr<AnnotationBatch> b = Round1Sample(ids, annotators, sampling);
      if (!b.ok()) {
        p.status = b.status();
        return;
      }
      p.batch = *std::move(b);
      return;
    }
    absl::StatusOr<LemmaClustering> lc =
        ClusterLemma(*d, lemma, rc, DeriveSeed(rc.seed, {h, static_cast<uint64_t>(last)}));
    if (!lc.ok()) {
      p.status = lc.status();
      return;
    }
    if (!senses.empty()) {
      p.complete = true;
      return;
    }
    RoundState state = MakeRoundState(last, lc->graph, lc->clustering);
    if (StoppingConditionMet(state, sampling)) {
      p.complete = true;
      return;
    }
    absl::StatusOr<AnnotationBatch> b =
        NextRound(state, annotators, sampling, {.disagreement_round = last});
    if (!b.ok()) {
      p.status = b.status();
      return;
    }
    p.batch = *std::move(b);
    p.complete = p.batch.pairs.empty();
  });

  std::vector<BatchRow> rows;
  ordered_json per_lemma = ordered_json::object();
  for (size_t i = 0; i < lemmas->size(); ++i) {
    const Planned& p = plans[i];
    if (!p.status.ok()) return FromStatus(p.status);
    std::vector<BatchRow> r = ToRows(p.batch, p.round);
    rows.insert(rows.end(), r.begin(), r.end());
    per_lemma[(*lemmas)[i]] = {{"round", p.round},
                               {"complete", p.complete},
                               {"batch_pairs", p.batch.pairs.size()},
                               {"assignments", r.size()},
                               {"composition", CompositionJson(p.batch.Composition())},
                               {"warnings", p.batch.warnings}};
  }
  WUG_TRY(out.Write("batch.tsv", FormatBatchTsv(rows)));
  results["assignments"] = rows.size();
  results["lemmas"] = std::move(per_lemma);
  return std::nullopt;
}

std::string RoundTable(const SimReport& report, int n_usages) {
  const double all_pairs = n_usages * (n_usages - 1) / 2.0;
  std::string s =
      "round\tbatch_pairs\texploration\tcombination\tcorroboration\tdisagreement\tconflict\t"
      "judgments\tedges\tedge_share\tclusters\tmulti_clusters\tloss\tnormalized_loss\t"
      "accuracy\n";
  for (const RoundRecord& r : report.rounds) {
    auto count = [&](Provenance p) {
      auto it = r.composition.find(p);
      return it == r.composition.end() ? 0 : it->second;
    };
    s += absl::StrFormat("%d\t%d\t%d\t%d\t%d\t%d\t%d\t%d\t%d\t%.4f\t%d\t%d\t%s\t%s\t%.4f\n",
                         r.round, r.batch_pairs, count(Provenance::kExploration),
                         count(Provenance::kCombination), count(Provenance::kCorroboration),
                         count(Provenance::kDisagreement), count(Provenance::kConflict),
                         r.judgments_total, r.edges_annotated, r.edges_annotated / all_pairs,
                         r.clusters, r.multi_clusters, Show(r.loss), Show(r.normalized_loss),
                         r.accuracy);
  }
  return s;
}

Result CmdSimulate(const Args& a, const RunConfig& rc, Output& out, ordered_json& results) {
  absl::StatusOr<PlantedGraph> planted =
      GeneratePlantedGraph(a.n_usages, a.n_senses, a.period_split, DeriveSeed(rc.seed, {0x9a}));
  if (!planted.ok()) return UsageError(std::string(planted.status().message()));
  if (a.max_rounds < 1) return UsageError("--max-rounds must be >= 1");
  PipelineSimConfig cfg;
  cfg.sampling = rc.sampling;
  cfg.anneal = rc.anneal;
  cfg.max_rounds = a.max_rounds;
  if (!a.annotators.empty()) cfg.annotators = a.annotators;
  absl::StatusOr<SimReport> report = RunPipelineSim(*planted, rc.noise, cfg);
  if (!report.ok()) return FromStatus(report.status());

  WUG_TRY(out.Write("rounds.tsv", RoundTable(*report, a.n_usages)));
  WUG_TRY(out.Write("usages.tsv", FormatUsagesTsv(planted->usages)));
  WUG_TRY(out.Write("judgments.tsv", FormatJudgmentsTsv(report->judgments)));
  std::string truth = "identifier\tsense\n";
  for (const auto& [id, sense] : planted->true_clusters) {
    truth += absl::StrFormat("%s\t%d\n", EscapeField(id), sense);
  }
  WUG_TRY(out.Write("truth.tsv", truth));
  WUG_TRY(out.Write("clusters.tsv", ClustersTsv({report->graph, report->clustering, {}})));

  const RoundRecord& last = report->rounds.back();
  results["final_accuracy"] = report->final_accuracy();
  results["rounds"] = report->rounds.size();
  results["stopped"] = report->stopped;
  results["rounds_to_accuracy_1"] = report->RoundsToAccuracy(1.0);
  results["judgments"] = report->judgments.size();
  results["edges_annotated"] = last.edges_annotated;
  results["edge_share"] = last.edges_annotated / (a.n_usages * (a.n_usages - 1) / 2.0);
  results["clusters"] = last.clusters;
  return std::nullopt;
}

Result CmdRobustness(const Args& a, const RunConfig& rc, Output& out, ordered_json& results) {
  std::vector<double> fractions;
  for (const std::string& f : SplitList(a.fractions)) {
    double v = 0;
    if (!absl::SimpleAtod(f, &v) || v < 0 || v > 1) {
      return UsageError("bad fraction '" + f + "'");
    }
    fractions.push_back(v);
  }
  if (fractions.empty()) return UsageError("--fractions is empty");
  if (a.trials < 1 || a.graphs < 1) return UsageError("--trials and --graphs must be >= 1");

  // Each fixture is a graph plus the clustering it is compared against.
  struct Fixture {
    Wug graph;
    Clustering reference;
    std::optional<double> reference_vs_plant;
  };
  std::vector<Fixture> fixtures;
  if (!a.data.empty()) {
    absl::StatusOr<Dataset> d = LoadData(a.data, rc.periods);
    if (!d.ok()) return FromStatus(d.status());
    if (a.lemmas.size() != 1) return UsageError("--data needs exactly one --lemma");
    absl::StatusOr<std::vector<std::string>> lemmas = SelectLemmas(*d, a.lemmas);
    if (!lemmas.ok()) return FromStatus(lemmas.status());
    absl::StatusOr<LemmaClustering> lc =
        ClusterLemma(*d, a.lemmas[0], rc, LemmaSeed(rc, a.lemmas[0]));
    if (!lc.ok()) return FromStatus(lc.status());
    fixtures.push_back({lc->graph, lc->clustering, std::nullopt});
  } else {
    if (a.density <= 0 || a.density > 1) return UsageError("--density must be in (0, 1]");
    for (int gi = 0; gi < a.graphs; ++gi) {
      const uint64_t gs = static_cast<uint64_t>(gi);
      absl::StatusOr<PlantedGraph> planted =
          GeneratePlantedGraph(a.n_usages, a.n_senses, 0.5, DeriveSeed(rc.seed, {0x9a, gs}));
      if (!planted.ok()) return UsageError(std::string(planted.status().message()));
      absl::StatusOr<Wug> g = AnnotatePlanted(*planted, a.density, DeriveSeed(rc.seed, {0xd, gs}));
      if (!g.ok()) return FromStatus(g.status());
      Clustering reference = Cluster(*g, rc.anneal);
      const double vs_plant = AccuracyAgainstPlant(*planted, reference);
      fixtures.push_back({*std::move(g), std::move(reference), vs_plant});
    }
  }

  std::vector<RobustnessCurve> curves;
  for (size_t gi = 0; gi < fixtures.size(); ++gi) {
    RobustnessConfig cfg;
    cfg.fractions = fractions;
    cfg.trials = a.trials;
    cfg.anneal = rc.anneal;
    cfg.seed = DeriveSeed(rc.seed, {0xe, gi});
    cfg.workers = rc.workers;
    cfg.bootstrap_resamples = a.bootstrap;
    absl::StatusOr<RobustnessCurve> c =
        RobustnessExperiment(fixtures[gi].graph, fixtures[gi].reference, cfg);
    if (!c.ok()) return FromStatus(c.status());
    curves.push_back(*std::move(c));
  }

  std::string tsv = "fraction\tmean_accuracy\tci_low\tci_high\ttrials\n";
  std::string by_graph = "graph\tfraction\tmean_accuracy\tci_low\tci_high\n";
  ordered_json curve = ordered_json::array();
  for (size_t fi = 0; fi < fractions.size(); ++fi) {
    std::vector<double> pooled;
    for (size_t gi = 0; gi < curves.size(); ++gi) {
      const RobustnessCurve& c = curves[gi];
      pooled.insert(pooled.end(), c.accuracies[fi].begin(), c.accuracies[fi].end());
      by_graph += absl::StrFormat("%d\t%s\t%.6f\t%.6f\t%.6f\n", gi, Show(fractions[fi]),
                                  c.mean_accuracy[fi], c.ci_low[fi], c.ci_high[fi]);
    }
    double mean = 0;
    for (double v : pooled) mean += v;
    mean /= pooled.size();
    Rng rng(DeriveSeed(rc.seed, {0xb0075, fi}));
    const auto [lo, hi] = BootstrapMeanCi(pooled, a.bootstrap, rng);
    tsv += absl::StrFormat("%s\t%.6f\t%.6f\t%.6f\t%d\n", Show(fractions[fi]), mean, lo, hi,
                           pooled.size());
    curve.push_back({{"fraction", fractions[fi]}, {"mean_accuracy", mean},
                     {"ci_low", lo}, {"ci_high", hi}});
  }
  WUG_TRY(out.Write("curve.tsv", tsv));
  WUG_TRY(out.Write("curve_by_graph.tsv", by_graph));
  results["fixtures"] = fixtures.size();
  ordered_json vs_plant = ordered_json::array();
  for (const Fixture& f : fixtures) {
    if (f.reference_vs_plant) vs_plant.push_back(*f.reference_vs_plant);
  }
  if (!vs_plant.empty()) results["reference_accuracy_vs_plant"] = std::move(vs_plant);
  results["curve"] = std::move(curve);
  return std::nullopt;
}

Result CmdExport(const Args& a, const RunConfig& rc, Output& out, ordered_json& results) {
  (void)rc;
  absl::StatusOr<std::unique_ptr<ProjectStore>> store = ProjectStore::Open(a.project);
  if (!store.ok()) return FromStatus(store.status());
  const ProjectStore& s = **store;
  Dataset d = s.data();
  d.judgments = s.Judgments();
  WUG_TRY(out.Write("usages.tsv", FormatUsagesTsv(d.usages)));
  if (!d.senses.empty()) WUG_TRY(out.Write("senses.tsv", FormatSensesTsv(d.senses)));
  WUG_TRY(out.Write("judgments.tsv", FormatJudgmentsTsv(d.judgments)));
  const ProjectState state = s.State();
  WUG_TRY(out.Write("state.json", FormatProjectState(state)));
  for (const std::string& lemma : d.Lemmas()) {
    absl::StatusOr<Wug> g = BuildLemmaGraph(d, lemma, d.judgments, s.config().periods);
    if (!g.ok()) return FromStatus(g.status());
    const Clustering* c = nullptr;
    auto it = state.lemmas.find(lemma);
    if (it != state.lemmas.end() && it->second.clustering) c = &*it->second.clustering;
    const Wug shown = c == nullptr ? *std::move(g) : FilterZeroNodes(*g).graph;
    WUG_TRY(out.Write(fs::path("graphs") / (SafeName(lemma) + ".json"),
                      ExportGraphJson(shown, c, lemma)));
  }
  results["round"] = state.round;
  results["judgments"] = d.judgments.size();
  results["lemmas"] = d.Lemmas();
  return std::nullopt;
}

ordered_json ArgumentsJson(const std::string& command, const Args& a);

Result CmdServe(const Args& a, const RunConfig& rc, Output& out, ordered_json& results,
                std::ostream& log) {
  absl::StatusOr<std::unique_ptr<ProjectStore>> store = absl::NotFoundError("");
  if (!a.create_from.empty()) {
    if (a.project_config.empty()) return UsageError("--create-from needs --project-config");
    absl::StatusOr<std::string> text = ReadFile(a.project_config);
    if (!text.ok()) return FromStatus(text.status());
    absl::StatusOr<ProjectConfig> cfg = ParseProjectConfig(*text, a.project_config);
    if (!cfg.ok()) return FromStatus(cfg.status());
    absl::StatusOr<Dataset> d = LoadData(a.create_from, cfg->periods);
    if (!d.ok()) return FromStatus(d.status());
    store = ProjectStore::Create(a.project, *cfg, *d);
  } else {
    store = ProjectStore::Open(a.project);
  }
  if (!store.ok()) return FromStatus(store.status());
  const std::string project_id = (*store)->config().project_id;
  const int round = (*store)->State().round;
  AnnotationService service;
  WUG_TRY_STATUS(service.AddProject(*std::move(store)));
  results["project"] = project_id;
  results["round"] = round;
  results["host"] = a.host;
  results["port"] = a.port;
  if (a.check_only) return std::nullopt;

  httplib::Server server;
  service.Mount(server);
  if (!server.bind_to_port(a.host, a.port)) {
    return Failure{kExitInternal, "internal",
                   absl::StrFormat("cannot bind %s:%d", a.host, a.port)};
  }
  // The manifest goes out before the server blocks.
  WUG_TRY(WriteManifest(out, "serve", rc, ArgumentsJson("serve", a), results));
  log << absl::StrFormat("serving project %s on http://%s:%d\n", project_id, a.host, a.port);
  log.flush();
  server.listen_after_bind();
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Command-line wiring.

struct Common {
  std::string config_file;
  std::vector<std::string> sets;
  std::optional<uint64_t> seed;
  std::optional<int> workers;
  std::optional<double> noise;
  std::optional<double> p_zero;
};

void AddCommon(CLI::App* sub, Args& a, Common& c) {
  sub->add_option("--out", a.out, "Output directory")->required();
  sub->add_option("--config", c.config_file, "Flat key = value settings file");
  sub->add_option("--set", c.sets, "Override one setting: key=value (repeatable)");
  sub->add_option("--seed", c.seed, "Random seed");
  sub->add_option("--workers", c.workers, "Worker threads");
}

Result BuildConfig(const Common& c, RunConfig& rc) {
  if (!c.config_file.empty()) {
    absl::StatusOr<std::string> text = ReadFile(c.config_file);
    if (!text.ok()) return UsageError(std::string(text.status().message()));
    absl::StatusOr<std::map<std::string, std::string>> kv = ParseKeyValues(*text, c.config_file);
    if (!kv.ok()) return UsageError(std::string(kv.status().message()));
    for (const auto& [k, v] : *kv) WUG_TRY(Apply(rc, k, v, c.config_file));
  }
  for (const std::string& s : c.sets) {
    const size_t eq = s.find('=');
    if (eq == std::string::npos) return UsageError("--set expects key=value, got '" + s + "'");
    std::string key = s.substr(0, eq), value = s.substr(eq + 1);
    key.erase(key.find_last_not_of(" \t") + 1);
    value.erase(0, value.find_first_not_of(" \t"));
    WUG_TRY(Apply(rc, key, value, "--set"));
  }
  if (c.seed) rc.seed = *c.seed;
  if (c.workers) rc.workers = *c.workers;
  if (c.noise) rc.noise.p_deviate = *c.noise;
  if (c.p_zero) rc.noise.p_zero = *c.p_zero;
  return Finalize(rc);
}

ordered_json ArgumentsJson(const std::string& command, const Args& a) {
  ordered_json j = ordered_json::object();
  auto put_paths = [&] {
    if (!a.data.empty()) j["data"] = a.data;
    if (!a.lemmas.empty()) j["lemmas"] = a.lemmas;
  };
  if (command == "ingest") {
    j["usages"] = a.usages;
    j["senses"] = a.senses;
    j["judgments"] = a.judgments;
  } else if (command == "simulate") {
    j["usages"] = a.n_usages;
    j["senses"] = a.n_senses;
    j["period_split"] = a.period_split;
    j["max_rounds"] = a.max_rounds;
    j["annotators"] = a.annotators;
  } else if (command == "robustness") {
    put_paths();
    j["fractions"] = a.fractions;
    j["trials"] = a.trials;
    j["bootstrap_resamples"] = a.bootstrap;
    if (a.data.empty()) {
      j["graphs"] = a.graphs;
      j["usages"] = a.n_usages;
      j["senses"] = a.n_senses;
      j["density"] = a.density;
    }
  } else if (command == "export" || command == "serve") {
    j["project"] = a.project;
    if (command == "serve") {
      j["host"] = a.host;
      j["port"] = a.port;
      if (!a.create_from.empty()) j["create_from"] = a.create_from;
    }
  } else {
    put_paths();
    if (command == "sample") j["annotators"] = a.annotators;
  }
  return j;
}

}  // namespace

int Run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"wugflow: word usage graph annotation and clustering"};
  app.name("wugflow");
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  Args a;
  Common common;
  std::map<std::string, CLI::App*> subs;
  auto sub = [&](const char* name, const char* help) {
    CLI::App* s = app.add_subcommand(name, help);
    AddCommon(s, a, common);
    subs[name] = s;
    return s;
  };

  CLI::App* ingest = sub("ingest", "Validate input TSVs and write a normalized dataset");
  ingest->add_option("--usages", a.usages, "usages TSV")->required();
  ingest->add_option("--senses", a.senses, "sense descriptions TSV");
  ingest->add_option("--judgments", a.judgments, "judgments TSV");

  for (const char* name : {"sample", "cluster", "stats", "change"}) {
    const char* help = std::string_view(name) == "sample"    ? "Sample the next annotation batch"
                       : std::string_view(name) == "cluster" ? "Cluster lemma graphs"
                       : std::string_view(name) == "stats"   ? "Agreement and judgment statistics"
                                                             : "Graded and binary change scores";
    CLI::App* s = sub(name, help);
    s->add_option("--data", a.data, "Dataset or project directory")->required();
    if (std::string_view(name) != "stats") {
      s->add_option("--lemma", a.lemmas, "Restrict to lemma (repeatable)");
    }
    if (std::string_view(name) == "sample") {
      s->add_option("--annotators", a.annotators, "Annotator names")->delimiter(',');
    }
  }

  CLI::App* simulate = sub("simulate", "Run the annotation pipeline against a planted graph");
  a.n_usages = 100;
  a.n_senses = 2;
  simulate->add_option("--usages", a.n_usages, "Usages in the planted graph")
      ->capture_default_str();
  simulate->add_option("--senses", a.n_senses, "Planted senses")->capture_default_str();
  simulate->add_option("--period-split", a.period_split, "Share of usages in period 1")
      ->capture_default_str();
  simulate->add_option("--max-rounds", a.max_rounds, "Round limit")->capture_default_str();
  simulate->add_option("--noise", common.noise, "Probability of a +-1 deviation");
  simulate->add_option("--p-zero", common.p_zero, "Probability of a 0 judgment");
  simulate->add_option("--annotators", a.annotators, "Simulated annotator names")
      ->delimiter(',');

  CLI::App* robustness = sub("robustness", "Perturbation robustness curve");
  robustness->add_option("--fractions", a.fractions, "Comma-separated perturbation shares")
      ->capture_default_str();
  robustness->add_option("--trials", a.trials, "Trials per fraction")->capture_default_str();
  robustness->add_option("--bootstrap", a.bootstrap, "Bootstrap resamples")
      ->capture_default_str();
  robustness->add_option("--data", a.data, "Dataset directory (default: planted graphs)");
  robustness->add_option("--lemma", a.lemmas, "Lemma to perturb when --data is given");
  robustness->add_option("--graphs", a.graphs, "Planted graphs")->capture_default_str();
  robustness->add_option("--usages", a.n_usages, "Usages per planted graph");
  robustness->add_option("--senses", a.n_senses, "Senses per planted graph");
  robustness->add_option("--density", a.density, "Share of planted pairs judged")
      ->capture_default_str();

  CLI::App* serve = sub("serve", "Run the annotation HTTP service for a project");
  serve->add_option("--project", a.project, "Project directory")->required();
  serve->add_option("--host", a.host, "Bind address")->capture_default_str();
  serve->add_option("--port", a.port, "Port")->capture_default_str();
  serve->add_option("--create-from", a.create_from, "Create the project from this dataset");
  serve->add_option("--project-config", a.project_config, "Project config for --create-from");
  serve->add_flag("--check", a.check_only, "Open the project and exit without serving");

  CLI::App* exp = sub("export", "Export a project's dataset, state and graphs");
  exp->add_option("--project", a.project, "Project directory")->required();

  std::vector<std::string> argv_storage = {"wugflow"};
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (std::string& s : argv_storage) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  std::string command;
  for (const auto& [name, s] : subs) {
    if (s->parsed()) command = name;
  }
  // The robustness planted fixture defaults differ from simulate's.
  if (command == "robustness") {
    if (subs["robustness"]->count("--usages") == 0) a.n_usages = 150;
    if (subs["robustness"]->count("--senses") == 0) a.n_senses = 3;
  }

  auto report = [&](const Failure& f) {
    ordered_json j = {{"error", f.kind}, {"message", f.message}, {"exit_code", f.code}};
    err << j.dump() << "\n";
    return f.code;
  };

  try {
    RunConfig rc;
    if (Result f = BuildConfig(common, rc)) return report(*f);
    Output output{fs::path(a.out)};
    ordered_json results = ordered_json::object();
    Result r;
    if (command == "ingest") r = CmdIngest(a, rc, output, results);
    else if (command == "sample") r = CmdSample(a, rc, output, results);
    else if (command == "cluster") r = CmdCluster(a, rc, output, results);
    else if (command == "stats") r = CmdStats(a, rc, output, results);
    else if (command == "change") r = CmdChange(a, rc, output, results);
    else if (command == "simulate") r = CmdSimulate(a, rc, output, results);
    else if (command == "robustness") r = CmdRobustness(a, rc, output, results);
    else if (command == "export") r = CmdExport(a, rc, output, results);
    else if (command == "serve") r = CmdServe(a, rc, output, results, err);
    else r = UsageError("unknown command");
    if (r) return report(*r);
    if (Result f = WriteManifest(output, command, rc, ArgumentsJson(command, a), results)) {
      return report(*f);
    }
    out << results.dump(2) << "\n";
    return kExitOk;
  } catch (const std::exception& e) {
    return report({kExitInternal, "internal", e.what()});
  }
}

}  // namespace wug::cli
