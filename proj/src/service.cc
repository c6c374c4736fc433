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


#include "wug/service.h"

#include <algorithm>
#include <mutex>
#include <set>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "httplib.h"
#include "json.hpp"
#include "wug/metrics.h"
#include "wug/rng.h"

namespace wug {

using ordered_json = nlohmann::ordered_json;

namespace {

HttpResponse Json(int status, const ordered_json& body) {
  return {status, body.dump()};
}

HttpResponse Error(int status, std::string_view message) {
  return Json(status, ordered_json{{"error", std::string(message)}});
}

HttpResponse Error(const absl::Status& s) {
  int status = 500;
  switch (s.code()) {
    case absl::StatusCode::kInvalidArgument: status = 400; break;
    case absl::StatusCode::kNotFound: status = 404; break;
    case absl::StatusCode::kFailedPrecondition: status = 409; break;
    default: break;
  }
  return Error(status, std::string(s.message()));
}

ordered_json AgreementJson(const AgreementReport& r) {
  ordered_json pairs = ordered_json::array();
  for (const auto& [ab, pc] : r.pairwise_spearman) {
    pairs.push_back({{"a", ab.first}, {"b", ab.second}, {"rho", pc.rho},
                     {"n", pc.n_shared}});
  }
  auto opt = [](const std::optional<double>& v) {
    return v ? ordered_json(*v) : ordered_json(nullptr);
  };
  return {{"pairwise_spearman", std::move(pairs)},
          {"weighted_mean_spearman", opt(r.weighted_mean_spearman)},
          {"krippendorff_alpha", opt(r.krippendorff_alpha)}};
}

ordered_json FlagJson(const WordFlag& f) {
  return {{"flagged", f.flagged}, {"zero_fraction", f.zero_fraction},
          {"pending_pairs", f.pending_pairs}, {"reason", f.reason}};
}

std::vector<BatchRow> ToRows(const AnnotationBatch& batch, int round) {
  std::vector<BatchRow> rows;
  for (const SampledPair& sp : batch.pairs) {
    auto it = batch.assignments.find(sp.pair);
    if (it == batch.assignments.end()) continue;
    for (const std::string& a : it->second) {
      rows.push_back({sp.pair, a, sp.provenance, round});
    }
  }
  return rows;
}

}  // namespace

const std::vector<std::pair<int, std::string>>& ScaleLabels() {
  static const auto* labels = new std::vector<std::pair<int, std::string>>{
      {4, "Identical"},
      {3, "Closely Related"},
      {2, "Distantly Related"},
      {1, "Unrelated"},
      {0, "Cannot decide"}};
  return *labels;
}

struct AnnotationService::Project {
  std::unique_ptr<ProjectStore> store;
  std::shared_mutex mu;
  std::map<std::string, std::string> lemma_of;         // node id -> lemma
  std::map<std::string, const Usage*> usage_by_id;
  std::map<std::string, const SenseDescription*> sense_by_node;
  std::map<std::string, std::string> annotator_of_token;
  // Rebuilt from the committed state whenever it changes.
  std::map<std::string, std::vector<std::string>> queues;  // annotator -> ids
  std::map<std::string, PairTask> tasks;                   // id -> task

  void Index() {
    const Dataset& d = store->data();
    for (const Usage& u : d.usages) {
      lemma_of[u.identifier] = u.lemma;
      usage_by_id[u.identifier] = &u;
    }
    for (const SenseDescription& s : d.senses) {
      lemma_of[s.NodeId()] = s.lemma;
      sense_by_node[s.NodeId()] = &s;
    }
    for (const auto& [a, token] : store->config().annotator_tokens) {
      if (!token.empty()) annotator_of_token[token] = a;
    }
  }

  void RebuildQueues() {
    const ProjectState state = store->State();
    const uint64_t seed = store->config().sampling.seed;
    queues.clear();
    tasks.clear();
    for (size_t i = 0; i < state.batch.size(); ++i) {
      const BatchRow& row = state.batch[i];
      PairTask t;
      t.task_id = absl::StrFormat("r%d-%05d", state.round, i);
      t.lemma = lemma_of[row.pair.first];
      t.pair = row.pair;
      t.annotator = row.annotator;
      t.swapped = DeriveSeed(seed, {0x5a4b, static_cast<uint64_t>(state.round), i}) & 1;
      queues[row.annotator].push_back(t.task_id);
      tasks.emplace(t.task_id, std::move(t));
    }
    for (auto& [annotator, ids] : queues) {
      Rng rng(DeriveSeed(seed, {0x9e7e, static_cast<uint64_t>(state.round),
                                StableHash(annotator)}));
      rng.Shuffle(ids);
    }
  }

  bool Resolved(const PairTask& t, const ProjectState& state) const {
    return store->HasJudgment(t.pair, t.annotator, state.round) ||
           state.expired.contains({t.pair, t.annotator});
  }

  ordered_json Render(const std::string& node) const {
    if (auto s = sense_by_node.find(node); s != sense_by_node.end()) {
      return {{"type", "sense"}, {"definition", s->second->definition}};
    }
    const Usage& u = *usage_by_id.at(node);
    return {{"type", "usage"},
            {"context", u.context},
            {"target_start", u.target_start},
            {"target_end", u.target_end}};
  }

  // Open (unresolved) tasks of the current round per annotator.
  std::map<std::string, int> OpenCounts(const ProjectState& state) const {
    std::map<std::string, int> open;
    for (const auto& [id, t] : tasks) {
      if (!Resolved(t, state)) ++open[t.annotator];
    }
    return open;
  }
};

AnnotationService::AnnotationService() = default;
AnnotationService::~AnnotationService() = default;

absl::Status AnnotationService::AddProject(std::unique_ptr<ProjectStore> store) {
  const std::string id = store->config().project_id;
  if (projects_.contains(id)) {
    return absl::AlreadyExistsError(absl::StrCat("duplicate project ", id));
  }
  auto p = std::make_unique<Project>();
  p->store = std::move(store);
  p->Index();
  p->RebuildQueues();
  projects_.emplace(id, std::move(p));
  return absl::OkStatus();
}

AnnotationService::Project* AnnotationService::Find(std::string_view id) {
  auto it = projects_.find(id);
  return it == projects_.end() ? nullptr : it->second.get();
}

HttpResponse AnnotationService::NextTask(std::string_view project,
                                         std::string_view annotator,
                                         std::string_view token) {
  Project* p = Find(project);
  if (p == nullptr) return Error(404, "unknown project");
  std::shared_lock lock(p->mu);
  auto who = p->annotator_of_token.find(std::string(token));
  if (who == p->annotator_of_token.end()) return Error(401, "invalid token");
  const auto& roster = p->store->config().annotators;
  if (std::find(roster.begin(), roster.end(), annotator) == roster.end()) {
    return Error(404, "unknown annotator");
  }
  if (who->second != annotator) return Error(403, "token belongs to another annotator");
  const ProjectState state = p->store->State();
  if (state.round == 0 || state.batch.empty()) return Error(409, "no open round");

  auto q = p->queues.find(std::string(annotator));
  if (q != p->queues.end()) {
    for (const std::string& id : q->second) {
      const PairTask& t = p->tasks.at(id);
      if (p->Resolved(t, state)) continue;
      const std::string& first = t.swapped ? t.pair.second : t.pair.first;
      const std::string& second = t.swapped ? t.pair.first : t.pair.second;
      ordered_json scale = ordered_json::array();
      for (const auto& [score, label] : ScaleLabels()) {
        scale.push_back({{"score", score}, {"label", label}});
      }
      return Json(200, {{"task", {{"task_id", t.task_id},
                                  {"lemma", t.lemma},
                                  {"first", p->Render(first)},
                                  {"second", p->Render(second)},
                                  {"scale", std::move(scale)}}}});
    }
  }
  return Json(200, {{"task", nullptr}});
}

HttpResponse AnnotationService::SubmitJudgment(std::string_view project,
                                               std::string_view token,
                                               std::string_view body) {
  Project* p = Find(project);
  if (p == nullptr) return Error(404, "unknown project");
  std::shared_lock lock(p->mu);
  auto who = p->annotator_of_token.find(std::string(token));
  if (who == p->annotator_of_token.end()) return Error(401, "invalid token");

  const ordered_json req = ordered_json::parse(body, nullptr, false);
  if (req.is_discarded() || !req.is_object() || !req.contains("task_id") ||
      !req["task_id"].is_string() || !req.contains("score")) {
    return Error(400, "expected {\"task_id\": string, \"score\": integer}");
  }
  if (!req["score"].is_number_integer() || req["score"].get<int64_t>() < 0 ||
      req["score"].get<int64_t>() > 4) {
    return Error(400, "score must be an integer in 0..4");
  }
  std::string comment;
  if (req.contains("comment")) {
    if (!req["comment"].is_string()) return Error(400, "comment must be a string");
    comment = req["comment"].get<std::string>();
  }
  auto it = p->tasks.find(req["task_id"].get<std::string>());
  if (it == p->tasks.end() || it->second.annotator != who->second) {
    return Error(404, "no such task for this annotator");
  }
  const PairTask& t = it->second;
  const ProjectState state = p->store->State();
  if (state.expired.contains({t.pair, t.annotator})) {
    return Error(409, "task expired");
  }
  if (p->store->HasJudgment(t.pair, t.annotator, state.round)) {
    return Error(409, "task already judged");
  }
  Judgment j{.node1 = t.pair.first,
             .node2 = t.pair.second,
             .annotator = t.annotator,
             .score = req["score"].get<int>(),
             .comment = comment,
             .round = state.round};
  AppendResult r = p->store->AppendJudgments(std::span<const Judgment>(&j, 1));
  if (r.accepted != 1) {
    const std::string reason = r.rejected.empty() ? "rejected" : r.rejected[0].reason;
    // A concurrent duplicate loses here; the first submission stands.
    return Error(409, reason);
  }
  return Json(200, {{"ok", true}, {"task_id", t.task_id}});
}

HttpResponse AnnotationService::AdvanceRound(std::string_view project,
                                             std::string_view token,
                                             std::string_view body) {
  Project* p = Find(project);
  if (p == nullptr) return Error(404, "unknown project");
  std::unique_lock lock(p->mu);
  const ProjectConfig& cfg = p->store->config();
  if (cfg.admin_token.empty() || token != cfg.admin_token) {
    return Error(401, "admin token required");
  }
  ordered_json req = ordered_json::object();
  if (!body.empty()) {
    req = ordered_json::parse(body, nullptr, false);
    if (req.is_discarded() || !req.is_object()) return Error(400, "body must be an object");
  }
  ProjectState state = p->store->State();
  if (req.contains("expected_round")) {
    if (!req["expected_round"].is_number_integer()) {
      return Error(400, "expected_round must be an integer");
    }
    if (req["expected_round"].get<int>() != state.round) {
      return Json(409, {{"error", "round already advanced"}, {"round", state.round}});
    }
  }
  const bool expire_open = req.value("expire_open", false);

  std::map<std::string, int> open = p->OpenCounts(state);
  if (!open.empty() && !expire_open) {
    int total = 0;
    for (const auto& [a, n] : open) total += n;
    return Json(409, {{"error", "open tasks remain"},
                      {"open_tasks", total},
                      {"by_annotator", open}});
  }

  const std::vector<Judgment> log = p->store->Judgments();
  const Dataset& data = p->store->data();
  ProjectState next;
  next.round = state.round + 1;
  ordered_json lemma_reports = ordered_json::object();
  for (const std::string& lemma : data.Lemmas()) {
    LemmaState ls = state.lemmas.contains(lemma) ? state.lemmas.at(lemma) : LemmaState{};
    ordered_json rep;
    if (ls.complete) {
      rep["complete"] = true;
      rep["batch_pairs"] = 0;
      next.lemmas[lemma] = std::move(ls);
      lemma_reports[lemma] = std::move(rep);
      continue;
    }
    const uint64_t lemma_hash = StableHash(lemma);
    SamplingConfig sampling = cfg.sampling;
    sampling.seed = DeriveSeed(cfg.sampling.seed, {lemma_hash});
    std::vector<Usage> usages = data.UsagesOf(lemma);
    std::vector<SenseDescription> senses = data.SensesOf(lemma);
    std::vector<std::string> warnings;
    absl::StatusOr<AnnotationBatch> batch = AnnotationBatch{};

    if (state.round == 0) {
      if (!senses.empty()) {
        absl::StatusOr<std::vector<NodePair>> pairs = BuildUsgPairs(usages, senses);
        if (!pairs.ok()) return Error(pairs.status());
        for (NodePair& np : *pairs) batch->pairs.push_back({np, Provenance::kExploration});
        Rng rng(DeriveSeed(sampling.seed, {1}));
        AssignAnnotators(*batch, cfg.annotators, sampling.multi_annotation_fraction, rng);
      } else if (usages.size() >= 2) {
        std::vector<std::string> ids;
        for (const Usage& u : usages) ids.push_back(u.identifier);
        batch = Round1Sample(ids, cfg.annotators, sampling);
        if (!batch.ok()) return Error(batch.status());
      } else {
        warnings.push_back("fewer than two usages; nothing to annotate");
      }
    } else {
      absl::StatusOr<Wug> g = BuildLemmaGraph(data, lemma, log, cfg.periods);
      if (!g.ok()) return Error(500, std::string(g.status().message()));
      FilterResult filtered = FilterZeroNodes(*g);
      AnnealConfig anneal = cfg.anneal;
      anneal.seed = DeriveSeed(cfg.anneal.seed,
                               {lemma_hash, static_cast<uint64_t>(state.round)});
      Clustering c = Cluster(filtered.graph, anneal);
      rep["loss"] = c.loss;
      rep["normalized_loss"] = c.normalized_loss;
      rep["clusters"] = c.num_clusters();
      rep["removed_nodes"] = filtered.removed;
      ls.removed_nodes = filtered.removed;
      ls.clustering = c;
      if (g->is_usg()) {
        ls.complete = true;  // all usage-sense pairs were judged in one round
      } else {
        RoundState rs = MakeRoundState(state.round, filtered.graph, c);
        if (StoppingConditionMet(rs, sampling)) {
          ls.complete = true;
        } else {
          batch = NextRound(rs, cfg.annotators, sampling,
                            NextRoundOptions{.disagreement_round = state.round});
          if (!batch.ok()) return Error(500, std::string(batch.status().message()));
        }
      }
      ls.flag = FlagWord(*g, static_cast<int>(batch->pairs.size()), cfg.flags);
      rep["flag"] = FlagJson(ls.flag);
    }
    for (const std::string& w : batch->warnings) warnings.push_back(w);
    if (batch->assignments.empty()) ls.complete = true;
    std::vector<BatchRow> rows = ToRows(*batch, next.round);
    next.batch.insert(next.batch.end(), rows.begin(), rows.end());
    ordered_json composition = ordered_json::object();
    for (const auto& [prov, n] : batch->Composition()) composition[ProvenanceName(prov)] = n;
    rep["complete"] = ls.complete;
    rep["batch_pairs"] = batch->pairs.size();
    rep["composition"] = std::move(composition);
    rep["warnings"] = warnings;
    next.lemmas[lemma] = std::move(ls);
    lemma_reports[lemma] = std::move(rep);
  }

  if (fault_hook_) {
    if (absl::Status s = fault_hook_("computed"); !s.ok()) {
      return Error(500, absl::StrCat("advance aborted: ", std::string(s.message())));
    }
  }
  if (absl::Status s = p->store->CommitState(next, fault_hook_); !s.ok()) {
    return Error(500, absl::StrCat("advance aborted: ", std::string(s.message())));
  }
  p->RebuildQueues();
  int expired = 0;
  for (const auto& [a, n] : open) expired += n;
  return Json(200, {{"round", next.round},
                    {"assignments", next.batch.size()},
                    {"expired_tasks", expired},
                    {"lemmas", std::move(lemma_reports)}});
}

HttpResponse AnnotationService::Graph(std::string_view project, std::string_view lemma,
                                      std::string_view token) {
  Project* p = Find(project);
  if (p == nullptr) return Error(404, "unknown project");
  std::shared_lock lock(p->mu);
  const ProjectConfig& cfg = p->store->config();
  if (cfg.admin_token.empty() || token != cfg.admin_token) {
    return Error(401, "admin token required");
  }
  const std::vector<Judgment> log = p->store->Judgments();
  absl::StatusOr<Wug> g = BuildLemmaGraph(p->store->data(), lemma, log, cfg.periods);
  if (!g.ok()) return Error(g.status());
  const ProjectState state = p->store->State();
  auto it = state.lemmas.find(std::string(lemma));
  const Clustering* c = nullptr;
  if (it != state.lemmas.end() && it->second.clustering) c = &*it->second.clustering;
  Wug shown = c == nullptr ? *std::move(g) : FilterZeroNodes(*g).graph;
  return {200, ExportGraphJson(shown, c, lemma)};
}

HttpResponse AnnotationService::Stats(std::string_view project, std::string_view token) {
  Project* p = Find(project);
  if (p == nullptr) return Error(404, "unknown project");
  std::shared_lock lock(p->mu);
  const ProjectConfig& cfg = p->store->config();
  if (cfg.admin_token.empty() || token != cfg.admin_token) {
    return Error(401, "admin token required");
  }
  const std::vector<Judgment> log = p->store->Judgments();
  const ProjectState state = p->store->State();
  std::map<int, int> per_round;
  for (const Judgment& j : log) ++per_round[j.round];
  ordered_json rounds = ordered_json::object();
  for (const auto& [r, n] : per_round) rounds[std::to_string(r)] = n;

  const JudgmentFrequencies freq = ComputeJudgmentFrequencies(log);
  const DisagreementHistogram hist = ComputeDisagreementHistogram(log);
  ordered_json lemmas = ordered_json::object();
  for (const std::string& lemma : p->store->data().Lemmas()) {
    ordered_json l;
    auto it = state.lemmas.find(lemma);
    const LemmaState ls = it == state.lemmas.end() ? LemmaState{} : it->second;
    l["complete"] = ls.complete;
    l["flag"] = FlagJson(ls.flag);
    l["change"] = nullptr;
    if (ls.clustering) {
      l["clusters"] = ls.clustering->num_clusters();
      l["loss"] = ls.clustering->loss;
      l["normalized_loss"] = ls.clustering->normalized_loss;
      absl::StatusOr<Wug> g = BuildLemmaGraph(p->store->data(), lemma, log, cfg.periods);
      if (g.ok()) {
        absl::StatusOr<ChangeScores> ch = ComputeChange(*g, *ls.clustering);
        if (ch.ok()) {
          l["change"] = {{"graded", ch->graded},
                         {"binary", ch->binary},
                         {"freq_first", ch->freq_first},
                         {"freq_second", ch->freq_second}};
        }
      }
    }
    lemmas[lemma] = std::move(l);
  }
  return Json(200, {{"project", cfg.project_id},
                    {"round", state.round},
                    {"judgments_total", log.size()},
                    {"judgments_per_round", std::move(rounds)},
                    {"agreement", AgreementJson(Agreement(log))},
                    {"agreement_round1", AgreementJson(Agreement(log, 1))},
                    {"judgment_frequencies",
                     {{"counts", freq.counts}, {"proportions", freq.proportions},
                      {"total", freq.total}}},
                    {"disagreement_histogram",
                     {{"proportion", hist.proportion}, {"edges", hist.edges}}},
                    {"lemmas", std::move(lemmas)}});
}

void AnnotationService::Mount(httplib::Server& server) {
  auto bearer = [](const httplib::Request& req) {
    const std::string h = req.get_header_value("Authorization");
    constexpr std::string_view kPrefix = "Bearer ";
    return h.starts_with(kPrefix) ? h.substr(kPrefix.size()) : std::string();
  };
  auto send = [](httplib::Response& res, const HttpResponse& r) {
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  server.Get(R"(/projects/([^/]+)/tasks/next)",
             [this, bearer, send](const httplib::Request& req, httplib::Response& res) {
               send(res, NextTask(req.matches[1].str(),
                                  req.get_param_value("annotator"), bearer(req)));
             });
  server.Post(R"(/projects/([^/]+)/judgments)",
              [this, bearer, send](const httplib::Request& req, httplib::Response& res) {
                send(res, SubmitJudgment(req.matches[1].str(), bearer(req), req.body));
              });
  server.Post(R"(/projects/([^/]+)/rounds/advance)",
              [this, bearer, send](const httplib::Request& req, httplib::Response& res) {
                send(res, AdvanceRound(req.matches[1].str(), bearer(req), req.body));
              });
  server.Get(R"(/projects/([^/]+)/lemmas/([^/]+)/graph)",
             [this, bearer, send](const httplib::Request& req, httplib::Response& res) {
               send(res, Graph(req.matches[1].str(), req.matches[2].str(), bearer(req)));
             });
  server.Get(R"(/projects/([^/]+)/stats)",
             [this, bearer, send](const httplib::Request& req, httplib::Response& res) {
               send(res, Stats(req.matches[1].str(), bearer(req)));
             });
}

}  // namespace wug
