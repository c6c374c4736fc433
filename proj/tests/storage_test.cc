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


#include "wug/storage.h"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include "gmock/gmock.h"
#include "gtest/gtest.h"
#include "json.hpp"
#include "wug/clustering.h"

namespace wug {
namespace {

namespace fs = std::filesystem;
using ::testing::ElementsAre;
using ::testing::HasSubstr;
using ::testing::IsEmpty;
using ::testing::SizeIs;

fs::path FreshDir(std::string_view name) {
  fs::path p = fs::path(::testing::TempDir()) /
               (std::string("wug_storage_") + std::string(name));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void Write(const fs::path& p, std::string_view content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
}

constexpr char kUsageHeader[] =
    "lemma\tpos\tgrouping\tidentifier\tcontext\ttarget_start\ttarget_end\tdate\n";
constexpr char kJudgmentHeader[] =
    "identifier1\tidentifier2\tannotator\tjudgment\tcomment\tround\n";

Usage MakeUsage(std::string id, int grouping, std::string lemma = "plane") {
  return Usage{.identifier = std::move(id),
               .lemma = std::move(lemma),
               .pos = "nn",
               .grouping = grouping,
               .context = "the plane landed",
               .target_start = 4,
               .target_end = 9,
               .date = std::nullopt};
}

TEST(EscapeTest, RoundTripsControlCharacters) {
  const std::string raw = "a\tb\nc\\d\re\\t";
  EXPECT_EQ(EscapeField(raw), "a\\tb\\nc\\\\d\\re\\\\t");
  EXPECT_EQ(UnescapeField(EscapeField(raw)), raw);
  EXPECT_EQ(UnescapeField("x\\qy\\"), "x\\qy\\");
}

TEST(IngestTest, MinimalFileSetGivesOneEdge) {
  fs::path dir = FreshDir("minimal");
  Write(dir / "u.tsv", std::string(kUsageHeader) +
                           "plane\tnn\t1\tu1\tthe plane\t4\t9\t1850\n"
                           "plane\tnn\t2\tu2\ta plane\t2\t7\t\n");
  Write(dir / "j.tsv", std::string(kJudgmentHeader) + "u1\tu2\tann1\t4\t\t1\n");
  absl::StatusOr<Dataset> d = Ingest(dir / "u.tsv", std::nullopt, dir / "j.tsv");
  ASSERT_TRUE(d.ok()) << d.status();
  EXPECT_EQ(d->usages[0].date, 1850);
  EXPECT_EQ(d->usages[1].date, std::nullopt);
  absl::StatusOr<Wug> g = BuildLemmaGraph(*d, "plane", d->judgments, {1, 2});
  ASSERT_TRUE(g.ok());
  EXPECT_THAT(g->edges(), SizeIs(1));
  EXPECT_EQ(g->Weight("u1", "u2"), 4.0);
}

TEST(IngestTest, DuplicateIdentifierIsNamed) {
  fs::path dir = FreshDir("dup");
  Write(dir / "u.tsv", std::string(kUsageHeader) +
                           "plane\tnn\t1\tu1\tthe plane\t4\t9\t\n"
                           "plane\tnn\t2\tu1\ta plane\t2\t7\t\n");
  absl::StatusOr<Dataset> d = Ingest(dir / "u.tsv", std::nullopt, std::nullopt);
  ASSERT_FALSE(d.ok());
  EXPECT_THAT(d.status().message(), HasSubstr("u.tsv:3:4"));
  EXPECT_THAT(d.status().message(), HasSubstr("duplicate identifier u1"));
}

TEST(IngestTest, MalformedRowsReportFileLineAndColumn) {
  auto usage_error = [](std::string rows) {
    return std::string(
        ParseUsagesTsv(std::string(kUsageHeader) + rows, "x.tsv").status().message());
  };
  EXPECT_THAT(usage_error("plane\tnn\t1\tu1\n"), HasSubstr("x.tsv:2:5"));
  EXPECT_THAT(usage_error("plane\tnn\tone\tu1\tctx\t0\t1\t\n"),
              HasSubstr("x.tsv:2:3"));
  EXPECT_THAT(usage_error("plane\tnn\t1\tu1\tctx\t0\t9\t\n"), HasSubstr("x.tsv:2:6"));
  EXPECT_THAT(usage_error("plane\tnn\t1\tu1\tctx\t0\t1\t\textra\n"),
              HasSubstr("x.tsv:2:9"));
  EXPECT_THAT(ParseUsagesTsv("lemma\tpos\n", "x.tsv").status().message(),
              HasSubstr("x.tsv:1:3"));
  EXPECT_THAT(ParseJudgmentsTsv(std::string(kJudgmentHeader) + "a\tb\tx\tfour\t\t1\n",
                                "j.tsv")
                  .status()
                  .message(),
              HasSubstr("j.tsv:2:4"));
}

TEST(IngestTest, UnknownPeriodAndUnknownIdsAreRejected) {
  Dataset d;
  d.usages = {MakeUsage("u1", 1), MakeUsage("u2", 3)};
  absl::Status s = ValidateDataset(d, {1, 2});
  EXPECT_THAT(s.message(), HasSubstr("usages.tsv:3:3"));
  EXPECT_THAT(s.message(), HasSubstr("unknown period label 3"));

  d.usages[1].grouping = 2;
  d.judgments = {{"u1", "u2", "a", 3, "", 1}, {"u1", "u9", "a", 3, "", 1}};
  s = ValidateDataset(d, {1, 2});
  EXPECT_THAT(s.message(), HasSubstr("judgments.tsv:3:2"));
  EXPECT_THAT(s.message(), HasSubstr("unknown identifier u9"));

  d.judgments = {{"u1", "u2", "a", 3, "", 1}, {"u2", "u1", "a", 2, "", 1}};
  EXPECT_THAT(ValidateDataset(d, {1, 2}).message(), HasSubstr("duplicate judgment"));
  d.judgments = {{"u1", "u2", "a", 5, "", 1}};
  EXPECT_THAT(ValidateDataset(d, {1, 2}).message(), HasSubstr("outside 0..4"));
}

TEST(IngestTest, PairsMustStayWithinOneLemma) {
  Dataset d;
  d.usages = {MakeUsage("u1", 1, "plane"), MakeUsage("v1", 1, "tree")};
  d.judgments = {{"u1", "v1", "a", 3, "", 1}};
  EXPECT_THAT(ValidateDataset(d, {1, 2}).message(), HasSubstr("mixes lemmas"));
}

Dataset SmallDataset() {
  Dataset d;
  for (int i = 0; i < 6; ++i) {
    d.usages.push_back(MakeUsage("u" + std::to_string(i), 1 + i % 2));
  }
  d.usages[2].context = "odd\tcontext\nwith plane";
  d.usages[2].target_start = 17;
  d.usages[2].target_end = 22;
  d.usages[3].date = 1999;
  d.judgments = {{"u0", "u1", "a", 4, "", 1},  {"u0", "u1", "b", 3, "fine", 1},
                 {"u1", "u2", "a", 4, "", 1},  {"u3", "u4", "a", 4, "", 1},
                 {"u4", "u5", "b", 3, "", 1},  {"u2", "u3", "a", 1, "", 2},
                 {"u0", "u5", "b", 0, "hm", 2}};
  return d;
}

TEST(RoundTripTest, ExportThenIngestIsIdentity) {
  Dataset d = SmallDataset();
  d.senses = {{.sense_id = "s1", .lemma = "other", .definition = "a\tdef"}};
  d.usages.push_back(MakeUsage("o1", 1, "other"));
  d.judgments.push_back({"o1", "sense:s1", "a", 4, "", 1});
  fs::path dir = FreshDir("roundtrip");
  ASSERT_TRUE(ExportDataset(d, dir).ok());
  absl::StatusOr<Dataset> back =
      Ingest(dir / "usages.tsv", dir / "senses.tsv", dir / "judgments.tsv");
  ASSERT_TRUE(back.ok()) << back.status();
  EXPECT_EQ(FormatUsagesTsv(back->usages), FormatUsagesTsv(d.usages));
  EXPECT_EQ(FormatSensesTsv(back->senses), FormatSensesTsv(d.senses));
  EXPECT_EQ(FormatJudgmentsTsv(back->judgments), FormatJudgmentsTsv(d.judgments));
  EXPECT_EQ(back->usages[2].context, d.usages[2].context);

  for (const std::string& lemma : d.Lemmas()) {
    Wug a = *BuildLemmaGraph(d, lemma, d.judgments, {1, 2});
    Wug b = *BuildLemmaGraph(*back, lemma, back->judgments, {1, 2});
    EXPECT_EQ(ExportGraphJson(a, nullptr, lemma), ExportGraphJson(b, nullptr, lemma));
  }
  EXPECT_TRUE(BuildLemmaGraph(d, "other", d.judgments, {1, 2})->is_usg());
  EXPECT_FALSE(BuildLemmaGraph(d, "missing", d.judgments, {1, 2}).ok());
}

TEST(GraphJsonTest, EmptyGraphIsAValidDocument) {
  Wug g = *Wug::Build({}, {});
  nlohmann::json doc = nlohmann::json::parse(ExportGraphJson(g, nullptr, "x"));
  EXPECT_TRUE(doc["nodes"].is_array());
  EXPECT_TRUE(doc["nodes"].empty());
  EXPECT_TRUE(doc["edges"].empty());
  EXPECT_TRUE(doc["clustering"].is_null());
}

TEST(GraphJsonTest, ClusteredNodesCarryClusterIdsInStableOrder) {
  Dataset d = SmallDataset();
  Wug g = *BuildLemmaGraph(d, "plane", d.judgments, {1, 2});
  Clustering c = Cluster(g, {});
  const std::string text = ExportGraphJson(g, &c, "plane");
  EXPECT_EQ(text, ExportGraphJson(g, &c, "plane"));
  nlohmann::ordered_json doc = nlohmann::ordered_json::parse(text);
  std::vector<std::string> keys;
  for (const auto& [k, v] : doc.items()) keys.push_back(k);
  EXPECT_THAT(keys, ElementsAre("lemma", "kind", "nodes", "edges", "clustering"));
  for (const auto& n : doc["nodes"]) {
    EXPECT_EQ(n["isolate"].get<bool>(), n["cluster"].is_null()) << n.dump();
  }
  for (const auto& e : doc["edges"]) {
    if (e["median"].is_null()) continue;
    EXPECT_DOUBLE_EQ(e["shifted"].get<double>(), e["median"].get<double>() - 2.5);
  }
  EXPECT_DOUBLE_EQ(doc["clustering"]["loss"].get<double>(), c.loss);
}

TEST(ConfigTest, RoundTripAndErrors) {
  ProjectConfig c;
  c.project_id = "p";
  c.annotators = {"ann1", "ann2"};
  c.annotator_tokens = {{"ann1", "t1"}, {"ann2", "t2"}};
  c.admin_token = "root";
  c.sampling.edge_fraction = 0.1 + 0.2;  // not exactly representable
  c.anneal.seed = 18446744073709551615ULL;
  absl::StatusOr<ProjectConfig> back =
      ParseProjectConfig(FormatProjectConfig(c), "project.conf");
  ASSERT_TRUE(back.ok()) << back.status();
  EXPECT_EQ(FormatProjectConfig(*back), FormatProjectConfig(c));
  EXPECT_EQ(back->sampling.edge_fraction, c.sampling.edge_fraction);

  EXPECT_THAT(ParseProjectConfig("project_id = p\nannotators = a\nbogus = 1\n", "c")
                  .status()
                  .message(),
              HasSubstr("unknown key bogus"));
  EXPECT_THAT(ParseProjectConfig("project_id = p\nannotators = a\nperiods\n", "c")
                  .status()
                  .message(),
              HasSubstr("c:3:1"));
  EXPECT_FALSE(ParseProjectConfig("annotators = a\n", "c").ok());
  EXPECT_FALSE(
      ParseProjectConfig("project_id = p\nannotators = a\nanneal.workers = 0\n", "c").ok());
}

TEST(StateTest, RoundTrip) {
  ProjectState s;
  s.round = 3;
  s.expired = {{{"u1", "u2"}, "a"}};
  LemmaState ls;
  ls.complete = true;
  ls.flag = {.flagged = true, .zero_fraction = 0.25, .pending_pairs = 3, .reason = "r"};
  ls.removed_nodes = {"u9"};
  Clustering c = ClusteringFromGroups({{"u1", "u2"}, {"u3"}});
  c.loss = 1.5;
  c.normalized_loss = 1.0 / 3.0;
  ls.clustering = c;
  s.lemmas["plane"] = ls;
  s.lemmas["tree"] = {};
  absl::StatusOr<ProjectState> back = ParseProjectState(FormatProjectState(s));
  ASSERT_TRUE(back.ok()) << back.status();
  EXPECT_EQ(FormatProjectState(*back), FormatProjectState(s));
  EXPECT_EQ(back->lemmas["plane"].clustering->normalized_loss, 1.0 / 3.0);
  EXPECT_FALSE(ParseProjectState("{\"round\": 1}").ok());
}

TEST(BatchTsvTest, RoundTrip) {
  std::vector<BatchRow> rows = {
      {{"u1", "u2"}, "a", Provenance::kCombination, 2},
      {{"u1", "u3"}, "b", Provenance::kDisagreement, 2}};
  absl::StatusOr<std::vector<BatchRow>> back = ParseBatchTsv(FormatBatchTsv(rows), "b");
  ASSERT_TRUE(back.ok());
  EXPECT_EQ(FormatBatchTsv(*back), FormatBatchTsv(rows));
}

ProjectConfig StoreConfig(bool adhoc) {
  ProjectConfig c;
  c.project_id = "demo";
  c.annotators = {"a", "b"};
  c.annotator_tokens = {{"a", "ta"}, {"b", "tb"}};
  c.admin_token = "admin";
  c.allow_adhoc = adhoc;
  return c;
}

TEST(ProjectStoreTest, AppendRulesAreCheckedPerRow) {
  fs::path dir = FreshDir("append");
  Dataset d = SmallDataset();
  d.judgments.clear();
  auto store = ProjectStore::Create(dir, StoreConfig(true), d);
  ASSERT_TRUE(store.ok()) << store.status();
  ProjectStore& s = **store;
  EXPECT_EQ(s.LogSize(), 0u);

  AppendResult r = s.AppendJudgments(std::vector<Judgment>{
      {"u1", "u0", "a", 3, "", 1},   // ok, stored canonically
      {"u0", "u1", "a", 2, "", 1},   // duplicate of the first
      {"u0", "u2", "zed", 2, "", 1}, // not on the roster
      {"u0", "u2", "b", 7, "", 1},   // bad score
      {"u0", "u9", "b", 2, "", 1},   // unknown node
      {"u0", "u1", "a", 2, "", 2}}); // same pair, later round: ok
  EXPECT_EQ(r.accepted, 2u);
  ASSERT_THAT(r.rejected, SizeIs(4));
  EXPECT_EQ(r.rejected[0].row, 1u);
  EXPECT_THAT(r.rejected[0].reason, HasSubstr("duplicate"));
  EXPECT_THAT(r.rejected[1].reason, HasSubstr("roster"));
  EXPECT_THAT(r.rejected[2].reason, HasSubstr("outside 0..4"));
  EXPECT_THAT(r.rejected[3].reason, HasSubstr("unknown identifier"));
  EXPECT_EQ(s.LogSize(), 2u);
  EXPECT_EQ(s.Judgments()[0].node1, "u0");

  EXPECT_THAT(s.AppendJudgments(std::vector<Judgment>{{"u0", "u1", "a", 3, "", 1}}).rejected,
              SizeIs(1));
  EXPECT_EQ(s.LogSize(), 2u);
}

TEST(ProjectStoreTest, ReopeningReplaysTheLog) {
  fs::path dir = FreshDir("replay");
  Dataset d = SmallDataset();
  {
    auto store = ProjectStore::Create(dir, StoreConfig(true), d);
    ASSERT_TRUE(store.ok()) << store.status();
    (*store)->AppendJudgments(std::vector<Judgment>{{"u2", "u5", "a", 2, "x\ty", 3}});
  }
  auto reopened = ProjectStore::Open(dir);
  ASSERT_TRUE(reopened.ok()) << reopened.status();
  std::vector<Judgment> log = (*reopened)->Judgments();
  ASSERT_THAT(log, SizeIs(d.judgments.size() + 1));
  EXPECT_EQ(log.back().comment, "x\ty");
  Wug live = *BuildLemmaGraph(d, "plane", log, {1, 2});
  std::vector<Judgment> expected = d.judgments;
  expected.push_back({"u2", "u5", "a", 2, "x\ty", 3});
  Wug direct = *BuildLemmaGraph(d, "plane", expected, {1, 2});
  EXPECT_EQ(ExportGraphJson(live, nullptr, "plane"),
            ExportGraphJson(direct, nullptr, "plane"));
  EXPECT_FALSE(ProjectStore::Create(dir, StoreConfig(true), d).ok());
}

TEST(ProjectStoreTest, BatchGatesAppendsUnlessAdHoc) {
  fs::path dir = FreshDir("batch");
  Dataset d = SmallDataset();
  d.judgments.clear();
  auto store = ProjectStore::Create(dir, StoreConfig(false), d);
  ASSERT_TRUE(store.ok());
  ProjectStore& s = **store;
  EXPECT_THAT(s.AppendJudgments(std::vector<Judgment>{{"u0", "u1", "a", 3, "", 1}}).rejected,
              SizeIs(1));
  ProjectState next = s.State();
  next.round = 1;
  next.batch = {{{"u0", "u1"}, "a", Provenance::kExploration, 1},
                {{"u0", "u2"}, "b", Provenance::kExploration, 1}};
  next.expired = {{{"u0", "u2"}, "b"}};
  ASSERT_TRUE(s.CommitState(next).ok());
  AppendResult r = s.AppendJudgments(std::vector<Judgment>{
      {"u1", "u0", "a", 3, "", 1},   // assigned
      {"u0", "u1", "b", 3, "", 1},   // b was not assigned this pair
      {"u0", "u2", "b", 3, "", 1},   // expired
      {"u0", "u1", "a", 3, "", 2}}); // wrong round
  EXPECT_EQ(r.accepted, 1u);
  EXPECT_THAT(r.rejected, SizeIs(3));

  auto reopened = ProjectStore::Open(dir);
  ASSERT_TRUE(reopened.ok()) << reopened.status();
  EXPECT_EQ((*reopened)->State().round, 1);
  EXPECT_THAT((*reopened)->State().batch, SizeIs(2));
}

TEST(ProjectStoreTest, FailedCommitLeavesStateUnchanged) {
  fs::path dir = FreshDir("fault");
  Dataset d = SmallDataset();
  auto store = ProjectStore::Create(dir, StoreConfig(false), d);
  ASSERT_TRUE(store.ok());
  const std::string before = *ReadFile(dir / "state.json");
  ProjectState next = (*store)->State();
  next.round = 1;
  next.batch = {{{"u0", "u1"}, "a", Provenance::kExploration, 1}};
  absl::Status s = (*store)->CommitState(next, [](std::string_view stage) {
    return stage == "batch_written" ? absl::InternalError("injected crash")
                                    : absl::OkStatus();
  });
  EXPECT_FALSE(s.ok());
  EXPECT_EQ((*store)->State().round, 0);
  EXPECT_EQ(*ReadFile(dir / "state.json"), before);
  auto reopened = ProjectStore::Open(dir);
  ASSERT_TRUE(reopened.ok());
  EXPECT_EQ((*reopened)->State().round, 0);
  EXPECT_THAT((*reopened)->State().batch, IsEmpty());
  next.round = -1;
  EXPECT_FALSE((*store)->CommitState(next).ok());
}

TEST(ProjectStoreTest, ConcurrentWritersBothLand) {
  fs::path dir = FreshDir("concurrent");
  Dataset d;
  for (int i = 0; i < 40; ++i) d.usages.push_back(MakeUsage("u" + std::to_string(i), 1));
  auto store = ProjectStore::Create(dir, StoreConfig(true), d);
  ASSERT_TRUE(store.ok());
  ProjectStore& s = **store;
  auto writer = [&](std::string annotator) {
    for (int i = 0; i + 1 < 40; ++i) {
      s.AppendJudgments(std::vector<Judgment>{
          {"u" + std::to_string(i), "u" + std::to_string(i + 1), annotator, 3, "", 1}});
    }
  };
  std::thread t1(writer, "a");
  std::thread t2(writer, "b");
  t1.join();
  t2.join();
  std::vector<Judgment> log = s.Judgments();
  EXPECT_THAT(log, SizeIs(78));
  // Each writer's rows keep their submission order.
  int last_a = -1, last_b = -1;
  for (const Judgment& j : log) {
    int& last = j.annotator == "a" ? last_a : last_b;
    const int i = std::stoi(j.node1.substr(1)) < std::stoi(j.node2.substr(1))
                      ? std::stoi(j.node1.substr(1))
                      : std::stoi(j.node2.substr(1));
    EXPECT_GT(i, last);
    last = i;
  }
  auto reopened = ProjectStore::Open(dir);
  ASSERT_TRUE(reopened.ok());
  std::vector<Judgment> disk = (*reopened)->Judgments();
  ASSERT_EQ(disk.size(), log.size());
  for (size_t i = 0; i < log.size(); ++i) {
    EXPECT_EQ(FormatJudgmentRow(disk[i]), FormatJudgmentRow(log[i]));
  }
}

}  // namespace
}  // namespace wug
