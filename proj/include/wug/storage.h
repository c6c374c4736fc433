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


// File formats and the on-disk project store.
//
// Tables are UTF-8 TSV with a header row. Field values escape backslash, tab,
// newline and carriage return as \\, \t, \n and \r. Sense nodes appear in
// judgment rows as "sense:<sense_id>". Parse errors carry
// "<file>:<line>:<column>" with 1-based line and column numbers.

#ifndef WUG_STORAGE_H_
#define WUG_STORAGE_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "absl/status/statusor.h"
#include "wug/clustering.h"
#include "wug/graph.h"
#include "wug/sampling.h"

namespace wug {

inline constexpr std::string_view kUsageColumns[] = {
    "lemma", "pos", "grouping", "identifier", "context", "target_start",
    "target_end", "date"};
inline constexpr std::string_view kJudgmentColumns[] = {
    "identifier1", "identifier2", "annotator", "judgment", "comment", "round"};
inline constexpr std::string_view kSenseColumns[] = {"lemma", "sense_id",
                                                     "definition"};

std::string EscapeField(std::string_view s);
std::string UnescapeField(std::string_view s);

absl::StatusOr<std::vector<Usage>> ParseUsagesTsv(std::string_view content,
                                                  std::string_view file_name);
absl::StatusOr<std::vector<SenseDescription>> ParseSensesTsv(
    std::string_view content, std::string_view file_name);
absl::StatusOr<std::vector<Judgment>> ParseJudgmentsTsv(std::string_view content,
                                                        std::string_view file_name);

std::string FormatUsagesTsv(std::span<const Usage> usages);
std::string FormatSensesTsv(std::span<const SenseDescription> senses);
std::string FormatJudgmentsTsv(std::span<const Judgment> judgments);
// One judgment row without the trailing newline.
std::string FormatJudgmentRow(const Judgment& j);

// Pending assignments: judgments schema with an empty score column and the
// pair's provenance in the comment column.
struct BatchRow {
  NodePair pair;
  std::string annotator;
  Provenance provenance = Provenance::kExploration;
  int round = 1;
};
std::string FormatBatchTsv(std::span<const BatchRow> rows);
absl::StatusOr<std::vector<BatchRow>> ParseBatchTsv(std::string_view content,
                                                    std::string_view file_name);

absl::StatusOr<std::string> ReadFile(const std::filesystem::path& path);
// Writes to a sibling temporary file and renames it over `path`.
absl::Status WriteFileAtomic(const std::filesystem::path& path,
                             std::string_view content);

struct Dataset {
  std::vector<Usage> usages;
  std::vector<SenseDescription> senses;
  std::vector<Judgment> judgments;

  std::vector<std::string> Lemmas() const;  // sorted, from usages
  std::vector<Usage> UsagesOf(std::string_view lemma) const;
  std::vector<SenseDescription> SensesOf(std::string_view lemma) const;
  // Judgments whose first node is a usage of `lemma`.
  std::vector<Judgment> JudgmentsOf(std::string_view lemma) const;
};

// File names used in error messages. Row i of a table is reported as line
// i + 2 (the header is line 1).
struct SourceNames {
  std::string usages = "usages.tsv";
  std::string senses = "senses.tsv";
  std::string judgments = "judgments.tsv";
};

// Cross-file checks: unique usage and sense ids, known groupings, judgments
// that reference known nodes of one lemma with scores in 0..4, and no
// repeated (pair, annotator, round).
absl::Status ValidateDataset(const Dataset& d, const std::set<int>& periods,
                             const SourceNames& names = {});

absl::StatusOr<Dataset> Ingest(const std::filesystem::path& usages_tsv,
                               const std::optional<std::filesystem::path>& senses_tsv,
                               const std::optional<std::filesystem::path>& judgments_tsv,
                               const std::set<int>& periods = {1, 2});

// Writes usages.tsv, senses.tsv (if any) and judgments.tsv into `dir`.
absl::Status ExportDataset(const Dataset& d, const std::filesystem::path& dir);

// Usage-sense graph when the lemma has sense descriptions, otherwise a
// usage-usage graph.
absl::StatusOr<Wug> BuildLemmaGraph(const Dataset& d, std::string_view lemma,
                                    std::span<const Judgment> judgments,
                                    const std::set<int>& periods);

// Graph JSON with a fixed key order. `clustering` may be null.
std::string ExportGraphJson(const Wug& g, const Clustering* clustering,
                            std::string_view lemma);

// --- Project store ---------------------------------------------------------

struct ProjectConfig {
  std::string project_id;
  std::set<int> periods = {1, 2};
  std::vector<std::string> annotators;
  std::map<std::string, std::string> annotator_tokens;
  std::string admin_token;
  bool allow_adhoc = false;  // accept judgments for pairs outside the batch
  SamplingConfig sampling;
  AnnealConfig anneal;
  WordFlagConfig flags;
};

// Flat "key = value" text, one entry per line, '#' comments. Tokens are
// "token.<annotator> = <secret>"; the roster is the comma list "annotators".
std::string FormatProjectConfig(const ProjectConfig& c);
absl::StatusOr<ProjectConfig> ParseProjectConfig(std::string_view content,
                                                 std::string_view file_name);

// The flat format on its own: trimmed keys and values, later keys win.
absl::StatusOr<std::map<std::string, std::string>> ParseKeyValues(
    std::string_view content, std::string_view file_name);

struct LemmaState {
  bool complete = false;
  std::optional<Clustering> clustering;
  WordFlag flag;
  std::vector<std::string> removed_nodes;
};

// Everything that changes when a round advances. Committed as one file.
struct ProjectState {
  int round = 0;  // 0 = nothing sampled yet
  std::vector<BatchRow> batch;  // assignments of `round`
  std::set<std::pair<NodePair, std::string>> expired;  // (pair, annotator)
  std::map<std::string, LemmaState> lemmas;
};

std::string FormatProjectState(const ProjectState& s);
absl::StatusOr<ProjectState> ParseProjectState(std::string_view content);

struct RowRejection {
  size_t row = 0;  // index into the submitted span
  std::string reason;
};

struct AppendResult {
  size_t accepted = 0;
  std::vector<RowRejection> rejected;
};

// A project directory:
//   project.conf    configuration
//   usages.tsv, senses.tsv
//   judgments.tsv   append-only log
//   state.json      round counter, open batch, per-lemma results
//   rounds/<r>.tsv  batch of round r
class ProjectStore {
 public:
  static absl::StatusOr<std::unique_ptr<ProjectStore>> Create(
      const std::filesystem::path& dir, const ProjectConfig& config,
      const Dataset& data);
  static absl::StatusOr<std::unique_ptr<ProjectStore>> Open(
      const std::filesystem::path& dir);

  const ProjectConfig& config() const { return config_; }
  const std::filesystem::path& dir() const { return dir_; }
  // Usages and senses; judgments live in the log.
  const Dataset& data() const { return data_; }

  // Validates each row against the roster, the score range, known pairs, the
  // open batch (unless ad-hoc pairs are allowed) and the log. Accepted rows
  // are appended in order; rejected rows leave no trace.
  AppendResult AppendJudgments(std::span<const Judgment> judgments);

  std::vector<Judgment> Judgments() const;
  size_t LogSize() const;
  bool HasJudgment(const NodePair& pair, const std::string& annotator,
                   int round) const;
  ProjectState State() const;

  // Replaces the state atomically: the batch file goes first, the state file
  // rename is the commit point. `fault` (tests only) is consulted at
  // "batch_written" and may abort before the commit.
  absl::Status CommitState(
      const ProjectState& next,
      const std::function<absl::Status(std::string_view)>& fault = nullptr);

 private:
  ProjectStore() = default;
  absl::Status LoadLog();

  std::filesystem::path dir_;
  ProjectConfig config_;
  Dataset data_;
  std::map<std::string, std::string> lemma_of_;  // node id -> lemma

  mutable std::mutex mu_;
  std::vector<Judgment> log_;
  std::set<std::tuple<NodePair, std::string, int>> keys_;
  ProjectState state_;
  std::set<std::pair<NodePair, std::string>> open_;  // batch minus expired
};

}  // namespace wug

#endif  // WUG_STORAGE_H_
