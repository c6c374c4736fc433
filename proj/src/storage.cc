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

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "absl/status/status.h"
#include "absl/strings/numbers.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "absl/strings/str_join.h"
#include "json.hpp"

namespace wug {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

std::vector<std::string_view> Split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  size_t start = 0;
  for (size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

std::string_view Trim(std::string_view s) {
  const auto space = [](char c) {
    return c == ' ' || c == '\t' || c == '\r' || c == '\n';
  };
  while (!s.empty() && space(s.front())) s.remove_prefix(1);
  while (!s.empty() && space(s.back())) s.remove_suffix(1);
  return s;
}

absl::Status At(std::string_view file, size_t line, size_t column,
                std::string_view message) {
  return absl::InvalidArgumentError(absl::StrCat(std::string(file), ":", line, ":",
                                                 column, ": ", std::string(message)));
}

// Rows of a TSV table after the header check. Fields are unescaped.
struct Table {
  std::vector<std::vector<std::string>> rows;
};

absl::StatusOr<Table> ParseTable(std::string_view content, std::string_view file,
                                 std::span<const std::string_view> columns) {
  std::vector<std::string_view> lines = Split(content, '\n');
  // A final newline leaves one empty piece.
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) return At(file, 1, 1, "missing header row");
  for (std::string_view& l : lines) {
    if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
  }

  std::vector<std::string_view> header = Split(lines[0], '\t');
  for (size_t c = 0; c < columns.size(); ++c) {
    if (c >= header.size() || header[c] != columns[c]) {
      return At(file, 1, c + 1,
                absl::StrCat("expected header column '", std::string(columns[c]), "'"));
    }
  }
  if (header.size() > columns.size()) {
    return At(file, 1, columns.size() + 1,
              absl::StrCat("unexpected header column '", std::string(header[columns.size()]), "'"));
  }

  Table t;
  for (size_t i = 1; i < lines.size(); ++i) {
    std::vector<std::string_view> fields = Split(lines[i], '\t');
    if (fields.size() < columns.size()) {
      return At(file, i + 1, fields.size() + 1,
                absl::StrCat("missing column '", std::string(columns[fields.size()]), "'"));
    }
    if (fields.size() > columns.size()) {
      return At(file, i + 1, columns.size() + 1, "too many columns");
    }
    std::vector<std::string> row;
    row.reserve(fields.size());
    for (std::string_view f : fields) row.push_back(UnescapeField(f));
    t.rows.push_back(std::move(row));
  }
  return t;
}

absl::StatusOr<int> IntField(const std::string& v, std::string_view file,
                             size_t line, size_t column, std::string_view name) {
  int out = 0;
  if (!absl::SimpleAtoi(v, &out)) {
    return At(file, line, column,
              absl::StrCat("column '", std::string(name), "' is not an integer: '", v, "'"));
  }
  return out;
}

std::string Row(std::initializer_list<std::string_view> fields) {
  std::string out;
  bool first = true;
  for (std::string_view f : fields) {
    if (!first) out += '\t';
    first = false;
    out += EscapeField(f);
  }
  return out;
}

std::string Header(std::span<const std::string_view> columns) {
  std::string out;
  for (std::string_view c : columns) {
    if (!out.empty()) out += '\t';
    out += c;
  }
  return out + "\n";
}

std::string FormatDouble(double v) { return absl::StrFormat("%.17g", v); }

}  // namespace

std::string EscapeField(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out += c;
    }
  }
  return out;
}

std::string UnescapeField(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\' || i + 1 == s.size()) {
      out += s[i];
      continue;
    }
    switch (s[++i]) {
      case 't': out += '\t'; break;
      case 'n': out += '\n'; break;
      case 'r': out += '\r'; break;
      case '\\': out += '\\'; break;
      default:  // unknown escapes stay literal
        out += '\\';
        out += s[i];
    }
  }
  return out;
}

absl::StatusOr<std::vector<Usage>> ParseUsagesTsv(std::string_view content,
                                                  std::string_view file) {
  absl::StatusOr<Table> t = ParseTable(content, file, kUsageColumns);
  if (!t.ok()) return t.status();
  std::vector<Usage> out;
  for (size_t i = 0; i < t->rows.size(); ++i) {
    const auto& r = t->rows[i];
    const size_t line = i + 2;
    Usage u;
    u.lemma = r[0];
    u.pos = r[1];
    auto grouping = IntField(r[2], file, line, 3, "grouping");
    if (!grouping.ok()) return grouping.status();
    u.grouping = *grouping;
    u.identifier = r[3];
    if (u.identifier.empty()) return At(file, line, 4, "empty identifier");
    if (IsSenseNode(u.identifier)) {
      return At(file, line, 4, "usage identifiers may not start with 'sense:'");
    }
    u.context = r[4];
    auto start = IntField(r[5], file, line, 6, "target_start");
    if (!start.ok()) return start.status();
    auto end = IntField(r[6], file, line, 7, "target_end");
    if (!end.ok()) return end.status();
    u.target_start = *start;
    u.target_end = *end;
    if (u.target_start < 0 || u.target_start > u.target_end ||
        u.target_end > static_cast<int>(u.context.size())) {
      return At(file, line, 6, "target span lies outside the context");
    }
    if (!r[7].empty()) {
      auto date = IntField(r[7], file, line, 8, "date");
      if (!date.ok()) return date.status();
      u.date = *date;
    }
    out.push_back(std::move(u));
  }
  return out;
}

absl::StatusOr<std::vector<SenseDescription>> ParseSensesTsv(
    std::string_view content, std::string_view file) {
  absl::StatusOr<Table> t = ParseTable(content, file, kSenseColumns);
  if (!t.ok()) return t.status();
  std::vector<SenseDescription> out;
  for (size_t i = 0; i < t->rows.size(); ++i) {
    const auto& r = t->rows[i];
    if (r[1].empty()) return At(file, i + 2, 2, "empty sense_id");
    out.push_back({.sense_id = r[1], .lemma = r[0], .definition = r[2]});
  }
  return out;
}

absl::StatusOr<std::vector<Judgment>> ParseJudgmentsTsv(std::string_view content,
                                                        std::string_view file) {
  absl::StatusOr<Table> t = ParseTable(content, file, kJudgmentColumns);
  if (!t.ok()) return t.status();
  std::vector<Judgment> out;
  for (size_t i = 0; i < t->rows.size(); ++i) {
    const auto& r = t->rows[i];
    const size_t line = i + 2;
    Judgment j;
    j.node1 = r[0];
    j.node2 = r[1];
    j.annotator = r[2];
    if (j.node1.empty()) return At(file, line, 1, "empty identifier1");
    if (j.node2.empty()) return At(file, line, 2, "empty identifier2");
    if (j.annotator.empty()) return At(file, line, 3, "empty annotator");
    auto score = IntField(r[3], file, line, 4, "judgment");
    if (!score.ok()) return score.status();
    j.score = *score;
    j.comment = r[4];
    auto round = IntField(r[5], file, line, 6, "round");
    if (!round.ok()) return round.status();
    j.round = *round;
    out.push_back(std::move(j));
  }
  return out;
}

std::string FormatUsagesTsv(std::span<const Usage> usages) {
  std::string out = Header(kUsageColumns);
  for (const Usage& u : usages) {
    absl::StrAppend(&out,
                    Row({u.lemma, u.pos, std::to_string(u.grouping), u.identifier,
                         u.context, std::to_string(u.target_start),
                         std::to_string(u.target_end),
                         u.date ? std::to_string(*u.date) : std::string()}),
                    "\n");
  }
  return out;
}

std::string FormatSensesTsv(std::span<const SenseDescription> senses) {
  std::string out = Header(kSenseColumns);
  for (const SenseDescription& s : senses) {
    absl::StrAppend(&out, Row({s.lemma, s.sense_id, s.definition}), "\n");
  }
  return out;
}

std::string FormatJudgmentRow(const Judgment& j) {
  return Row({j.node1, j.node2, j.annotator, std::to_string(j.score), j.comment,
              std::to_string(j.round)});
}

std::string FormatJudgmentsTsv(std::span<const Judgment> judgments) {
  std::string out = Header(kJudgmentColumns);
  for (const Judgment& j : judgments) absl::StrAppend(&out, FormatJudgmentRow(j), "\n");
  return out;
}

std::string FormatBatchTsv(std::span<const BatchRow> rows) {
  std::string out = Header(kJudgmentColumns);
  for (const BatchRow& b : rows) {
    absl::StrAppend(&out,
                    Row({b.pair.first, b.pair.second, b.annotator, "",
                         ProvenanceName(b.provenance), std::to_string(b.round)}),
                    "\n");
  }
  return out;
}

absl::StatusOr<std::vector<BatchRow>> ParseBatchTsv(std::string_view content,
                                                    std::string_view file) {
  absl::StatusOr<Table> t = ParseTable(content, file, kJudgmentColumns);
  if (!t.ok()) return t.status();
  std::vector<BatchRow> out;
  for (size_t i = 0; i < t->rows.size(); ++i) {
    const auto& r = t->rows[i];
    const size_t line = i + 2;
    if (!r[3].empty()) return At(file, line, 4, "batch rows carry no score");
    absl::StatusOr<Provenance> prov = ParseProvenance(r[4]);
    if (!prov.ok()) return At(file, line, 5, std::string(prov.status().message()));
    auto round = IntField(r[5], file, line, 6, "round");
    if (!round.ok()) return round.status();
    out.push_back({CanonicalPair(r[0], r[1]), r[2], *prov, *round});
  }
  return out;
}

absl::StatusOr<std::string> ReadFile(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return absl::NotFoundError(absl::StrCat("cannot open ", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

absl::Status WriteFileAtomic(const fs::path& path, std::string_view content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) return absl::InternalError(absl::StrCat("cannot write ", tmp.string()));
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) return absl::InternalError(absl::StrCat("short write to ", tmp.string()));
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    return absl::InternalError(
        absl::StrCat("cannot rename ", tmp.string(), ": ", ec.message()));
  }
  return absl::OkStatus();
}

std::vector<std::string> Dataset::Lemmas() const {
  std::set<std::string> s;
  for (const Usage& u : usages) s.insert(u.lemma);
  return {s.begin(), s.end()};
}

std::vector<Usage> Dataset::UsagesOf(std::string_view lemma) const {
  std::vector<Usage> out;
  for (const Usage& u : usages) {
    if (u.lemma == lemma) out.push_back(u);
  }
  return out;
}

std::vector<SenseDescription> Dataset::SensesOf(std::string_view lemma) const {
  std::vector<SenseDescription> out;
  for (const SenseDescription& s : senses) {
    if (s.lemma == lemma) out.push_back(s);
  }
  return out;
}

std::vector<Judgment> Dataset::JudgmentsOf(std::string_view lemma) const {
  std::set<std::string_view> ids;
  for (const Usage& u : usages) {
    if (u.lemma == lemma) ids.insert(u.identifier);
  }
  std::vector<Judgment> out;
  for (const Judgment& j : judgments) {
    if (ids.contains(j.node1) || ids.contains(j.node2)) out.push_back(j);
  }
  return out;
}

namespace {

// Node id -> lemma for usages and sense nodes.
absl::StatusOr<std::map<std::string, std::string>> NodeLemmas(
    const Dataset& d, const std::set<int>& periods, const SourceNames& names) {
  std::map<std::string, std::string> lemma_of;
  for (size_t i = 0; i < d.usages.size(); ++i) {
    const Usage& u = d.usages[i];
    if (!periods.contains(u.grouping)) {
      return At(names.usages, i + 2, 3,
                absl::StrCat("unknown period label ", u.grouping, " for ",
                             u.identifier));
    }
    if (absl::Status s = ValidateUsage(u, periods); !s.ok()) {
      return At(names.usages, i + 2, 4, std::string(s.message()));
    }
    if (!lemma_of.emplace(u.identifier, u.lemma).second) {
      return At(names.usages, i + 2, 4,
                absl::StrCat("duplicate identifier ", u.identifier));
    }
  }
  for (size_t i = 0; i < d.senses.size(); ++i) {
    const SenseDescription& s = d.senses[i];
    if (!lemma_of.emplace(s.NodeId(), s.lemma).second) {
      return At(names.senses, i + 2, 2,
                absl::StrCat("duplicate sense_id ", s.sense_id));
    }
  }
  return lemma_of;
}

// Row-level judgment checks shared by ingestion and the store. Returns an
// empty string when the row is acceptable.
std::string JudgmentProblem(const Judgment& j,
                            const std::map<std::string, std::string>& lemma_of,
                            size_t* column) {
  auto a = lemma_of.find(j.node1);
  if (a == lemma_of.end()) {
    *column = 1;
    return absl::StrCat("unknown identifier ", j.node1);
  }
  auto b = lemma_of.find(j.node2);
  if (b == lemma_of.end()) {
    *column = 2;
    return absl::StrCat("unknown identifier ", j.node2);
  }
  if (j.node1 == j.node2) {
    *column = 2;
    return "a node cannot be judged against itself";
  }
  if (a->second != b->second) {
    *column = 2;
    return absl::StrCat("pair mixes lemmas ", a->second, " and ", b->second);
  }
  if (IsSenseNode(j.node1) && IsSenseNode(j.node2)) {
    *column = 2;
    return "two sense descriptions cannot be judged against each other";
  }
  if (j.score < 0 || j.score > 4) {
    *column = 4;
    return absl::StrCat("score ", j.score, " outside 0..4");
  }
  return "";
}

}  // namespace

absl::Status ValidateDataset(const Dataset& d, const std::set<int>& periods,
                             const SourceNames& names) {
  absl::StatusOr<std::map<std::string, std::string>> lemma_of =
      NodeLemmas(d, periods, names);
  if (!lemma_of.ok()) return lemma_of.status();
  std::set<std::tuple<NodePair, std::string, int>> seen;
  for (size_t i = 0; i < d.judgments.size(); ++i) {
    const Judgment& j = d.judgments[i];
    size_t column = 1;
    if (std::string p = JudgmentProblem(j, *lemma_of, &column); !p.empty()) {
      return At(names.judgments, i + 2, column, p);
    }
    if (!seen.emplace(CanonicalPair(j.node1, j.node2), j.annotator, j.round).second) {
      return At(names.judgments, i + 2, 3,
                absl::StrCat("duplicate judgment by ", j.annotator, " in round ",
                             j.round));
    }
  }
  return absl::OkStatus();
}

absl::StatusOr<Dataset> Ingest(const fs::path& usages_tsv,
                               const std::optional<fs::path>& senses_tsv,
                               const std::optional<fs::path>& judgments_tsv,
                               const std::set<int>& periods) {
  Dataset d;
  SourceNames names;
  names.usages = usages_tsv.string();
  absl::StatusOr<std::string> text = ReadFile(usages_tsv);
  if (!text.ok()) return text.status();
  absl::StatusOr<std::vector<Usage>> usages = ParseUsagesTsv(*text, names.usages);
  if (!usages.ok()) return usages.status();
  d.usages = *std::move(usages);

  if (senses_tsv) {
    names.senses = senses_tsv->string();
    text = ReadFile(*senses_tsv);
    if (!text.ok()) return text.status();
    auto senses = ParseSensesTsv(*text, names.senses);
    if (!senses.ok()) return senses.status();
    d.senses = *std::move(senses);
  }
  if (judgments_tsv) {
    names.judgments = judgments_tsv->string();
    text = ReadFile(*judgments_tsv);
    if (!text.ok()) return text.status();
    auto judgments = ParseJudgmentsTsv(*text, names.judgments);
    if (!judgments.ok()) return judgments.status();
    d.judgments = *std::move(judgments);
  }
  if (absl::Status s = ValidateDataset(d, periods, names); !s.ok()) return s;
  return d;
}

absl::Status ExportDataset(const Dataset& d, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) return absl::InternalError(absl::StrCat("cannot create ", dir.string()));
  if (absl::Status s = WriteFileAtomic(dir / "usages.tsv", FormatUsagesTsv(d.usages));
      !s.ok()) {
    return s;
  }
  if (!d.senses.empty()) {
    if (absl::Status s = WriteFileAtomic(dir / "senses.tsv", FormatSensesTsv(d.senses));
        !s.ok()) {
      return s;
    }
  }
  return WriteFileAtomic(dir / "judgments.tsv", FormatJudgmentsTsv(d.judgments));
}

absl::StatusOr<Wug> BuildLemmaGraph(const Dataset& d, std::string_view lemma,
                                    std::span<const Judgment> judgments,
                                    const std::set<int>& periods) {
  std::vector<Usage> usages = d.UsagesOf(lemma);
  if (usages.empty()) {
    return absl::NotFoundError(absl::StrCat("unknown lemma ", std::string(lemma)));
  }
  std::set<std::string> ids;
  for (const Usage& u : usages) ids.insert(u.identifier);
  std::vector<SenseDescription> senses = d.SensesOf(lemma);
  for (const SenseDescription& s : senses) ids.insert(s.NodeId());
  std::vector<Judgment> mine;
  for (const Judgment& j : judgments) {
    if (ids.contains(j.node1) && ids.contains(j.node2)) mine.push_back(j);
  }
  GraphOptions opts{.periods = periods};
  if (!senses.empty()) return Wug::BuildUsg(usages, senses, mine, opts);
  return Wug::Build(usages, mine, opts);
}

std::string ExportGraphJson(const Wug& g, const Clustering* clustering,
                            std::string_view lemma) {
  ordered_json doc;
  doc["lemma"] = std::string(lemma);
  doc["kind"] = g.is_usg() ? "usg" : "wug";
  ordered_json nodes = ordered_json::array();
  for (int i = 0; i < g.num_nodes(); ++i) {
    const Node& n = g.nodes()[i];
    bool isolate = true;
    for (int e : g.Incident(i)) isolate = isolate && !g.edges()[e].has_weight();
    ordered_json node;
    node["id"] = n.id;
    node["type"] = n.kind == NodeKind::kUsage ? "usage" : "sense";
    node["grouping"] = n.kind == NodeKind::kUsage ? ordered_json(n.grouping)
                                                  : ordered_json(nullptr);
    ordered_json cluster = nullptr;
    if (clustering != nullptr) {
      auto it = clustering->assignment.find(n.id);
      if (it != clustering->assignment.end()) cluster = it->second;
    }
    node["cluster"] = cluster;
    node["isolate"] = isolate;
    nodes.push_back(std::move(node));
  }
  ordered_json edges = ordered_json::array();
  for (const Edge& e : g.edges()) {
    ordered_json edge;
    edge["source"] = g.nodes()[e.u].id;
    edge["target"] = g.nodes()[e.v].id;
    ordered_json js = ordered_json::array();
    for (const Judgment& j : e.judgments) {
      js.push_back(ordered_json{{"annotator", j.annotator},
                                {"score", j.score},
                                {"comment", j.comment},
                                {"round", j.round}});
    }
    edge["judgments"] = std::move(js);
    edge["median"] = e.has_weight() ? ordered_json(*e.weight) : ordered_json(nullptr);
    edge["shifted"] = e.has_weight() ? ordered_json(e.shifted()) : ordered_json(nullptr);
    edges.push_back(std::move(edge));
  }
  doc["nodes"] = std::move(nodes);
  doc["edges"] = std::move(edges);
  if (clustering != nullptr) {
    doc["clustering"] = ordered_json{{"num_clusters", clustering->num_clusters()},
                                     {"loss", clustering->loss},
                                     {"normalized_loss", clustering->normalized_loss}};
  } else {
    doc["clustering"] = nullptr;
  }
  return doc.dump(2) + "\n";
}

// --- Configuration ----------------------------------------------------------

absl::StatusOr<std::map<std::string, std::string>> ParseKeyValues(
    std::string_view content, std::string_view file) {
  std::map<std::string, std::string> out;
  size_t line_no = 0;
  for (std::string_view line : Split(content, '\n')) {
    ++line_no;
    std::string_view l = Trim(line);
    if (l.empty() || l.front() == '#') continue;
    const size_t eq = l.find('=');
    if (eq == std::string_view::npos) {
      return At(file, line_no, 1, "expected 'key = value'");
    }
    std::string key(Trim(l.substr(0, eq)));
    if (key.empty()) return At(file, line_no, 1, "empty key");
    out[key] = std::string(Trim(l.substr(eq + 1)));
  }
  return out;
}

std::string FormatProjectConfig(const ProjectConfig& c) {
  std::string out;
  auto kv = [&](std::string_view k, const std::string& v) {
    absl::StrAppend(&out, std::string(k), " = ", v, "\n");
  };
  kv("project_id", c.project_id);
  kv("periods", absl::StrJoin(c.periods, ","));
  kv("annotators", absl::StrJoin(c.annotators, ","));
  for (const auto& [a, token] : c.annotator_tokens) kv("token." + a, token);
  kv("admin_token", c.admin_token);
  kv("allow_adhoc", c.allow_adhoc ? "true" : "false");
  kv("sampling.node_fraction_round1", FormatDouble(c.sampling.node_fraction_round1));
  kv("sampling.edge_fraction", FormatDouble(c.sampling.edge_fraction));
  kv("sampling.corroboration_count", std::to_string(c.sampling.corroboration_count));
  kv("sampling.multi_annotation_fraction",
     FormatDouble(c.sampling.multi_annotation_fraction));
  kv("sampling.seed", std::to_string(c.sampling.seed));
  kv("anneal.min_clusters", std::to_string(c.anneal.min_clusters));
  kv("anneal.max_clusters", std::to_string(c.anneal.max_clusters));
  kv("anneal.restarts_per_k", std::to_string(c.anneal.restarts_per_k));
  kv("anneal.initial_temperature", FormatDouble(c.anneal.initial_temperature));
  kv("anneal.cooling_factor", FormatDouble(c.anneal.cooling_factor));
  kv("anneal.max_iterations", std::to_string(c.anneal.max_iterations));
  kv("anneal.seed", std::to_string(c.anneal.seed));
  kv("anneal.workers", std::to_string(c.anneal.workers));
  kv("flags.max_zero_fraction", FormatDouble(c.flags.max_zero_fraction));
  kv("flags.max_pending_pairs", std::to_string(c.flags.max_pending_pairs));
  return out;
}

absl::StatusOr<ProjectConfig> ParseProjectConfig(std::string_view content,
                                                 std::string_view file) {
  auto kvs = ParseKeyValues(content, file);
  if (!kvs.ok()) return kvs.status();
  ProjectConfig c;
  auto bad = [&](const std::string& key, const std::string& v) {
    return absl::InvalidArgumentError(
        absl::StrCat(std::string(file), ": invalid value '", v, "' for ", key));
  };
  for (const auto& [key, v] : *kvs) {
    bool ok = true;
    if (key == "project_id") {
      c.project_id = v;
    } else if (key == "periods") {
      c.periods.clear();
      for (std::string_view p : Split(v, ',')) {
        p = Trim(p);
        if (p.empty()) continue;
        int x = 0;
        ok = ok && absl::SimpleAtoi(std::string(p), &x);
        c.periods.insert(x);
      }
    } else if (key == "annotators") {
      c.annotators.clear();
      for (std::string_view a : Split(v, ',')) {
        if (!Trim(a).empty()) c.annotators.emplace_back(Trim(a));
      }
    } else if (key.starts_with("token.")) {
      c.annotator_tokens[key.substr(6)] = v;
    } else if (key == "admin_token") {
      c.admin_token = v;
    } else if (key == "allow_adhoc") {
      ok = absl::SimpleAtob(v, &c.allow_adhoc);
    } else if (key == "sampling.node_fraction_round1") {
      ok = absl::SimpleAtod(v, &c.sampling.node_fraction_round1);
    } else if (key == "sampling.edge_fraction") {
      ok = absl::SimpleAtod(v, &c.sampling.edge_fraction);
    } else if (key == "sampling.corroboration_count") {
      ok = absl::SimpleAtoi(v, &c.sampling.corroboration_count);
    } else if (key == "sampling.multi_annotation_fraction") {
      ok = absl::SimpleAtod(v, &c.sampling.multi_annotation_fraction);
    } else if (key == "sampling.seed") {
      ok = absl::SimpleAtoi(v, &c.sampling.seed);
    } else if (key == "anneal.min_clusters") {
      ok = absl::SimpleAtoi(v, &c.anneal.min_clusters);
    } else if (key == "anneal.max_clusters") {
      ok = absl::SimpleAtoi(v, &c.anneal.max_clusters);
    } else if (key == "anneal.restarts_per_k") {
      ok = absl::SimpleAtoi(v, &c.anneal.restarts_per_k);
    } else if (key == "anneal.initial_temperature") {
      ok = absl::SimpleAtod(v, &c.anneal.initial_temperature);
    } else if (key == "anneal.cooling_factor") {
      ok = absl::SimpleAtod(v, &c.anneal.cooling_factor);
    } else if (key == "anneal.max_iterations") {
      ok = absl::SimpleAtoi(v, &c.anneal.max_iterations);
    } else if (key == "anneal.seed") {
      ok = absl::SimpleAtoi(v, &c.anneal.seed);
    } else if (key == "anneal.workers") {
      ok = absl::SimpleAtoi(v, &c.anneal.workers);
    } else if (key == "flags.max_zero_fraction") {
      ok = absl::SimpleAtod(v, &c.flags.max_zero_fraction);
    } else if (key == "flags.max_pending_pairs") {
      ok = absl::SimpleAtoi(v, &c.flags.max_pending_pairs);
    } else {
      return absl::InvalidArgumentError(absl::StrCat(std::string(file), ": unknown key ", key));
    }
    if (!ok) return bad(key, v);
  }
  if (c.project_id.empty()) {
    return absl::InvalidArgumentError(absl::StrCat(std::string(file), ": project_id is required"));
  }
  if (c.annotators.empty()) {
    return absl::InvalidArgumentError(absl::StrCat(std::string(file), ": annotators is required"));
  }
  if (absl::Status s = ValidateSamplingConfig(c.sampling); !s.ok()) return s;
  if (absl::Status s = ValidateAnnealConfig(c.anneal); !s.ok()) return s;
  return c;
}

// --- State ------------------------------------------------------------------

std::string FormatProjectState(const ProjectState& s) {
  ordered_json doc;
  doc["round"] = s.round;
  ordered_json expired = ordered_json::array();
  for (const auto& [pair, annotator] : s.expired) {
    expired.push_back({pair.first, pair.second, annotator});
  }
  doc["expired"] = std::move(expired);
  ordered_json lemmas = ordered_json::object();
  for (const auto& [lemma, ls] : s.lemmas) {
    ordered_json l;
    l["complete"] = ls.complete;
    l["flag"] = ordered_json{{"flagged", ls.flag.flagged},
                             {"zero_fraction", ls.flag.zero_fraction},
                             {"pending_pairs", ls.flag.pending_pairs},
                             {"reason", ls.flag.reason}};
    l["removed_nodes"] = ls.removed_nodes;
    if (ls.clustering) {
      ordered_json assignment = ordered_json::object();
      for (const auto& [id, c] : ls.clustering->assignment) assignment[id] = c;
      l["clustering"] = ordered_json{{"assignment", std::move(assignment)},
                                     {"isolates", ls.clustering->isolates},
                                     {"loss", ls.clustering->loss},
                                     {"normalized_loss", ls.clustering->normalized_loss}};
    } else {
      l["clustering"] = nullptr;
    }
    lemmas[lemma] = std::move(l);
  }
  doc["lemmas"] = std::move(lemmas);
  return doc.dump(2) + "\n";
}

absl::StatusOr<ProjectState> ParseProjectState(std::string_view content) {
  ProjectState s;
  try {
    const ordered_json doc = ordered_json::parse(content);
    s.round = doc.at("round").get<int>();
    for (const auto& e : doc.at("expired")) {
      s.expired.insert({CanonicalPair(e.at(0).get<std::string>(),
                                      e.at(1).get<std::string>()),
                        e.at(2).get<std::string>()});
    }
    for (const auto& [lemma, l] : doc.at("lemmas").items()) {
      LemmaState ls;
      ls.complete = l.at("complete").get<bool>();
      const auto& f = l.at("flag");
      ls.flag.flagged = f.at("flagged").get<bool>();
      ls.flag.zero_fraction = f.at("zero_fraction").get<double>();
      ls.flag.pending_pairs = f.at("pending_pairs").get<int>();
      ls.flag.reason = f.at("reason").get<std::string>();
      ls.removed_nodes = l.at("removed_nodes").get<std::vector<std::string>>();
      if (!l.at("clustering").is_null()) {
        const auto& c = l.at("clustering");
        Clustering cl;
        for (const auto& [id, v] : c.at("assignment").items()) cl.assignment[id] = v.get<int>();
        cl.isolates = c.at("isolates").get<std::vector<std::string>>();
        cl.loss = c.at("loss").get<double>();
        cl.normalized_loss = c.at("normalized_loss").get<double>();
        ls.clustering = std::move(cl);
      }
      s.lemmas[lemma] = std::move(ls);
    }
  } catch (const nlohmann::json::exception& e) {
    return absl::DataLossError(absl::StrCat("state.json: ", e.what()));
  }
  return s;
}

// --- Store ------------------------------------------------------------------

namespace {

fs::path BatchPath(const fs::path& dir, int round) {
  return dir / "rounds" / absl::StrCat(round, ".tsv");
}

}  // namespace

absl::StatusOr<std::unique_ptr<ProjectStore>> ProjectStore::Create(
    const fs::path& dir, const ProjectConfig& config, const Dataset& data) {
  if (config.project_id.empty() || config.annotators.empty()) {
    return absl::InvalidArgumentError("a project needs an id and annotators");
  }
  if (absl::Status s = ValidateDataset(data, config.periods); !s.ok()) return s;
  std::error_code ec;
  if (fs::exists(dir / "project.conf", ec)) {
    return absl::AlreadyExistsError(absl::StrCat("project exists at ", dir.string()));
  }
  fs::create_directories(dir / "rounds", ec);
  if (ec) return absl::InternalError(absl::StrCat("cannot create ", dir.string()));

  std::vector<Judgment> imported;
  for (const Judgment& j : data.judgments) imported.push_back(Canonicalized(j));
  Dataset base{data.usages, data.senses, imported};
  if (absl::Status s = ExportDataset(base, dir); !s.ok()) return s;
  ProjectState state;
  for (const std::string& l : base.Lemmas()) state.lemmas[l] = {};
  if (absl::Status s = WriteFileAtomic(dir / "state.json", FormatProjectState(state));
      !s.ok()) {
    return s;
  }
  // The config is written last; its presence marks a complete project.
  if (absl::Status s = WriteFileAtomic(dir / "project.conf", FormatProjectConfig(config));
      !s.ok()) {
    return s;
  }
  return Open(dir);
}

absl::StatusOr<std::unique_ptr<ProjectStore>> ProjectStore::Open(const fs::path& dir) {
  std::unique_ptr<ProjectStore> p(new ProjectStore());
  p->dir_ = dir;
  absl::StatusOr<std::string> text = ReadFile(dir / "project.conf");
  if (!text.ok()) return text.status();
  auto cfg = ParseProjectConfig(*text, (dir / "project.conf").string());
  if (!cfg.ok()) return cfg.status();
  p->config_ = *std::move(cfg);

  std::error_code ec;
  const fs::path senses = dir / "senses.tsv";
  auto data = Ingest(dir / "usages.tsv",
                     fs::exists(senses, ec) ? std::optional<fs::path>(senses)
                                            : std::nullopt,
                     std::nullopt, p->config_.periods);
  if (!data.ok()) return data.status();
  p->data_ = *std::move(data);
  absl::StatusOr<std::map<std::string, std::string>> lemma_of =
      NodeLemmas(p->data_, p->config_.periods, {});
  if (!lemma_of.ok()) return lemma_of.status();
  p->lemma_of_ = *std::move(lemma_of);

  if (absl::Status s = p->LoadLog(); !s.ok()) return s;

  text = ReadFile(dir / "state.json");
  if (!text.ok()) return text.status();
  auto state = ParseProjectState(*text);
  if (!state.ok()) return state.status();
  p->state_ = *std::move(state);
  if (p->state_.round > 0) {
    const fs::path batch = BatchPath(dir, p->state_.round);
    text = ReadFile(batch);
    if (!text.ok()) return text.status();
    auto rows = ParseBatchTsv(*text, batch.string());
    if (!rows.ok()) return rows.status();
    p->state_.batch = *std::move(rows);
  }
  for (const BatchRow& b : p->state_.batch) {
    if (!p->state_.expired.contains({b.pair, b.annotator})) {
      p->open_.insert({b.pair, b.annotator});
    }
  }
  return p;
}

absl::Status ProjectStore::LoadLog() {
  const fs::path path = dir_ / "judgments.tsv";
  absl::StatusOr<std::string> text = ReadFile(path);
  if (!text.ok()) return text.status();
  auto rows = ParseJudgmentsTsv(*text, path.string());
  if (!rows.ok()) return rows.status();
  for (Judgment& j : *rows) {
    j = Canonicalized(std::move(j));
    keys_.emplace(NodePair{j.node1, j.node2}, j.annotator, j.round);
    log_.push_back(std::move(j));
  }
  return absl::OkStatus();
}

AppendResult ProjectStore::AppendJudgments(std::span<const Judgment> judgments) {
  AppendResult result;
  std::lock_guard<std::mutex> lock(mu_);
  const std::set<std::string> roster(config_.annotators.begin(),
                                     config_.annotators.end());
  std::string lines;
  std::vector<Judgment> accepted;
  std::set<std::tuple<NodePair, std::string, int>> added;
  for (size_t i = 0; i < judgments.size(); ++i) {
    Judgment j = Canonicalized(judgments[i]);
    std::string reason;
    size_t column = 0;
    const NodePair pair{j.node1, j.node2};
    if (!roster.contains(j.annotator)) {
      reason = absl::StrCat("annotator ", j.annotator, " is not on the roster");
    } else if (reason = JudgmentProblem(j, lemma_of_, &column); !reason.empty()) {
    } else if (keys_.contains({pair, j.annotator, j.round}) ||
               added.contains({pair, j.annotator, j.round})) {
      reason = absl::StrCat("duplicate judgment of (", j.node1, ", ", j.node2,
                            ") by ", j.annotator, " in round ", j.round);
    } else if (!config_.allow_adhoc &&
               (j.round != state_.round || !open_.contains({pair, j.annotator}))) {
      reason = absl::StrCat("pair (", j.node1, ", ", j.node2,
                            ") is not an open assignment of ", j.annotator,
                            " in round ", j.round);
    }
    if (!reason.empty()) {
      result.rejected.push_back({i, std::move(reason)});
      continue;
    }
    added.emplace(pair, j.annotator, j.round);
    absl::StrAppend(&lines, FormatJudgmentRow(j), "\n");
    accepted.push_back(std::move(j));
  }
  if (accepted.empty()) return result;
  std::ofstream out(dir_ / "judgments.tsv", std::ios::binary | std::ios::app);
  out << lines;
  out.flush();
  if (!out) {
    // Nothing reached memory; report every accepted row as failed.
    for (size_t i = 0; i < judgments.size(); ++i) {
      result.rejected.push_back({i, "judgment log write failed"});
    }
    return result;
  }
  for (Judgment& j : accepted) {
    keys_.emplace(NodePair{j.node1, j.node2}, j.annotator, j.round);
    log_.push_back(std::move(j));
  }
  result.accepted = accepted.size();
  return result;
}

std::vector<Judgment> ProjectStore::Judgments() const {
  std::lock_guard<std::mutex> lock(mu_);
  return log_;
}

size_t ProjectStore::LogSize() const {
  std::lock_guard<std::mutex> lock(mu_);
  return log_.size();
}

bool ProjectStore::HasJudgment(const NodePair& pair, const std::string& annotator,
                               int round) const {
  std::lock_guard<std::mutex> lock(mu_);
  return keys_.contains({CanonicalPair(pair.first, pair.second), annotator, round});
}

ProjectState ProjectStore::State() const {
  std::lock_guard<std::mutex> lock(mu_);
  return state_;
}

absl::Status ProjectStore::CommitState(
    const ProjectState& next,
    const std::function<absl::Status(std::string_view)>& fault) {
  if (next.round < 0) return absl::InvalidArgumentError("negative round");
  {
    std::lock_guard<std::mutex> lock(mu_);
    if (next.round < state_.round) {
      return absl::FailedPreconditionError("the round counter cannot go back");
    }
  }
  if (next.round > 0) {
    if (absl::Status s = WriteFileAtomic(BatchPath(dir_, next.round),
                                         FormatBatchTsv(next.batch));
        !s.ok()) {
      return s;
    }
  }
  if (fault) {
    if (absl::Status s = fault("batch_written"); !s.ok()) return s;
  }
  if (absl::Status s = WriteFileAtomic(dir_ / "state.json", FormatProjectState(next));
      !s.ok()) {
    return s;
  }
  std::lock_guard<std::mutex> lock(mu_);
  state_ = next;
  open_.clear();
  for (const BatchRow& b : state_.batch) {
    if (!state_.expired.contains({b.pair, b.annotator})) open_.insert({b.pair, b.annotator});
  }
  return absl::OkStatus();
}

}  // namespace wug
