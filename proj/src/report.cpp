// Copyright 2026 The PPP Toolkit Authors
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

#include "ppp/report.hpp"

#include <cstdio>

#include "json.hpp"
#include "ppp/csv.hpp"
#include "ppp/error.hpp"

namespace ppp::report {

using nlohmann::json;

namespace {

std::string fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string exact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string optional_exact(const std::optional<double>& v) { return v ? exact(*v) : ""; }

std::string row_header(const std::string& kind) {
  if (kind == "paintings_ablation") return "Prompt parts";
  return "Metric";
}

json cell_to_json(const stats::CorrelationResult& c) {
  json j = {{"r", c.r}, {"p_value", c.p_value}, {"n", c.n}};
  if (c.ci_low) j["ci_low"] = *c.ci_low;
  if (c.ci_high) j["ci_high"] = *c.ci_high;
  return j;
}

stats::CorrelationResult cell_from_json(const json& j) {
  stats::CorrelationResult c;
  c.r = j.at("r").get<double>();
  c.p_value = j.at("p_value").get<double>();
  c.n = j.at("n").get<std::size_t>();
  if (j.contains("ci_low")) c.ci_low = j.at("ci_low").get<double>();
  if (j.contains("ci_high")) c.ci_high = j.at("ci_high").get<double>();
  return c;
}

std::string render_markdown(const ReportTable& t) {
  std::string out;
  if (!t.title.empty()) out += "## " + t.title + "\n\n";
  out += "| Dataset | " + row_header(t.kind) + " |";
  for (const auto& c : t.column_labels) out += " " + c + " |";
  out += "\n|---|---|";
  for (std::size_t c = 0; c < t.cols(); ++c) out += "---|";
  out += "\n";
  for (std::size_t r = 0; r < t.rows(); ++r) {
    out += "| " + (r == 0 ? t.metadata.dataset : std::string()) + " | " + t.row_labels[r] + " |";
    for (std::size_t c = 0; c < t.cols(); ++c) {
      const auto& cell = t.cells[r][c];
      out += " " + fixed4(cell.r);
      if (cell.ci_low && cell.ci_high) {
        out += " [" + fixed4(*cell.ci_low) + ", " + fixed4(*cell.ci_high) + "]";
      }
      out += " |";
    }
    out += "\n";
  }
  if (!t.metadata.advisories.empty()) {
    out += "\n";
    for (const auto& a : t.metadata.advisories) out += "- " + a + "\n";
  }
  return out;
}

std::string render_csv(const ReportTable& t) {
  std::string out = csv::join_row({"row", "column", "r", "p_value", "n", "ci_low", "ci_high"}) + "\n";
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (std::size_t c = 0; c < t.cols(); ++c) {
      const auto& cell = t.cells[r][c];
      out += csv::join_row({t.row_labels[r], t.column_labels[c], exact(cell.r),
                            exact(cell.p_value), std::to_string(cell.n),
                            optional_exact(cell.ci_low), optional_exact(cell.ci_high)}) +
             "\n";
    }
  }
  return out;
}

std::string render_json(const ReportTable& t) {
  json cells = json::array();
  for (const auto& row : t.cells) {
    json jr = json::array();
    for (const auto& c : row) jr.push_back(cell_to_json(c));
    cells.push_back(std::move(jr));
  }
  json j = {
      {"version", 1},
      {"kind", t.kind},
      {"title", t.title},
      {"row_labels", t.row_labels},
      {"column_labels", t.column_labels},
      {"cells", std::move(cells)},
      {"metadata",
       {{"dataset", t.metadata.dataset},
        {"split_seed", t.metadata.split_seed},
        {"lambda", t.metadata.lambda},
        {"input_hashes", t.metadata.input_hashes},
        {"advisories", t.metadata.advisories}}},
  };
  return j.dump(2) + "\n";
}

}  // namespace

Format parse_format(std::string_view name) {
  if (name == "md" || name == "markdown") return Format::markdown;
  if (name == "csv") return Format::csv;
  if (name == "json") return Format::json;
  fail(ErrorCode::invalid_argument, "unknown report format '" + std::string(name) + "'");
}

std::string_view extension(Format f) {
  switch (f) {
    case Format::markdown: return "md";
    case Format::csv: return "csv";
    case Format::json: return "json";
  }
  return "txt";
}

void ReportTable::validate() const {
  if (cells.size() != row_labels.size()) {
    fail(ErrorCode::invalid_argument, "report: " + std::to_string(cells.size()) +
                                          " cell rows for " + std::to_string(row_labels.size()) +
                                          " row labels");
  }
  for (std::size_t r = 0; r < cells.size(); ++r) {
    if (cells[r].size() != column_labels.size()) {
      fail(ErrorCode::invalid_argument, "report: row '" + row_labels[r] + "' has " +
                                            std::to_string(cells[r].size()) + " cells for " +
                                            std::to_string(column_labels.size()) + " columns");
    }
  }
}

bool operator==(const ReportTable& a, const ReportTable& b) {
  return a.kind == b.kind && a.title == b.title && a.row_labels == b.row_labels &&
         a.column_labels == b.column_labels && a.cells == b.cells && a.metadata == b.metadata;
}

std::string render(const ReportTable& table, Format format) {
  table.validate();
  switch (format) {
    case Format::markdown: return render_markdown(table);
    case Format::csv: return render_csv(table);
    case Format::json: return render_json(table);
  }
  return {};
}

ReportTable from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    if (j.at("version").get<int>() != 1) {
      fail(ErrorCode::parse, "report: unsupported version");
    }
    ReportTable t;
    t.kind = j.at("kind").get<std::string>();
    t.title = j.at("title").get<std::string>();
    t.row_labels = j.at("row_labels").get<std::vector<std::string>>();
    t.column_labels = j.at("column_labels").get<std::vector<std::string>>();
    for (const auto& row : j.at("cells")) {
      std::vector<stats::CorrelationResult> cells;
      for (const auto& c : row) cells.push_back(cell_from_json(c));
      t.cells.push_back(std::move(cells));
    }
    const json& m = j.at("metadata");
    t.metadata.dataset = m.at("dataset").get<std::string>();
    t.metadata.split_seed = m.at("split_seed").get<std::uint64_t>();
    t.metadata.lambda = m.at("lambda").get<double>();
    t.metadata.input_hashes = m.at("input_hashes").get<std::map<std::string, std::string>>();
    t.metadata.advisories = m.at("advisories").get<std::vector<std::string>>();
    t.validate();
    return t;
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, std::string("report: ") + e.what());
  }
}

}  // namespace ppp::report
