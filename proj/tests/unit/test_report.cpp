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

#include <algorithm>
#include <sstream>

#include "doctest.h"
#include "ppp/csv.hpp"
#include "ppp/error.hpp"
#include "ppp/hash.hpp"

using namespace ppp;
using namespace ppp::report;

namespace {

ReportTable sample(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  ReportTable t;
  t.kind = "probe_grid";
  t.title = "Pearson r of linear probes";
  t.metadata.dataset = "dalle2";
  t.metadata.split_seed = 42;
  t.metadata.lambda = 1e-3;
  t.metadata.input_hashes = {{"dataset", std::string(64, 'a')}, {"embeddings/clip", "00ff"}};
  for (std::size_t r = 0; r < rows; ++r) t.row_labels.push_back("metric, " + std::to_string(r));
  for (std::size_t c = 0; c < cols; ++c) t.column_labels.push_back("enc" + std::to_string(c));
  for (std::size_t r = 0; r < rows; ++r) {
    std::vector<stats::CorrelationResult> row;
    for (std::size_t c = 0; c < cols; ++c) {
      stats::CorrelationResult cell;
      cell.r = rng.uniform() * 2 - 1;
      cell.p_value = rng.uniform() * 1e-3;
      cell.n = 100 + rng.below(1000);
      if ((r + c) % 2 == 0) {
        cell.ci_low = cell.r - 0.1;
        cell.ci_high = cell.r + 0.1 / 3.0;
      }
      row.push_back(cell);
    }
    t.cells.push_back(std::move(row));
  }
  return t;
}

std::size_t count(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos + 1)) ++n;
  return n;
}

}  // namespace

TEST_SUITE("report") {

TEST_CASE("json round trips to an equal table") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto t = sample(3 + seed, 2 + seed, seed);
    const auto text = render(t, Format::json);
    const auto back = from_json(text);
    CHECK(back == t);
    CHECK(render(back, Format::json) == text);
  }
}

TEST_CASE("empty table renders headers only") {
  ReportTable t;
  t.kind = "probe_grid";
  const auto md = render(t, Format::markdown);
  CHECK(md == "| Dataset | Metric |\n|---|---|\n");
  CHECK(render(t, Format::csv) == "row,column,r,p_value,n,ci_low,ci_high\n");
  CHECK(from_json(render(t, Format::json)) == t);
}

TEST_CASE("markdown cell count equals rows times cols") {
  const auto t = sample(4, 3, 5);
  const auto md = render(t, Format::markdown);
  std::istringstream in(md);
  std::string line;
  std::size_t data_rows = 0, cells = 0;
  bool past_separator = false;
  while (std::getline(in, line)) {
    if (line.starts_with("|---")) {
      past_separator = true;
      continue;
    }
    if (!past_separator || !line.starts_with("|")) continue;
    ++data_rows;
    cells += static_cast<std::size_t>(std::count(line.begin(), line.end(), '|')) - 3;
  }
  CHECK(data_rows == 4);
  CHECK(cells == 12);
  CHECK(md.starts_with("## Pearson r of linear probes\n"));
  CHECK(count(md, "dalle2") == 1);
  CHECK(md.find("| enc0 | enc1 | enc2 |") != std::string::npos);
}

TEST_CASE("markdown shows four decimals and intervals") {
  ReportTable t;
  t.kind = "paintings_ablation";
  t.metadata.dataset = "vaps";
  t.row_labels = {"valence"};
  t.column_labels = {"clip/liking"};
  stats::CorrelationResult c;
  c.r = 0.65814;
  c.n = 50;
  c.ci_low = 0.5;
  c.ci_high = 0.712345;
  t.cells = {{c}};
  t.metadata.advisories = {"check the epoch field"};
  const auto md = render(t, Format::markdown);
  CHECK(md.find("| Dataset | Prompt parts | clip/liking |") != std::string::npos);
  CHECK(md.find("| vaps | valence | 0.6581 [0.5000, 0.7123] |") != std::string::npos);
  CHECK(md.find("- check the epoch field\n") != std::string::npos);
}

TEST_CASE("csv is lossless and long form") {
  const auto t = sample(2, 3, 7);
  const auto text = render(t, Format::csv);
  std::istringstream in(text);
  csv::Reader reader(in);
  const auto header = reader.next();
  REQUIRE(header);
  CHECK(*header == std::vector<std::string>{"row", "column", "r", "p_value", "n", "ci_low",
                                            "ci_high"});
  std::size_t k = 0;
  while (auto rec = reader.next()) {
    if (rec->size() == 1 && (*rec)[0].empty()) continue;
    const std::size_t r = k / 3, c = k % 3;
    const auto& cell = t.cells[r][c];
    CHECK((*rec)[0] == t.row_labels[r]);
    CHECK((*rec)[1] == t.column_labels[c]);
    CHECK(std::stod((*rec)[2]) == cell.r);
    CHECK(std::stod((*rec)[3]) == cell.p_value);
    CHECK(std::stoul((*rec)[4]) == cell.n);
    CHECK((*rec)[5].empty() == !cell.ci_low.has_value());
    if (cell.ci_high) CHECK(std::stod((*rec)[6]) == *cell.ci_high);
    ++k;
  }
  CHECK(k == 6);
}

TEST_CASE("rendering is deterministic") {
  const auto t = sample(3, 3, 11);
  for (auto f : {Format::markdown, Format::csv, Format::json}) {
    CHECK(render(t, f) == render(sample(3, 3, 11), f));
  }
}

TEST_CASE("invalid tables and payloads") {
  auto t = sample(2, 2, 1);
  t.cells[1].pop_back();
  CHECK_THROWS_AS(t.validate(), Error);
  CHECK_THROWS_AS(render(t, Format::json), Error);
  CHECK_THROWS_AS(from_json("{}"), Error);
  CHECK_THROWS_AS(from_json(R"({"version":9})"), Error);
  CHECK(parse_format("md") == Format::markdown);
  CHECK(parse_format("json") == Format::json);
  CHECK(extension(Format::csv) == "csv");
  CHECK_THROWS_AS(parse_format("xlsx"), Error);
}

}  // TEST_SUITE
