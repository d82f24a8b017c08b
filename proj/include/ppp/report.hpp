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

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ppp/stats.hpp"

namespace ppp::report {

enum class Format { markdown, csv, json };

Format parse_format(std::string_view name);
std::string_view extension(Format f);

struct Metadata {
  std::string dataset;
  std::uint64_t split_seed = 0;
  double lambda = 0.0;
  /// Input name -> SHA-256 of its content.
  std::map<std::string, std::string> input_hashes;
  std::vector<std::string> advisories;

  bool operator==(const Metadata&) const = default;
};

/// A labeled grid of correlation results (rows x columns).
struct ReportTable {
  std::string kind;
  std::string title;
  std::vector<std::string> row_labels;
  std::vector<std::string> column_labels;
  std::vector<std::vector<stats::CorrelationResult>> cells;
  Metadata metadata;

  std::size_t rows() const { return row_labels.size(); }
  std::size_t cols() const { return column_labels.size(); }

  /// Throws when the cell grid does not match the label lists.
  void validate() const;
};

bool operator==(const ReportTable& a, const ReportTable& b);

/// Deterministic serialization. Markdown puts the dataset in the first
/// column and one row per metric, matching the usual encoder-by-metric
/// layout; CSV is long-form (one line per cell); JSON is lossless.
std::string render(const ReportTable& table, Format format);

ReportTable from_json(std::string_view text);

}  // namespace ppp::report
