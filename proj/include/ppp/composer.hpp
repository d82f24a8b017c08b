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

#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace ppp::composer {

/// Valence as stored upstream: a label/sign string or a signed number.
using Valence = std::variant<std::string, double>;

struct PaintingRecord {
  std::string painting_id;
  std::optional<std::string> caption;
  std::optional<std::string> painter;
  std::optional<std::string> epoch;
  std::optional<Valence> valence;
  std::map<std::string, double> appreciation_scores;
};

struct PartsSelection {
  bool use_caption = false;
  bool use_painter_epoch = false;
  bool use_valence = false;

  bool operator==(const PartsSelection&) const = default;
};

/// Row label such as "description + painter + epoch".
std::string label(const PartsSelection& parts);

/// Categorical word for a valence value. Numbers within +-0.15 of zero are
/// neutral; "+", "-", "0" and common labels map onto positive / negative /
/// neutral; any other label is lowercased and kept.
std::string valence_word(const Valence& v);

/// True when every part selected by `parts` is present on `record`
/// (painter/epoch needs at least the painter).
bool has_parts(const PaintingRecord& record, const PartsSelection& parts);

/// Builds the prompt text for a painting. Template "default":
///   "A painting of {caption}" ", by {painter} ({epoch})" ", {valence} mood"
/// keeping only selected segments; when the caption segment is absent the
/// first remaining segment loses its separator and is capitalized.
/// Template "bare" joins the raw parts with ", ".
std::string compose(const PaintingRecord& record, const PartsSelection& parts,
                    std::string_view template_id = "default");

/// The five text-based ablation rows, in table order.
std::vector<PartsSelection> ablation_configs();

std::vector<PaintingRecord> parse_paintings(std::istream& in);
std::vector<PaintingRecord> load_paintings(const std::filesystem::path& path);

}  // namespace ppp::composer
