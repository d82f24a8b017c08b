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

#include "ppp/ingest.hpp"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/ustring.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"
#include "ppp/csv.hpp"
#include "ppp/error.hpp"
#include "ppp/hash.hpp"

namespace ppp::ingest {

using nlohmann::json;

std::string_view to_string(Generator g) {
  switch (g) {
    case Generator::dalle2:
      return "dalle2";
    case Generator::midjourney:
      return "midjourney";
    case Generator::stable_diffusion:
      return "stable_diffusion";
    case Generator::painting:
      return "painting";
    case Generator::other:
      return "other";
  }
  return "other";
}

Generator parse_generator(std::string_view name) {
  std::string s;
  for (char c : name) {
    if (c == '-' || c == ' ' || c == '_') continue;
    s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (s == "dalle2") return Generator::dalle2;
  if (s == "midjourney" || s == "mj") return Generator::midjourney;
  if (s == "stablediffusion" || s == "sd") return Generator::stable_diffusion;
  if (s == "painting" || s == "paintings") return Generator::painting;
  return Generator::other;
}

bool PromptGroup::complete_for(const std::string& metric) const {
  auto it = metric_counts.find(metric);
  return it != metric_counts.end() && it->second == image_count;
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::train:
      return "train";
    case Split::validation:
      return "validation";
    case Split::test:
      return "test";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "validation") return Split::validation;
  if (name == "test") return Split::test;
  fail(ErrorCode::parse, "unknown split label '" + std::string(name) + "'");
}

Split SplitAssignment::of(const std::string& prompt_key) const {
  auto it = assignment.find(prompt_key);
  if (it == assignment.end()) {
    fail(ErrorCode::not_found, "prompt key not in split: " + prompt_key);
  }
  return it->second;
}

std::vector<std::string> SplitAssignment::keys_in(Split s) const {
  std::vector<std::string> out;
  for (const auto& [key, where] : assignment) {
    if (where == s) out.push_back(key);
  }
  return out;
}

Format parse_format(std::string_view name) {
  if (name == "jsonl") return Format::jsonl;
  if (name == "csv") return Format::csv;
  fail(ErrorCode::invalid_argument, "unknown record format '" + std::string(name) + "'");
}

namespace {

[[noreturn]] void row_error(std::size_t row, const std::string& why) {
  fail(ErrorCode::parse, "row " + std::to_string(row) + ": " + why);
}

void check_record(const ImageRecord& rec, std::size_t row,
                  std::unordered_set<std::string>& seen_ids) {
  if (rec.image_id.empty()) {
    row_error(row, "empty image_id");
  }
  if (!seen_ids.insert(rec.image_id).second) {
    row_error(row, "duplicate image_id '" + rec.image_id + "'");
  }
  const auto first = rec.prompt_raw.find_first_not_of(" \t\r\n\f\v");
  if (first == std::string::npos) {
    row_error(row, "empty prompt");
  }
  for (const auto& [metric, value] : rec.scores) {
    if (!std::isfinite(value)) {
      row_error(row, "non-finite score for metric '" + metric + "'");
    }
  }
}

std::vector<ImageRecord> parse_jsonl(std::istream& in) {
  std::vector<ImageRecord> out;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      row_error(row, std::string("invalid JSON: ") + e.what());
    }
    if (!obj.is_object()) row_error(row, "expected a JSON object");
    ImageRecord rec;
    auto id = obj.find("image_id");
    if (id == obj.end() || !id->is_string()) row_error(row, "missing string field 'image_id'");
    rec.image_id = id->get<std::string>();
    auto prompt = obj.find("prompt");
    if (prompt == obj.end() || !prompt->is_string()) row_error(row, "missing string field 'prompt'");
    rec.prompt_raw = prompt->get<std::string>();
    if (auto gen = obj.find("generator"); gen != obj.end()) {
      if (!gen->is_string()) row_error(row, "'generator' must be a string");
      rec.source_generator = parse_generator(gen->get<std::string>());
    }
    if (auto scores = obj.find("scores"); scores != obj.end()) {
      if (!scores->is_object()) row_error(row, "'scores' must be an object");
      for (const auto& [metric, value] : scores->items()) {
        if (value.is_null()) continue;  // missing metric for this image
        if (!value.is_number()) {
          row_error(row, "score '" + metric + "' is not a finite number");
        }
        rec.scores[metric] = value.get<double>();
      }
    }
    check_record(rec, row, seen);
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<ImageRecord> parse_csv(std::istream& in) {
  csv::Reader reader(in);
  auto header = reader.next();
  if (!header) return {};
  int id_col = -1, prompt_col = -1, gen_col = -1;
  std::vector<std::pair<int, std::string>> score_cols;
  for (int i = 0; i < static_cast<int>(header->size()); ++i) {
    const std::string& name = (*header)[i];
    if (name == "image_id") {
      id_col = i;
    } else if (name == "prompt") {
      prompt_col = i;
    } else if (name == "generator") {
      gen_col = i;
    } else if (name.starts_with("score_") && name.size() > 6) {
      score_cols.emplace_back(i, name.substr(6));
    }
  }
  if (id_col < 0 || prompt_col < 0) {
    fail(ErrorCode::parse, "csv header must contain image_id and prompt columns");
  }

  std::vector<ImageRecord> out;
  std::unordered_set<std::string> seen;
  std::size_t row = 0;
  while (auto fields = reader.next()) {
    ++row;
    if (fields->size() == 1 && (*fields)[0].empty()) continue;  // blank line
    if (fields->size() != header->size()) {
      row_error(row, "expected " + std::to_string(header->size()) + " fields, got " +
                         std::to_string(fields->size()));
    }
    ImageRecord rec;
    rec.image_id = (*fields)[id_col];
    rec.prompt_raw = (*fields)[prompt_col];
    if (gen_col >= 0) rec.source_generator = parse_generator((*fields)[gen_col]);
    for (const auto& [col, metric] : score_cols) {
      const std::string& cell = (*fields)[col];
      if (cell.empty()) continue;
      double value = 0.0;
      const char* begin = cell.data();
      const char* end = begin + cell.size();
      auto [ptr, ec] = std::from_chars(begin, end, value);
      if (ec != std::errc() || ptr != end) {
        row_error(row, "score '" + metric + "' is not a number: '" + cell + "'");
      }
      rec.scores[metric] = value;
    }
    check_record(rec, row, seen);
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace

std::vector<ImageRecord> parse_records(std::istream& in, Format format) {
  return format == Format::csv ? parse_csv(in) : parse_jsonl(in);
}

std::vector<ImageRecord> load_records(const std::filesystem::path& path, Format format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::not_found, "cannot open dataset: " + path.string());
  try {
    return parse_records(in, format);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

std::vector<ImageRecord> load_records(const std::filesystem::path& path) {
  return load_records(path, path.extension() == ".csv" ? Format::csv : Format::jsonl);
}

std::string normalize_prompt(std::string_view text) {
  UErrorCode status = U_ZERO_ERROR;
  int32_t needed = 0;
  u_strFromUTF8(nullptr, 0, &needed, text.data(), static_cast<int32_t>(text.size()), &status);
  if (status != U_BUFFER_OVERFLOW_ERROR && U_FAILURE(status)) {
    fail(ErrorCode::parse, "prompt is not valid UTF-8");
  }
  status = U_ZERO_ERROR;
  const icu::UnicodeString raw = icu::UnicodeString::fromUTF8(
      icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) fail(ErrorCode::io, "ICU NFC normalizer unavailable");
  const icu::UnicodeString composed = nfc->normalize(raw, status);
  if (U_FAILURE(status)) fail(ErrorCode::parse, "NFC normalization failed");

  icu::UnicodeString collapsed;
  bool pending_space = false;
  for (int32_t i = 0; i < composed.length();) {
    const UChar32 cp = composed.char32At(i);
    i += U16_LENGTH(cp);
    if (u_isUWhiteSpace(cp)) {
      pending_space = !collapsed.isEmpty();
      continue;
    }
    if (pending_space) {
      collapsed.append(static_cast<UChar>(u' '));
      pending_space = false;
    }
    collapsed.append(cp);
  }
  if (collapsed.isEmpty()) {
    fail(ErrorCode::invalid_argument, "prompt is empty after normalization");
  }
  std::string out;
  collapsed.toUTF8String(out);
  return out;
}

std::size_t count_modifiers(std::string_view prompt_text) {
  constexpr std::string_view kSpace = " \t\r\n\f\v";
  std::size_t non_empty = 0;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = prompt_text.find(',', start);
    std::string_view seg = prompt_text.substr(
        start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    if (seg.find_first_not_of(kSpace) != std::string_view::npos) ++non_empty;
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return non_empty == 0 ? 0 : non_empty - 1;
}

std::vector<PromptGroup> aggregate(std::span<const ImageRecord> records) {
  struct Accum {
    std::map<std::string, std::size_t> spellings;
    std::map<std::string, std::vector<double>> values;
    std::size_t count = 0;
  };
  std::map<std::string, Accum> by_key;
  for (const auto& rec : records) {
    Accum& acc = by_key[normalize_prompt(rec.prompt_raw)];
    acc.count += 1;
    acc.spellings[rec.prompt_raw] += 1;
    for (const auto& [metric, value] : rec.scores) {
      acc.values[metric].push_back(value);
    }
  }

  std::vector<PromptGroup> out;
  out.reserve(by_key.size());
  for (auto& [key, acc] : by_key) {
    PromptGroup g;
    g.prompt_key = key;
    g.image_count = acc.count;
    // Most frequent spelling, ties broken by byte order: independent of row order.
    std::size_t best = 0;
    for (const auto& [spelling, n] : acc.spellings) {
      if (n > best) {
        best = n;
        g.prompt_text = spelling;
      }
    }
    g.modifier_count = count_modifiers(key);
    for (auto& [metric, values] : acc.values) {
      // Sorted summation makes the mean bit-identical under any row permutation.
      std::sort(values.begin(), values.end());
      const double sum = std::accumulate(values.begin(), values.end(), 0.0);
      const double n = static_cast<double>(values.size());
      const double mean = std::clamp(sum / n, values.front(), values.back());
      double ss = 0.0;
      for (double v : values) ss += (v - mean) * (v - mean);
      g.metric_means[metric] = mean;
      g.metric_stddevs[metric] = values.size() > 1 ? std::sqrt(ss / n) : 0.0;
      g.metric_counts[metric] = values.size();
      if (values.size() != acc.count) g.partial = true;
    }
    out.push_back(std::move(g));
  }
  return out;
}

DatasetStats dataset_stats(std::span<const PromptGroup> groups,
                           std::span<const ImageRecord> records) {
  DatasetStats s;
  s.total_images = records.size();
  s.total_prompt_occurrences = records.size();
  s.unique_prompts = groups.size();
  if (!groups.empty()) {
    const auto zero = std::count_if(groups.begin(), groups.end(),
                                    [](const PromptGroup& g) { return g.modifier_count == 0; });
    s.fraction_zero_modifier_prompts =
        static_cast<double>(zero) / static_cast<double>(groups.size());
  }
  return s;
}

SplitAssignment split(std::span<const PromptGroup> groups, std::array<double, 3> ratios,
                      std::uint64_t seed) {
  std::vector<std::string> keys;
  keys.reserve(groups.size());
  for (const auto& g : groups) keys.push_back(g.prompt_key);
  return split_keys(std::move(keys), ratios, seed);
}

SplitAssignment split_keys(std::vector<std::string> keys, std::array<double, 3> ratios,
                           std::uint64_t seed) {
  double total = 0.0;
  for (double r : ratios) {
    if (!std::isfinite(r) || r <= 0.0) {
      fail(ErrorCode::invalid_argument, "split ratios must be positive and finite");
    }
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    fail(ErrorCode::invalid_argument, "split ratios must sum to 1");
  }
  if (keys.size() < 3) {
    fail(ErrorCode::invalid_argument, "split needs at least 3 prompt groups, got " +
                                          std::to_string(keys.size()));
  }

  std::sort(keys.begin(), keys.end());
  if (std::adjacent_find(keys.begin(), keys.end()) != keys.end()) {
    fail(ErrorCode::invalid_argument, "split: duplicate prompt keys in input");
  }
  Rng rng(seed);
  rng.shuffle(keys);

  // Largest-remainder allocation keeps each count within 1 of its quota.
  const double n = static_cast<double>(keys.size());
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double quota = ratios[i] * n;
    counts[i] = static_cast<std::size_t>(std::floor(quota));
    remainder[i] = quota - std::floor(quota);
    assigned += counts[i];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < keys.size(); ++k, ++assigned) {
    counts[order[k % 3]] += 1;
  }

  SplitAssignment out;
  out.seed = seed;
  out.ratios = ratios;
  std::size_t pos = 0;
  const std::array<Split, 3> labels{Split::train, Split::validation, Split::test};
  for (int i = 0; i < 3; ++i) {
    for (std::size_t c = 0; c < counts[i]; ++c, ++pos) {
      out.assignment.emplace(keys[pos], labels[i]);
    }
  }
  return out;
}

std::string split_to_json(const SplitAssignment& s) {
  json j;
  j["seed"] = s.seed;
  j["ratios"] = s.ratios;
  json assignment = json::object();
  for (const auto& [key, where] : s.assignment) {
    assignment[key] = std::string(to_string(where));
  }
  j["assignment"] = std::move(assignment);
  return j.dump(2) + "\n";
}

SplitAssignment split_from_json(std::string_view text) {
  SplitAssignment s;
  try {
    const json j = json::parse(text);
    s.seed = j.at("seed").get<std::uint64_t>();
    const auto ratios = j.at("ratios").get<std::vector<double>>();
    if (ratios.size() != 3) fail(ErrorCode::parse, "split file: 'ratios' must have 3 entries");
    std::copy(ratios.begin(), ratios.end(), s.ratios.begin());
    for (const auto& [key, label] : j.at("assignment").items()) {
      s.assignment.emplace(key, parse_split(label.get<std::string>()));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, std::string("split file: ") + e.what());
  }
  return s;
}

}  // namespace ppp::ingest
