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

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ppp::ingest {

enum class Generator { dalle2, midjourney, stable_diffusion, painting, other };

std::string_view to_string(Generator g);
Generator parse_generator(std::string_view name);

/// One generated image (or painting) with the prompt that produced it and the
/// grader scores attached to it.
struct ImageRecord {
  std::string image_id;
  std::string prompt_raw;
  std::map<std::string, double> scores;
  Generator source_generator = Generator::other;
};

/// A unique normalized prompt with per-metric ground truth aggregated over
/// its member images.
struct PromptGroup {
  std::string prompt_key;
  std::string prompt_text;  // most frequent raw spelling, ties by byte order
  std::size_t image_count = 0;
  std::map<std::string, double> metric_means;
  std::map<std::string, double> metric_stddevs;  // population stddev
  std::map<std::string, std::size_t> metric_counts;
  std::size_t modifier_count = 0;
  bool partial = false;  // some metric missing on some member image

  /// True when every member image carries `metric`.
  bool complete_for(const std::string& metric) const;
};

struct DatasetStats {
  std::size_t total_images = 0;
  std::size_t total_prompt_occurrences = 0;
  std::size_t unique_prompts = 0;
  double fraction_zero_modifier_prompts = 0.0;
};

enum class Split { train, validation, test };

std::string_view to_string(Split s);
Split parse_split(std::string_view name);

struct SplitAssignment {
  std::map<std::string, Split> assignment;
  std::uint64_t seed = 0;
  std::array<double, 3> ratios{0.8, 0.1, 0.1};

  Split of(const std::string& prompt_key) const;
  std::vector<std::string> keys_in(Split s) const;
};

enum class Format { jsonl, csv };

Format parse_format(std::string_view name);

/// Parses a record dump. Row numbers in error messages are 1-based lines for
/// JSONL and 1-based data rows (header excluded) for CSV.
std::vector<ImageRecord> parse_records(std::istream& in, Format format);
std::vector<ImageRecord> load_records(const std::filesystem::path& path, Format format);
/// Picks the format from the file extension (.csv, otherwise JSONL).
std::vector<ImageRecord> load_records(const std::filesystem::path& path);

/// NFC, trim, collapse whitespace runs to one space; case is preserved.
std::string normalize_prompt(std::string_view text);

/// Number of non-empty comma-separated segments after the first non-empty one.
std::size_t count_modifiers(std::string_view prompt_text);

/// Groups records by normalized prompt. Output is sorted by prompt_key, so it
/// does not depend on record order.
std::vector<PromptGroup> aggregate(std::span<const ImageRecord> records);

DatasetStats dataset_stats(std::span<const PromptGroup> groups,
                           std::span<const ImageRecord> records);

/// Group-level split: seeded Fisher-Yates over the sorted prompt keys, then
/// largest-remainder allocation of the three counts.
SplitAssignment split(std::span<const PromptGroup> groups, std::array<double, 3> ratios,
                      std::uint64_t seed);

/// Same allocation over arbitrary unique keys.
SplitAssignment split_keys(std::vector<std::string> keys, std::array<double, 3> ratios,
                           std::uint64_t seed);

std::string split_to_json(const SplitAssignment& s);
SplitAssignment split_from_json(std::string_view text);

}  // namespace ppp::ingest
