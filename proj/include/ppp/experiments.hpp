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
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ppp/embedding.hpp"
#include "ppp/ingest.hpp"
#include "ppp/pca.hpp"
#include "ppp/probe.hpp"
#include "ppp/report.hpp"
#include "ppp/stats.hpp"

namespace ppp::experiments {

enum class Kind {
  probe_grid,
  transfer,
  modality_gap,
  metric_matrix,
  modifier_variance,
  paintings_ablation,
};

std::string_view to_string(Kind k);
Kind parse_kind(std::string_view name);

/// Where an encoder's vectors come from: a prebuilt store or a provider.
struct EncoderSpec {
  std::string encoder_id;
  embedding::Modality modality = embedding::Modality::text;
  std::optional<std::filesystem::path> store;
  std::optional<embedding::ProviderConfig> provider;
  /// Image encoders only: rows keyed by "image_id" (one per image) or
  /// "prompt_key" (one per prompt group).
  std::string key = "image_id";
  /// Image encoders only: the text encoder of the same family.
  std::string pairs_with;
};

struct BootstrapSpec {
  std::size_t resamples = 1000;
  double alpha = 0.05;
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  Kind kind = Kind::probe_grid;
  std::string dataset_name;
  std::filesystem::path dataset_path;
  std::optional<ingest::Format> dataset_format;

  std::vector<EncoderSpec> encoders;        // text modality
  std::vector<EncoderSpec> image_encoders;  // transfer, modality_gap, paintings baseline

  /// Relevance metrics; for paintings_ablation the appreciation features
  /// (empty means every feature present in the data).
  std::vector<std::string> metrics;

  std::array<double, 3> split_ratios{0.8, 0.1, 0.1};
  std::uint64_t split_seed = 0;
  std::optional<std::filesystem::path> split_file;

  double lambda = probe::kDefaultLambda;
  std::vector<double> lambda_grid;  // non-empty: select on the validation split
  std::optional<BootstrapSpec> bootstrap;
  std::size_t jobs = 1;
  /// Keep prompt groups that miss the metric on some member image.
  bool include_partial = false;

  /// transfer: metric -> imported image head, instead of fitting one.
  std::map<std::string, std::filesystem::path> image_heads;

  stats::Center levene_center = stats::Center::mean;
  /// modality_gap: cap on rows per modality, 0 for all.
  std::size_t max_points = 0;
  std::size_t max_components = 10;

  std::string template_id = "default";
  /// metric_matrix: pairs expected to correlate slightly negatively.
  std::vector<std::array<std::string, 2>> advisory_pairs;

  std::filesystem::path output_dir;
};

/// Relative paths resolve against `base_dir`.
ExperimentConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Lookup of embedding rows by key, backed by a store or a cached provider.
class EmbeddingSource {
 public:
  virtual ~EmbeddingSource() = default;
  virtual Eigen::MatrixXd lookup(std::span<const std::string> keys) = 0;
  virtual std::string describe() const = 0;

  static std::unique_ptr<EmbeddingSource> open(const EncoderSpec& spec);
};

struct GroupSummary {
  std::string label;
  std::size_t n = 0;
  double mean = 0.0;
  double stddev = 0.0;
};

struct ModifierVarianceResult {
  std::string metric;
  stats::LeveneResult levene;
  GroupSummary without_modifiers;
  GroupSummary with_modifiers;
};

struct ModalityGapEntry {
  std::string text_encoder;
  std::string image_encoder;
  stats::SeparationReport separation;
};

/// Everything one run produces. Exactly one of table / modifiers / gaps is
/// populated, according to kind.
struct RunResult {
  Kind kind = Kind::probe_grid;
  std::optional<report::ReportTable> table;
  std::optional<ModifierVarianceResult> modifiers;
  std::vector<ModalityGapEntry> gaps;
  report::Metadata metadata;
  /// File stem (without .json) -> fitted head.
  std::map<std::string, probe::LinearHead> heads;
};

RunResult run_probe_grid(const ExperimentConfig& config);
RunResult run_transfer(const ExperimentConfig& config);
RunResult run_modality_gap(const ExperimentConfig& config);
RunResult run_metric_matrix(const ExperimentConfig& config);
RunResult run_modifier_variance(const ExperimentConfig& config);
RunResult run_paintings_ablation(const ExperimentConfig& config);

RunResult run(const ExperimentConfig& config);

/// Deterministic rendering of any result kind.
std::string render_result(const RunResult& result, report::Format format);

/// Writes report.{json,md,csv}, heads/ and run_manifest.json under `out_dir`.
void write_outputs(const RunResult& result, const std::filesystem::path& out_dir,
                   double elapsed_ms);

}  // namespace ppp::experiments
