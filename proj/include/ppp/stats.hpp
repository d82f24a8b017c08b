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

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ppp/ingest.hpp"

namespace ppp::stats {

struct CorrelationResult {
  double r = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
  std::optional<double> ci_low;
  std::optional<double> ci_high;

  bool operator==(const CorrelationResult&) const = default;
};

/// Pearson r with a two-sided p-value from the t distribution on n - 2
/// degrees of freedom. Throws degenerate on constant input and
/// invalid_argument when n < 3 or the lengths differ.
CorrelationResult pearson(std::span<const double> x, std::span<const double> y);

enum class Center { mean, median };

std::string_view to_string(Center c);
Center parse_center(std::string_view name);

struct LeveneResult {
  double W = 0.0;
  double p_value = 1.0;
  std::vector<std::size_t> group_sizes;
  Center center = Center::mean;
};

/// Levene's test on absolute deviations from each group's center; with
/// Center::median this is the Brown-Forsythe variant. p-value from
/// F(k - 1, N - k).
LeveneResult levene(std::span<const std::vector<double>> groups, Center center = Center::mean);

/// Mann-Whitney AUC: probability that a positive score exceeds a negative
/// one, ties given half credit.
double auc(std::span<const double> positives, std::span<const double> negatives);

struct MetricMatrix {
  std::vector<std::string> metrics;
  /// cells[i][j] = pearson over groups of metric i vs metric j.
  std::vector<std::vector<CorrelationResult>> cells;
};

MetricMatrix metric_correlation_matrix(std::span<const ingest::PromptGroup> groups,
                                       std::span<const std::string> metrics);

/// Percentile bootstrap interval for Pearson r over paired resamples.
/// Resamples that come out constant on either side are redrawn.
std::pair<double, double> bootstrap_ci(std::span<const double> x, std::span<const double> y,
                                       std::size_t B, std::uint64_t seed, double alpha);

double mean(std::span<const double> v);
/// Sample standard deviation (n - 1 denominator).
double stddev(std::span<const double> v);
double median(std::vector<double> v);

}  // namespace ppp::stats
