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

#include "ppp/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ppp/distributions.hpp"
#include "ppp/error.hpp"
#include "ppp/hash.hpp"

namespace ppp::stats {

namespace {

void require_finite(std::span<const double> v, const char* who) {
  for (double x : v) {
    if (!std::isfinite(x)) fail(ErrorCode::invalid_argument, std::string(who) + ": non-finite input");
  }
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

double mean(std::span<const double> v) {
  if (v.empty()) fail(ErrorCode::invalid_argument, "mean of empty sample");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stddev(std::span<const double> v) {
  if (v.size() < 2) fail(ErrorCode::invalid_argument, "stddev needs at least 2 values");
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double median(std::vector<double> v) {
  if (v.empty()) fail(ErrorCode::invalid_argument, "median of empty sample");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

CorrelationResult pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    fail(ErrorCode::invalid_argument, "pearson: length mismatch (" + std::to_string(x.size()) +
                                          " vs " + std::to_string(y.size()) + ")");
  }
  const std::size_t n = x.size();
  if (n < 3) fail(ErrorCode::invalid_argument, "pearson needs at least 3 pairs");
  require_finite(x, "pearson");
  require_finite(y, "pearson");

  const double mx = mean(x);
  const double my = mean(y);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    fail(ErrorCode::degenerate, "pearson: correlation undefined for constant input");
  }
  CorrelationResult out;
  out.n = n;
  out.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  // Two-sided p = I_{1-r^2}((n-2)/2, 1/2), same as the t test on n-2 df.
  const double one_minus_r2 = (1.0 - out.r) * (1.0 + out.r);
  const double df = static_cast<double>(n - 2);
  out.p_value = one_minus_r2 <= 0.0
                    ? 0.0
                    : std::clamp(incomplete_beta(0.5 * df, 0.5, one_minus_r2, out.r * out.r),
                                 0.0, 1.0);
  return out;
}

std::string_view to_string(Center c) { return c == Center::mean ? "mean" : "median"; }

Center parse_center(std::string_view name) {
  if (name == "mean") return Center::mean;
  if (name == "median") return Center::median;
  fail(ErrorCode::invalid_argument, "unknown Levene center '" + std::string(name) + "'");
}

LeveneResult levene(std::span<const std::vector<double>> groups, Center center) {
  if (groups.size() < 2) fail(ErrorCode::invalid_argument, "levene needs at least 2 groups");
  LeveneResult out;
  out.center = center;
  std::vector<std::vector<double>> deviations;
  deviations.reserve(groups.size());
  std::size_t total = 0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& values = groups[g];
    if (values.size() < 2) {
      fail(ErrorCode::invalid_argument, "levene: group " + std::to_string(g) + " has " +
                                            std::to_string(values.size()) +
                                            " observation(s), need at least 2");
    }
    require_finite(values, "levene");
    const double c = center == Center::mean ? mean(values) : median(values);
    std::vector<double> z;
    z.reserve(values.size());
    for (double v : values) z.push_back(std::abs(v - c));
    deviations.push_back(std::move(z));
    out.group_sizes.push_back(values.size());
    total += values.size();
  }

  const double k = static_cast<double>(groups.size());
  const double N = static_cast<double>(total);
  double grand = 0.0;
  std::vector<double> group_means;
  for (const auto& z : deviations) {
    group_means.push_back(mean(z));
    grand += std::accumulate(z.begin(), z.end(), 0.0);
  }
  grand /= N;

  double between = 0.0, within = 0.0;
  for (std::size_t g = 0; g < deviations.size(); ++g) {
    const double diff = group_means[g] - grand;
    between += static_cast<double>(deviations[g].size()) * diff * diff;
    for (double z : deviations[g]) within += (z - group_means[g]) * (z - group_means[g]);
  }
  if (within == 0.0) {
    fail(ErrorCode::degenerate, "levene: zero within-group deviation, statistic undefined");
  }
  out.W = std::max(0.0, (N - k) / (k - 1.0) * between / within);
  out.p_value = std::clamp(f_sf(out.W, k - 1.0, N - k), 0.0, 1.0);
  return out;
}

double auc(std::span<const double> positives, std::span<const double> negatives) {
  if (positives.empty() || negatives.empty()) {
    fail(ErrorCode::invalid_argument, "auc needs both classes");
  }
  struct Item {
    double score;
    bool positive;
  };
  std::vector<Item> items;
  items.reserve(positives.size() + negatives.size());
  for (double s : positives) items.push_back({s, true});
  for (double s : negatives) items.push_back({s, false});
  std::sort(items.begin(), items.end(),
            [](const Item& a, const Item& b) { return a.score < b.score; });
  // Sum of average ranks of the positives.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < items.size();) {
    std::size_t j = i;
    while (j + 1 < items.size() && items[j + 1].score == items[i].score) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (items[k].positive) rank_sum += avg;
    }
    i = j + 1;
  }
  const double pos = static_cast<double>(positives.size());
  const double neg = static_cast<double>(negatives.size());
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

MetricMatrix metric_correlation_matrix(std::span<const ingest::PromptGroup> groups,
                                       std::span<const std::string> metrics) {
  MetricMatrix out;
  out.metrics.assign(metrics.begin(), metrics.end());
  std::vector<std::vector<double>> columns;
  for (const auto& m : metrics) {
    std::vector<double> col;
    col.reserve(groups.size());
    for (const auto& g : groups) {
      auto it = g.metric_means.find(m);
      if (it == g.metric_means.end()) {
        fail(ErrorCode::not_found, "metric '" + m + "' absent on prompt group '" + g.prompt_key + "'");
      }
      col.push_back(it->second);
    }
    columns.push_back(std::move(col));
  }
  const std::size_t k = metrics.size();
  out.cells.assign(k, std::vector<CorrelationResult>(k));
  for (std::size_t i = 0; i < k; ++i) {
    out.cells[i][i] = pearson(columns[i], columns[i]);
    out.cells[i][i].r = 1.0;
    out.cells[i][i].p_value = 0.0;
    for (std::size_t j = i + 1; j < k; ++j) {
      out.cells[i][j] = pearson(columns[i], columns[j]);
      out.cells[j][i] = out.cells[i][j];
    }
  }
  return out;
}

std::pair<double, double> bootstrap_ci(std::span<const double> x, std::span<const double> y,
                                       std::size_t B, std::uint64_t seed, double alpha) {
  if (x.size() != y.size()) fail(ErrorCode::invalid_argument, "bootstrap_ci: length mismatch");
  if (x.size() < 10) fail(ErrorCode::invalid_argument, "bootstrap_ci needs n >= 10");
  if (B < 100) fail(ErrorCode::invalid_argument, "bootstrap_ci needs B >= 100");
  if (!(alpha > 0.0 && alpha < 1.0)) {
    fail(ErrorCode::invalid_argument, "bootstrap_ci: alpha must lie in (0, 1)");
  }
  // Rejects constant inputs up front.
  (void)pearson(x, y);

  const std::size_t n = x.size();
  Rng rng(seed);
  std::vector<double> rs;
  rs.reserve(B);
  std::vector<double> xs(n), ys(n);
  std::size_t attempts = 0;
  while (rs.size() < B) {
    if (++attempts > 100 * B) {
      fail(ErrorCode::degenerate, "bootstrap_ci: too many constant resamples");
    }
    bool x_const = true, y_const = true;
    for (std::size_t i = 0; i < n; ++i) {
      const auto k = static_cast<std::size_t>(rng.below(n));
      xs[i] = x[k];
      ys[i] = y[k];
      x_const = x_const && xs[i] == xs[0];
      y_const = y_const && ys[i] == ys[0];
    }
    if (x_const || y_const) continue;
    rs.push_back(pearson(xs, ys).r);
  }
  std::sort(rs.begin(), rs.end());
  return {quantile_sorted(rs, alpha / 2.0), quantile_sorted(rs, 1.0 - alpha / 2.0)};
}

}  // namespace ppp::stats
