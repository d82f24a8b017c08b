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

#include <cmath>
#include <limits>

#include "doctest.h"
#include "oracles.hpp"
#include "ppp/distributions.hpp"
#include "ppp/error.hpp"
#include "ppp/hash.hpp"
#include "reference_values.hpp"

using namespace ppp;
using namespace ppp::stats;

namespace {

std::vector<double> normals(Rng& rng, std::size_t n, double sd = 1.0, double mu = 0.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = mu + sd * rng.normal();
  return v;
}

ingest::PromptGroup group(std::string key, std::map<std::string, double> means) {
  ingest::PromptGroup g;
  g.prompt_key = std::move(key);
  g.image_count = 1;
  for (const auto& [m, v] : means) g.metric_counts[m] = 1;
  g.metric_means = std::move(means);
  return g;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected ppp::Error");
  return ErrorCode::io;
}

}  // namespace

TEST_SUITE("stats") {

TEST_CASE("perfect correlation and anticorrelation") {
  const std::vector<double> a{1, 2, 3, 4};
  const auto r = pearson(a, a);
  CHECK(r.r == 1.0);
  CHECK(r.p_value == 0.0);
  CHECK(r.n == 4);
  const std::vector<double> x{1, 2, 3}, y{3, 2, 1};
  CHECK(pearson(x, y).r == -1.0);
}

TEST_CASE("five point example matches the direct formula") {
  const std::vector<double> x{1, 2, 3, 4, 5}, y{2, 1, 4, 3, 6};
  const auto got = pearson(x, y);
  const double r = oracle::pearson_r(x, y);
  CHECK(std::abs(got.r - r) <= 1e-10);
  CHECK(std::abs(got.p_value - oracle::pearson_p(r, 5)) <= 1e-10);
}

TEST_CASE("random pairs match the direct formula") {
  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 3 + rng.below(200);
    auto x = normals(rng, n);
    auto y = normals(rng, n);
    const double rho = rng.uniform() * 2 - 1;
    for (std::size_t i = 0; i < n; ++i) y[i] = rho * x[i] + std::sqrt(1 - rho * rho) * y[i];
    const auto got = pearson(x, y);
    const double r = oracle::pearson_r(x, y);
    CHECK(std::abs(got.r - r) <= 1e-10);
    CHECK(std::abs(got.p_value - oracle::pearson_p(r, n)) <= 1e-10);
  }
}

TEST_CASE("pearson symmetry and affine invariance") {
  Rng rng(22);
  const auto x = normals(rng, 50), y = normals(rng, 50);
  const double r = pearson(x, y).r;
  CHECK(std::abs(pearson(y, x).r - r) <= 1e-12);
  std::vector<double> up(50), down(50);
  for (int i = 0; i < 50; ++i) {
    up[i] = 2.5 * x[i] + 7;
    down[i] = -0.5 * x[i] + 1;
  }
  CHECK(std::abs(pearson(up, y).r - r) <= 1e-12);
  CHECK(std::abs(pearson(down, y).r + r) <= 1e-12);
}

TEST_CASE("pearson rejects degenerate input") {
  const std::vector<double> c{1, 1, 1, 1}, v{1, 2, 3, 4};
  CHECK(code_of([&] { pearson(c, v); }) == ErrorCode::degenerate);
  const std::vector<double> two{1, 2};
  CHECK(code_of([&] { pearson(two, two); }) == ErrorCode::invalid_argument);
  const std::vector<double> three{1, 2, 3};
  CHECK(code_of([&] { pearson(three, v); }) == ErrorCode::invalid_argument);
}

TEST_CASE("student t cdf against tabulated values") {
  for (const auto& ref : ppp::reference::kStudentT) {
    CAPTURE(ref.t);
    CAPTURE(ref.df);
    CHECK(std::abs(student_t_cdf(ref.t, ref.df) - ref.cdf) <= 1e-6);
    CHECK(std::abs(student_t_cdf(ref.t, ref.df) - ref.cdf) <= 1e-12);
  }
  CHECK(student_t_cdf(0.0, 7.0) == 0.5);
  const double inf = std::numeric_limits<double>::infinity();
  CHECK(student_t_cdf(-inf, 3.0) == 0.0);
  CHECK(student_t_cdf(inf, 3.0) == 1.0);
  double prev = 0.0;
  for (double t = -30; t <= 30; t += 0.25) {
    const double c = student_t_cdf(t, 4.5);
    CHECK(c >= prev);
    prev = c;
  }
  CHECK(student_t_two_sided(2.228, 10) == doctest::Approx(0.05).epsilon(1e-4));
}

TEST_CASE("F survival against tabulated values") {
  for (const auto& ref : ppp::reference::kFisherF) {
    CAPTURE(ref.f);
    CHECK(std::abs(f_sf(ref.f, ref.df1, ref.df2) - ref.sf) <= 1e-12);
    CHECK(std::abs(f_cdf(ref.f, ref.df1, ref.df2) + ref.sf - 1.0) <= 1e-12);
  }
  double prev = 0.0;
  for (double f = 0; f <= 20; f += 0.5) {
    const double c = f_cdf(f, 3, 12);
    CHECK(c >= prev);
    prev = c;
  }
  CHECK(f_cdf(0.0, 3, 12) == 0.0);
  CHECK(f_cdf(std::numeric_limits<double>::infinity(), 3, 12) == 1.0);
}

TEST_CASE("levene equal spread gives W zero") {
  const std::vector<std::vector<double>> g{{1, 2, 3, 4}, {2, 3, 4, 5}};
  const auto res = levene(g);
  CHECK(std::abs(res.W) <= 1e-9);
  CHECK(std::abs(res.p_value - 1.0) <= 1e-9);
  CHECK(res.group_sizes == std::vector<std::size_t>{4, 4});
}

TEST_CASE("levene matches reference statistics") {
  for (const auto& ref : ppp::reference::kLevene) {
    CAPTURE(ref.label);
    const auto res = levene(ref.groups, ref.center);
    CHECK(std::abs(res.W - ref.W) <= 1e-9);
    CHECK(std::abs(res.p_value - ref.p) <= 1e-9);
    if (ref.center == Center::mean) {
      const auto o = oracle::levene_mean(ref.groups);
      CHECK(std::abs(res.W - o.W) <= 1e-9);
      CHECK(std::abs(res.p_value - o.p) <= 1e-9);
    }
  }
}

TEST_CASE("levene detects unequal variance") {
  Rng rng(23);
  const std::vector<std::vector<double>> g{normals(rng, 200, 1.0), normals(rng, 200, 10.0)};
  CHECK(levene(g).p_value < 0.01);
  CHECK(levene(g, Center::median).p_value < 0.01);
}

TEST_CASE("levene is shift invariant per group") {
  Rng rng(24);
  std::vector<std::vector<double>> g{normals(rng, 30), normals(rng, 40, 2.0), normals(rng, 25)};
  const double W = levene(g).W;
  for (auto& v : g[1]) v += 123.0;
  CHECK(std::abs(levene(g).W - W) <= 1e-10);
}

TEST_CASE("levene errors") {
  const std::vector<std::vector<double>> flat{{1, 1, 1}, {2, 2}};
  try {
    levene(flat);
    FAIL("expected degenerate");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::degenerate);
    CHECK(std::string(e.what()).find("zero within-group deviation") != std::string::npos);
  }
  const std::vector<std::vector<double>> tiny{{1, 2, 3}, {4}};
  CHECK(code_of([&] { levene(tiny); }) == ErrorCode::invalid_argument);
  const std::vector<std::vector<double>> one{{1, 2, 3}};
  CHECK(code_of([&] { levene(one); }) == ErrorCode::invalid_argument);
  CHECK(parse_center("median") == Center::median);
  CHECK(code_of([] { parse_center("trimmed"); }) == ErrorCode::invalid_argument);
}

TEST_CASE("auc rank statistic with ties") {
  const std::vector<double> pos{3, 4, 5}, neg{1, 2, 3};
  // Pairs: 9 total, 8 wins, one tie.
  CHECK(auc(pos, neg) == doctest::Approx(8.5 / 9).epsilon(1e-15));
  CHECK(auc(neg, pos) == doctest::Approx(0.5 / 9).epsilon(1e-15));
  const std::vector<double> same{1, 1};
  CHECK(auc(same, same) == 0.5);
  CHECK(code_of([&] { auc(pos, std::span<const double>{}); }) == ErrorCode::invalid_argument);
}

TEST_CASE("metric matrix diagonal, negation and pairwise oracle") {
  Rng rng(25);
  std::vector<ingest::PromptGroup> groups;
  std::vector<double> a, b, c;
  for (int i = 0; i < 60; ++i) {
    const double z1 = rng.normal(), z2 = rng.normal(), z3 = rng.normal();
    a.push_back(z1);
    b.push_back(0.6 * z1 + 0.8 * z2);
    c.push_back(-0.3 * z1 + 0.2 * z2 + z3);
    groups.push_back(group("g" + std::to_string(i), {{"a", a.back()}, {"b", b.back()},
                                                      {"c", c.back()}, {"neg", -a.back()}}));
  }
  const std::vector<std::string> metrics{"a", "b", "c", "neg"};
  const auto M = metric_correlation_matrix(groups, metrics);
  CHECK(M.metrics == metrics);
  const std::vector<std::vector<double>> cols{a, b, c};
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(M.cells[i][i].r == 1.0);
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(std::abs(M.cells[i][j].r - M.cells[j][i].r) <= 1e-12);
      if (i < 3 && j < 3 && i != j) {
        CHECK(std::abs(M.cells[i][j].r - oracle::pearson_r(cols[i], cols[j])) <= 1e-12);
      }
    }
  }
  CHECK(M.cells[0][3].r == doctest::Approx(-1.0).epsilon(1e-15));

  const std::vector<std::string> missing{"a", "zzz"};
  try {
    metric_correlation_matrix(groups, missing);
    FAIL("expected not_found");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::not_found);
    CHECK(std::string(e.what()).find("zzz") != std::string::npos);
  }
}

TEST_CASE("bootstrap ci basics") {
  Rng rng(26);
  const auto x = normals(rng, 40);
  const auto [lo, hi] = bootstrap_ci(x, x, 200, 1, 0.05);
  CHECK(lo == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(hi == doctest::Approx(1.0).epsilon(1e-15));

  auto y = normals(rng, 40);
  for (int i = 0; i < 40; ++i) y[i] += x[i];
  const auto a = bootstrap_ci(x, y, 300, 9, 0.1);
  const auto b = bootstrap_ci(x, y, 300, 9, 0.1);
  CHECK(a == b);
  CHECK(a.first <= pearson(x, y).r);
  CHECK(pearson(x, y).r <= a.second);

  CHECK(code_of([&] { bootstrap_ci(std::span(x).first(9), std::span(y).first(9), 200, 1, 0.05); }) ==
        ErrorCode::invalid_argument);
  CHECK(code_of([&] { bootstrap_ci(x, y, 99, 1, 0.05); }) == ErrorCode::invalid_argument);
  CHECK(code_of([&] { bootstrap_ci(x, y, 200, 1, 1.5); }) == ErrorCode::invalid_argument);
}

TEST_CASE("bootstrap coverage on a planted correlation") {
  Rng rng(27);
  const double rho = 0.5;
  int covered = 0;
  const int trials = 200;
  for (int t = 0; t < trials; ++t) {
    std::vector<double> x(80), y(80);
    for (int i = 0; i < 80; ++i) {
      x[i] = rng.normal();
      y[i] = rho * x[i] + std::sqrt(1 - rho * rho) * rng.normal();
    }
    const auto [lo, hi] = bootstrap_ci(x, y, 400, 1000 + t, 0.1);
    covered += lo <= rho && rho <= hi;
  }
  const double coverage = static_cast<double>(covered) / trials;
  CHECK(coverage >= 0.85);
  CHECK(coverage <= 0.95);
}

TEST_CASE("summary helpers") {
  const std::vector<double> v{4, 1, 3, 2};
  CHECK(mean(v) == 2.5);
  CHECK(stddev(v) == doctest::Approx(std::sqrt(5.0 / 3.0)).epsilon(1e-15));
  CHECK(median(v) == 2.5);
  CHECK(median({5, 1, 3}) == 3);
}

}  // TEST_SUITE
