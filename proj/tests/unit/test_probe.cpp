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

#include "ppp/probe.hpp"

#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "ppp/error.hpp"
#include "ppp/hash.hpp"
#include "ppp/stats.hpp"
#include "synthetic.hpp"

using namespace ppp;
using namespace ppp::probe;
using ppp::testing::gaussian;

namespace {

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

LinearHead random_head(Rng& rng, Eigen::Index d) {
  LinearHead h;
  h.encoder_id = "enc-\xc3\xa9/1";
  h.metric = "aesthetic score";
  h.trained_modality = Modality::image;
  h.weights = gaussian(rng, d, 1);
  h.feature_means = gaussian(rng, d, 1);
  h.feature_stds = gaussian(rng, d, 1).cwiseAbs().array() + 0.1;
  h.bias = rng.normal();
  h.lambda = 0.25;
  return h;
}

}  // namespace

TEST_SUITE("probe") {

TEST_CASE("exact line is fit exactly") {
  Eigen::MatrixXd X(3, 1);
  X << 1, 2, 3;
  Eigen::VectorXd y(3);
  y << 2, 4, 6;
  const auto [head, report] = fit_ridge(X, y, 0.0);
  const Eigen::VectorXd p = predict(head, X);
  for (int i = 0; i < 3; ++i) CHECK(p(i) == doctest::Approx(y(i)).epsilon(1e-14));
  CHECK(report.train_rmse <= 1e-14);
  CHECK(report.n_train == 3);
  Eigen::MatrixXd four(1, 1);
  four << 4;
  CHECK(predict(head, four)(0) == doctest::Approx(8.0).epsilon(1e-14));
}

TEST_CASE("constant target gives zero weights") {
  Rng rng(2);
  const Eigen::MatrixXd X = gaussian(rng, 30, 5);
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(30, 4.5);
  for (double lambda : {0.0, 1e-3, 10.0}) {
    const auto [head, report] = fit_ridge(X, y, lambda);
    CHECK(head.weights.cwiseAbs().maxCoeff() <= 1e-14);
    CHECK(head.bias == 4.5);
  }
}

TEST_CASE("random system matches the normal-equations oracle") {
  Rng rng(3);
  const Eigen::MatrixXd X = gaussian(rng, 50, 8);
  const Eigen::VectorXd y = gaussian(rng, 50, 1);
  const auto [head, report] = fit_ridge(X, y, 0.1);
  const auto want = oracle::ridge_normal_equations(X, y, 0.1);
  CHECK(oracle::relative_error(head.weights, want.theta) <= 1e-8);
  CHECK(oracle::relative_error(head.feature_stds, want.stds) <= 1e-12);
  CHECK(head.bias == doctest::Approx(want.bias).epsilon(1e-14));
}

TEST_CASE("underdetermined ridge is well defined") {
  Rng rng(4);
  const Eigen::MatrixXd X = gaussian(rng, 10, 40);
  const Eigen::VectorXd y = gaussian(rng, 10, 1);
  const auto [head, report] = fit_ridge(X, y, 1.0);
  const auto want = oracle::ridge_normal_equations(X, y, 1.0);
  CHECK(oracle::relative_error(head.weights, want.theta) <= 1e-8);
}

TEST_CASE("constant columns get unit std and zero weight") {
  Rng rng(5);
  Eigen::MatrixXd X = gaussian(rng, 40, 4);
  X.col(2).setConstant(3.0);
  const Eigen::VectorXd y = X.col(0) - X.col(3);
  const auto [head, report] = fit_ridge(X, y, 1e-3);
  CHECK(head.feature_stds(2) == 1.0);
  CHECK(head.weights(2) == 0.0);
  CHECK((head.feature_stds.array() > 0).all());
}

TEST_CASE("fit_ridge preconditions") {
  Eigen::MatrixXd one(1, 2);
  one << 1, 2;
  CHECK_THROWS_AS(fit_ridge(one, Eigen::VectorXd::Ones(1), 0.0), Error);
  Eigen::MatrixXd X = Eigen::MatrixXd::Random(5, 2);
  CHECK_THROWS_AS(fit_ridge(X, Eigen::VectorXd::Ones(5), -1.0), Error);
  X(1, 1) = std::nan("");
  CHECK_THROWS_AS(fit_ridge(X, Eigen::VectorXd::Ones(5), 0.0), Error);
  CHECK_THROWS_AS(fit_ridge(Eigen::MatrixXd::Random(5, 2), Eigen::VectorXd::Ones(4), 0.0), Error);
}

TEST_CASE("predict matches scalar recomputation") {
  Rng rng(6);
  const auto head = random_head(rng, 12);
  const Eigen::MatrixXd X = gaussian(rng, 20, 12);
  const Eigen::VectorXd p = predict(head, X);
  for (Eigen::Index i = 0; i < 20; ++i) {
    double acc = head.bias;
    for (Eigen::Index j = 0; j < 12; ++j) {
      acc += head.weights(j) * (X(i, j) - head.feature_means(j)) / head.feature_stds(j);
    }
    CHECK(std::abs(p(i) - acc) <= 1e-12);
  }
  CHECK_THROWS_AS(predict(head, gaussian(rng, 2, 11)), Error);
}

TEST_CASE("zero weight head predicts its bias") {
  LinearHead h;
  h.weights = Eigen::VectorXd::Zero(3);
  h.feature_means = Eigen::VectorXd::Zero(3);
  h.feature_stds = Eigen::VectorXd::Ones(3);
  h.bias = -1.25;
  Rng rng(1);
  const Eigen::VectorXd p = predict(h, gaussian(rng, 4, 3));
  CHECK((p.array() == -1.25).all());
}

TEST_CASE("transfer_apply shares predict arithmetic and tags modalities") {
  Rng rng(7);
  auto head = random_head(rng, 6);
  const Eigen::MatrixXd X = gaussian(rng, 9, 6);
  const auto same = transfer_apply(head, X, Modality::image);
  CHECK(same.values == predict(head, X));
  CHECK(same.trained_modality == Modality::image);
  CHECK(same.applied_modality == Modality::image);

  // Gap orthogonal to the head in standardized space: no change.
  Eigen::VectorXd g_std = gaussian(rng, 6, 1);
  g_std -= g_std.dot(head.weights) / head.weights.squaredNorm() * head.weights;
  const Eigen::VectorXd g_ortho = g_std.cwiseProduct(head.feature_stds);
  const Eigen::MatrixXd shifted = X.rowwise() + g_ortho.transpose();
  const auto moved = transfer_apply(head, shifted, Modality::text);
  CHECK(moved.applied_modality == Modality::text);
  CHECK((moved.values - same.values).cwiseAbs().maxCoeff() <= 1e-12);

  // Gap along the head: shift by theta . g exactly.
  const Eigen::VectorXd g_par = (0.7 * head.weights).cwiseProduct(head.feature_stds);
  const double expected = 0.7 * head.weights.squaredNorm();
  const auto par = transfer_apply(head, X.rowwise() + g_par.transpose(), Modality::text);
  for (Eigen::Index i = 0; i < 9; ++i) {
    CHECK(par.values(i) - same.values(i) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("head json round trip preserves predictions") {
  Rng rng(8);
  auto head = random_head(rng, 10);
  head.validation = ValidationSummary{17, 0.5, {-0.75, 0.8}};
  const auto back = head_from_json(head_to_json(head));
  CHECK(back.encoder_id == head.encoder_id);
  CHECK(back.metric == head.metric);
  CHECK(back.trained_modality == Modality::image);
  CHECK(back.lambda == head.lambda);
  REQUIRE(back.validation.has_value());
  CHECK(back.validation->n == 17);
  CHECK(back.validation->residual_interval == head.validation->residual_interval);
  const Eigen::MatrixXd X = gaussian(rng, 25, 10);
  CHECK((predict(back, X) - predict(head, X)).cwiseAbs().maxCoeff() <= 1e-15);

  ppp::testing::TempDir tmp("probe");
  save_head(head, tmp.path() / "h.json");
  CHECK(head_to_json(load_head(tmp.path() / "h.json")) == head_to_json(head));
}

TEST_CASE("corrupted head files are rejected") {
  Rng rng(9);
  const auto text = head_to_json(random_head(rng, 3));
  CHECK_THROWS_AS(head_from_json(text.substr(0, text.size() / 2)), Error);
  CHECK_THROWS_AS(head_from_json(R"({"version":2})"), Error);
  auto j = text;
  j.replace(j.find("\"dim\": 3"), 8, "\"dim\": 4");
  CHECK_THROWS_AS(head_from_json(j), Error);
  ppp::testing::TempDir tmp("probe");
  ppp::testing::write_text(tmp.path() / "bad.json", "{}");
  try {
    load_head(tmp.path() / "bad.json");
    FAIL("expected parse error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::parse);
    CHECK(std::string(e.what()).find("bad.json") != std::string::npos);
  }
}

TEST_CASE("least squares converges to the planted weights") {
  Rng rng(10);
  const Eigen::Index n = 10000, d = 16;
  const Eigen::MatrixXd X = gaussian(rng, n, d);
  const Eigen::VectorXd theta_star = gaussian(rng, d, 1);
  const Eigen::VectorXd y = X * theta_star + 0.1 * gaussian(rng, n, 1);
  const auto [head, report] = fit_ridge(X, y, 0.0);
  // Raw-space coefficients are weights / stds.
  const Eigen::VectorXd raw = head.weights.cwiseQuotient(head.feature_stds);
  CHECK((raw - theta_star).cwiseAbs().maxCoeff() < 0.02);
}

TEST_CASE("test correlation is invariant to affine target transforms") {
  Rng rng(11);
  const Eigen::MatrixXd X = gaussian(rng, 300, 6);
  const Eigen::VectorXd w = gaussian(rng, 6, 1);
  const Eigen::VectorXd y = X * w + gaussian(rng, 300, 1);
  const Eigen::MatrixXd Xtr = X.topRows(200), Xte = X.bottomRows(100);
  const Eigen::VectorXd ytr = y.head(200), yte = y.tail(100);
  const auto base = fit_ridge(Xtr, ytr, 1e-3).first;
  const double r0 = stats::pearson(to_std(predict(base, Xte)), to_std(yte)).r;
  const Eigen::VectorXd ytr2 = 3.5 * ytr.array() - 11.0;
  const Eigen::VectorXd yte2 = 3.5 * yte.array() - 11.0;
  const auto scaled = fit_ridge(Xtr, ytr2, 1e-3).first;
  const double r1 = stats::pearson(to_std(predict(scaled, Xte)), to_std(yte2)).r;
  CHECK(std::abs(r0 - r1) <= 1e-12);
}

TEST_CASE("predict is affine in standardized inputs") {
  Rng rng(12);
  const auto head = random_head(rng, 5);
  const Eigen::MatrixXd Z1 = gaussian(rng, 7, 5), Z2 = gaussian(rng, 7, 5);
  auto raw = [&](const Eigen::MatrixXd& Z) -> Eigen::MatrixXd {
    return (Z.array().rowwise() * head.feature_stds.transpose().array()).matrix().rowwise() +
           head.feature_means.transpose();
  };
  const Eigen::VectorXd lhs = predict(head, raw(Z1 + Z2));
  const Eigen::VectorXd rhs = predict(head, raw(Z1)) + predict(head, raw(Z2));
  CHECK((lhs.array() - (rhs.array() - head.bias)).abs().maxCoeff() <= 1e-12);
}

TEST_CASE("validation summary and lambda selection") {
  Rng rng(13);
  const Eigen::MatrixXd X = gaussian(rng, 120, 10);
  const Eigen::VectorXd y = X.col(0) + 0.3 * gaussian(rng, 120, 1);
  auto [head, report] = fit_ridge(X.topRows(100), y.head(100), 1e-3);
  const double v = attach_validation(head, X.bottomRows(20), y.tail(20));
  REQUIRE(head.validation.has_value());
  CHECK(head.validation->n == 20);
  CHECK(v == head.validation->rmse);
  CHECK(head.validation->residual_interval[0] <= head.validation->residual_interval[1]);

  const auto grid = default_lambda_grid();
  CHECK(grid.front() == 1e-6);
  CHECK(grid.back() == 1e2);
  const auto [best, best_report] =
      fit_ridge_select(X.topRows(100), y.head(100), X.bottomRows(20), y.tail(20), grid);
  REQUIRE(best_report.validation_rmse.has_value());
  for (double lambda : grid) {
    const auto h = fit_ridge(X.topRows(100), y.head(100), lambda).first;
    CHECK(*best_report.validation_rmse <= rmse(predict(h, X.bottomRows(20)), y.tail(20)));
  }
  CHECK(best.lambda == best_report.lambda_used);
  CHECK_THROWS_AS(fit_ridge_select(X, y, X, y, std::span<const double>{}), Error);
}

}  // TEST_SUITE
