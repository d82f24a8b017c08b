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

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>

#include "json.hpp"
#include "ppp/error.hpp"
#include "ppp/hash.hpp"

namespace ppp::probe {

using nlohmann::json;

namespace {

void require_finite(const Eigen::MatrixXd& m, const char* what) {
  if (!m.allFinite()) {
    fail(ErrorCode::invalid_argument, std::string(what) + " contains non-finite values");
  }
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.size() == 1) return sorted.front();
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

std::pair<LinearHead, FitReport> fit_ridge(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                           double lambda) {
  const Eigen::Index n = X.rows();
  const Eigen::Index d = X.cols();
  if (n < 2) fail(ErrorCode::invalid_argument, "fit_ridge needs at least 2 samples");
  if (y.size() != n) {
    fail(ErrorCode::invalid_argument, "fit_ridge: X has " + std::to_string(n) +
                                          " rows but y has " + std::to_string(y.size()));
  }
  if (d == 0) fail(ErrorCode::invalid_argument, "fit_ridge: zero-dimensional features");
  if (!std::isfinite(lambda) || lambda < 0.0) {
    fail(ErrorCode::invalid_argument, "fit_ridge: lambda must be finite and >= 0");
  }
  require_finite(X, "fit_ridge: X");
  require_finite(y, "fit_ridge: y");

  LinearHead head;
  head.lambda = lambda;
  head.feature_means = X.colwise().mean().transpose();
  head.feature_stds = Eigen::VectorXd::Ones(d);
  head.weights = Eigen::VectorXd::Zero(d);

  // Columns whose spread is at rounding level relative to their magnitude are
  // treated as constant.
  std::vector<Eigen::Index> active;
  for (Eigen::Index j = 0; j < d; ++j) {
    const auto centered = X.col(j).array() - head.feature_means(j);
    const double sd = std::sqrt(centered.square().sum() / static_cast<double>(n - 1));
    const double scale = X.col(j).cwiseAbs().maxCoeff();
    if (sd > 1e-12 * scale) {
      head.feature_stds(j) = sd;
      active.push_back(j);
    }
  }

  const double y_mean = y.mean();
  head.bias = y_mean;
  const Eigen::VectorXd y_centered = y.array() - y_mean;

  if (!active.empty()) {
    Eigen::MatrixXd Z(n, static_cast<Eigen::Index>(active.size()));
    for (std::size_t k = 0; k < active.size(); ++k) {
      const Eigen::Index j = active[k];
      Z.col(static_cast<Eigen::Index>(k)) =
          (X.col(j).array() - head.feature_means(j)) / head.feature_stds(j);
    }
    Eigen::BDCSVD<Eigen::MatrixXd> svd(Z, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd& s = svd.singularValues();
    const double cutoff = s.size() ? s(0) * static_cast<double>(std::max(n, Z.cols())) *
                                         std::numeric_limits<double>::epsilon()
                                   : 0.0;
    Eigen::VectorXd shrink(s.size());
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      shrink(i) = (lambda == 0.0 && s(i) <= cutoff) ? 0.0 : s(i) / (s(i) * s(i) + lambda);
    }
    const Eigen::VectorXd theta =
        svd.matrixV() * (shrink.asDiagonal() * (svd.matrixU().transpose() * y_centered));
    for (std::size_t k = 0; k < active.size(); ++k) {
      head.weights(active[k]) = theta(static_cast<Eigen::Index>(k));
    }
  }

  FitReport report;
  report.n_train = static_cast<std::size_t>(n);
  report.lambda_used = lambda;
  report.train_rmse = rmse(predict(head, X), y);
  return {std::move(head), report};
}

Eigen::VectorXd predict(const LinearHead& head, const Eigen::MatrixXd& X) {
  if (X.cols() != head.dim()) {
    fail(ErrorCode::invalid_argument, "predict: input dim " + std::to_string(X.cols()) +
                                          " does not match head dim " +
                                          std::to_string(head.dim()));
  }
  require_finite(X, "predict: X");
  // Row by row in a fixed order, so a row scores the same in any batch.
  Eigen::VectorXd out(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      s += head.weights(j) * ((X(i, j) - head.feature_means(j)) / head.feature_stds(j));
    }
    out(i) = s + head.bias;
  }
  return out;
}

TransferPrediction transfer_apply(const LinearHead& head, const Eigen::MatrixXd& X_other,
                                  Modality applied_modality) {
  return {predict(head, X_other), head.trained_modality, applied_modality};
}

double rmse(const Eigen::VectorXd& predicted, const Eigen::VectorXd& target) {
  if (predicted.size() != target.size() || predicted.size() == 0) {
    fail(ErrorCode::invalid_argument, "rmse: size mismatch or empty input");
  }
  return std::sqrt((predicted - target).squaredNorm() / static_cast<double>(predicted.size()));
}

double attach_validation(LinearHead& head, const Eigen::MatrixXd& X_val,
                         const Eigen::VectorXd& y_val) {
  const Eigen::VectorXd pred = predict(head, X_val);
  ValidationSummary summary;
  summary.n = static_cast<std::size_t>(y_val.size());
  summary.rmse = rmse(pred, y_val);
  std::vector<double> residuals(static_cast<std::size_t>(y_val.size()));
  for (Eigen::Index i = 0; i < y_val.size(); ++i) residuals[i] = y_val(i) - pred(i);
  std::sort(residuals.begin(), residuals.end());
  summary.residual_interval = {quantile_sorted(residuals, 0.05),
                               quantile_sorted(residuals, 0.95)};
  head.validation = summary;
  return summary.rmse;
}

std::vector<double> default_lambda_grid() {
  return {1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2};
}

std::pair<LinearHead, FitReport> fit_ridge_select(const Eigen::MatrixXd& X_train,
                                                  const Eigen::VectorXd& y_train,
                                                  const Eigen::MatrixXd& X_val,
                                                  const Eigen::VectorXd& y_val,
                                                  std::span<const double> grid) {
  if (grid.empty()) fail(ErrorCode::invalid_argument, "lambda grid is empty");
  std::optional<std::pair<LinearHead, FitReport>> best;
  for (double lambda : grid) {
    auto fitted = fit_ridge(X_train, y_train, lambda);
    fitted.second.validation_rmse = rmse(predict(fitted.first, X_val), y_val);
    if (!best || *fitted.second.validation_rmse < *best->second.validation_rmse) {
      best = std::move(fitted);
    }
  }
  return std::move(*best);
}

namespace {

json vec_to_json(const Eigen::VectorXd& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

Eigen::VectorXd vec_from_json(const json& j, const char* field) {
  if (!j.is_array()) fail(ErrorCode::parse, std::string("head file: '") + field + "' must be an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) {
      fail(ErrorCode::parse, std::string("head file: '") + field + "' holds a non-number");
    }
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

}  // namespace

std::string head_to_json(const LinearHead& head) {
  json j = {
      {"version", 1},
      {"encoder_id", head.encoder_id},
      {"trained_modality", std::string(embedding::to_string(head.trained_modality))},
      {"metric", head.metric},
      {"dim", head.dim()},
      {"weights", vec_to_json(head.weights)},
      {"bias", head.bias},
      {"feature_means", vec_to_json(head.feature_means)},
      {"feature_stds", vec_to_json(head.feature_stds)},
      {"lambda", head.lambda},
  };
  if (head.validation) {
    j["validation"] = {
        {"n", head.validation->n},
        {"rmse", head.validation->rmse},
        {"residual_interval", head.validation->residual_interval},
    };
  }
  return j.dump(2) + "\n";
}

LinearHead head_from_json(std::string_view text) {
  LinearHead head;
  try {
    const json j = json::parse(text);
    if (j.at("version").get<int>() != 1) {
      fail(ErrorCode::parse, "head file: unsupported version");
    }
    head.encoder_id = j.at("encoder_id").get<std::string>();
    head.trained_modality = embedding::parse_modality(j.at("trained_modality").get<std::string>());
    head.metric = j.at("metric").get<std::string>();
    const auto dim = j.at("dim").get<Eigen::Index>();
    head.weights = vec_from_json(j.at("weights"), "weights");
    head.bias = j.at("bias").get<double>();
    head.feature_means = vec_from_json(j.at("feature_means"), "feature_means");
    head.feature_stds = vec_from_json(j.at("feature_stds"), "feature_stds");
    head.lambda = j.at("lambda").get<double>();
    if (dim <= 0 || head.weights.size() != dim || head.feature_means.size() != dim ||
        head.feature_stds.size() != dim) {
      fail(ErrorCode::parse, "head file: vector lengths do not match dim");
    }
    if ((head.feature_stds.array() <= 0.0).any() || !head.weights.allFinite() ||
        !head.feature_means.allFinite() || !head.feature_stds.allFinite() ||
        !std::isfinite(head.bias) || !(head.lambda >= 0.0)) {
      fail(ErrorCode::parse, "head file: invalid numeric content");
    }
    if (auto v = j.find("validation"); v != j.end()) {
      ValidationSummary s;
      s.n = v->at("n").get<std::size_t>();
      s.rmse = v->at("rmse").get<double>();
      s.residual_interval = v->at("residual_interval").get<std::array<double, 2>>();
      head.validation = s;
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, std::string("head file: ") + e.what());
  }
  return head;
}

void save_head(const LinearHead& head, const std::filesystem::path& path) {
  write_file_atomic(path, head_to_json(head));
}

LinearHead load_head(const std::filesystem::path& path) {
  try {
    return head_from_json(read_file(path));
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

}  // namespace ppp::probe
