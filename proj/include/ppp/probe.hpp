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

#include <Eigen/Dense>
#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ppp/embedding.hpp"

namespace ppp::probe {

using embedding::Modality;

inline constexpr double kDefaultLambda = 1e-3;

/// Held-out residual summary attached to a head after validation.
struct ValidationSummary {
  std::size_t n = 0;
  double rmse = 0.0;
  /// 5% and 95% quantiles of (target - prediction).
  std::array<double, 2> residual_interval{0.0, 0.0};
};

/// Trained linear performance predictor over standardized embeddings:
///   y = weights . ((x - feature_means) / feature_stds) + bias
struct LinearHead {
  std::string encoder_id;
  Modality trained_modality = Modality::text;
  std::string metric;
  Eigen::VectorXd weights;
  double bias = 0.0;
  Eigen::VectorXd feature_means;
  Eigen::VectorXd feature_stds;
  double lambda = kDefaultLambda;
  std::optional<ValidationSummary> validation;

  Eigen::Index dim() const { return weights.size(); }
};

struct FitReport {
  std::size_t n_train = 0;
  double train_rmse = 0.0;
  std::optional<double> validation_rmse;
  double lambda_used = 0.0;
};

/// Ridge fit on standardized columns with centered targets. Solved through a
/// singular value decomposition of the standardized design, so n < d and
/// lambda = 0 on rank-deficient data both yield the minimum-norm solution.
/// Constant columns get std 1 and a weight of exactly 0.
std::pair<LinearHead, FitReport> fit_ridge(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                           double lambda);

Eigen::VectorXd predict(const LinearHead& head, const Eigen::MatrixXd& X);

/// Predictions of a head applied to embeddings of another modality. The
/// arithmetic is that of predict(); the tags label the experiment.
struct TransferPrediction {
  Eigen::VectorXd values;
  Modality trained_modality;
  Modality applied_modality;
};

TransferPrediction transfer_apply(const LinearHead& head, const Eigen::MatrixXd& X_other,
                                  Modality applied_modality);

double rmse(const Eigen::VectorXd& predicted, const Eigen::VectorXd& target);

/// Computes residual statistics on held-out data, stores them on the head
/// and returns the RMSE.
double attach_validation(LinearHead& head, const Eigen::MatrixXd& X_val,
                         const Eigen::VectorXd& y_val);

/// Fits every lambda of `grid` on the training data and keeps the one with
/// the lowest validation RMSE (first wins on ties).
std::pair<LinearHead, FitReport> fit_ridge_select(const Eigen::MatrixXd& X_train,
                                                  const Eigen::VectorXd& y_train,
                                                  const Eigen::MatrixXd& X_val,
                                                  const Eigen::VectorXd& y_val,
                                                  std::span<const double> grid);

/// 1e-6, 1e-5, ..., 1e2.
std::vector<double> default_lambda_grid();

std::string head_to_json(const LinearHead& head);
LinearHead head_from_json(std::string_view text);
void save_head(const LinearHead& head, const std::filesystem::path& path);
LinearHead load_head(const std::filesystem::path& path);

}  // namespace ppp::probe
