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
#include <cstddef>
#include <vector>

namespace ppp::stats {

/// Principal axes of a centered data matrix.
struct PcaModel {
  Eigen::VectorXd mean;              // d
  Eigen::MatrixXd components;        // k x d, orthonormal rows
  Eigen::VectorXd explained_variance;  // k, non-increasing

  Eigen::Index k() const { return components.rows(); }
  /// Scores of X (n x d) on each component: n x k.
  Eigen::MatrixXd transform(const Eigen::MatrixXd& X) const;
};

/// PCA through the SVD of the centered matrix (no covariance matrix is
/// formed). explained_variance = sigma^2 / (n - 1). Each component is signed
/// so its largest-magnitude entry is positive.
PcaModel pca_fit(const Eigen::MatrixXd& X, Eigen::Index k);

struct SeparationReport {
  double pc1_auc = 0.5;  // oriented so that >= 0.5
  double pc1_threshold_accuracy = 0.5;
  std::vector<double> per_component_auc;
  std::vector<double> explained_variance;
  std::size_t n_prompts = 0;
  std::size_t n_images = 0;
};

/// Fits PCA on the stacked prompt and image embeddings and measures how well
/// each component score separates the two modalities.
SeparationReport modality_separation(const Eigen::MatrixXd& prompt_emb,
                                     const Eigen::MatrixXd& image_emb,
                                     Eigen::Index max_components = 10);

}  // namespace ppp::stats
