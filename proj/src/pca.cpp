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

#include "ppp/pca.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <numeric>

#include "ppp/error.hpp"
#include "ppp/stats.hpp"

namespace ppp::stats {

Eigen::MatrixXd PcaModel::transform(const Eigen::MatrixXd& X) const {
  if (X.cols() != mean.size()) {
    fail(ErrorCode::invalid_argument, "pca transform: dim mismatch");
  }
  return (X.rowwise() - mean.transpose()) * components.transpose();
}

PcaModel pca_fit(const Eigen::MatrixXd& X, Eigen::Index k) {
  const Eigen::Index n = X.rows();
  const Eigen::Index d = X.cols();
  if (n < 2) fail(ErrorCode::invalid_argument, "pca_fit needs at least 2 rows");
  if (k < 1 || k > std::min(n - 1, d)) {
    fail(ErrorCode::invalid_argument, "pca_fit: k = " + std::to_string(k) +
                                          " outside [1, " + std::to_string(std::min(n - 1, d)) +
                                          "]");
  }
  if (!X.allFinite()) fail(ErrorCode::invalid_argument, "pca_fit: non-finite input");

  PcaModel model;
  model.mean = X.colwise().mean().transpose();
  const Eigen::MatrixXd centered = X.rowwise() - model.mean.transpose();
  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();

  model.components = svd.matrixV().leftCols(k).transpose();
  model.explained_variance = s.head(k).array().square() / static_cast<double>(n - 1);
  for (Eigen::Index c = 0; c < k; ++c) {
    Eigen::Index arg = 0;
    model.components.row(c).cwiseAbs().maxCoeff(&arg);
    if (model.components(c, arg) < 0.0) model.components.row(c) *= -1.0;
  }
  return model;
}

SeparationReport modality_separation(const Eigen::MatrixXd& prompt_emb,
                                     const Eigen::MatrixXd& image_emb,
                                     Eigen::Index max_components) {
  if (prompt_emb.cols() != image_emb.cols()) {
    fail(ErrorCode::invalid_argument, "modality_separation: prompt dim " +
                                          std::to_string(prompt_emb.cols()) + " vs image dim " +
                                          std::to_string(image_emb.cols()));
  }
  if (prompt_emb.rows() < 2 || image_emb.rows() < 2) {
    fail(ErrorCode::invalid_argument, "modality_separation needs at least 2 rows per modality");
  }
  const Eigen::Index np = prompt_emb.rows();
  const Eigen::Index ni = image_emb.rows();
  Eigen::MatrixXd stacked(np + ni, prompt_emb.cols());
  stacked << prompt_emb, image_emb;

  const Eigen::Index k =
      std::min({max_components, stacked.rows() - 1, stacked.cols()});
  const PcaModel model = pca_fit(stacked, k);
  const Eigen::MatrixXd scores = model.transform(stacked);

  SeparationReport report;
  report.n_prompts = static_cast<std::size_t>(np);
  report.n_images = static_cast<std::size_t>(ni);
  report.explained_variance.assign(model.explained_variance.data(),
                                   model.explained_variance.data() + k);
  std::vector<double> image_scores(static_cast<std::size_t>(ni));
  std::vector<double> prompt_scores(static_cast<std::size_t>(np));
  for (Eigen::Index c = 0; c < k; ++c) {
    for (Eigen::Index r = 0; r < np; ++r) prompt_scores[r] = scores(r, c);
    for (Eigen::Index r = 0; r < ni; ++r) image_scores[r] = scores(np + r, c);
    const double a = auc(image_scores, prompt_scores);
    report.per_component_auc.push_back(std::max(a, 1.0 - a));
  }
  report.pc1_auc = report.per_component_auc.front();

  // Best single threshold on component 1, either orientation.
  std::vector<double> col(static_cast<std::size_t>(stacked.rows()));
  for (Eigen::Index r = 0; r < stacked.rows(); ++r) col[r] = scores(r, 0);
  std::vector<std::size_t> order(col.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return col[a] < col[b]; });
  const double total = static_cast<double>(col.size());
  // Threshold below everything: all predicted image.
  double images_below = 0.0, prompts_below = 0.0;
  double best = std::max(static_cast<double>(ni), static_cast<double>(np)) / total;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (static_cast<Eigen::Index>(order[i]) >= np) {
      images_below += 1.0;
    } else {
      prompts_below += 1.0;
    }
    if (i + 1 < order.size() && col[order[i + 1]] == col[order[i]]) continue;
    // below -> prompt, above -> image
    const double acc = (prompts_below + (static_cast<double>(ni) - images_below)) / total;
    best = std::max({best, acc, 1.0 - acc});
  }
  report.pc1_threshold_accuracy = best;
  return report;
}

}  // namespace ppp::stats
