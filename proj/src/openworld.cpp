// Copyright 2026 The Occgrounder Authors
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

#include "ago/openworld.hpp"

#include <cmath>
#include <map>
#include <string>

#include "ago/errors.hpp"

namespace ago {

MatRMd softmax_probs(const MatRMd& scores) {
  // Scalar std::exp so saturated logit gaps underflow to an exact 0.
  MatRMd p(scores.rows(), scores.cols());
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const double m = scores.row(i).maxCoeff();
    double denom = 0.0;
    for (Eigen::Index j = 0; j < scores.cols(); ++j) {
      p(i, j) = std::exp(scores(i, j) - m);
      denom += p(i, j);
    }
    p.row(i) /= denom;
  }
  return p;
}

double entropy(const Eigen::RowVectorXd& p) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) h -= p[i] * std::log(p[i]);
  }
  return h;
}

Eigen::VectorXd row_entropies(const MatRMd& probs) {
  Eigen::VectorXd h(probs.rows());
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    h[i] = entropy(probs.row(i));
  }
  return h;
}

SelectResult select(const MatRMd& grounding, const MatRMd& adapted, const SelectorConfig& cfg) {
  if (cfg.criterion != Criterion::kGroundingOnly &&
      (grounding.rows() != adapted.rows() || grounding.cols() != adapted.cols())) {
    throw ConfigError("probability volumes differ in shape");
  }
  SelectResult out;
  out.probs = grounding;
  out.chose_grounding.assign(static_cast<std::size_t>(grounding.rows()), 1);
  if (cfg.criterion == Criterion::kGroundingOnly) {
    return out;
  }
  for (Eigen::Index i = 0; i < grounding.rows(); ++i) {
    bool keep_grounding = true;
    if (cfg.criterion == Criterion::kMinEntropy) {
      keep_grounding = entropy(grounding.row(i)) <= entropy(adapted.row(i));
    } else {
      keep_grounding = grounding.row(i).maxCoeff() >= adapted.row(i).maxCoeff();
    }
    if (!keep_grounding) {
      out.probs.row(i) = adapted.row(i);
      out.chose_grounding[static_cast<std::size_t>(i)] = 0;
    }
  }
  return out;
}

InferenceResult infer_occupancy(const MatRMd& voxel_emb, const MatRMd& adapted_emb,
                                const LabelSpace& queries, const MatRMd& query_text,
                                const MatRMd& free_emb, const SelectorConfig& cfg) {
  queries.validate();
  if (query_text.rows() != queries.total_prompts()) {
    throw ConfigError("query text embedding rows " + std::to_string(query_text.rows()) +
                      " do not match the declared prompt count " +
                      std::to_string(queries.total_prompts()));
  }
  if (free_emb.rows() != 1) {
    throw ConfigError("free embedding must be a single row");
  }
  if (voxel_emb.rows() != adapted_emb.rows()) {
    throw ConfigError("voxel and adapted embeddings differ in row count");
  }

  MatRMd categories(query_text.rows() + 1, query_text.cols());
  categories.topRows(query_text.rows()) = query_text;
  categories.bottomRows(1) = free_emb;
  const TokenGroups groups = make_token_groups(queries, 0);

  const MatRMd sem_g =
      semantic_logits(similarity_scores(voxel_emb, categories), groups, cfg.mode);
  const MatRMd sem_a =
      semantic_logits(similarity_scores(adapted_emb, categories), groups, cfg.mode);

  InferenceResult out;
  out.probs_grounding = softmax_probs(sem_g);
  out.probs_adapted = softmax_probs(sem_a);
  SelectResult sel = select(out.probs_grounding, out.probs_adapted, cfg);
  out.probs = std::move(sel.probs);
  out.chose_grounding = std::move(sel.chose_grounding);

  out.labels.resize(static_cast<std::size_t>(out.probs.rows()));
  for (Eigen::Index i = 0; i < out.probs.rows(); ++i) {
    Eigen::Index best = 0;
    out.probs.row(i).maxCoeff(&best);  // Eigen returns the first maximum
    out.labels[static_cast<std::size_t>(i)] = static_cast<std::uint16_t>(best);
  }
  return out;
}

std::vector<ClassEntropyRow> class_entropy_report(const MatRMd& grounding, const MatRMd& adapted,
                                                  const std::vector<std::uint16_t>& labels) {
  if (grounding.rows() != adapted.rows() ||
      static_cast<Eigen::Index>(labels.size()) != grounding.rows()) {
    throw ConfigError("entropy report inputs differ in row count");
  }
  std::map<std::uint16_t, ClassEntropyRow> acc;
  for (Eigen::Index i = 0; i < grounding.rows(); ++i) {
    auto& row = acc[labels[static_cast<std::size_t>(i)]];
    row.label = labels[static_cast<std::size_t>(i)];
    row.count += 1;
    row.mean_entropy_grounding += entropy(grounding.row(i));
    row.mean_entropy_adapted += entropy(adapted.row(i));
  }
  std::vector<ClassEntropyRow> out;
  for (auto& [label, row] : acc) {
    row.mean_entropy_grounding /= static_cast<double>(row.count);
    row.mean_entropy_adapted /= static_cast<double>(row.count);
    out.push_back(row);
  }
  return out;
}

}  // namespace ago
