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
//
// Score and loss mathematics over voxel/category embedding matrices. Every
// loss returns its analytical gradient; all math runs in f64. Score column
// layout is always [semantic classes | noise prompts | free].

#pragma once

#include <cstdint>
#include <vector>

#include "ago/label_space.hpp"
#include "ago/types.hpp"

namespace ago {

/// Token-row grouping over the concatenated [TEXT; NOISE; FREE] category
/// block. Each semantic class owns one row set per subclass prompt phrase;
/// every noise prompt and the free embedding form singleton groups.
struct TokenGroups {
  std::vector<std::vector<std::vector<int>>> class_groups;  // [class][phrase][rows]
  std::vector<int> noise_rows;
  int free_row = -1;

  int n_classes() const { return static_cast<int>(class_groups.size()); }
  int n_noise() const { return static_cast<int>(noise_rows.size()); }
  int sem_width() const { return n_classes() + n_noise() + 1; }
  int total_rows() const;

  /// Groups must be disjoint, non-empty, and cover rows [0, n_rows).
  void validate(int n_rows) const;
};

/// Standard layout: one row per subclass phrase in label-space order, then
/// n_noise singleton rows, then the free row last.
TokenGroups make_token_groups(const LabelSpace& space, int n_noise);

enum class LogitMode {
  kTokenMean,    // per class, mean over all of its token rows
  kSubclassMax,  // per phrase group mean, then max across the class's groups
};

/// Plain dot products, no normalization: S(v, t) = <voxel_v, cat_t>.
MatRMd similarity_scores(const MatRMd& voxels, const MatRMd& categories);

/// Collapses token scores to per-class semantic logits; noise and free
/// columns pass through unchanged. Output width = n_classes + n_noise + 1.
MatRMd semantic_logits(const MatRMd& scores, const TokenGroups& groups, LogitMode mode);

/// Routes a gradient w.r.t. semantic logits back onto token scores
/// (mean spreads, max follows the first-winning group).
MatRMd semantic_logits_backward(const MatRMd& scores, const TokenGroups& groups, LogitMode mode,
                                const MatRMd& grad_sem);

/// Two columns: max over the semantic class columns (noise and free
/// excluded) and the free column.
MatRMd binary_scores(const MatRMd& sem, int n_cls, int n_noise);

struct LossGrad {
  double loss = 0.0;
  MatRMd grad;  // w.r.t. the score matrix passed in
};

/// Targets per row: class id < n_cls, n_cls meaning free, or kIgnoreId to
/// skip the row. Noise columns join the softmax but are never targets.
LossGrad ce_loss(const MatRMd& sem, const std::vector<std::uint16_t>& targets, int n_cls,
                 int n_noise);

/// Lovász-softmax surrogate of the Jaccard loss, averaged over classes
/// present in the targets. The sort permutation is treated as constant for
/// the (sub)gradient.
LossGrad lovasz_softmax_loss(const MatRMd& sem, const std::vector<std::uint16_t>& targets,
                             int n_cls, int n_noise);

/// Binary occupied/free cross-entropy on binary_scores; the max routes its
/// gradient through the argmax column (first index wins ties).
LossGrad occupancy_loss(const MatRMd& sem, const std::vector<std::uint16_t>& targets, int n_cls,
                        int n_noise);

/// Two-layer MLP with softplus between the layers.
struct AdapterWeights {
  MatRMd w1;            // C x C_h
  Eigen::VectorXd b1;   // C_h
  MatRMd w2;            // C_h x C
  Eigen::VectorXd b2;   // C

  static AdapterWeights zeros(int dim, int hidden);
  static AdapterWeights seeded(int dim, int hidden, std::uint64_t seed, double scale = 0.1);
  void validate() const;
};

double softplus(double t);

MatRMd adapter_forward(const AdapterWeights& w, const MatRMd& x);

struct AdapterGrads {
  MatRMd x;
  MatRMd w1;
  Eigen::VectorXd b1;
  MatRMd w2;
  Eigen::VectorXd b2;
};

AdapterGrads adapter_backward(const AdapterWeights& w, const MatRMd& x, const MatRMd& grad_out);

struct AlignmentResult {
  double loss = 0.0;
  MatRMd grad;                 // w.r.t. the adapted embeddings
  std::int64_t used = 0;       // visible rows entering the mean
  std::int64_t excluded = 0;   // visible rows dropped for zero norm
};

/// Mean over visible voxels of 1 - cos(adapted_v, image_v). Zero-norm rows
/// among the visible set are excluded and counted.
AlignmentResult alignment_loss(const MatRMd& adapted, const MatRMd& image,
                               const std::vector<std::uint8_t>& visible);

struct LossBreakdown {
  double ce = 0.0;
  double lovasz = 0.0;
  double occ = 0.0;
  double align = 0.0;
};

struct LossWeights {
  double grounding = 1.0;
  double occ = 1.0;
  double align = 1.0;
};

/// grounding * (ce + lovasz) + occ + align, unit weights by default.
double total_loss(const LossBreakdown& parts, const LossWeights& weights = {});

}  // namespace ago
