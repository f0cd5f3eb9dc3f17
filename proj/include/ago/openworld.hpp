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
// Per-voxel probabilities, entropies, and the identifier that picks between
// the grounding stream and the adapted stream at inference time.

#pragma once

#include <cstdint>
#include <vector>

#include "ago/grounding.hpp"
#include "ago/label_space.hpp"
#include "ago/types.hpp"

namespace ago {

enum class Criterion {
  kMinEntropy,     // keep the stream with lower entropy, ties favor grounding
  kMaxConfidence,  // keep the stream with the higher peak probability
  kGroundingOnly,  // closed-world behavior, adapted stream ignored
};

struct SelectorConfig {
  Criterion criterion = Criterion::kMinEntropy;
  LogitMode mode = LogitMode::kSubclassMax;
};

/// Numerically stable row softmax (max subtracted before exponentiation).
MatRMd softmax_probs(const MatRMd& scores);

/// Shannon entropy in nats with 0 * ln 0 := 0.
double entropy(const Eigen::RowVectorXd& p);

Eigen::VectorXd row_entropies(const MatRMd& probs);

struct SelectResult {
  MatRMd probs;  // per voxel, the chosen distribution (copied, not blended)
  std::vector<std::uint8_t> chose_grounding;
};

SelectResult select(const MatRMd& grounding, const MatRMd& adapted, const SelectorConfig& cfg);

struct InferenceResult {
  std::vector<std::uint16_t> labels;  // class id or free_id (= n query classes)
  std::vector<std::uint8_t> chose_grounding;
  MatRMd probs;            // selected distribution
  MatRMd probs_grounding;  // P
  MatRMd probs_adapted;    // P-tilde
};

/// Scores both embedding streams against [query text; free] (noise prompts
/// are a training device and stay out of inference), softmaxes, selects per
/// the criterion, and argmaxes. Ties pick the lowest column, so a class
/// beats free on exact equality.
InferenceResult infer_occupancy(const MatRMd& voxel_emb, const MatRMd& adapted_emb,
                                const LabelSpace& queries, const MatRMd& query_text,
                                const MatRMd& free_emb, const SelectorConfig& cfg);

struct ClassEntropyRow {
  std::uint16_t label = 0;
  std::uint64_t count = 0;
  double mean_entropy_grounding = 0.0;
  double mean_entropy_adapted = 0.0;
};

/// Per predicted label, mean entropies of both streams. Labels with no
/// voxels are omitted.
std::vector<ClassEntropyRow> class_entropy_report(const MatRMd& grounding, const MatRMd& adapted,
                                                  const std::vector<std::uint16_t>& labels);

}  // namespace ago
