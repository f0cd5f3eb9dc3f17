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
// IoU metrics and the three-stage open-world evaluation protocol
// (pretraining on a reduced label space, zero-shot supercategory split,
// few-shot sampling).

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ago/grid.hpp"
#include "ago/label_space.hpp"

namespace ago {

struct ClassMetric {
  std::uint16_t id = 0;
  std::string name;
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  bool scored = false;  // absent from both pred and gt -> excluded from mIoU
  double iou = 0.0;

  bool known = true;  // filled by stage_eval
};

struct MetricReport {
  std::vector<ClassMetric> per_class;
  double miou = 0.0;
  std::optional<double> miou_star;  // mIoU excluding the star-listed classes
  std::optional<double> known_miou;
  std::optional<double> unknown_miou;
  std::uint64_t evaluated_voxels = 0;
  std::uint64_t ignored_voxels = 0;
};

/// Per-class IoU = TP / (TP + FP + FN) over voxels where gt != IGNORE and
/// the optional mask is set. Classes with zero gt and zero pred voxels are
/// reported unscored and excluded from mIoU.
MetricReport iou_report(const SemanticVoxelGrid& pred, const SemanticVoxelGrid& gt,
                        const std::vector<std::uint8_t>* eval_mask,
                        const std::vector<std::uint16_t>& class_ids,
                        const LabelSpace* names = nullptr,
                        const std::vector<std::uint16_t>& star_exclude = {});

/// Substitutes semantic labels through `map`; free/ignore pass through to
/// the target space sentinels. Unmapped labels pass through unchanged or
/// turn into IGNORE per `unmapped_to_ignore`.
SemanticVoxelGrid remap(const SemanticVoxelGrid& grid,
                        const std::unordered_map<std::uint16_t, std::uint16_t>& map,
                        std::uint32_t target_n_cls, bool unmapped_to_ignore = false);

/// Fine-id -> coarse-id map: supercategory members of `fine` collapse onto
/// the coarse class of the same name; ungrouped fine classes resolve by
/// name into `coarse` when present, otherwise stay unmapped.
std::unordered_map<std::uint16_t, std::uint16_t> supercategory_id_map(const LabelSpace& fine,
                                                                      const LabelSpace& coarse);

struct FewshotResult {
  std::vector<std::size_t> selected;               // ascending sample indices
  std::map<std::uint16_t, std::size_t> counts;     // per-class cover achieved
};

/// Greedy cover: classes in ascending dataset frequency, seeded-random
/// samples containing each class until it appears in >= k selected samples.
/// Throws FeasibilityError listing every class rarer than k.
FewshotResult fewshot_sample(const std::vector<std::vector<std::uint16_t>>& inventory,
                             std::size_t k, std::uint64_t seed);

enum class Stage { kPretrain, kZeroShot, kFewShot };

struct StagePlan {
  Stage stage = Stage::kPretrain;
  std::vector<std::string> known;
  std::vector<std::string> unknown;
  std::map<std::string, std::vector<std::string>> supercategories;
  int k = 1;
  int repeats = 1;

  void validate() const;
};

/// Scores pred against gt (both in `space`) over the plan's class sets.
/// Zero-shot and few-shot stages dissolve supercategory names into their
/// fine constituents on the unknown side before scoring.
MetricReport stage_eval(const StagePlan& plan, const SemanticVoxelGrid& pred,
                        const SemanticVoxelGrid& gt, const LabelSpace& space);

nlohmann::json report_to_json(const MetricReport& report);
std::string report_to_table(const MetricReport& report);
StagePlan stage_plan_from_json(const nlohmann::json& j);
nlohmann::json stage_plan_to_json(const StagePlan& plan);

}  // namespace ago
