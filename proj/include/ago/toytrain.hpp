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
// Desk-scale training: a learnable per-voxel embedding table plus the
// modality adapter, fit by plain gradient descent against synthetic
// pseudo-labels and per-voxel image embeddings. Also the deterministic
// synthetic scene generator feeding the pipeline end to end.

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ago/geometry.hpp"
#include "ago/grid.hpp"
#include "ago/grounding.hpp"
#include "ago/io.hpp"
#include "ago/label_space.hpp"
#include "ago/pseudolabel.hpp"
#include "ago/types.hpp"

namespace ago {

enum class Paradigm {
  kAlignOnly,                 // cosine alignment straight on the voxel table
  kGroundingOnly,             // grounding + occupancy losses only
  kGroundingPlusAlignShared,  // both objectives on the shared table
  kAdaptive,                  // grounding on the table, alignment behind the adapter
};

struct TrainConfig {
  int steps = 100;
  double lr = 0.5;
  std::uint64_t seed = 0;
  Paradigm paradigm = Paradigm::kAdaptive;
  int noise_per_step = 10;
  LogitMode mode = LogitMode::kTokenMean;
  LossWeights weights;
  bool halve_lr_on_plateau = false;
  int plateau_window = 25;

  void validate() const;
};

struct ToyModel {
  LabelSpace label_space;
  MatRMd voxel_table;   // learnable, one row per voxel
  AdapterWeights adapter;  // learnable
  MatRMd text_emb;      // fixed, one row per subclass phrase
  MatRMd noise_pool;    // fixed, sampled per step
  MatRMd free_emb;      // fixed, 1 x C
};

struct ToyData {
  SemanticVoxelGrid pseudo_labels;
  MatRMd image_emb;                  // per voxel, alignment targets
  std::vector<std::uint8_t> visible;
};

struct TraceRow {
  int step = 0;
  double l_ce = 0.0;
  double l_lovasz = 0.0;
  double l_occ = 0.0;
  double l_align = 0.0;
  double train_miou = 0.0;
};

struct TrainResult {
  ToyModel model;
  std::vector<TraceRow> trace;
};

/// Gradient-descent fit; deterministic for a fixed seed. Throws
/// DivergenceError when the loss turns non-finite.
TrainResult train(ToyModel model, const ToyData& data, const TrainConfig& cfg);

/// Post-step predictions (text + free categories, no noise) scored against
/// the pseudo-labels; mean IoU over the semantic classes.
double training_miou(const ToyModel& model, const ToyData& data, LogitMode mode);

/// Fixed text/noise/free embeddings from phrase and word lists, plus a
/// small seeded voxel table and adapter.
ToyModel make_toy_model(const LabelSpace& space, const GridSpec& grid, int emb_dim,
                        const std::vector<std::string>& noise_words, std::uint64_t seed,
                        int adapter_hidden);

/// Hand-built linearly separable 4x4x2 fixture (3 classes + free + one
/// ignore voxel) with matching image embeddings.
std::pair<ToyModel, ToyData> make_separable_fixture();

void write_trace_csv(const std::vector<TraceRow>& trace, const std::string& path);

std::vector<std::string> load_word_list(const std::string& path);

struct SceneConfig {
  std::uint64_t seed = 1;
  GridSpec grid;
  int n_boxes = 4;
  int n_cameras = 2;
  int n_rays = 5000;  // total across sweeps
  int n_sweeps = 1;
  int image_width = 96;
  int image_height = 72;
  int emb_dim = 16;
  double emb_noise = 0.05;

  void validate() const;
};

struct SceneData {
  SemanticVoxelGrid gt;
  std::vector<LidarSweep> sweeps;
  CameraRig rig;
  std::vector<MaskSet> masks;                        // per sweep
  std::vector<std::vector<EmbeddingMap>> embeddings; // per sweep, per camera
  LabelSpace label_space;
  MatRMd class_prototypes;  // n_cls x emb_dim, also the rendered embeddings
};

/// Procedural scene: a solid ground slab plus floating axis-aligned boxes,
/// LiDAR rays shot through camera pixel centers, masks and per-pixel
/// embeddings rendered from the same geometry. Deterministic per seed.
SceneData make_synthetic_scene(const SceneConfig& cfg, const LabelSpace& space);

}  // namespace ago
