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
// Dense 3D pseudo-labels from 2D semantic masks and LiDAR sweeps:
// multi-frame aggregation, free-space carving along rays, and per-voxel
// semantic voting. Also projects per-pixel image embeddings into visible
// voxels for the alignment objective.

#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "ago/geometry.hpp"
#include "ago/grid.hpp"
#include "ago/io.hpp"
#include "ago/types.hpp"

namespace ago {

/// One u16 class mask per camera; kIgnoreId marks unlabeled pixels.
struct MaskSet {
  std::vector<MaskImage> per_camera;
};

/// Accumulated evidence per voxel. Merging two vote grids (count addition,
/// boolean OR) commutes, so per-sweep partials can merge in any order.
struct VoteGrid {
  GridSpec spec;
  std::vector<std::vector<std::pair<std::uint16_t, std::uint32_t>>> counts;
  std::vector<std::uint8_t> hit;    // any LiDAR endpoint landed here
  std::vector<std::uint8_t> freed;  // any carving ray passed through

  explicit VoteGrid(const GridSpec& s);
  void add_vote(std::size_t flat, std::uint16_t cls);
  void merge(const VoteGrid& other);
};

struct PipelineConfig {
  int n_sweep = 1;
  int n_interval = 1;
  int reference = 0;  // key-frame index into the sweep list
  GridSpec grid;
  std::uint32_t n_cls = 0;

  void validate() const;
};

/// Per-point class id (kIgnoreId when unlabeled): majority vote over the
/// mask labels collected from every camera that sees the point, nearest
/// pixel, ignoring kIgnoreId pixels; ties take the lowest class id.
std::vector<std::uint16_t> label_points(const LidarSweep& sweep, const CameraRig& rig,
                                        const MaskSet& masks);

/// Adds labeled points to the per-voxel counts; every in-grid point marks
/// its voxel hit. Points must already live in the reference ego frame.
void accumulate(VoteGrid& vote, const PointsD& points_ref,
                const std::vector<std::uint16_t>& labels);

/// Marks freed along each sensor->endpoint ray, strictly before the
/// endpoint's voxel. Rays ending outside the grid free their whole clipped
/// traversal.
void carve_free(VoteGrid& vote, const Vec3d& sensor_origin_ref, const PointsD& endpoints);

/// Per voxel: argmax vote count (ties lowest id), else FREE when carved,
/// else IGNORE.
SemanticVoxelGrid finalize(const VoteGrid& vote, std::uint32_t n_cls);

/// Window of n_sweep indices at stride n_interval centered on the
/// reference. Throws when the window leaves [0, n_available).
std::vector<std::size_t> select_sweeps(const PipelineConfig& config, std::size_t n_available);

/// Full pipeline: label, warp to the reference sweep, accumulate, carve,
/// finalize. `masks` parallels `sweeps`; only selected entries are read.
SemanticVoxelGrid generate_pseudolabels(const PipelineConfig& config,
                                        const std::vector<LidarSweep>& sweeps,
                                        const CameraRig& rig, const std::vector<MaskSet>& masks,
                                        int threads = 1);

struct SweepEmbeddingInput {
  const LidarSweep* sweep = nullptr;
  const std::vector<EmbeddingMap>* maps = nullptr;  // one per camera
  const MaskSet* masks = nullptr;  // optional: restrict to labeled points
};

struct EmbeddingProjection {
  MatRMd voxel_embeddings;          // n_voxels x C, zero rows when invisible
  std::vector<std::uint8_t> visible;
};

/// Carries each point's 2D embedding (nearest pixel, optional integer
/// downscale) into its voxel; per-voxel mean over all (point, camera)
/// contributions. When masks are supplied only labeled points contribute,
/// which keeps the visible set inside the pseudo-labeled voxels.
EmbeddingProjection project_embeddings(const std::vector<SweepEmbeddingInput>& inputs,
                                       std::size_t reference_idx, const CameraRig& rig,
                                       const GridSpec& spec, int threads = 1);

}  // namespace ago
