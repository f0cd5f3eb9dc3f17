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

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "ago/types.hpp"

namespace ago {

/// Axis-aligned dense voxel grid layout. Cells are half-open boxes
/// [min, max) along every axis; a point exactly on the upper boundary of
/// the grid is outside.
struct GridSpec {
  Vec3f origin = Vec3f::Zero();      // minimum corner, meters
  Vec3f voxel_size = Vec3f::Ones();  // meters per cell along x/y/z
  Vec3i dims = Vec3i::Ones();        // cell counts (H, W, D)

  void validate() const;
  std::size_t n_voxels() const {
    return static_cast<std::size_t>(dims.x()) * dims.y() * dims.z();
  }
  bool operator==(const GridSpec&) const = default;
};

/// Cell containing `point`, or nullopt when any index falls outside
/// [0, dims). i = floor((p.x - origin.x) / voxel_size.x), likewise y/z.
std::optional<Vec3i> voxel_index(const GridSpec& spec, const Vec3d& point);

/// Metric center of cell (i, j, k). Inverse of voxel_index on cell centers.
Vec3d voxel_center(const GridSpec& spec, const Vec3i& cell);

/// Flattening order: x outermost, then y, then z (z varies fastest).
inline std::size_t flat_index(const GridSpec& spec, const Vec3i& cell) {
  return (static_cast<std::size_t>(cell.x()) * spec.dims.y() + cell.y()) * spec.dims.z() +
         cell.z();
}

/// Dense label volume. Valid labels are {0..n_cls-1}, free_id() = n_cls for
/// observed-empty space, and kIgnoreId for never-observed space.
struct SemanticVoxelGrid {
  GridSpec spec;
  std::uint32_t n_cls = 0;
  std::vector<std::uint16_t> labels;  // length spec.n_voxels(), x-major

  SemanticVoxelGrid() = default;
  SemanticVoxelGrid(const GridSpec& s, std::uint32_t classes, std::uint16_t fill);

  std::uint16_t free_id() const { return free_id_for(n_cls); }
  void validate() const;

  std::uint16_t at(const Vec3i& cell) const { return labels[flat_index(spec, cell)]; }
  std::uint16_t& at(const Vec3i& cell) { return labels[flat_index(spec, cell)]; }
};

}  // namespace ago
