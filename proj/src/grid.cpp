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

#include "ago/grid.hpp"

#include <cmath>
#include <string>

#include "ago/errors.hpp"

namespace ago {

void GridSpec::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (!(voxel_size[a] > 0.0f)) {
      throw ConfigError("grid voxel_size must be positive on every axis");
    }
    if (dims[a] < 1) {
      throw ConfigError("grid dims must be >= 1 on every axis");
    }
  }
}

std::optional<Vec3i> voxel_index(const GridSpec& spec, const Vec3d& point) {
  Vec3i cell;
  for (int a = 0; a < 3; ++a) {
    const double rel = (point[a] - static_cast<double>(spec.origin[a])) /
                       static_cast<double>(spec.voxel_size[a]);
    const double f = std::floor(rel);
    if (f < 0.0 || f >= static_cast<double>(spec.dims[a])) {
      return std::nullopt;
    }
    cell[a] = static_cast<int>(f);
  }
  return cell;
}

Vec3d voxel_center(const GridSpec& spec, const Vec3i& cell) {
  Vec3d c;
  for (int a = 0; a < 3; ++a) {
    c[a] = static_cast<double>(spec.origin[a]) +
           (static_cast<double>(cell[a]) + 0.5) * static_cast<double>(spec.voxel_size[a]);
  }
  return c;
}

SemanticVoxelGrid::SemanticVoxelGrid(const GridSpec& s, std::uint32_t classes, std::uint16_t fill)
    : spec(s), n_cls(classes), labels(s.n_voxels(), fill) {
  spec.validate();
}

void SemanticVoxelGrid::validate() const {
  spec.validate();
  if (n_cls >= kIgnoreId) {
    throw ConfigError("n_cls must stay below the ignore sentinel 65535");
  }
  if (labels.size() != spec.n_voxels()) {
    throw ConfigError("label array size " + std::to_string(labels.size()) +
                      " does not match grid voxel count " + std::to_string(spec.n_voxels()));
  }
  const std::uint16_t free = free_id();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::uint16_t v = labels[i];
    if (v != kIgnoreId && v > free) {
      throw ConfigError("label " + std::to_string(v) + " at voxel " + std::to_string(i) +
                        " outside {0.." + std::to_string(free) + "} u {65535}");
    }
  }
}

}  // namespace ago
