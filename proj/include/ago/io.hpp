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
// Binary container formats, all little-endian:
//
//   AGOV  voxel grid   magic "AGOV", version u32=1, dims 3xu32,
//                      origin 3xf32, voxel_size 3xf32, n_cls u32,
//                      then H*W*D u16 labels (x outermost, z fastest).
//   AGOP  lidar sweep  magic "AGOP", version u32=1, timestamp u64,
//                      sensor_to_ego 12xf64 (row-major 3x4),
//                      ego_to_world 12xf64, point count u32, Nx3 f32.
//   AGOE  embeddings   magic "AGOE", version u32=1, rows u32, cols u32,
//                      channels u32, f32 data row-major. Plain matrices
//                      store rows=N, cols=1, channels=C.
//   AGOW  adapter      magic "AGOW", version u32=1, section count u32,
//                      per section: name length u32, name bytes,
//                      embedded AGOE block.
//
// Masks are 16-bit binary PGM (P5, maxval 65535, big-endian samples).

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "ago/geometry.hpp"
#include "ago/grid.hpp"
#include "ago/grounding.hpp"
#include "ago/label_space.hpp"
#include "ago/types.hpp"

namespace ago {

struct EmbeddingMap {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::uint32_t channels = 0;
  std::vector<float> data;  // rows*cols*channels, row-major

  const float* at(std::uint32_t r, std::uint32_t c) const {
    return data.data() + (static_cast<std::size_t>(r) * cols + c) * channels;
  }
};

void write_grid(const SemanticVoxelGrid& grid, const std::string& path);
SemanticVoxelGrid read_grid(const std::string& path);

void write_sweep(const LidarSweep& sweep, const std::string& path);
LidarSweep read_sweep(const std::string& path);

void write_embedding(const EmbeddingMap& map, const std::string& path);
EmbeddingMap read_embedding(const std::string& path);

EmbeddingMap embedding_from_matrix(const MatRMf& m);
EmbeddingMap embedding_from_matrix(const MatRMd& m);
/// rows*cols become matrix rows, channels become columns.
MatRMd embedding_to_matrix(const EmbeddingMap& map);

void write_mask_pgm(const MaskImage& mask, const std::string& path);
MaskImage read_mask_pgm(const std::string& path);

void write_adapter(const AdapterWeights& weights, const std::string& path);
AdapterWeights read_adapter(const std::string& path);

nlohmann::json rig_to_json(const CameraRig& rig);
CameraRig rig_from_json(const nlohmann::json& j);

nlohmann::json label_space_to_json(const LabelSpace& space);
LabelSpace label_space_from_json(const nlohmann::json& j);

nlohmann::json load_json(const std::string& path);
void save_json(const nlohmann::json& j, const std::string& path);

/// Grid spec fields from a JSON object {origin, voxel_size, dims}.
GridSpec grid_spec_from_json(const nlohmann::json& j);
nlohmann::json grid_spec_to_json(const GridSpec& spec);

}  // namespace ago
