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
// Test-only reference computations, kept deliberately independent of the
// library's implementation paths (plain loops, direct definitions).

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "ago/grid.hpp"
#include "ago/types.hpp"

namespace ago::testing {

struct RayOracleResult {
  std::vector<Vec3i> voxels;
  bool grazing = false;  // the sampling could not resolve a single-step order
};

/// Dense supersampling of the segment at step min(voxel_size)/100;
/// consecutive duplicates collapsed. Flags rays whose samples ever jump by
/// more than one face crossing.
RayOracleResult supersample_ray(const GridSpec& spec, const Vec3d& a, const Vec3d& b);

/// Triple-loop matrix multiply: (n x c) times (m x c)^T.
MatRMd naive_matmul_bt(const MatRMd& a, const MatRMd& b);

/// Lovász extension of the Jaccard loss evaluated term by term from its
/// definition: sorted errors weighted by successive prefix Jaccard losses,
/// prefix sets counted explicitly. Softmax evaluated with plain exp/sum.
/// Targets use the same convention as the library (n_cls = free column,
/// kIgnoreId skipped); the loss averages over classes present.
double lovasz_direct(const MatRMd& sem, const std::vector<std::uint16_t>& targets, int n_cls,
                     int n_noise);

/// Norm-relative error between an analytical gradient and central finite
/// differences of `f` at `x0` (h in the doubles domain).
double fd_relative_error(const std::function<double(const MatRMd&)>& f, const MatRMd& x0,
                         const MatRMd& analytic, double h = 1e-6);

/// End-to-end reimplementation of inference with explicit loops: grouped
/// dot-product scores (subclass max of per-group token means), plain
/// softmax, entropy/confidence selection, first-maximum argmax. `groups`
/// lists prompt-row sets per query class; the free embedding is scored as
/// one extra row.
std::vector<std::uint16_t> brute_force_infer(
    const MatRMd& voxel_emb, const MatRMd& adapted_emb, const MatRMd& text_emb,
    const std::vector<std::vector<std::vector<int>>>& groups, const MatRMd& free_emb,
    bool max_confidence);

}  // namespace ago::testing
