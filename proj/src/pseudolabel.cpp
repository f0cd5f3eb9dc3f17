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

#include "ago/pseudolabel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "ago/errors.hpp"
#include "ago/parallel.hpp"

namespace ago {

namespace {

// Nearest pixel for an in-bounds continuous coordinate; rounding at the
// upper image edge clamps back inside.
long nearest_pixel(double x, long size) {
  const long p = std::lround(x);
  return std::min(std::max(p, 0L), size - 1);
}

void check_masks(const CameraRig& rig, const MaskSet& masks) {
  if (masks.per_camera.size() != rig.cameras.size()) {
    throw ConfigError("mask count " + std::to_string(masks.per_camera.size()) +
                      " does not match camera count " + std::to_string(rig.cameras.size()));
  }
  for (std::size_t c = 0; c < rig.cameras.size(); ++c) {
    if (masks.per_camera[c].rows() != rig.cameras[c].height ||
        masks.per_camera[c].cols() != rig.cameras[c].width) {
      throw ConfigError("mask " + std::to_string(c) + " size does not match its camera");
    }
  }
}

PointsD sensor_points_in_ego(const LidarSweep& sweep) {
  PointsD pts = sweep.points.cast<double>();
  pts = pts * sweep.sensor_to_ego.rotation.transpose();
  pts.rowwise() += sweep.sensor_to_ego.translation.transpose();
  return pts;
}

}  // namespace

VoteGrid::VoteGrid(const GridSpec& s) : spec(s) {
  spec.validate();
  counts.resize(spec.n_voxels());
  hit.assign(spec.n_voxels(), 0);
  freed.assign(spec.n_voxels(), 0);
}

void VoteGrid::add_vote(std::size_t flat, std::uint16_t cls) {
  auto& slots = counts[flat];
  for (auto& [existing, count] : slots) {
    if (existing == cls) {
      ++count;
      return;
    }
  }
  slots.emplace_back(cls, 1);
}

void VoteGrid::merge(const VoteGrid& other) {
  if (!(spec == other.spec)) {
    throw ConfigError("cannot merge vote grids with different specs");
  }
  for (std::size_t v = 0; v < counts.size(); ++v) {
    for (const auto& [cls, count] : other.counts[v]) {
      auto& slots = counts[v];
      bool found = false;
      for (auto& [existing, mine] : slots) {
        if (existing == cls) {
          mine += count;
          found = true;
          break;
        }
      }
      if (!found) slots.emplace_back(cls, count);
    }
    hit[v] |= other.hit[v];
    freed[v] |= other.freed[v];
  }
}

void PipelineConfig::validate() const {
  if (n_sweep < 1 || n_interval < 1) {
    throw ConfigError("n_sweep and n_interval must be >= 1");
  }
  if (reference < 0) {
    throw ConfigError("reference sweep index must be >= 0");
  }
  grid.validate();
  if (n_cls == 0 || n_cls >= kIgnoreId) {
    throw ConfigError("pipeline n_cls must be in [1, 65534]");
  }
}

std::vector<std::uint16_t> label_points(const LidarSweep& sweep, const CameraRig& rig,
                                        const MaskSet& masks) {
  check_masks(rig, masks);
  const PointsD pts_ego = sensor_points_in_ego(sweep);
  std::vector<std::uint16_t> labels(static_cast<std::size_t>(pts_ego.rows()), kIgnoreId);

  std::map<std::uint16_t, int> votes;
  for (Eigen::Index i = 0; i < pts_ego.rows(); ++i) {
    votes.clear();
    for (std::size_t c = 0; c < rig.cameras.size(); ++c) {
      const auto proj = project_point(rig.cameras[c], pts_ego.row(i).transpose());
      if (!proj) continue;
      const long px = nearest_pixel(proj->u, rig.cameras[c].width);
      const long py = nearest_pixel(proj->v, rig.cameras[c].height);
      const std::uint16_t m = masks.per_camera[c](py, px);
      if (m != kIgnoreId) ++votes[m];
    }
    if (votes.empty()) continue;
    // Majority, ties to the lowest class id (map iterates ids ascending).
    std::uint16_t best = kIgnoreId;
    int best_count = 0;
    for (const auto& [cls, count] : votes) {
      if (count > best_count) {
        best = cls;
        best_count = count;
      }
    }
    labels[static_cast<std::size_t>(i)] = best;
  }
  return labels;
}

void accumulate(VoteGrid& vote, const PointsD& points_ref,
                const std::vector<std::uint16_t>& labels) {
  if (static_cast<Eigen::Index>(labels.size()) != points_ref.rows()) {
    throw ConfigError("label count does not match point count");
  }
  for (Eigen::Index i = 0; i < points_ref.rows(); ++i) {
    const auto cell = voxel_index(vote.spec, points_ref.row(i).transpose());
    if (!cell) continue;
    const std::size_t flat = flat_index(vote.spec, *cell);
    vote.hit[flat] = 1;
    if (labels[static_cast<std::size_t>(i)] != kIgnoreId) {
      vote.add_vote(flat, labels[static_cast<std::size_t>(i)]);
    }
  }
}

void carve_free(VoteGrid& vote, const Vec3d& sensor_origin_ref, const PointsD& endpoints) {
  for (Eigen::Index i = 0; i < endpoints.rows(); ++i) {
    const Vec3d end = endpoints.row(i).transpose();
    const auto traversed = cast_ray(vote.spec, sensor_origin_ref, end);
    if (traversed.empty()) continue;
    std::size_t n = traversed.size();
    // The reflection voxel itself stays unfreed; everything outside the
    // grid was already clipped away, so such rays free the full traversal.
    if (const auto end_cell = voxel_index(vote.spec, end);
        end_cell && traversed.back() == *end_cell) {
      --n;
    }
    for (std::size_t t = 0; t < n; ++t) {
      vote.freed[flat_index(vote.spec, traversed[t])] = 1;
    }
  }
}

SemanticVoxelGrid finalize(const VoteGrid& vote, std::uint32_t n_cls) {
  SemanticVoxelGrid grid(vote.spec, n_cls, kIgnoreId);
  const std::uint16_t free = grid.free_id();
  for (std::size_t v = 0; v < vote.counts.size(); ++v) {
    const auto& slots = vote.counts[v];
    if (!slots.empty()) {
      // Occupied beats freed: a voted voxel keeps its class even when rays
      // pass through it.
      std::uint16_t best = kIgnoreId;
      std::uint32_t best_count = 0;
      for (const auto& [cls, count] : slots) {
        if (count > best_count || (count == best_count && cls < best)) {
          best = cls;
          best_count = count;
        }
      }
      grid.labels[v] = best;
    } else if (vote.freed[v]) {
      grid.labels[v] = free;
    }
  }
  return grid;
}

std::vector<std::size_t> select_sweeps(const PipelineConfig& config, std::size_t n_available) {
  config.validate();
  if (static_cast<std::size_t>(config.reference) >= n_available) {
    throw ConfigError("reference sweep " + std::to_string(config.reference) +
                      " outside the available range");
  }
  const int center = config.n_sweep / 2;
  std::vector<std::size_t> out;
  for (int j = 0; j < config.n_sweep; ++j) {
    const long idx = static_cast<long>(config.reference) +
                     static_cast<long>(j - center) * config.n_interval;
    if (idx < 0 || idx >= static_cast<long>(n_available)) {
      throw ConfigError("sweep window needs index " + std::to_string(idx) + " but only " +
                        std::to_string(n_available) + " sweeps are available");
    }
    out.push_back(static_cast<std::size_t>(idx));
  }
  return out;
}

SemanticVoxelGrid generate_pseudolabels(const PipelineConfig& config,
                                        const std::vector<LidarSweep>& sweeps,
                                        const CameraRig& rig, const std::vector<MaskSet>& masks,
                                        int threads) {
  if (masks.size() != sweeps.size()) {
    throw ConfigError("per-sweep mask sets must parallel the sweep list");
  }
  for (std::size_t i = 1; i < sweeps.size(); ++i) {
    if (sweeps[i - 1].timestamp_us > sweeps[i].timestamp_us) {
      throw ConfigError("sweeps must be sorted by timestamp");
    }
  }
  const std::vector<std::size_t> selected = select_sweeps(config, sweeps.size());
  const Pose& ref_pose = sweeps[static_cast<std::size_t>(config.reference)].ego_to_world;

  // One partial vote grid per selected sweep, merged in selection order;
  // merging commutes, so the result matches sequential execution.
  std::vector<VoteGrid> partials(selected.size(), VoteGrid(config.grid));
  run_indexed_tasks(selected.size(), threads, [&](std::size_t s) {
    const LidarSweep& sweep = sweeps[selected[s]];
    const std::vector<std::uint16_t> labels = label_points(sweep, rig, masks[selected[s]]);
    const PointsD pts_ref =
        warp_points(sensor_points_in_ego(sweep), sweep.ego_to_world, ref_pose);
    const Vec3d origin_ego = sweep.sensor_to_ego.translation;
    const Vec3d origin_ref =
        ref_pose.inverse().compose(sweep.ego_to_world).apply(origin_ego);
    accumulate(partials[s], pts_ref, labels);
    carve_free(partials[s], origin_ref, pts_ref);
  });

  VoteGrid vote(config.grid);
  for (const auto& partial : partials) vote.merge(partial);
  return finalize(vote, config.n_cls);
}

EmbeddingProjection project_embeddings(const std::vector<SweepEmbeddingInput>& inputs,
                                       std::size_t reference_idx, const CameraRig& rig,
                                       const GridSpec& spec, int threads) {
  if (inputs.empty() || reference_idx >= inputs.size()) {
    throw ConfigError("embedding projection needs at least one sweep and a valid reference");
  }
  std::uint32_t channels = 0;
  for (const auto& input : inputs) {
    if (!input.sweep || !input.maps) {
      throw ConfigError("embedding projection input missing sweep or maps");
    }
    if (input.maps->size() != rig.cameras.size()) {
      throw ConfigError("embedding map count does not match camera count");
    }
    if (input.masks) check_masks(rig, *input.masks);
    for (std::size_t c = 0; c < rig.cameras.size(); ++c) {
      const EmbeddingMap& map = (*input.maps)[c];
      const CameraModel& cam = rig.cameras[c];
      if (channels == 0) channels = map.channels;
      if (map.channels != channels) {
        throw ConfigError("embedding maps disagree on channel count");
      }
      // Map size must equal the camera or divide it by one integer factor.
      if (map.cols == 0 || map.rows == 0 || cam.width % map.cols != 0 ||
          cam.height % map.rows != 0 || cam.width / map.cols != cam.height / map.rows) {
        throw ConfigError("embedding map " + std::to_string(c) +
                          " is not an integer downscale of its camera");
      }
    }
  }

  const std::size_t n_voxels = spec.n_voxels();
  const Pose& ref_pose = inputs[reference_idx].sweep->ego_to_world;

  struct Partial {
    std::map<std::size_t, std::pair<Eigen::VectorXd, std::uint32_t>> sums;
  };
  std::vector<Partial> partials(inputs.size());

  run_indexed_tasks(inputs.size(), threads, [&](std::size_t s) {
    const auto& input = inputs[s];
    const PointsD pts_ego = sensor_points_in_ego(*input.sweep);
    std::vector<std::uint16_t> labels;
    if (input.masks) {
      labels = label_points(*input.sweep, rig, *input.masks);
    }
    const PointsD pts_ref = warp_points(pts_ego, input.sweep->ego_to_world, ref_pose);
    auto& partial = partials[s];
    for (Eigen::Index i = 0; i < pts_ego.rows(); ++i) {
      if (input.masks && labels[static_cast<std::size_t>(i)] == kIgnoreId) continue;
      const auto cell = voxel_index(spec, pts_ref.row(i).transpose());
      if (!cell) continue;
      const std::size_t flat = flat_index(spec, *cell);
      for (std::size_t c = 0; c < rig.cameras.size(); ++c) {
        const auto proj = project_point(rig.cameras[c], pts_ego.row(i).transpose());
        if (!proj) continue;
        const EmbeddingMap& map = (*input.maps)[c];
        const long scale = rig.cameras[c].width / map.cols;
        const long px = nearest_pixel(proj->u / scale, map.cols);
        const long py = nearest_pixel(proj->v / scale, map.rows);
        const float* e = map.at(static_cast<std::uint32_t>(py), static_cast<std::uint32_t>(px));
        auto [it, inserted] = partial.sums.try_emplace(
            flat, std::make_pair(Eigen::VectorXd::Zero(channels), 0u));
        for (std::uint32_t ch = 0; ch < channels; ++ch) {
          it->second.first[ch] += e[ch];
        }
        ++it->second.second;
      }
    }
  });

  EmbeddingProjection out;
  out.voxel_embeddings = MatRMd::Zero(static_cast<Eigen::Index>(n_voxels), channels);
  out.visible.assign(n_voxels, 0);
  std::map<std::size_t, std::pair<Eigen::VectorXd, std::uint32_t>> merged;
  for (const auto& partial : partials) {
    for (const auto& [flat, entry] : partial.sums) {
      auto [it, inserted] =
          merged.try_emplace(flat, std::make_pair(Eigen::VectorXd::Zero(channels), 0u));
      it->second.first += entry.first;
      it->second.second += entry.second;
    }
  }
  for (const auto& [flat, entry] : merged) {
    out.voxel_embeddings.row(static_cast<Eigen::Index>(flat)) =
        (entry.first / static_cast<double>(entry.second)).transpose();
    out.visible[flat] = 1;
  }
  return out;
}

}  // namespace ago
