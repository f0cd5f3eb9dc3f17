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
#include <map>
#include <random>

#include <gtest/gtest.h>

#include "ago/errors.hpp"
#include "ago/toytrain.hpp"

namespace ago {
namespace {

GridSpec unit_grid(int nx, int ny, int nz) {
  GridSpec spec;
  spec.dims = Vec3i(nx, ny, nz);
  return spec;
}

// One 64x48 camera looking along ego +x.
CameraRig forward_rig() {
  CameraRig rig;
  CameraModel cam;
  cam.intrinsics << 40, 0, 32, 0, 40, 24, 0, 0, 1;
  cam.width = 64;
  cam.height = 48;
  cam.ego_to_camera.rotation << 0, -1, 0, 0, 0, -1, 1, 0, 0;
  rig.cameras.push_back(cam);
  return rig;
}

LidarSweep sweep_with_points(std::initializer_list<Vec3d> pts) {
  LidarSweep sweep;
  sweep.points.resize(static_cast<Eigen::Index>(pts.size()), 3);
  Eigen::Index i = 0;
  for (const auto& p : pts) {
    sweep.points.row(i++) = p.cast<float>().transpose();
  }
  return sweep;
}

TEST(LabelPoints, SingleWitnessCamera) {
  const CameraRig rig = forward_rig();
  MaskSet masks;
  masks.per_camera.emplace_back(MaskImage::Constant(48, 64, 7));
  const LidarSweep sweep = sweep_with_points({{5.0, 0.0, 0.0}});
  const auto labels = label_points(sweep, rig, masks);
  ASSERT_EQ(labels.size(), 1u);
  EXPECT_EQ(labels[0], 7);
}

TEST(LabelPoints, PointOutsideAllFrustaIsUnlabeled) {
  const CameraRig rig = forward_rig();
  MaskSet masks;
  masks.per_camera.emplace_back(MaskImage::Constant(48, 64, 7));
  const LidarSweep sweep = sweep_with_points({{-5.0, 0.0, 0.0}});
  EXPECT_EQ(label_points(sweep, rig, masks)[0], kIgnoreId);
}

TEST(LabelPoints, IgnorePixelsDoNotVote) {
  const CameraRig rig = forward_rig();
  MaskSet masks;
  masks.per_camera.emplace_back(MaskImage::Constant(48, 64, kIgnoreId));
  const LidarSweep sweep = sweep_with_points({{5.0, 0.0, 0.0}});
  EXPECT_EQ(label_points(sweep, rig, masks)[0], kIgnoreId);
}

TEST(LabelPoints, TieBreaksToLowestClassId) {
  // Two identical cameras with different constant masks: one vote each.
  CameraRig rig = forward_rig();
  rig.cameras.push_back(rig.cameras[0]);
  MaskSet masks;
  masks.per_camera.emplace_back(MaskImage::Constant(48, 64, 9));
  masks.per_camera.emplace_back(MaskImage::Constant(48, 64, 4));
  const LidarSweep sweep = sweep_with_points({{5.0, 0.0, 0.0}});
  EXPECT_EQ(label_points(sweep, rig, masks)[0], 4);
}

TEST(LabelPoints, MaskDimensionMismatchThrows) {
  const CameraRig rig = forward_rig();
  MaskSet masks;
  masks.per_camera.emplace_back(MaskImage::Constant(10, 10, 0));
  const LidarSweep sweep = sweep_with_points({{5.0, 0.0, 0.0}});
  EXPECT_THROW(label_points(sweep, rig, masks), ConfigError);
}

TEST(Accumulate, CountsVotesPerVoxel) {
  VoteGrid vote(unit_grid(4, 4, 1));
  PointsD pts(3, 3);
  pts << 0.5, 0.5, 0.5, 0.6, 0.4, 0.5, 2.5, 2.5, 0.5;
  accumulate(vote, pts, {3, 3, kIgnoreId});
  const std::size_t flat = flat_index(vote.spec, Vec3i(0, 0, 0));
  ASSERT_EQ(vote.counts[flat].size(), 1u);
  EXPECT_EQ(vote.counts[flat][0].first, 3);
  EXPECT_EQ(vote.counts[flat][0].second, 2u);
  // Unlabeled point marks hit only.
  const std::size_t flat2 = flat_index(vote.spec, Vec3i(2, 2, 0));
  EXPECT_TRUE(vote.counts[flat2].empty());
  EXPECT_EQ(vote.hit[flat2], 1);
}

TEST(Accumulate, OutOfGridPointsIgnored) {
  VoteGrid vote(unit_grid(2, 2, 2));
  PointsD pts(1, 3);
  pts << 9.0, 9.0, 9.0;
  accumulate(vote, pts, {1});
  for (const auto& slots : vote.counts) EXPECT_TRUE(slots.empty());
  EXPECT_EQ(std::count(vote.hit.begin(), vote.hit.end(), 1), 0);
}

TEST(Accumulate, MatchesBruteForceRecount) {
  std::mt19937_64 rng(3);
  VoteGrid vote(unit_grid(6, 6, 3));
  std::uniform_real_distribution<double> coord(-1.0, 7.0);
  std::uniform_int_distribution<int> cls(0, 4);
  PointsD pts(1000, 3);
  std::vector<std::uint16_t> labels(1000);
  for (int i = 0; i < 1000; ++i) {
    pts.row(i) = Vec3d(coord(rng), coord(rng), coord(rng) * 0.4).transpose();
    labels[static_cast<std::size_t>(i)] = static_cast<std::uint16_t>(cls(rng));
  }
  accumulate(vote, pts, labels);

  std::map<std::pair<std::size_t, std::uint16_t>, std::uint32_t> expect;
  for (int i = 0; i < 1000; ++i) {
    const auto cell = voxel_index(vote.spec, pts.row(i).transpose());
    if (!cell) continue;
    expect[{flat_index(vote.spec, *cell), labels[static_cast<std::size_t>(i)]}] += 1;
  }
  std::map<std::pair<std::size_t, std::uint16_t>, std::uint32_t> got;
  for (std::size_t v = 0; v < vote.counts.size(); ++v) {
    for (const auto& [cls_id, count] : vote.counts[v]) got[{v, cls_id}] = count;
  }
  EXPECT_EQ(got, expect);
}

TEST(CarveFree, EndpointVoxelNeverFreedByItsOwnRay) {
  VoteGrid vote(unit_grid(5, 1, 1));
  PointsD end(1, 3);
  end << 4.5, 0.5, 0.5;
  carve_free(vote, Vec3d(0.5, 0.5, 0.5), end);
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(vote.freed[flat_index(vote.spec, Vec3i(i, 0, 0))], 1) << i;
  }
  EXPECT_EQ(vote.freed[flat_index(vote.spec, Vec3i(4, 0, 0))], 0);
}

TEST(CarveFree, EndpointOutsideGridFreesWholeClippedTraversal) {
  VoteGrid vote(unit_grid(5, 1, 1));
  PointsD end(1, 3);
  end << 12.0, 0.5, 0.5;
  carve_free(vote, Vec3d(0.5, 0.5, 0.5), end);
  for (int i = 0; i < 5; ++i) {
    EXPECT_EQ(vote.freed[flat_index(vote.spec, Vec3i(i, 0, 0))], 1) << i;
  }
}

TEST(CarveFree, MatchesPerRayPrefixOracle) {
  std::mt19937_64 rng(4);
  const GridSpec spec = unit_grid(8, 8, 4);
  VoteGrid vote(spec);
  const Vec3d origin(4.0, 4.0, 2.0);
  std::uniform_real_distribution<double> coord(-2.0, 10.0);
  PointsD ends(300, 3);
  for (int i = 0; i < 300; ++i) {
    ends.row(i) = Vec3d(coord(rng), coord(rng), coord(rng) * 0.5).transpose();
  }
  carve_free(vote, origin, ends);

  std::vector<std::uint8_t> expect(spec.n_voxels(), 0);
  for (int i = 0; i < 300; ++i) {
    const Vec3d end = ends.row(i).transpose();
    auto voxels = cast_ray(spec, origin, end);
    if (voxels.empty()) continue;
    const auto end_cell = voxel_index(spec, end);
    std::size_t n = voxels.size();
    if (end_cell && voxels.back() == *end_cell) --n;
    for (std::size_t t = 0; t < n; ++t) expect[flat_index(spec, voxels[t])] = 1;
  }
  EXPECT_EQ(vote.freed, expect);
}

TEST(Finalize, MajorityWithTieBreak) {
  VoteGrid vote(unit_grid(3, 1, 1));
  vote.add_vote(0, 2);
  vote.add_vote(0, 2);
  vote.add_vote(0, 2);
  vote.add_vote(0, 1);
  vote.add_vote(1, 4);
  vote.add_vote(1, 4);
  vote.add_vote(1, 1);
  vote.add_vote(1, 1);
  vote.freed[2] = 1;
  const SemanticVoxelGrid grid = finalize(vote, 5);
  EXPECT_EQ(grid.labels[0], 2);  // strict majority
  EXPECT_EQ(grid.labels[1], 1);  // 2-2 tie, lowest id
  EXPECT_EQ(grid.labels[2], 5);  // freed -> FREE
}

TEST(Finalize, VotedVoxelNeverFreeFreedNeverSemantic) {
  std::mt19937_64 rng(5);
  VoteGrid vote(unit_grid(4, 4, 2));
  std::uniform_int_distribution<int> flat(0, 31), cls(0, 3), coin(0, 1);
  for (int i = 0; i < 60; ++i) {
    const int v = flat(rng);
    if (coin(rng)) {
      vote.add_vote(static_cast<std::size_t>(v), static_cast<std::uint16_t>(cls(rng)));
      vote.hit[static_cast<std::size_t>(v)] = 1;
    }
    if (coin(rng)) vote.freed[static_cast<std::size_t>(v)] = 1;
  }
  const SemanticVoxelGrid grid = finalize(vote, 4);
  for (std::size_t v = 0; v < grid.labels.size(); ++v) {
    if (!vote.counts[v].empty()) {
      EXPECT_LT(grid.labels[v], 4);
    } else if (vote.freed[v]) {
      EXPECT_EQ(grid.labels[v], grid.free_id());
    } else {
      EXPECT_EQ(grid.labels[v], kIgnoreId);
    }
  }
}

TEST(SelectSweeps, CenteredWindowIncludesReference) {
  PipelineConfig cfg;
  cfg.grid = unit_grid(2, 2, 2);
  cfg.n_cls = 2;
  cfg.n_sweep = 5;
  cfg.n_interval = 2;
  cfg.reference = 6;
  const auto idx = select_sweeps(cfg, 12);
  const std::vector<std::size_t> expect = {2, 4, 6, 8, 10};
  EXPECT_EQ(idx, expect);
}

TEST(SelectSweeps, InsufficientSweepsThrow) {
  PipelineConfig cfg;
  cfg.grid = unit_grid(2, 2, 2);
  cfg.n_cls = 2;
  cfg.n_sweep = 5;
  cfg.n_interval = 2;
  cfg.reference = 1;
  EXPECT_THROW(select_sweeps(cfg, 12), ConfigError);
}

SceneConfig small_scene_config(std::uint64_t seed, int n_sweeps) {
  SceneConfig cfg;
  cfg.seed = seed;
  cfg.grid.origin = Vec3f(-4.8f, -4.8f, -0.45f);
  cfg.grid.voxel_size = Vec3f(0.6f, 0.6f, 0.6f);
  cfg.grid.dims = Vec3i(16, 16, 8);
  cfg.n_boxes = 4;
  cfg.n_cameras = 2;
  cfg.n_rays = 4000;
  cfg.n_sweeps = n_sweeps;
  cfg.emb_dim = 6;
  return cfg;
}

LabelSpace scene_space() {
  LabelSpace space;
  space.classes = {"ground", "crate", "pillar"};
  space.subclass_prompts = {{"ground"}, {"crate"}, {"pillar"}};
  return space;
}

PipelineConfig scene_pipeline(const SceneConfig& sc, std::uint32_t n_cls) {
  PipelineConfig pipe;
  pipe.grid = sc.grid;
  pipe.n_cls = n_cls;
  pipe.n_sweep = sc.n_sweeps;
  pipe.n_interval = 1;
  pipe.reference = sc.n_sweeps / 2;
  return pipe;
}

TEST(GeneratePseudolabels, SingleSweepMatchesAnalyticGroundTruthOnHits) {
  const SceneConfig sc = small_scene_config(21, 1);
  const LabelSpace space = scene_space();
  const SceneData scene = make_synthetic_scene(sc, space);
  const SemanticVoxelGrid pl = generate_pseudolabels(scene_pipeline(sc, space.n_cls()),
                                                     scene.sweeps, scene.rig, scene.masks);
  std::size_t hits = 0, agree = 0;
  for (std::size_t v = 0; v < pl.labels.size(); ++v) {
    if (pl.labels[v] == kIgnoreId || pl.labels[v] == pl.free_id()) continue;
    ++hits;
    if (pl.labels[v] == scene.gt.labels[v]) ++agree;
  }
  ASSERT_GT(hits, 50u);
  EXPECT_GE(static_cast<double>(agree) / static_cast<double>(hits), 0.95);
}

TEST(GeneratePseudolabels, RepeatedSweepEqualsSingleSweep) {
  // Vote counts scale with repetition; the argmax is invariant.
  const SceneConfig sc = small_scene_config(22, 1);
  const LabelSpace space = scene_space();
  const SceneData scene = make_synthetic_scene(sc, space);

  PipelineConfig single = scene_pipeline(sc, space.n_cls());
  const SemanticVoxelGrid once =
      generate_pseudolabels(single, scene.sweeps, scene.rig, scene.masks);

  std::vector<LidarSweep> repeated(3, scene.sweeps[0]);
  repeated[1].timestamp_us += 1;
  repeated[2].timestamp_us += 2;
  const std::vector<MaskSet> masks(3, scene.masks[0]);
  PipelineConfig triple = single;
  triple.n_sweep = 3;
  triple.reference = 1;
  const SemanticVoxelGrid thrice = generate_pseudolabels(triple, repeated, scene.rig, masks);
  EXPECT_EQ(once.labels, thrice.labels);
}

TEST(GeneratePseudolabels, SweepOrderIrrelevantAndThreadCountIrrelevant) {
  const SceneConfig sc = small_scene_config(23, 3);
  const LabelSpace space = scene_space();
  const SceneData scene = make_synthetic_scene(sc, space);
  const PipelineConfig pipe = scene_pipeline(sc, space.n_cls());
  const SemanticVoxelGrid a =
      generate_pseudolabels(pipe, scene.sweeps, scene.rig, scene.masks, 1);
  const SemanticVoxelGrid b =
      generate_pseudolabels(pipe, scene.sweeps, scene.rig, scene.masks, 4);
  EXPECT_EQ(a.labels, b.labels);
}

TEST(GeneratePseudolabels, UnsortedSweepsRejected) {
  const SceneConfig sc = small_scene_config(24, 2);
  const LabelSpace space = scene_space();
  SceneData scene = make_synthetic_scene(sc, space);
  std::swap(scene.sweeps[0].timestamp_us, scene.sweeps[1].timestamp_us);
  EXPECT_THROW(generate_pseudolabels(scene_pipeline(sc, space.n_cls()), scene.sweeps, scene.rig,
                                     scene.masks),
               ConfigError);
}

TEST(ProjectEmbeddings, ConstantFieldFillsVisibleVoxels) {
  const SceneConfig sc = small_scene_config(25, 1);
  const LabelSpace space = scene_space();
  SceneData scene = make_synthetic_scene(sc, space);
  // Overwrite every embedding with the same vector.
  for (auto& maps : scene.embeddings) {
    for (auto& map : maps) {
      for (std::size_t i = 0; i < map.data.size(); ++i) {
        map.data[i] = static_cast<float>(1 + (i % map.channels));
      }
    }
  }
  std::vector<SweepEmbeddingInput> inputs = {
      {&scene.sweeps[0], &scene.embeddings[0], &scene.masks[0]}};
  const EmbeddingProjection proj = project_embeddings(inputs, 0, scene.rig, sc.grid);
  std::size_t visible = 0;
  for (std::size_t v = 0; v < proj.visible.size(); ++v) {
    if (!proj.visible[v]) {
      EXPECT_TRUE(proj.voxel_embeddings.row(static_cast<Eigen::Index>(v)).isZero(0.0));
      continue;
    }
    ++visible;
    for (int c = 0; c < sc.emb_dim; ++c) {
      EXPECT_NEAR(proj.voxel_embeddings(static_cast<Eigen::Index>(v), c), 1.0 + c, 1e-9);
    }
  }
  EXPECT_GT(visible, 50u);
}

TEST(ProjectEmbeddings, MeanOfTwoContributions) {
  // Hand-built: one camera, two points in the same voxel hitting pixels
  // with different embeddings.
  CameraRig rig = forward_rig();
  GridSpec spec = unit_grid(8, 8, 8);
  spec.origin = Vec3f(-4, -4, -4);

  // Same voxel, clearly different pixel columns.
  LidarSweep sweep = sweep_with_points({{3.2, 0.45, 0.0}, {3.4, 0.25, 0.0}});

  EmbeddingMap map;
  map.rows = 48;
  map.cols = 64;
  map.channels = 2;
  map.data.assign(48 * 64 * 2, 0.0f);
  // Every pixel gets embedding (u, 2u) so the two projections differ.
  for (std::uint32_t r = 0; r < 48; ++r) {
    for (std::uint32_t c = 0; c < 64; ++c) {
      map.data[(r * 64 + c) * 2 + 0] = static_cast<float>(c);
      map.data[(r * 64 + c) * 2 + 1] = static_cast<float>(2 * c);
    }
  }
  std::vector<EmbeddingMap> maps = {map};
  std::vector<SweepEmbeddingInput> inputs = {{&sweep, &maps, nullptr}};
  const EmbeddingProjection proj = project_embeddings(inputs, 0, rig, spec);

  const auto cell_a = voxel_index(spec, Vec3d(3.2, 0.45, 0.0));
  const auto cell_b = voxel_index(spec, Vec3d(3.4, 0.25, 0.0));
  ASSERT_TRUE(cell_a && cell_b);
  ASSERT_EQ(*cell_a, *cell_b);
  const auto pa = project_point(rig.cameras[0], Vec3d(3.2, 0.45, 0.0));
  const auto pb = project_point(rig.cameras[0], Vec3d(3.4, 0.25, 0.0));
  ASSERT_TRUE(pa && pb);
  ASSERT_NE(std::lround(pa->u), std::lround(pb->u));
  const double ua = std::round(pa->u);
  const double ub = std::round(pb->u);
  const std::size_t flat = flat_index(spec, *cell_a);
  EXPECT_NEAR(proj.voxel_embeddings(static_cast<Eigen::Index>(flat), 0), (ua + ub) / 2.0, 1e-6);
  EXPECT_NEAR(proj.voxel_embeddings(static_cast<Eigen::Index>(flat), 1), ua + ub, 1e-6);
}

TEST(ProjectEmbeddings, MatchesGroupByOracleAndStaysInsideNonIgnoreVoxels) {
  const SceneConfig sc = small_scene_config(26, 2);
  const LabelSpace space = scene_space();
  const SceneData scene = make_synthetic_scene(sc, space);
  const PipelineConfig pipe = scene_pipeline(sc, space.n_cls());
  const auto selected = select_sweeps(pipe, scene.sweeps.size());
  std::vector<SweepEmbeddingInput> inputs;
  for (std::size_t s : selected) {
    inputs.push_back({&scene.sweeps[s], &scene.embeddings[s], &scene.masks[s]});
  }
  const EmbeddingProjection proj =
      project_embeddings(inputs, static_cast<std::size_t>(pipe.reference) - selected.front(),
                         scene.rig, sc.grid);

  // Brute-force group-by recomputation.
  std::map<std::size_t, std::pair<Eigen::VectorXd, int>> groups;
  const Pose& ref_pose = scene.sweeps[static_cast<std::size_t>(pipe.reference)].ego_to_world;
  for (std::size_t s : selected) {
    const LidarSweep& sweep = scene.sweeps[s];
    const auto labels = label_points(sweep, scene.rig, scene.masks[s]);
    PointsD pts = sweep.points.cast<double>();
    pts = pts * sweep.sensor_to_ego.rotation.transpose();
    pts.rowwise() += sweep.sensor_to_ego.translation.transpose();
    const PointsD ref_pts = warp_points(pts, sweep.ego_to_world, ref_pose);
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
      if (labels[static_cast<std::size_t>(i)] == kIgnoreId) continue;
      const auto cell = voxel_index(sc.grid, ref_pts.row(i).transpose());
      if (!cell) continue;
      const std::size_t flat = flat_index(sc.grid, *cell);
      for (std::size_t c = 0; c < scene.rig.cameras.size(); ++c) {
        const auto pr = project_point(scene.rig.cameras[c], pts.row(i).transpose());
        if (!pr) continue;
        const auto& map = scene.embeddings[s][c];
        const long px = std::min<long>(std::lround(pr->u), map.cols - 1);
        const long py = std::min<long>(std::lround(pr->v), map.rows - 1);
        auto [it, fresh] = groups.try_emplace(
            flat, std::make_pair(Eigen::VectorXd::Zero(sc.emb_dim), 0));
        const float* e = map.at(static_cast<std::uint32_t>(py), static_cast<std::uint32_t>(px));
        for (int d = 0; d < sc.emb_dim; ++d) it->second.first[d] += e[d];
        it->second.second += 1;
      }
    }
  }
  std::size_t visible = 0;
  for (std::size_t v = 0; v < proj.visible.size(); ++v) {
    if (proj.visible[v]) ++visible;
  }
  ASSERT_EQ(visible, groups.size());
  for (const auto& [flat, entry] : groups) {
    ASSERT_TRUE(proj.visible[flat]);
    const Eigen::VectorXd mean = entry.first / entry.second;
    EXPECT_LT((proj.voxel_embeddings.row(static_cast<Eigen::Index>(flat)).transpose() - mean)
                  .norm(),
              1e-9);
  }

  // Visible voxels stay inside the non-IGNORE set of the pseudo-labels.
  const SemanticVoxelGrid pl =
      generate_pseudolabels(pipe, scene.sweeps, scene.rig, scene.masks);
  for (std::size_t v = 0; v < proj.visible.size(); ++v) {
    if (proj.visible[v]) {
      EXPECT_NE(pl.labels[v], kIgnoreId);
    }
  }
}

}  // namespace
}  // namespace ago
