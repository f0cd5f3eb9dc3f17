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

#include "ago/toytrain.hpp"

#include <fstream>

#include <gtest/gtest.h>

#include "ago/errors.hpp"
#include "ago/io.hpp"

namespace ago {
namespace {

TrainConfig grounding_config(int steps, double lr) {
  TrainConfig cfg;
  cfg.paradigm = Paradigm::kGroundingOnly;
  cfg.steps = steps;
  cfg.lr = lr;
  cfg.seed = 0;
  return cfg;
}

TEST(Train, ZeroLearningRateLeavesParametersUnchanged) {
  auto [model, data] = make_separable_fixture();
  const MatRMd table_before = model.voxel_table;
  TrainConfig cfg;
  cfg.paradigm = Paradigm::kAdaptive;
  cfg.steps = 5;
  cfg.lr = 0.0;
  cfg.seed = 3;
  const TrainResult r = train(std::move(model), data, cfg);
  EXPECT_EQ(r.model.voxel_table, table_before);
  for (std::size_t t = 1; t < r.trace.size(); ++t) {
    EXPECT_EQ(r.trace[t].l_ce, r.trace[0].l_ce);
    EXPECT_EQ(r.trace[t].l_align, r.trace[0].l_align);
    EXPECT_EQ(r.trace[t].train_miou, r.trace[0].train_miou);
  }
}

TEST(Train, GroundingOnlyConvergesToPerfectMiou) {
  auto [model, data] = make_separable_fixture();
  const TrainResult r = train(std::move(model), data, grounding_config(500, 0.5));
  bool reached = false;
  for (const auto& row : r.trace) {
    if (row.train_miou >= 1.0) {
      reached = true;
      break;
    }
  }
  EXPECT_TRUE(reached);
  EXPECT_DOUBLE_EQ(r.trace.back().train_miou, 1.0);
  EXPECT_EQ(r.trace.back().l_align, 0.0);  // alignment not part of this paradigm
}

TEST(Train, BitReproducibleForFixedSeed) {
  auto [m1, d1] = make_separable_fixture();
  auto [m2, d2] = make_separable_fixture();
  TrainConfig cfg;
  cfg.paradigm = Paradigm::kAdaptive;
  cfg.steps = 40;
  cfg.lr = 0.2;
  cfg.seed = 17;
  const TrainResult a = train(std::move(m1), d1, cfg);
  const TrainResult b = train(std::move(m2), d2, cfg);
  EXPECT_EQ(a.model.voxel_table, b.model.voxel_table);
  EXPECT_EQ(a.model.adapter.w1, b.model.adapter.w1);
  for (std::size_t t = 0; t < a.trace.size(); ++t) {
    EXPECT_EQ(a.trace[t].l_ce, b.trace[t].l_ce);
    EXPECT_EQ(a.trace[t].l_align, b.trace[t].l_align);
  }
}

TEST(Train, AdaptiveGroundingLossesIndependentOfAdapterWeights) {
  auto [m1, data] = make_separable_fixture();
  auto m2 = m1;
  m2.adapter.w1.array() += 0.5;
  m2.adapter.b1.array() -= 0.25;
  m2.adapter.w2.array() *= -1.3;
  TrainConfig cfg;
  cfg.paradigm = Paradigm::kAdaptive;
  cfg.steps = 1;
  cfg.lr = 0.0;
  cfg.seed = 9;
  const TrainResult a = train(std::move(m1), data, cfg);
  const TrainResult b = train(std::move(m2), data, cfg);
  EXPECT_LT(std::abs(a.trace[0].l_ce - b.trace[0].l_ce), 1e-12);
  EXPECT_LT(std::abs(a.trace[0].l_lovasz - b.trace[0].l_lovasz), 1e-12);
  EXPECT_LT(std::abs(a.trace[0].l_occ - b.trace[0].l_occ), 1e-12);
  EXPECT_NE(a.trace[0].l_align, b.trace[0].l_align);
}

TEST(Train, AlignOnlyNeverTouchesFixedEmbeddings) {
  auto [model, data] = make_separable_fixture();
  const MatRMd text = model.text_emb;
  const MatRMd noise = model.noise_pool;
  const MatRMd free_emb = model.free_emb;
  TrainConfig cfg;
  cfg.paradigm = Paradigm::kAlignOnly;
  cfg.steps = 30;
  cfg.lr = 0.5;
  const TrainResult r = train(std::move(model), data, cfg);
  EXPECT_EQ(r.model.text_emb, text);
  EXPECT_EQ(r.model.noise_pool, noise);
  EXPECT_EQ(r.model.free_emb, free_emb);
  EXPECT_EQ(r.trace.back().l_ce, 0.0);
  EXPECT_GT(r.trace.front().l_align, r.trace.back().l_align);
}

TEST(Train, SharedParadigmAppliesBothObjectivesToTheTable) {
  auto [model, data] = make_separable_fixture();
  TrainConfig cfg;
  cfg.paradigm = Paradigm::kGroundingPlusAlignShared;
  cfg.steps = 50;
  cfg.lr = 0.3;
  const TrainResult r = train(std::move(model), data, cfg);
  EXPECT_GT(r.trace.front().l_ce, r.trace.back().l_ce);
  EXPECT_GT(r.trace.front().l_align, r.trace.back().l_align);
}

TEST(Train, AdaptiveLossNonIncreasingOverFiftyStepWindows) {
  auto [model, data] = make_separable_fixture();
  TrainConfig cfg;
  cfg.paradigm = Paradigm::kAdaptive;
  cfg.steps = 400;
  cfg.lr = 0.3;
  cfg.seed = 1;
  cfg.halve_lr_on_plateau = true;
  const TrainResult r = train(std::move(model), data, cfg);
  auto total = [](const TraceRow& row) {
    return row.l_ce + row.l_lovasz + row.l_occ + row.l_align;
  };
  for (std::size_t t = 0; t + 50 < r.trace.size(); ++t) {
    EXPECT_LE(total(r.trace[t + 50]), total(r.trace[t]) + 1e-6 * (1.0 + total(r.trace[t])))
        << "window starting at step " << t;
  }
}

TEST(Train, DivergenceReportsTheStep) {
  auto [model, data] = make_separable_fixture();
  TrainConfig cfg;
  cfg.paradigm = Paradigm::kGroundingOnly;
  cfg.steps = 200;
  cfg.lr = 1e12;  // guaranteed blow-up
  try {
    train(std::move(model), data, cfg);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_GE(e.step(), 0);
  }
}

TEST(MakeToyModel, DeterministicPerSeedAndWordList) {
  LabelSpace space;
  space.classes = {"ground", "crate"};
  space.subclass_prompts = {{"ground", "dirt"}, {"crate"}};
  GridSpec grid;
  grid.dims = Vec3i(3, 3, 2);
  const std::vector<std::string> words = {"kettle", "lantern", "meadow"};
  const ToyModel a = make_toy_model(space, grid, 12, words, 5, 8);
  const ToyModel b = make_toy_model(space, grid, 12, words, 5, 8);
  EXPECT_EQ(a.text_emb, b.text_emb);
  EXPECT_EQ(a.noise_pool, b.noise_pool);
  EXPECT_EQ(a.voxel_table, b.voxel_table);
  EXPECT_EQ(a.text_emb.rows(), 3);
  EXPECT_EQ(a.noise_pool.rows(), 3);
  const ToyModel c = make_toy_model(space, grid, 12, words, 6, 8);
  EXPECT_NE(a.voxel_table, c.voxel_table);
}

TEST(MakeSyntheticScene, DeterministicPerSeed) {
  SceneConfig cfg;
  cfg.seed = 31;
  cfg.grid.origin = Vec3f(-4.8f, -4.8f, -0.45f);
  cfg.grid.voxel_size = Vec3f(0.6f, 0.6f, 0.6f);
  cfg.grid.dims = Vec3i(16, 16, 8);
  cfg.n_rays = 1500;
  cfg.n_sweeps = 2;
  LabelSpace space;
  space.classes = {"ground", "crate"};
  space.subclass_prompts = {{"ground"}, {"crate"}};
  const SceneData a = make_synthetic_scene(cfg, space);
  const SceneData b = make_synthetic_scene(cfg, space);
  EXPECT_EQ(a.gt.labels, b.gt.labels);
  ASSERT_EQ(a.sweeps.size(), b.sweeps.size());
  for (std::size_t s = 0; s < a.sweeps.size(); ++s) {
    EXPECT_EQ(a.sweeps[s].points, b.sweeps[s].points);
    EXPECT_EQ(a.masks[s].per_camera, b.masks[s].per_camera);
    EXPECT_EQ(a.embeddings[s][0].data, b.embeddings[s][0].data);
  }
  const SceneData c = make_synthetic_scene(SceneConfig{32, cfg.grid, cfg.n_boxes, cfg.n_cameras,
                                                       cfg.n_rays, cfg.n_sweeps, cfg.image_width,
                                                       cfg.image_height, cfg.emb_dim,
                                                       cfg.emb_noise},
                                           space);
  EXPECT_NE(a.sweeps[0].points, c.sweeps[0].points);
}

TEST(MakeSyntheticScene, EmptySceneHitsOnlyGround) {
  SceneConfig cfg;
  cfg.seed = 8;
  cfg.grid.origin = Vec3f(-4.8f, -4.8f, -0.45f);
  cfg.grid.voxel_size = Vec3f(0.6f, 0.6f, 0.6f);
  cfg.grid.dims = Vec3i(16, 16, 8);
  cfg.n_boxes = 0;
  cfg.n_rays = 2000;
  LabelSpace space;
  space.classes = {"ground", "crate"};
  space.subclass_prompts = {{"ground"}, {"crate"}};
  const SceneData scene = make_synthetic_scene(cfg, space);
  // Every return sits in a gt ground voxel.
  const LidarSweep& sweep = scene.sweeps[0];
  PointsD pts = sweep.points.cast<double>();
  pts = pts * sweep.sensor_to_ego.rotation.transpose();
  pts.rowwise() += sweep.sensor_to_ego.translation.transpose();
  int in_grid = 0;
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    const auto cell = voxel_index(cfg.grid, pts.row(i).transpose());
    if (!cell) continue;
    ++in_grid;
    EXPECT_EQ(scene.gt.at(*cell), 0);
  }
  EXPECT_GT(in_grid, 100);
}

TEST(TraceCsv, WritesHeaderAndRows) {
  std::vector<TraceRow> trace(2);
  trace[0] = {0, 1.0, 0.5, 0.25, 0.125, 0.5};
  trace[1] = {1, 0.9, 0.4, 0.2, 0.1, 0.75};
  const std::string path = ::testing::TempDir() + "trace_test.csv";
  write_trace_csv(trace, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "step,l_ce,l_lovasz,l_occ,l_align,train_miou");
  std::getline(in, line);
  EXPECT_EQ(line.substr(0, 2), "0,");
  std::getline(in, line);
  EXPECT_EQ(line.substr(0, 2), "1,");
}

}  // namespace
}  // namespace ago
