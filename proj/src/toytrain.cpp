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

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>

#include <Eigen/Geometry>

#include "ago/benchmark.hpp"
#include "ago/errors.hpp"

namespace ago {

namespace {

// Stable 64-bit string hash (FNV-1a) so phrase embeddings do not depend on
// the standard library's std::hash.
std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

Eigen::RowVectorXd phrase_embedding(const std::string& phrase, int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ fnv1a(phrase));
  std::normal_distribution<double> dist(0.0, 1.0);
  Eigen::RowVectorXd v(dim);
  for (int i = 0; i < dim; ++i) v[i] = dist(rng);
  v /= v.norm();
  return v;
}

// Partial Fisher-Yates draw of k distinct indices from [0, n).
std::vector<int> sample_indices(std::mt19937_64& rng, int n, int k) {
  std::vector<int> pool(n);
  for (int i = 0; i < n; ++i) pool[i] = i;
  k = std::min(k, n);
  for (int i = 0; i < k; ++i) {
    std::uniform_int_distribution<int> pick(i, n - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(k);
  return pool;
}

std::vector<std::uint16_t> predict_labels(const ToyModel& model, LogitMode mode) {
  const Eigen::Index n_text = model.text_emb.rows();
  MatRMd cat(n_text + 1, model.text_emb.cols());
  cat.topRows(n_text) = model.text_emb;
  cat.bottomRows(1) = model.free_emb;
  const TokenGroups groups = make_token_groups(model.label_space, 0);
  const MatRMd sem = semantic_logits(similarity_scores(model.voxel_table, cat), groups, mode);
  std::vector<std::uint16_t> labels(static_cast<std::size_t>(sem.rows()));
  for (Eigen::Index v = 0; v < sem.rows(); ++v) {
    Eigen::Index best = 0;
    sem.row(v).maxCoeff(&best);
    labels[static_cast<std::size_t>(v)] = static_cast<std::uint16_t>(best);
  }
  return labels;
}

}  // namespace

void TrainConfig::validate() const {
  if (steps < 1) throw ConfigError("training needs steps >= 1");
  if (!(lr >= 0.0)) throw ConfigError("learning rate must be >= 0");
  if (noise_per_step < 0) throw ConfigError("noise_per_step must be >= 0");
  if (plateau_window < 1) throw ConfigError("plateau_window must be >= 1");
}

double training_miou(const ToyModel& model, const ToyData& data, LogitMode mode) {
  const std::vector<std::uint16_t> pred_labels = predict_labels(model, mode);
  SemanticVoxelGrid pred(data.pseudo_labels.spec, model.label_space.n_cls(), kIgnoreId);
  for (std::size_t v = 0; v < pred_labels.size(); ++v) pred.labels[v] = pred_labels[v];
  std::vector<std::uint16_t> class_ids;
  for (std::uint32_t c = 0; c < model.label_space.n_cls(); ++c) {
    class_ids.push_back(static_cast<std::uint16_t>(c));
  }
  return iou_report(pred, data.pseudo_labels, nullptr, class_ids).miou;
}

TrainResult train(ToyModel model, const ToyData& data, const TrainConfig& cfg) {
  cfg.validate();
  model.label_space.validate();
  const std::uint32_t n_cls = model.label_space.n_cls();
  if (data.pseudo_labels.n_cls != n_cls) {
    throw ConfigError("pseudo-label grid and model disagree on the class count");
  }
  if (model.voxel_table.rows() != static_cast<Eigen::Index>(data.pseudo_labels.labels.size())) {
    throw ConfigError("voxel table rows do not match the pseudo-label grid");
  }
  const int n_noise = std::min<int>(cfg.noise_per_step, static_cast<int>(model.noise_pool.rows()));
  const TokenGroups groups = make_token_groups(model.label_space, n_noise);
  const Eigen::Index n_text = model.text_emb.rows();

  std::mt19937_64 rng(cfg.seed);
  double lr = cfg.lr;
  double best_loss = std::numeric_limits<double>::infinity();
  int stalled = 0;

  TrainResult out;
  out.trace.reserve(static_cast<std::size_t>(cfg.steps));
  for (int step = 0; step < cfg.steps; ++step) {
    MatRMd cat(n_text + n_noise + 1, model.text_emb.cols());
    cat.topRows(n_text) = model.text_emb;
    const std::vector<int> draw = sample_indices(rng, static_cast<int>(model.noise_pool.rows()),
                                                 n_noise);
    for (int i = 0; i < n_noise; ++i) cat.row(n_text + i) = model.noise_pool.row(draw[i]);
    cat.bottomRows(1) = model.free_emb;

    MatRMd table_grad = MatRMd::Zero(model.voxel_table.rows(), model.voxel_table.cols());
    LossBreakdown parts;

    if (cfg.paradigm != Paradigm::kAlignOnly) {
      const MatRMd scores = similarity_scores(model.voxel_table, cat);
      const MatRMd sem = semantic_logits(scores, groups, cfg.mode);
      const LossGrad ce = ce_loss(sem, data.pseudo_labels.labels, n_cls, n_noise);
      const LossGrad lov = lovasz_softmax_loss(sem, data.pseudo_labels.labels, n_cls, n_noise);
      const LossGrad occ = occupancy_loss(sem, data.pseudo_labels.labels, n_cls, n_noise);
      parts.ce = ce.loss;
      parts.lovasz = lov.loss;
      parts.occ = occ.loss;
      const MatRMd grad_sem = cfg.weights.grounding * (ce.grad + lov.grad).eval() +
                              cfg.weights.occ * occ.grad;
      const MatRMd grad_scores = semantic_logits_backward(scores, groups, cfg.mode, grad_sem);
      table_grad += grad_scores * cat;
    }

    AdapterGrads adapter_grad;
    bool have_adapter_grad = false;
    if (cfg.paradigm != Paradigm::kGroundingOnly) {
      if (cfg.paradigm == Paradigm::kAdaptive) {
        const MatRMd adapted = adapter_forward(model.adapter, model.voxel_table);
        AlignmentResult ar = alignment_loss(adapted, data.image_emb, data.visible);
        parts.align = ar.loss;
        adapter_grad = adapter_backward(model.adapter, model.voxel_table,
                                        MatRMd(cfg.weights.align * ar.grad));
        table_grad += adapter_grad.x;
        have_adapter_grad = true;
      } else {
        AlignmentResult ar = alignment_loss(model.voxel_table, data.image_emb, data.visible);
        parts.align = ar.loss;
        table_grad += cfg.weights.align * ar.grad;
      }
    }

    const double total = total_loss(parts, cfg.weights);
    if (!std::isfinite(total)) {
      throw DivergenceError("training loss turned non-finite", step);
    }

    model.voxel_table -= lr * table_grad;
    if (have_adapter_grad) {
      model.adapter.w1 -= lr * adapter_grad.w1;
      model.adapter.b1 -= lr * adapter_grad.b1;
      model.adapter.w2 -= lr * adapter_grad.w2;
      model.adapter.b2 -= lr * adapter_grad.b2;
    }

    if (cfg.halve_lr_on_plateau) {
      if (total < best_loss - 1e-12) {
        best_loss = total;
        stalled = 0;
      } else if (++stalled >= cfg.plateau_window) {
        lr *= 0.5;
        stalled = 0;
      }
    }

    TraceRow row;
    row.step = step;
    row.l_ce = parts.ce;
    row.l_lovasz = parts.lovasz;
    row.l_occ = parts.occ;
    row.l_align = parts.align;
    row.train_miou = training_miou(model, data, cfg.mode);
    out.trace.push_back(row);
  }
  out.model = std::move(model);
  return out;
}

ToyModel make_toy_model(const LabelSpace& space, const GridSpec& grid, int emb_dim,
                        const std::vector<std::string>& noise_words, std::uint64_t seed,
                        int adapter_hidden) {
  space.validate();
  grid.validate();
  ToyModel model;
  model.label_space = space;
  model.text_emb.resize(space.total_prompts(), emb_dim);
  Eigen::Index row = 0;
  for (const auto& prompts : space.subclass_prompts) {
    for (const auto& phrase : prompts) {
      model.text_emb.row(row++) = phrase_embedding(phrase, emb_dim, seed);
    }
  }
  model.noise_pool.resize(static_cast<Eigen::Index>(noise_words.size()), emb_dim);
  for (std::size_t i = 0; i < noise_words.size(); ++i) {
    model.noise_pool.row(static_cast<Eigen::Index>(i)) =
        phrase_embedding(noise_words[i], emb_dim, seed);
  }
  model.free_emb = phrase_embedding("\x01free", emb_dim, seed);
  std::mt19937_64 rng(seed + 0x9e3779b97f4a7c15ull);
  std::normal_distribution<double> dist(0.0, 0.01);
  model.voxel_table.resize(static_cast<Eigen::Index>(grid.n_voxels()), emb_dim);
  for (Eigen::Index i = 0; i < model.voxel_table.size(); ++i) {
    model.voxel_table.data()[i] = dist(rng);
  }
  model.adapter = AdapterWeights::seeded(emb_dim, adapter_hidden, seed + 17, 0.1);
  return model;
}

std::pair<ToyModel, ToyData> make_separable_fixture() {
  constexpr int kDim = 8;
  LabelSpace space;
  space.classes = {"block_a", "block_b", "block_c"};
  space.subclass_prompts = {{"block_a"}, {"block_b"}, {"block_c"}};

  GridSpec grid;
  grid.origin = Vec3f(0, 0, 0);
  grid.voxel_size = Vec3f(1, 1, 1);
  grid.dims = Vec3i(4, 4, 2);

  ToyModel model;
  model.label_space = space;
  model.text_emb = MatRMd::Zero(3, kDim);
  model.text_emb(0, 0) = 1.0;
  model.text_emb(1, 1) = 1.0;
  model.text_emb(2, 2) = 1.0;
  model.free_emb = MatRMd::Zero(1, kDim);
  model.free_emb(0, 3) = 1.0;
  model.noise_pool = MatRMd::Zero(10, kDim);
  std::mt19937_64 noise_rng(42);
  std::normal_distribution<double> noise_dist(0.0, 1.0);
  for (Eigen::Index i = 0; i < 4; ++i) model.noise_pool(i, 4 + i) = 1.0;
  for (Eigen::Index i = 4; i < 10; ++i) {
    for (int d = 0; d < kDim; ++d) model.noise_pool(i, d) = noise_dist(noise_rng);
    model.noise_pool.row(i) /= model.noise_pool.row(i).norm();
  }

  ToyData data;
  data.pseudo_labels = SemanticVoxelGrid(grid, 3, kIgnoreId);
  const std::uint16_t free = data.pseudo_labels.free_id();
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      for (int k = 0; k < 2; ++k) {
        std::uint16_t label;
        if (i < 2 && j < 2) {
          label = 0;
        } else if (i < 2) {
          label = 1;
        } else if (j < 2) {
          label = 2;
        } else {
          label = free;
        }
        data.pseudo_labels.at(Vec3i(i, j, k)) = label;
      }
    }
  }
  data.pseudo_labels.at(Vec3i(3, 3, 1)) = kIgnoreId;

  const Eigen::Index n = static_cast<Eigen::Index>(grid.n_voxels());
  data.image_emb = MatRMd::Zero(n, kDim);
  data.visible.assign(static_cast<std::size_t>(n), 0);
  for (Eigen::Index v = 0; v < n; ++v) {
    const std::uint16_t label = data.pseudo_labels.labels[static_cast<std::size_t>(v)];
    if (label < 3) {
      data.image_emb.row(v) = model.text_emb.row(label);
      data.visible[static_cast<std::size_t>(v)] = 1;
    } else if (label == free) {
      data.image_emb.row(v) = model.free_emb.row(0);
    }
  }

  std::mt19937_64 table_rng(7);
  std::normal_distribution<double> table_dist(0.0, 0.01);
  model.voxel_table.resize(n, kDim);
  for (Eigen::Index i = 0; i < model.voxel_table.size(); ++i) {
    model.voxel_table.data()[i] = table_dist(table_rng);
  }
  model.adapter = AdapterWeights::seeded(kDim, kDim, 11, 0.1);
  return {std::move(model), std::move(data)};
}

void write_trace_csv(const std::vector<TraceRow>& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  out << "step,l_ce,l_lovasz,l_occ,l_align,train_miou\n";
  char line[256];
  for (const auto& row : trace) {
    std::snprintf(line, sizeof(line), "%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", row.step, row.l_ce,
                  row.l_lovasz, row.l_occ, row.l_align, row.train_miou);
    out << line;
  }
  if (!out) throw ConfigError("write to '" + path + "' failed");
}

std::vector<std::string> load_word_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open word list '" + path + "'");
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty() && line[0] != '#') words.push_back(line);
  }
  if (words.empty()) throw ConfigError("word list '" + path + "' is empty");
  return words;
}

void SceneConfig::validate() const {
  grid.validate();
  if (n_boxes < 0) throw ConfigError("n_boxes must be >= 0");
  if (n_cameras < 1 || n_cameras > 8) throw ConfigError("n_cameras must be in [1, 8]");
  if (n_rays < 1) throw ConfigError("n_rays must be >= 1");
  if (n_sweeps < 1) throw ConfigError("n_sweeps must be >= 1");
  if (image_width < 8 || image_height < 8) throw ConfigError("images must be at least 8x8");
  if (emb_dim < 1) throw ConfigError("emb_dim must be >= 1");
}

namespace {

struct SceneBox {
  Vec3d lo;
  Vec3d hi;
  std::uint16_t cls = 0;
};

struct SceneGeometry {
  std::vector<SceneBox> boxes;
  double ground_z = 0.0;
  std::uint16_t ground_cls = 0;
};

// Entry distance of a ray into an axis-aligned box, if any.
std::optional<double> ray_box(const Vec3d& o, const Vec3d& d, const SceneBox& box) {
  double t0 = 1e-9;
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-15) {
      if (o[a] < box.lo[a] || o[a] >= box.hi[a]) return std::nullopt;
      continue;
    }
    double ta = (box.lo[a] - o[a]) / d[a];
    double tb = (box.hi[a] - o[a]) / d[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (t0 > t1) return std::nullopt;
  return t0;
}

struct SceneHit {
  double t = 0.0;
  std::uint16_t cls = 0;
};

std::optional<SceneHit> trace_scene(const SceneGeometry& geo, const Vec3d& o, const Vec3d& d,
                                    double max_t) {
  SceneHit best{max_t, 0};
  bool found = false;
  if (d.z() < -1e-12) {
    const double t = (geo.ground_z - o.z()) / d.z();
    if (t > 1e-9 && t < best.t) {
      best = {t, geo.ground_cls};
      found = true;
    }
  }
  for (const auto& box : geo.boxes) {
    const auto t = ray_box(o, d, box);
    if (t && *t < best.t) {
      best = {*t, box.cls};
      found = true;
    }
  }
  if (!found) return std::nullopt;
  return best;
}

}  // namespace

SceneData make_synthetic_scene(const SceneConfig& cfg, const LabelSpace& space) {
  cfg.validate();
  space.validate();
  std::mt19937_64 rng(cfg.seed);

  SceneData scene;
  scene.label_space = space;
  const std::uint32_t n_cls = space.n_cls();
  const GridSpec& grid = cfg.grid;
  const Vec3d vs = grid.voxel_size.cast<double>();
  const Vec3d origin = grid.origin.cast<double>();

  SceneGeometry geo;
  geo.ground_cls = 0;
  geo.ground_z = origin.z() + 0.6 * vs.z();

  // Floating boxes whose faces sit strictly inside voxels (0.2 offsets) and
  // whose bases stay above the ground row, so no voxel mixes two classes.
  const int base_row = 1;
  std::uniform_int_distribution<int> cx(2, grid.dims.x() - 3);
  std::uniform_int_distribution<int> cy(2, grid.dims.y() - 3);
  std::uniform_int_distribution<int> half(0, 1);
  std::uniform_int_distribution<int> tall(1, std::max(1, grid.dims.z() - 5));
  int attempts = 0;
  for (int b = 0; b < cfg.n_boxes && n_cls > 1 && attempts < 2000; ++attempts) {
    const int i = cx(rng);
    const int j = cy(rng);
    const int hx = half(rng);
    const int hy = half(rng);
    const int hz = tall(rng);
    SceneBox box;
    box.lo = Vec3d(origin.x() + (i - hx + 0.2) * vs.x(), origin.y() + (j - hy + 0.2) * vs.y(),
                   origin.z() + (base_row + 0.3) * vs.z());
    box.hi = Vec3d(origin.x() + (i + hx + 0.8) * vs.x(), origin.y() + (j + hy + 0.8) * vs.y(),
                   origin.z() + (base_row + hz + 0.7) * vs.z());
    box.cls = static_cast<std::uint16_t>(1 + (b % (n_cls - 1)));
    bool clear = true;
    for (const auto& other : geo.boxes) {
      // Keep at least one empty voxel between footprints.
      if (box.lo.x() < other.hi.x() + vs.x() && other.lo.x() < box.hi.x() + vs.x() &&
          box.lo.y() < other.hi.y() + vs.y() && other.lo.y() < box.hi.y() + vs.y()) {
        clear = false;
        break;
      }
    }
    // Keep the sensor path clear (it drifts a little between sweeps).
    const double sx = origin.x() + grid.dims.x() * vs.x() * 0.5;
    const double sy = origin.y() + grid.dims.y() * vs.y() * 0.5;
    if (box.lo.x() - 2 * vs.x() < sx && sx < box.hi.x() + 2 * vs.x() &&
        box.lo.y() - 2 * vs.y() < sy && sy < box.hi.y() + 2 * vs.y()) {
      clear = false;
    }
    if (clear) {
      geo.boxes.push_back(box);
      ++b;
    }
  }

  // Analytic ground truth: boxes first, then the solid ground slab.
  scene.gt = SemanticVoxelGrid(grid, n_cls, free_id_for(n_cls));
  for (int i = 0; i < grid.dims.x(); ++i) {
    for (int j = 0; j < grid.dims.y(); ++j) {
      for (int k = 0; k < grid.dims.z(); ++k) {
        const Vec3d lo = origin + Vec3d(i * vs.x(), j * vs.y(), k * vs.z());
        const Vec3d hi = lo + vs;
        std::uint16_t label = scene.gt.free_id();
        for (const auto& box : geo.boxes) {
          if (lo.x() < box.hi.x() && box.lo.x() < hi.x() && lo.y() < box.hi.y() &&
              box.lo.y() < hi.y() && lo.z() < box.hi.z() && box.lo.z() < hi.z()) {
            label = box.cls;
            break;
          }
        }
        if (label == scene.gt.free_id() && lo.z() < geo.ground_z) {
          label = geo.ground_cls;
        }
        scene.gt.at(Vec3i(i, j, k)) = label;
      }
    }
  }

  // Co-located cameras and LiDAR at the grid center, above every box top.
  const Vec3d sensor_ego(origin.x() + grid.dims.x() * vs.x() * 0.5,
                         origin.y() + grid.dims.y() * vs.y() * 0.5,
                         origin.z() + grid.dims.z() * vs.z() * 0.72);
  const double pitch = 0.45;  // radians, downward
  for (int c = 0; c < cfg.n_cameras; ++c) {
    CameraModel cam;
    const double yaw =
        2.0 * std::numbers::pi * c / cfg.n_cameras + 0.3;
    const Vec3d forward(std::cos(yaw) * std::cos(pitch), std::sin(yaw) * std::cos(pitch),
                        -std::sin(pitch));
    const Vec3d right = Vec3d(forward.y(), -forward.x(), 0.0).normalized();
    const Vec3d down = forward.cross(right);
    Mat3d cam_to_ego;
    cam_to_ego.col(0) = right;
    cam_to_ego.col(1) = down;
    cam_to_ego.col(2) = forward;
    cam.ego_to_camera.rotation = cam_to_ego.transpose();
    cam.ego_to_camera.translation = -(cam_to_ego.transpose() * sensor_ego);
    cam.intrinsics = Mat3d::Identity();
    cam.intrinsics(0, 0) = cfg.image_width / 2.0;  // ~90 degree field of view
    cam.intrinsics(1, 1) = cfg.image_width / 2.0;
    cam.intrinsics(0, 2) = cfg.image_width / 2.0;
    cam.intrinsics(1, 2) = cfg.image_height / 2.0;
    cam.width = cfg.image_width;
    cam.height = cfg.image_height;
    cam.validate();
    scene.rig.cameras.push_back(cam);
  }

  scene.class_prototypes.resize(n_cls, cfg.emb_dim);
  for (std::uint32_t c = 0; c < n_cls; ++c) {
    scene.class_prototypes.row(c) = phrase_embedding(space.classes[c], cfg.emb_dim, cfg.seed);
  }

  const double max_range = 4.0 * (grid.dims.cast<double>().cwiseProduct(vs)).norm();
  const double hit_nudge = 1e-4 * vs.minCoeff();  // push returns into the surface

  const int rays_per_sweep = std::max(1, cfg.n_rays / cfg.n_sweeps);
  std::normal_distribution<double> emb_noise(0.0, cfg.emb_noise);
  // The world frame coincides with the key sweep's ego frame, so the grid
  // (and the analytic ground truth) sit in the reference frame the
  // pseudo-label pipeline aggregates into.
  const int key = cfg.n_sweeps / 2;
  for (int s = 0; s < cfg.n_sweeps; ++s) {
    LidarSweep sweep;
    sweep.timestamp_us = 1000000ull * static_cast<std::uint64_t>(s);
    sweep.sensor_to_ego.translation = sensor_ego;
    const double ego_yaw = 0.04 * (s - key);
    sweep.ego_to_world.rotation =
        Eigen::AngleAxisd(ego_yaw, Vec3d::UnitZ()).toRotationMatrix();
    sweep.ego_to_world.translation = Vec3d(0.35 * (s - key), 0.15 * (s - key), 0.0);

    // Masks and embeddings from per-pixel center rays.
    MaskSet masks;
    std::vector<EmbeddingMap> maps;
    for (int c = 0; c < cfg.n_cameras; ++c) {
      const CameraModel& cam = scene.rig.cameras[c];
      const Pose cam_to_ego = cam.ego_to_camera.inverse();
      const Pose cam_to_world = sweep.ego_to_world.compose(cam_to_ego);
      MaskImage mask(cfg.image_height, cfg.image_width);
      EmbeddingMap map;
      map.rows = static_cast<std::uint32_t>(cfg.image_height);
      map.cols = static_cast<std::uint32_t>(cfg.image_width);
      map.channels = static_cast<std::uint32_t>(cfg.emb_dim);
      map.data.assign(static_cast<std::size_t>(cfg.image_height) * cfg.image_width * cfg.emb_dim,
                      0.0f);
      for (int py = 0; py < cfg.image_height; ++py) {
        for (int px = 0; px < cfg.image_width; ++px) {
          const Vec3d dir_cam((px - cam.intrinsics(0, 2)) / cam.intrinsics(0, 0),
                              (py - cam.intrinsics(1, 2)) / cam.intrinsics(1, 1), 1.0);
          const Vec3d dir = (cam_to_world.rotation * dir_cam).normalized();
          const auto hit = trace_scene(geo, cam_to_world.translation, dir, max_range);
          if (hit) {
            mask(py, px) = hit->cls;
            float* e = map.data.data() +
                       (static_cast<std::size_t>(py) * cfg.image_width + px) * cfg.emb_dim;
            for (int d = 0; d < cfg.emb_dim; ++d) {
              e[d] = static_cast<float>(scene.class_prototypes(hit->cls, d) + emb_noise(rng));
            }
          } else {
            mask(py, px) = kIgnoreId;
          }
        }
      }
      masks.per_camera.push_back(std::move(mask));
      maps.push_back(std::move(map));
    }
    scene.masks.push_back(std::move(masks));
    scene.embeddings.push_back(std::move(maps));

    // LiDAR returns through camera pixel centers so every return carries a
    // consistent mask label. Border pixels are skipped: a return created on
    // the u = 0 edge can re-project to -1e-7 after f32 quantization and
    // fall outside the image.
    std::uniform_int_distribution<int> pick_cam(0, cfg.n_cameras - 1);
    std::uniform_int_distribution<int> pick_px(1, cfg.image_width - 2);
    std::uniform_int_distribution<int> pick_py(1, cfg.image_height - 2);
    std::vector<Vec3d> returns;
    const Vec3d sensor_world = sweep.ego_to_world.apply(sensor_ego);
    for (int r = 0; r < rays_per_sweep; ++r) {
      const int c = pick_cam(rng);
      const int px = pick_px(rng);
      const int py = pick_py(rng);
      const CameraModel& cam = scene.rig.cameras[c];
      const Pose cam_to_world = sweep.ego_to_world.compose(cam.ego_to_camera.inverse());
      const Vec3d dir_cam((px - cam.intrinsics(0, 2)) / cam.intrinsics(0, 0),
                          (py - cam.intrinsics(1, 2)) / cam.intrinsics(1, 1), 1.0);
      const Vec3d dir = (cam_to_world.rotation * dir_cam).normalized();
      const auto hit = trace_scene(geo, sensor_world, dir, max_range);
      if (!hit) continue;
      returns.push_back(sensor_world + (hit->t + hit_nudge) * dir);
    }
    sweep.points.resize(static_cast<Eigen::Index>(returns.size()), 3);
    const Pose world_to_sensor =
        sweep.ego_to_world.compose(sweep.sensor_to_ego).inverse();
    for (std::size_t i = 0; i < returns.size(); ++i) {
      sweep.points.row(static_cast<Eigen::Index>(i)) =
          world_to_sensor.apply(returns[i]).cast<float>().transpose();
    }
    scene.sweeps.push_back(std::move(sweep));
  }
  return scene;
}

}  // namespace ago
