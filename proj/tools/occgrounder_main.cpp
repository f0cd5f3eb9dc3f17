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
// Command-line entry point. Exit codes: 0 success, 2 usage or config
// problems, 3 data format problems, 4 numerical divergence.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ago/benchmark.hpp"
#include "ago/errors.hpp"
#include "ago/geometry.hpp"
#include "ago/grid.hpp"
#include "ago/grounding.hpp"
#include "ago/io.hpp"
#include "ago/manifest.hpp"
#include "ago/openworld.hpp"
#include "ago/parallel.hpp"
#include "ago/pseudolabel.hpp"
#include "ago/toytrain.hpp"

namespace fs = std::filesystem;

namespace {

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

ago::Criterion parse_criterion(const std::string& name) {
  if (name == "min-entropy") return ago::Criterion::kMinEntropy;
  if (name == "max-confidence") return ago::Criterion::kMaxConfidence;
  if (name == "grounding-only") return ago::Criterion::kGroundingOnly;
  throw ago::ConfigError("unknown criterion '" + name + "'");
}

ago::LogitMode parse_mode(const std::string& name) {
  if (name == "token-mean") return ago::LogitMode::kTokenMean;
  if (name == "subclass-max") return ago::LogitMode::kSubclassMax;
  throw ago::ConfigError("unknown logit mode '" + name + "'");
}

ago::Paradigm parse_paradigm(const std::string& name) {
  if (name == "align-only") return ago::Paradigm::kAlignOnly;
  if (name == "grounding-only") return ago::Paradigm::kGroundingOnly;
  if (name == "grounding-plus-align") return ago::Paradigm::kGroundingPlusAlignShared;
  if (name == "adaptive") return ago::Paradigm::kAdaptive;
  throw ago::ConfigError("unknown paradigm '" + name + "'");
}

const nlohmann::json& require(const nlohmann::json& j, const std::string& key,
                              const std::string& what) {
  if (!j.contains(key)) {
    throw ago::ConfigError(what + " is missing required field '" + key + "'");
  }
  return j.at(key);
}

std::string require_file(const std::string& path, const std::string& what) {
  if (!fs::exists(path)) {
    throw ago::ConfigError("missing " + what + " file: " + path);
  }
  return path;
}

std::vector<std::uint16_t> all_class_ids(std::uint32_t n_cls) {
  std::vector<std::uint16_t> ids;
  for (std::uint32_t c = 0; c < n_cls; ++c) ids.push_back(static_cast<std::uint16_t>(c));
  return ids;
}

int cmd_gen_pseudolabels(const std::string& config_path, int threads) {
  Stopwatch watch;
  const nlohmann::json cfg = ago::load_json(require_file(config_path, "config"));
  ago::RunManifest manifest;
  manifest.command = "gen-pseudolabels";
  manifest.config_digest = ago::sha256_file(config_path);

  ago::PipelineConfig pipeline;
  pipeline.grid = ago::grid_spec_from_json(require(cfg, "grid", "config"));
  pipeline.n_sweep = cfg.value("n_sweep", 1);
  pipeline.n_interval = cfg.value("n_interval", 1);
  pipeline.reference = cfg.value("reference", 0);

  const std::string space_path = require(cfg, "label_space", "config").get<std::string>();
  const ago::LabelSpace space =
      ago::label_space_from_json(ago::load_json(require_file(space_path, "label space")));
  manifest.add_input(space_path);
  pipeline.n_cls = space.n_cls();

  const std::string rig_path = require(cfg, "rig", "config").get<std::string>();
  const ago::CameraRig rig = ago::rig_from_json(ago::load_json(require_file(rig_path, "rig")));
  manifest.add_input(rig_path);

  const auto sweep_paths = require(cfg, "sweeps", "config").get<std::vector<std::string>>();
  const auto mask_paths =
      require(cfg, "masks", "config").get<std::vector<std::vector<std::string>>>();
  if (mask_paths.size() != sweep_paths.size()) {
    throw ago::ConfigError("config lists " + std::to_string(sweep_paths.size()) + " sweeps but " +
                           std::to_string(mask_paths.size()) + " mask sets");
  }
  std::vector<ago::LidarSweep> sweeps;
  std::vector<ago::MaskSet> masks;
  for (std::size_t s = 0; s < sweep_paths.size(); ++s) {
    sweeps.push_back(ago::read_sweep(require_file(sweep_paths[s], "sweep")));
    manifest.add_input(sweep_paths[s]);
    ago::MaskSet set;
    for (const auto& mp : mask_paths[s]) {
      set.per_camera.push_back(ago::read_mask_pgm(require_file(mp, "mask")));
      manifest.add_input(mp);
    }
    masks.push_back(std::move(set));
  }

  const std::string output = require(cfg, "output", "config").get<std::string>();
  const ago::SemanticVoxelGrid grid =
      ago::generate_pseudolabels(pipeline, sweeps, rig, masks, threads);
  ago::write_grid(grid, output);

  manifest.seed = cfg.value("seed", 0);
  manifest.wall_time_ms = watch.ms();
  manifest.write(output + ".manifest.json");
  std::cout << "wrote " << output << "\n";
  return 0;
}

int cmd_infer(const std::string& voxel_path, const std::string& adapted_path,
              const std::string& text_path, const std::string& free_path,
              const std::string& queries_path, const std::string& grid_path,
              const std::string& criterion, const std::string& mode, const std::string& output,
              bool entropy_csv) {
  Stopwatch watch;
  ago::RunManifest manifest;
  manifest.command = entropy_csv ? "report-entropy" : "infer";

  const ago::GridSpec spec =
      ago::grid_spec_from_json(ago::load_json(require_file(grid_path, "grid spec")));
  const ago::LabelSpace queries =
      ago::label_space_from_json(ago::load_json(require_file(queries_path, "query label space")));
  const ago::MatRMd voxel_emb =
      ago::embedding_to_matrix(ago::read_embedding(require_file(voxel_path, "voxel embedding")));
  const ago::MatRMd adapted_emb = ago::embedding_to_matrix(
      ago::read_embedding(require_file(adapted_path, "adapted embedding")));
  const ago::MatRMd text_emb =
      ago::embedding_to_matrix(ago::read_embedding(require_file(text_path, "text embedding")));
  const ago::MatRMd free_emb =
      ago::embedding_to_matrix(ago::read_embedding(require_file(free_path, "free embedding")));
  for (const auto& p : {voxel_path, adapted_path, text_path, free_path, queries_path, grid_path}) {
    manifest.add_input(p);
  }

  if (voxel_emb.rows() != static_cast<Eigen::Index>(spec.n_voxels())) {
    throw ago::ConfigError("voxel embedding rows do not match the grid voxel count");
  }

  ago::SelectorConfig selector;
  selector.criterion = parse_criterion(criterion);
  selector.mode = parse_mode(mode);
  const ago::InferenceResult result =
      ago::infer_occupancy(voxel_emb, adapted_emb, queries, text_emb, free_emb, selector);

  if (entropy_csv) {
    const auto rows =
        ago::class_entropy_report(result.probs_grounding, result.probs_adapted, result.labels);
    std::FILE* out = std::fopen(output.c_str(), "w");
    if (!out) throw ago::ConfigError("cannot open '" + output + "' for writing");
    std::fprintf(out, "class_id,class_name,count,mean_entropy_grounding,mean_entropy_adapted\n");
    for (const auto& row : rows) {
      const std::string name = row.label < queries.n_cls()
                                   ? queries.classes[row.label]
                                   : (row.label == queries.n_cls() ? "free" : "ignore");
      std::fprintf(out, "%u,%s,%llu,%.17g,%.17g\n", row.label, name.c_str(),
                   static_cast<unsigned long long>(row.count), row.mean_entropy_grounding,
                   row.mean_entropy_adapted);
    }
    std::fclose(out);
  } else {
    ago::SemanticVoxelGrid grid(spec, queries.n_cls(), 0);
    grid.labels = result.labels;
    ago::write_grid(grid, output);
    // Sidecar with the per-voxel stream indicator (1 = grounding stream).
    ago::EmbeddingMap indicator;
    indicator.rows = static_cast<std::uint32_t>(result.chose_grounding.size());
    indicator.cols = 1;
    indicator.channels = 1;
    indicator.data.reserve(result.chose_grounding.size());
    for (std::uint8_t c : result.chose_grounding) {
      indicator.data.push_back(static_cast<float>(c));
    }
    ago::write_embedding(indicator, output + ".c.agoe");
  }

  manifest.wall_time_ms = watch.ms();
  manifest.write(output + ".manifest.json");
  std::cout << "wrote " << output << "\n";
  return 0;
}

int cmd_eval(const std::string& pred_path, const std::string& gt_path,
             const std::string& plan_path, const std::string& space_path,
             const std::string& mask_path, const std::string& star_exclude,
             const std::string& output, bool print_table) {
  Stopwatch watch;
  ago::RunManifest manifest;
  manifest.command = "eval";

  const ago::SemanticVoxelGrid pred = ago::read_grid(require_file(pred_path, "prediction"));
  const ago::SemanticVoxelGrid gt = ago::read_grid(require_file(gt_path, "ground truth"));
  manifest.add_input(pred_path);
  manifest.add_input(gt_path);

  ago::LabelSpace space;
  bool have_space = false;
  if (!space_path.empty()) {
    space = ago::label_space_from_json(ago::load_json(require_file(space_path, "label space")));
    manifest.add_input(space_path);
    have_space = true;
  }

  std::vector<std::uint8_t> mask;
  if (!mask_path.empty()) {
    const ago::SemanticVoxelGrid mask_grid = ago::read_grid(require_file(mask_path, "mask"));
    if (!(mask_grid.spec == gt.spec)) {
      throw ago::ConfigError("evaluation mask grid spec does not match the ground truth");
    }
    mask.reserve(mask_grid.labels.size());
    for (std::uint16_t v : mask_grid.labels) mask.push_back(v != 0 ? 1 : 0);
    manifest.add_input(mask_path);
  }

  ago::MetricReport report;
  if (!plan_path.empty()) {
    if (!have_space) {
      throw ago::ConfigError("--plan requires --label-space for class name resolution");
    }
    const ago::StagePlan plan =
        ago::stage_plan_from_json(ago::load_json(require_file(plan_path, "stage plan")));
    manifest.add_input(plan_path);
    report = ago::stage_eval(plan, pred, gt, space);
  } else {
    std::vector<std::uint16_t> star_ids;
    if (!star_exclude.empty()) {
      if (!have_space) {
        throw ago::ConfigError("--star-exclude requires --label-space");
      }
      std::stringstream ss(star_exclude);
      std::string name;
      while (std::getline(ss, name, ',')) {
        const auto idx = space.index_of(name);
        if (!idx) throw ago::ConfigError("--star-exclude class '" + name + "' unknown");
        star_ids.push_back(static_cast<std::uint16_t>(*idx));
      }
    }
    report = ago::iou_report(pred, gt, mask.empty() ? nullptr : &mask, all_class_ids(gt.n_cls),
                             have_space ? &space : nullptr, star_ids);
  }

  ago::save_json(ago::report_to_json(report), output);
  if (print_table) std::cout << ago::report_to_table(report);

  manifest.wall_time_ms = watch.ms();
  manifest.write(output + ".manifest.json");
  return 0;
}

int cmd_toytrain(const std::string& config_path) {
  Stopwatch watch;
  const nlohmann::json cfg = ago::load_json(require_file(config_path, "config"));
  ago::RunManifest manifest;
  manifest.command = "toytrain";
  manifest.config_digest = ago::sha256_file(config_path);

  ago::TrainConfig train_cfg;
  train_cfg.steps = cfg.value("steps", 100);
  train_cfg.lr = cfg.value("lr", 0.5);
  train_cfg.seed = cfg.value("seed", 0);
  train_cfg.paradigm = parse_paradigm(cfg.value("paradigm", "adaptive"));
  train_cfg.noise_per_step = cfg.value("noise_per_step", 10);
  train_cfg.mode = parse_mode(cfg.value("mode", "token-mean"));
  train_cfg.halve_lr_on_plateau = cfg.value("halve_lr_on_plateau", false);
  train_cfg.plateau_window = cfg.value("plateau_window", 25);
  if (cfg.contains("loss_weights")) {
    const auto& w = cfg["loss_weights"];
    train_cfg.weights.grounding = w.value("grounding", 1.0);
    train_cfg.weights.occ = w.value("occ", 1.0);
    train_cfg.weights.align = w.value("align", 1.0);
  }
  manifest.seed = train_cfg.seed;

  ago::ToyModel model;
  ago::ToyData data;
  if (cfg.value("fixture", "") == "separable") {
    std::tie(model, data) = ago::make_separable_fixture();
  } else {
    const std::string labels_path = require(cfg, "labels", "config").get<std::string>();
    const std::string image_path = require(cfg, "image_emb", "config").get<std::string>();
    const std::string visible_path = require(cfg, "visible", "config").get<std::string>();
    const std::string space_path = require(cfg, "label_space", "config").get<std::string>();
    const std::string words_path = require(cfg, "noise_words", "config").get<std::string>();
    data.pseudo_labels = ago::read_grid(require_file(labels_path, "pseudo-labels"));
    data.image_emb =
        ago::embedding_to_matrix(ago::read_embedding(require_file(image_path, "image embedding")));
    const ago::MatRMd vis =
        ago::embedding_to_matrix(ago::read_embedding(require_file(visible_path, "visibility")));
    data.visible.reserve(static_cast<std::size_t>(vis.rows()));
    for (Eigen::Index i = 0; i < vis.rows(); ++i) {
      data.visible.push_back(vis(i, 0) != 0.0 ? 1 : 0);
    }
    const ago::LabelSpace space =
        ago::label_space_from_json(ago::load_json(require_file(space_path, "label space")));
    const auto words = ago::load_word_list(require_file(words_path, "noise words"));
    model = ago::make_toy_model(space, data.pseudo_labels.spec, cfg.value("emb_dim", 16), words,
                                train_cfg.seed, cfg.value("adapter_hidden", 16));
    for (const auto& p : {labels_path, image_path, visible_path, space_path, words_path}) {
      manifest.add_input(p);
    }
  }

  const std::string out_dir = require(cfg, "output_dir", "config").get<std::string>();
  fs::create_directories(out_dir);

  ago::TrainResult result = ago::train(std::move(model), data, train_cfg);

  ago::write_trace_csv(result.trace, out_dir + "/trace.csv");
  ago::write_embedding(ago::embedding_from_matrix(result.model.voxel_table),
                       out_dir + "/voxel_table.agoe");
  ago::write_adapter(result.model.adapter, out_dir + "/adapter.agow");
  const ago::MatRMd adapted = ago::adapter_forward(result.model.adapter, result.model.voxel_table);
  ago::write_embedding(ago::embedding_from_matrix(adapted), out_dir + "/adapted.agoe");
  ago::write_embedding(ago::embedding_from_matrix(result.model.text_emb),
                       out_dir + "/text_emb.agoe");
  ago::write_embedding(ago::embedding_from_matrix(result.model.free_emb),
                       out_dir + "/free_emb.agoe");
  ago::save_json(ago::label_space_to_json(result.model.label_space),
                 out_dir + "/label_space.json");
  ago::save_json(ago::grid_spec_to_json(data.pseudo_labels.spec), out_dir + "/grid.json");

  manifest.wall_time_ms = watch.ms();
  manifest.write(out_dir + "/manifest.json");
  std::cout << "wrote " << out_dir << "/trace.csv (" << result.trace.size() << " steps)\n";
  return 0;
}

int cmd_make_scene(const std::string& config_path) {
  Stopwatch watch;
  const nlohmann::json cfg = ago::load_json(require_file(config_path, "config"));
  ago::RunManifest manifest;
  manifest.command = "make-scene";
  manifest.config_digest = ago::sha256_file(config_path);

  ago::SceneConfig scene_cfg;
  scene_cfg.seed = cfg.value("seed", 1);
  scene_cfg.grid = ago::grid_spec_from_json(require(cfg, "grid", "config"));
  scene_cfg.n_boxes = cfg.value("n_boxes", 4);
  scene_cfg.n_cameras = cfg.value("n_cameras", 2);
  scene_cfg.n_rays = cfg.value("n_rays", 5000);
  scene_cfg.n_sweeps = cfg.value("n_sweeps", 1);
  scene_cfg.image_width = cfg.value("image_width", 96);
  scene_cfg.image_height = cfg.value("image_height", 72);
  scene_cfg.emb_dim = cfg.value("emb_dim", 16);
  scene_cfg.emb_noise = cfg.value("emb_noise", 0.05);
  manifest.seed = scene_cfg.seed;

  const std::string space_path = require(cfg, "label_space", "config").get<std::string>();
  const ago::LabelSpace space =
      ago::label_space_from_json(ago::load_json(require_file(space_path, "label space")));
  manifest.add_input(space_path);

  const std::string out_dir = require(cfg, "output_dir", "config").get<std::string>();
  fs::create_directories(out_dir);

  const ago::SceneData scene = ago::make_synthetic_scene(scene_cfg, space);
  ago::write_grid(scene.gt, out_dir + "/gt.agov");
  ago::save_json(ago::rig_to_json(scene.rig), out_dir + "/rig.json");
  ago::save_json(ago::label_space_to_json(scene.label_space), out_dir + "/label_space.json");
  ago::write_embedding(ago::embedding_from_matrix(scene.class_prototypes),
                       out_dir + "/prototypes.agoe");

  char name[64];
  nlohmann::json sweep_list = nlohmann::json::array();
  nlohmann::json mask_list = nlohmann::json::array();
  for (std::size_t s = 0; s < scene.sweeps.size(); ++s) {
    std::snprintf(name, sizeof(name), "/sweep_%03zu.agop", s);
    ago::write_sweep(scene.sweeps[s], out_dir + name);
    sweep_list.push_back(out_dir + name);
    nlohmann::json cams = nlohmann::json::array();
    for (std::size_t c = 0; c < scene.masks[s].per_camera.size(); ++c) {
      std::snprintf(name, sizeof(name), "/mask_%03zu_cam%zu.pgm", s, c);
      ago::write_mask_pgm(scene.masks[s].per_camera[c], out_dir + name);
      cams.push_back(out_dir + name);
      std::snprintf(name, sizeof(name), "/emb_%03zu_cam%zu.agoe", s, c);
      ago::write_embedding(scene.embeddings[s][c], out_dir + name);
    }
    mask_list.push_back(cams);
  }

  // Ready-to-run pipeline config over the generated files.
  ago::save_json(
      nlohmann::json{{"grid", ago::grid_spec_to_json(scene_cfg.grid)},
                     {"label_space", out_dir + "/label_space.json"},
                     {"rig", out_dir + "/rig.json"},
                     {"sweeps", sweep_list},
                     {"masks", mask_list},
                     {"n_sweep", scene_cfg.n_sweeps},
                     {"n_interval", 1},
                     {"reference", scene_cfg.n_sweeps / 2},
                     {"output", out_dir + "/pseudolabels.agov"}},
      out_dir + "/pseudolabel_config.json");

  manifest.wall_time_ms = watch.ms();
  manifest.write(out_dir + "/manifest.json");
  std::cout << "wrote scene to " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"3D semantic occupancy toolkit: pseudo-labels, grounding math, "
               "open-world inference, and the staged benchmark protocol"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "worker threads (default: OCCGROUNDER_THREADS or 1)");

  std::string config_path;
  auto* gen = app.add_subcommand("gen-pseudolabels", "build a pseudo-label grid from sweeps");
  gen->add_option("--config", config_path, "pipeline config JSON")->required();

  std::string voxel_path, adapted_path, text_path, free_path, queries_path, grid_path;
  std::string criterion = "min-entropy";
  std::string mode = "subclass-max";
  std::string output;
  auto add_infer_options = [&](CLI::App* cmd) {
    cmd->add_option("--voxel-emb", voxel_path, "per-voxel embeddings (AGOE)")->required();
    cmd->add_option("--adapted-emb", adapted_path, "adapted per-voxel embeddings (AGOE)")
        ->required();
    cmd->add_option("--text-emb", text_path, "query text embeddings (AGOE)")->required();
    cmd->add_option("--free-emb", free_path, "free embedding (AGOE, one row)")->required();
    cmd->add_option("--queries", queries_path, "query label space JSON")->required();
    cmd->add_option("--grid", grid_path, "grid spec JSON")->required();
    cmd->add_option("--criterion", criterion, "min-entropy | max-confidence | grounding-only");
    cmd->add_option("--mode", mode, "token-mean | subclass-max");
    cmd->add_option("--output", output, "output path")->required();
  };
  auto* infer = app.add_subcommand("infer", "open-world occupancy inference");
  add_infer_options(infer);
  auto* entropy = app.add_subcommand("report-entropy", "per-class entropy report CSV");
  add_infer_options(entropy);

  std::string pred_path, gt_path, plan_path, space_path, mask_path, star_exclude;
  bool print_table = false;
  auto* eval = app.add_subcommand("eval", "IoU / mIoU evaluation");
  eval->add_option("--pred", pred_path, "prediction grid (AGOV)")->required();
  eval->add_option("--gt", gt_path, "ground-truth grid (AGOV)")->required();
  eval->add_option("--plan", plan_path, "stage plan JSON");
  eval->add_option("--label-space", space_path, "label space JSON for class names");
  eval->add_option("--mask", mask_path, "evaluation mask grid (AGOV, nonzero = evaluate)");
  eval->add_option("--star-exclude", star_exclude, "comma-separated classes excluded from mIoU*");
  eval->add_option("--output", output, "report JSON path")->required();
  eval->add_flag("--table", print_table, "print an aligned text table to stdout");

  auto* toy = app.add_subcommand("toytrain", "desk-scale training loop");
  toy->add_option("--config", config_path, "training config JSON")->required();

  auto* scene = app.add_subcommand("make-scene", "generate a synthetic scene");
  scene->add_option("--config", config_path, "scene config JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_pseudolabels(config_path, threads);
    if (infer->parsed()) {
      return cmd_infer(voxel_path, adapted_path, text_path, free_path, queries_path, grid_path,
                       criterion, mode, output, false);
    }
    if (entropy->parsed()) {
      return cmd_infer(voxel_path, adapted_path, text_path, free_path, queries_path, grid_path,
                       criterion, mode, output, true);
    }
    if (eval->parsed()) {
      return cmd_eval(pred_path, gt_path, plan_path, space_path, mask_path, star_exclude, output,
                      print_table);
    }
    if (toy->parsed()) return cmd_toytrain(config_path);
    if (scene->parsed()) return cmd_make_scene(config_path);
  } catch (const ago::FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 3;
  } catch (const ago::DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return 4;
  } catch (const ago::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ago::ContractError& e) {
    std::cerr << "contract violation: " << e.what() << "\n";
    return 2;
  } catch (const ago::FeasibilityError& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
