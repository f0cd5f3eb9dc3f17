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

#include "ago/benchmark.hpp"

#include <algorithm>
#include <cstdio>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ago/errors.hpp"

namespace ago {

MetricReport iou_report(const SemanticVoxelGrid& pred, const SemanticVoxelGrid& gt,
                        const std::vector<std::uint8_t>* eval_mask,
                        const std::vector<std::uint16_t>& class_ids, const LabelSpace* names,
                        const std::vector<std::uint16_t>& star_exclude) {
  if (pred.spec != gt.spec) {
    throw ConfigError("pred and gt grids have different specs");
  }
  if (eval_mask && eval_mask->size() != gt.labels.size()) {
    throw ConfigError("evaluation mask size does not match the grid");
  }

  std::unordered_map<std::uint16_t, std::size_t> slot;
  MetricReport report;
  report.per_class.reserve(class_ids.size());
  for (std::uint16_t id : class_ids) {
    if (slot.count(id)) throw ConfigError("class id listed twice in the class set");
    slot[id] = report.per_class.size();
    ClassMetric m;
    m.id = id;
    if (names && id < names->n_cls()) m.name = names->classes[id];
    report.per_class.push_back(m);
  }

  for (std::size_t v = 0; v < gt.labels.size(); ++v) {
    const std::uint16_t g = gt.labels[v];
    if (g == kIgnoreId) {
      ++report.ignored_voxels;
      continue;
    }
    if (eval_mask && !(*eval_mask)[v]) continue;
    ++report.evaluated_voxels;
    const std::uint16_t p = pred.labels[v];
    const auto gs = slot.find(g);
    const auto ps = slot.find(p);
    if (gs != slot.end() && ps != slot.end() && g == p) {
      ++report.per_class[gs->second].tp;
    } else {
      if (gs != slot.end()) ++report.per_class[gs->second].fn;
      if (ps != slot.end()) ++report.per_class[ps->second].fp;
    }
  }

  const std::set<std::uint16_t> star(star_exclude.begin(), star_exclude.end());
  double sum = 0.0;
  int scored = 0;
  double star_sum = 0.0;
  int star_scored = 0;
  for (auto& m : report.per_class) {
    const std::uint64_t denom = m.tp + m.fp + m.fn;
    m.scored = denom > 0;
    m.iou = m.scored ? static_cast<double>(m.tp) / static_cast<double>(denom) : 0.0;
    if (m.scored) {
      sum += m.iou;
      ++scored;
      if (!star.count(m.id)) {
        star_sum += m.iou;
        ++star_scored;
      }
    }
  }
  report.miou = scored > 0 ? sum / scored : 0.0;
  if (!star_exclude.empty()) {
    report.miou_star = star_scored > 0 ? star_sum / star_scored : 0.0;
  }
  return report;
}

SemanticVoxelGrid remap(const SemanticVoxelGrid& grid,
                        const std::unordered_map<std::uint16_t, std::uint16_t>& map,
                        std::uint32_t target_n_cls, bool unmapped_to_ignore) {
  const std::uint16_t src_free = grid.free_id();
  const std::uint16_t dst_free = free_id_for(target_n_cls);
  for (const auto& [from, to] : map) {
    if (from >= grid.n_cls) {
      throw ConfigError("remap source id " + std::to_string(from) +
                        " is not a semantic class of the input grid");
    }
    if (to >= target_n_cls) {
      throw ConfigError("remap target id " + std::to_string(to) +
                        " outside the target label space");
    }
  }
  SemanticVoxelGrid out;
  out.spec = grid.spec;
  out.n_cls = target_n_cls;
  out.labels.resize(grid.labels.size());
  for (std::size_t v = 0; v < grid.labels.size(); ++v) {
    const std::uint16_t l = grid.labels[v];
    if (l == kIgnoreId) {
      out.labels[v] = kIgnoreId;
    } else if (l == src_free) {
      out.labels[v] = dst_free;
    } else if (const auto it = map.find(l); it != map.end()) {
      out.labels[v] = it->second;
    } else if (unmapped_to_ignore) {
      out.labels[v] = kIgnoreId;
    } else {
      if (l >= target_n_cls) {
        throw ConfigError("label " + std::to_string(l) +
                          " passes through but does not exist in the target space");
      }
      out.labels[v] = l;
    }
  }
  return out;
}

std::unordered_map<std::uint16_t, std::uint16_t> supercategory_id_map(const LabelSpace& fine,
                                                                      const LabelSpace& coarse) {
  fine.validate();
  std::unordered_map<std::uint16_t, std::uint16_t> map;
  // Supercategory members are indices into the fine space's own class list.
  for (const auto& [coarse_name, members] : fine.supercategories) {
    const auto coarse_idx = coarse.index_of(coarse_name);
    if (!coarse_idx) {
      throw ConfigError("supercategory '" + coarse_name + "' is not a class of the target space");
    }
    for (int member : members) {
      map[static_cast<std::uint16_t>(member)] = static_cast<std::uint16_t>(*coarse_idx);
    }
  }
  // Ungrouped fine classes resolve by name when the target space carries them.
  for (std::uint32_t i = 0; i < fine.n_cls(); ++i) {
    if (map.count(static_cast<std::uint16_t>(i))) continue;
    if (const auto idx = coarse.index_of(fine.classes[i])) {
      map[static_cast<std::uint16_t>(i)] = static_cast<std::uint16_t>(*idx);
    }
  }
  return map;
}

FewshotResult fewshot_sample(const std::vector<std::vector<std::uint16_t>>& inventory,
                             std::size_t k, std::uint64_t seed) {
  // Dataset-wide frequency and candidate lists per class.
  std::map<std::uint16_t, std::vector<std::size_t>> candidates;
  for (std::size_t s = 0; s < inventory.size(); ++s) {
    std::set<std::uint16_t> uniq(inventory[s].begin(), inventory[s].end());
    for (std::uint16_t c : uniq) candidates[c].push_back(s);
  }
  std::vector<std::uint16_t> deficient;
  for (const auto& [c, samples] : candidates) {
    if (samples.size() < k) deficient.push_back(c);
  }
  if (!deficient.empty()) {
    std::ostringstream msg;
    msg << "few-shot k=" << k << " infeasible for classes:";
    for (std::uint16_t c : deficient) msg << " " << c;
    throw FeasibilityError(msg.str());
  }

  // Ascending frequency, ties by lower class id (map iteration order).
  std::vector<std::uint16_t> order;
  for (const auto& [c, samples] : candidates) order.push_back(c);
  std::stable_sort(order.begin(), order.end(), [&](std::uint16_t a, std::uint16_t b) {
    return candidates[a].size() < candidates[b].size();
  });

  std::mt19937_64 rng(seed);
  std::set<std::size_t> chosen;
  std::map<std::uint16_t, std::size_t> counts;
  for (std::uint16_t c : order) counts[c] = 0;

  for (std::uint16_t c : order) {
    std::vector<std::size_t> pool;
    for (std::size_t s : candidates[c]) {
      if (!chosen.count(s)) pool.push_back(s);
    }
    while (counts[c] < k) {
      if (pool.empty()) {
        throw FeasibilityError("few-shot cover exhausted candidates for class " +
                               std::to_string(c));
      }
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      const std::size_t at = pick(rng);
      const std::size_t sample = pool[at];
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(at));
      chosen.insert(sample);
      std::set<std::uint16_t> uniq(inventory[sample].begin(), inventory[sample].end());
      for (std::uint16_t cc : uniq) ++counts[cc];
    }
  }

  FewshotResult out;
  out.selected.assign(chosen.begin(), chosen.end());
  out.counts = std::move(counts);
  return out;
}

void StagePlan::validate() const {
  std::set<std::string> k_set(known.begin(), known.end());
  for (const auto& u : unknown) {
    if (k_set.count(u)) {
      throw ConfigError("class '" + u + "' listed as both known and unknown");
    }
  }
  if (stage == Stage::kFewShot && (k < 1 || repeats < 1)) {
    throw ConfigError("few-shot stage requires k >= 1 and repeats >= 1");
  }
  std::set<std::string> claimed;
  for (const auto& [coarse, members] : supercategories) {
    for (const auto& m : members) {
      if (!claimed.insert(m).second) {
        throw ConfigError("class '" + m + "' appears in two supercategories");
      }
    }
  }
}

MetricReport stage_eval(const StagePlan& plan, const SemanticVoxelGrid& pred,
                        const SemanticVoxelGrid& gt, const LabelSpace& space) {
  plan.validate();
  // Dissolve supercategory names into their fine constituents for the
  // zero-shot and few-shot stages; the constituents score as unknown.
  std::vector<std::string> known_names;
  std::vector<std::string> unknown_names;
  const bool split = plan.stage != Stage::kPretrain;
  for (const auto& name : plan.known) {
    const auto super = plan.supercategories.find(name);
    if (split && super != plan.supercategories.end()) {
      for (const auto& member : super->second) unknown_names.push_back(member);
    } else {
      known_names.push_back(name);
    }
  }
  for (const auto& name : plan.unknown) unknown_names.push_back(name);

  auto resolve = [&](const std::vector<std::string>& names) {
    std::vector<std::uint16_t> ids;
    for (const auto& name : names) {
      const auto idx = space.index_of(name);
      if (!idx) {
        throw ConfigError("stage class '" + name + "' is not part of the evaluation space");
      }
      ids.push_back(static_cast<std::uint16_t>(*idx));
    }
    return ids;
  };
  const std::vector<std::uint16_t> known_ids = resolve(known_names);
  const std::vector<std::uint16_t> unknown_ids = resolve(unknown_names);

  std::vector<std::uint16_t> all_ids = known_ids;
  all_ids.insert(all_ids.end(), unknown_ids.begin(), unknown_ids.end());
  MetricReport report = iou_report(pred, gt, nullptr, all_ids, &space);

  const std::set<std::uint16_t> known_set(known_ids.begin(), known_ids.end());
  double k_sum = 0.0, u_sum = 0.0;
  int k_n = 0, u_n = 0;
  for (auto& m : report.per_class) {
    m.known = known_set.count(m.id) > 0;
    if (!m.scored) continue;
    if (m.known) {
      k_sum += m.iou;
      ++k_n;
    } else {
      u_sum += m.iou;
      ++u_n;
    }
  }
  report.known_miou = k_n > 0 ? k_sum / k_n : 0.0;
  report.unknown_miou = u_n > 0 ? u_sum / u_n : 0.0;
  return report;
}

nlohmann::json report_to_json(const MetricReport& report) {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& m : report.per_class) {
    classes.push_back({{"id", m.id},
                       {"name", m.name},
                       {"tp", m.tp},
                       {"fp", m.fp},
                       {"fn", m.fn},
                       {"scored", m.scored},
                       {"iou", m.iou},
                       {"known", m.known}});
  }
  nlohmann::json j{{"per_class", classes},
                   {"miou", report.miou},
                   {"evaluated_voxels", report.evaluated_voxels},
                   {"ignored_voxels", report.ignored_voxels}};
  if (report.miou_star) j["miou_star"] = *report.miou_star;
  if (report.known_miou) j["known_miou"] = *report.known_miou;
  if (report.unknown_miou) j["unknown_miou"] = *report.unknown_miou;
  return j;
}

std::string report_to_table(const MetricReport& report) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-24s %6s %10s %10s %10s %8s\n", "class", "id", "tp", "fp",
                "fn", "iou");
  out << line;
  for (const auto& m : report.per_class) {
    if (m.scored) {
      std::snprintf(line, sizeof(line), "%-24s %6u %10llu %10llu %10llu %8.4f\n",
                    m.name.empty() ? "?" : m.name.c_str(), m.id,
                    static_cast<unsigned long long>(m.tp), static_cast<unsigned long long>(m.fp),
                    static_cast<unsigned long long>(m.fn), m.iou);
    } else {
      std::snprintf(line, sizeof(line), "%-24s %6u %10s %10s %10s %8s\n",
                    m.name.empty() ? "?" : m.name.c_str(), m.id, "-", "-", "-", "n/a");
    }
    out << line;
  }
  std::snprintf(line, sizeof(line), "%-24s %53.4f\n", "mIoU", report.miou);
  out << line;
  if (report.miou_star) {
    std::snprintf(line, sizeof(line), "%-24s %53.4f\n", "mIoU*", *report.miou_star);
    out << line;
  }
  if (report.known_miou) {
    std::snprintf(line, sizeof(line), "%-24s %53.4f\n", "known mIoU", *report.known_miou);
    out << line;
  }
  if (report.unknown_miou) {
    std::snprintf(line, sizeof(line), "%-24s %53.4f\n", "unknown mIoU", *report.unknown_miou);
    out << line;
  }
  return out.str();
}

StagePlan stage_plan_from_json(const nlohmann::json& j) {
  StagePlan plan;
  const std::string stage = j.at("stage").get<std::string>();
  if (stage == "pretrain") {
    plan.stage = Stage::kPretrain;
  } else if (stage == "zero_shot") {
    plan.stage = Stage::kZeroShot;
  } else if (stage == "few_shot") {
    plan.stage = Stage::kFewShot;
  } else {
    throw ConfigError("unknown stage '" + stage + "'");
  }
  plan.known = j.at("known").get<std::vector<std::string>>();
  if (j.contains("unknown")) plan.unknown = j["unknown"].get<std::vector<std::string>>();
  if (j.contains("supercategories")) {
    for (const auto& [name, members] : j["supercategories"].items()) {
      plan.supercategories[name] = members.get<std::vector<std::string>>();
    }
  }
  if (j.contains("k")) plan.k = j["k"].get<int>();
  if (j.contains("repeats")) plan.repeats = j["repeats"].get<int>();
  plan.validate();
  return plan;
}

nlohmann::json stage_plan_to_json(const StagePlan& plan) {
  const char* stage = plan.stage == Stage::kPretrain    ? "pretrain"
                      : plan.stage == Stage::kZeroShot ? "zero_shot"
                                                        : "few_shot";
  nlohmann::json supers = nlohmann::json::object();
  for (const auto& [name, members] : plan.supercategories) supers[name] = members;
  return nlohmann::json{{"stage", stage},
                        {"known", plan.known},
                        {"unknown", plan.unknown},
                        {"supercategories", supers},
                        {"k", plan.k},
                        {"repeats", plan.repeats}};
}

}  // namespace ago
