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

#include "ago/label_space.hpp"

#include <set>

#include "ago/errors.hpp"

namespace ago {

int LabelSpace::total_prompts() const {
  int n = 0;
  for (const auto& prompts : subclass_prompts) {
    n += static_cast<int>(prompts.size());
  }
  return n;
}

std::optional<int> LabelSpace::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] == name) return static_cast<int>(i);
  }
  return std::nullopt;
}

void LabelSpace::validate() const {
  if (classes.empty()) {
    throw ConfigError("label space must declare at least one class");
  }
  std::set<std::string> seen;
  for (const auto& name : classes) {
    if (!seen.insert(name).second) {
      throw ConfigError("duplicate class name '" + name + "' in label space");
    }
  }
  if (subclass_prompts.size() != classes.size()) {
    throw ConfigError("subclass_prompts must list prompts for every class");
  }
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (subclass_prompts[i].empty()) {
      throw ConfigError("class '" + classes[i] + "' has an empty prompt list");
    }
  }
  // No fine class may belong to two supercategories.
  std::set<int> claimed;
  for (const auto& [coarse, members] : supercategories) {
    if (members.empty()) {
      throw ConfigError("supercategory '" + coarse + "' has no members");
    }
    for (int idx : members) {
      if (idx < 0 || idx >= static_cast<int>(classes.size())) {
        throw ConfigError("supercategory '" + coarse + "' references class index " +
                          std::to_string(idx) + " outside the label space");
      }
      if (!claimed.insert(idx).second) {
        throw ConfigError("class '" + classes[idx] + "' appears in two supercategories");
      }
    }
  }
}

}  // namespace ago
