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

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ago {

/// Ordered class catalogue. Every class owns one or more prompt phrases;
/// scoring groups token rows by phrase. Supercategories optionally bundle
/// fine classes into a coarse training class.
struct LabelSpace {
  std::vector<std::string> classes;
  std::vector<std::vector<std::string>> subclass_prompts;  // parallel to classes
  std::map<std::string, std::vector<int>> supercategories;  // coarse name -> fine indices

  std::uint32_t n_cls() const { return static_cast<std::uint32_t>(classes.size()); }
  int total_prompts() const;

  /// Index of a class by name, or nullopt.
  std::optional<int> index_of(const std::string& name) const;

  /// Rejects duplicate class names, empty prompt lists, prompt lists not
  /// parallel to classes, and fine classes claimed by two supercategories.
  void validate() const;
};

}  // namespace ago
