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
#include <string>

namespace ago {

inline constexpr const char* kToolVersion = "0.1.0";

std::string sha256_hex(const void* data, std::size_t size);
std::string sha256_file(const std::string& path);

/// Reproducibility record emitted next to every command output.
struct RunManifest {
  std::string command;
  std::string config_digest;                    // SHA-256 of the config bytes
  std::map<std::string, std::string> input_digests;  // path -> SHA-256
  std::uint64_t seed = 0;
  std::string tool_version = kToolVersion;
  double wall_time_ms = 0.0;

  void add_input(const std::string& path);
  void write(const std::string& path) const;
};

}  // namespace ago
