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

#include "ago/manifest.hpp"

#include <fstream>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "ago/errors.hpp"
#include "ago/io.hpp"

namespace ago {

std::string sha256_hex(const void* data, std::size_t size) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data, size, digest, &len, EVP_sha256(), nullptr) != 1) {
    throw ConfigError("SHA-256 computation failed");
  }
  static const char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "' for hashing");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return sha256_hex(bytes.data(), bytes.size());
}

void RunManifest::add_input(const std::string& path) {
  input_digests[path] = sha256_file(path);
}

void RunManifest::write(const std::string& path) const {
  nlohmann::json inputs = nlohmann::json::object();
  for (const auto& [p, digest] : input_digests) inputs[p] = digest;
  save_json(nlohmann::json{{"command", command},
                           {"config_digest", config_digest},
                           {"input_digests", inputs},
                           {"seed", seed},
                           {"tool_version", tool_version},
                           {"wall_time_ms", wall_time_ms}},
            path);
}

}  // namespace ago
