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

#include "ago/parallel.hpp"

#include <cstdlib>
#include <exception>
#include <thread>
#include <vector>

namespace ago {

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("OCCGROUNDER_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return 1;
}

void run_indexed_tasks(std::size_t n, int threads, const std::function<void(std::size_t)>& task) {
  threads = resolve_threads(threads);
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) task(i);
    return;
  }
  std::exception_ptr error;
  for (std::size_t base = 0; base < n; base += static_cast<std::size_t>(threads)) {
    std::vector<std::thread> pool;
    const std::size_t end = std::min(n, base + static_cast<std::size_t>(threads));
    for (std::size_t i = base; i < end; ++i) {
      pool.emplace_back([&, i]() {
        try {
          task(i);
        } catch (...) {
          if (!error) error = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
  }
}

}  // namespace ago
