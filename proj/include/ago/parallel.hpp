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

#include <cstddef>
#include <functional>

namespace ago {

/// Effective worker count: `requested` when positive, otherwise the
/// OCCGROUNDER_THREADS environment variable, otherwise 1.
int resolve_threads(int requested);

/// Runs `task(i)` for i in [0, n). Tasks execute in waves of up to
/// `threads` workers; each task writes only its own slot, so callers can
/// merge results in index order and obtain the single-threaded answer for
/// any thread count.
void run_indexed_tasks(std::size_t n, int threads, const std::function<void(std::size_t)>& task);

}  // namespace ago
