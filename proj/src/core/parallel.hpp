/* Copyright 2026 The Tandem Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License. */
#pragma once

#include <cstddef>
#include <functional>

namespace tandem {

/// Worker cap for data-parallel loops inside single ops. Defaults to the
/// TANDEM_THREADS environment variable (1 when unset or invalid).
std::size_t worker_threads();
void set_worker_threads(std::size_t n);

/// Runs fn(i, worker) for i in [0, n) with static contiguous chunking, so a
/// given worker count always assigns the same indices to the same worker.
void parallel_for(std::size_t n, const std::function<void(std::size_t i, std::size_t worker)>& fn);

}  // namespace tandem
