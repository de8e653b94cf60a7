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

#include <cmath>
#include <string>
#include <vector>

#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace tandem {

/// Non-trainable state that still belongs in a checkpoint (batch-norm
/// running statistics).
struct NamedBuffer {
  std::string name;
  Tensor* tensor;
};
using BufferList = std::vector<NamedBuffer>;

inline Tensor uniform_init(Shape shape, Real bound, Rng& rng) {
  Tensor t(std::move(shape));
  for (Real& v : t.data()) v = uniform(rng, -bound, bound);
  return t;
}

/// N(0, 2 / fan_in).
inline Tensor he_normal(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const Real sd = std::sqrt(2.0 / static_cast<Real>(fan_in));
  for (Real& v : t.data()) v = sd * normal01(rng);
  return t;
}

}  // namespace tandem
