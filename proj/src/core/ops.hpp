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

// Differentiable tensor ops recorded on the operands' Tape. Matrices are
// rank-2 row-major, vectors rank-1. Broadcasting is limited to adding a
// column vector to every column of a matrix, and adding a one-element tensor
// to everything.

#include <cstddef>
#include <span>

#include "core/tape.hpp"

namespace tandem {

/// [m x k]·[k x n] -> [m x n], or [m x k]·[k] -> [m].
Var matmul(const Var& a, const Var& b);

/// Same shape; or a:[A x B] + b:[A] (b added to each column); or b of size 1.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, Real k);

Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var relu(const Var& a);

/// Max-shifted softmax over a vector.
Var softmax(const Var& logits);
/// -log softmax(logits)[target] as a one-element tensor.
Var cross_entropy(const Var& logits, std::size_t target);

/// Sum of all entries, shape [1].
Var sum(const Var& a);
Var add_n(std::span<const Var> terms);
Var mean(std::span<const Var> terms);

/// Mean over the last axis: [A x B] -> [A].
Var global_avg_pool(const Var& x);

Var concat_cols(const Var& a, const Var& b);
Var slice_cols(const Var& x, std::size_t begin, std::size_t end);
/// Vectors of equal length D -> [D x count].
Var stack_cols(std::span<const Var> columns);
Var column(const Var& x, std::size_t j);
/// Contiguous range of a vector.
Var slice(const Var& v, std::size_t begin, std::size_t end);
Var reshape(const Var& x, Shape shape);
/// x[b] for x of shape [B x ...].
Var batch_item(const Var& x, std::size_t b);

/// Same value, no gradient path.
Var detach(const Var& x);

}  // namespace tandem
