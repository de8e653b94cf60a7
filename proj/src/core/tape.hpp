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
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace tandem {

/// A named trainable tensor. `grad` accumulates across backward passes until
/// zero_grad(); a frozen parameter enters every tape as a constant and so
/// never receives gradient.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Tensor value);

  std::string name;
  Tensor value;
  Tensor grad;
  bool frozen = false;

  void zero_grad();
};

using ParameterList = std::vector<Parameter*>;

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; valid until the tape
/// is cleared or destroyed.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  /// Gradient of the last backward root w.r.t. this node. Zero-filled if the
  /// node was not reached; throws if the node does not track gradients.
  const Tensor& grad() const;
  bool requires_grad() const;

  Tape& tape() const;
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Ordered record of executed operations. backward() replays the record in
/// reverse, visiting each node once; a node feeding several consumers has
/// their contributions summed before its own backward runs.
class Tape {
 public:
  /// Propagates `grad_out` (the gradient w.r.t. the node's value) into the
  /// node's inputs through grad_accumulator().
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var leaf(Tensor value);
  Var param(Parameter& p);

  /// Records an op result. When no input tracks gradients the node becomes a
  /// constant and `backward` is dropped.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward);

  /// Seeds d(root)/d(root) = 1 and runs reverse accumulation. `root` must hold
  /// a single finite value.
  void backward(const Var& root);

  void clear();
  std::size_t size() const noexcept { return nodes_.size(); }

  const Tensor& value(std::size_t id) const;
  bool needs_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Zero-initialised on first use.
  Tensor& grad_accumulator(std::size_t id);
  const Tensor& grad(std::size_t id) const;

 private:
  struct Node {
    Tensor owned;
    const Tensor* external = nullptr;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var push(Node node);

  std::deque<Node> nodes_;
};

/// Throws NumericError naming `stage` when `v` holds NaN or Inf.
void check_finite(const Var& v, const std::string& stage);

}  // namespace tandem
