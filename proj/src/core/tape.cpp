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
#include "core/tape.hpp"

#include <cmath>

#include "core/errors.hpp"

namespace tandem {

Parameter::Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {
  grad = Tensor::zeros(value.shape());
}

void Parameter::zero_grad() {
  if (grad.shape() != value.shape()) grad = Tensor::zeros(value.shape());
  else grad.fill(0);
}

const Tensor& Var::value() const { return tape().value(id_); }

const Tensor& Var::grad() const { return tape().grad(id_); }

bool Var::requires_grad() const { return tape().needs_grad(id_); }

Tape& Var::tape() const {
  if (!tape_) throw Error("use of an unbound Var");
  return *tape_;
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.owned = std::move(value);
  return push(std::move(n));
}

Var Tape::leaf(Tensor value) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::param(Parameter& p) {
  Node n;
  n.external = &p.value;
  if (!p.frozen) {
    n.requires_grad = true;
    Parameter* target = &p;
    n.backward = [target](Tape&, const Tensor& g) {
      if (target->grad.shape() != target->value.shape()) target->grad = Tensor::zeros(target->value.shape());
      auto dst = target->grad.data();
      auto src = g.data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    };
  }
  return push(std::move(n));
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  Node n;
  n.owned = std::move(value);
  for (const Var& in : inputs) {
    if (&in.tape() != this) throw Error("op inputs recorded on different tapes");
    if (nodes_[in.id()].requires_grad) n.requires_grad = true;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

const Tensor& Tape::value(std::size_t id) const {
  const Node& n = nodes_.at(id);
  return n.external ? *n.external : n.owned;
}

Tensor& Tape::grad_accumulator(std::size_t id) {
  Node& n = nodes_.at(id);
  if (n.grad.shape() != value(id).shape()) n.grad = Tensor::zeros(value(id).shape());
  return n.grad;
}

const Tensor& Tape::grad(std::size_t id) const {
  const Node& n = nodes_.at(id);
  if (!n.requires_grad) throw Error("node " + std::to_string(id) + " does not track gradients");
  if (n.grad.shape() != value(id).shape()) {
    return const_cast<Tape*>(this)->grad_accumulator(id);
  }
  return n.grad;
}

void Tape::backward(const Var& root) {
  if (&root.tape() != this) throw Error("backward root belongs to another tape");
  const Tensor& v = value(root.id());
  if (v.size() != 1) throw DimensionError("backward root must be scalar, got shape " + to_string(v.shape()));
  if (!std::isfinite(v[0])) throw NumericError("backward root is not finite");
  if (!nodes_[root.id()].requires_grad) return;

  grad_accumulator(root.id()).fill(1);
  for (std::size_t id = root.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || !n.backward) continue;
    if (n.grad.shape() != value(id).shape()) continue;  // unreached
    n.backward(*this, n.grad);
  }
}

void Tape::clear() { nodes_.clear(); }

void check_finite(const Var& v, const std::string& stage) {
  if (!v.value().all_finite()) throw NumericError("non-finite values at stage '" + stage + "'");
}

}  // namespace tandem
