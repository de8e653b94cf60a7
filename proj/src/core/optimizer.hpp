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

#include <cstdint>
#include <string>
#include <vector>

#include "core/tape.hpp"

namespace tandem {

/// sqrt of the summed squared gradients of every parameter in the group.
Real global_grad_norm(const ParameterList& params);

/// Rescales the group's gradients so their global norm is at most max_norm.
/// Returns the norm before clipping.
Real clip_grad_norm(const ParameterList& params, Real max_norm);

/// lr0 * decay^epoch.
Real decayed_lr(Real lr0, Real decay, std::size_t epoch);

/// Optimizer state tensors keyed by "<prefix>/<param name>/<slot>".
struct NamedState {
  std::string name;
  Tensor value;
};

/// Frozen parameters are skipped by every optimizer.
class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step() = 0;
  virtual std::vector<NamedState> state() const = 0;
  /// Entries whose names match are restored; missing entries raise FormatError.
  virtual void load_state(const std::vector<NamedState>& state) = 0;

  void set_lr(Real lr) { lr_ = lr; }
  Real lr() const { return lr_; }
  const ParameterList& params() const { return params_; }

 protected:
  Optimizer(ParameterList params, Real lr);
  ParameterList params_;
  Real lr_;
};

class Sgd final : public Optimizer {
 public:
  Sgd(ParameterList params, Real lr, Real momentum = 0.0);
  void step() override;
  std::vector<NamedState> state() const override;
  void load_state(const std::vector<NamedState>& state) override;

 private:
  Real momentum_;
  std::vector<Tensor> velocity_;
};

class Adam final : public Optimizer {
 public:
  Adam(ParameterList params, Real lr, Real beta1 = 0.9, Real beta2 = 0.999, Real eps = 1e-8);
  void step() override;
  std::vector<NamedState> state() const override;
  void load_state(const std::vector<NamedState>& state) override;
  std::uint64_t steps() const { return t_; }

 private:
  Real beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

}  // namespace tandem
