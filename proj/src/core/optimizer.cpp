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
#include "core/optimizer.hpp"

#include <cmath>
#include <map>

#include "core/errors.hpp"

namespace tandem {
namespace {

std::map<std::string, const Tensor*> index_state(const std::vector<NamedState>& state) {
  std::map<std::string, const Tensor*> out;
  for (const auto& s : state) out[s.name] = &s.value;
  return out;
}

void restore(const std::map<std::string, const Tensor*>& index, const std::string& name, Tensor& into) {
  auto it = index.find(name);
  if (it == index.end()) throw FormatError("optimizer state is missing " + name);
  if (it->second->shape() != into.shape()) throw FormatError("optimizer state " + name + " has the wrong shape");
  into = *it->second;
}

}  // namespace

Real global_grad_norm(const ParameterList& params) {
  Real sq = 0;
  for (const Parameter* p : params) {
    for (Real g : p->grad.data()) sq += g * g;
  }
  return std::sqrt(sq);
}

Real clip_grad_norm(const ParameterList& params, Real max_norm) {
  if (!(max_norm > 0)) throw ConfigError("clip norm must be positive");
  const Real norm = global_grad_norm(params);
  if (!std::isfinite(norm)) throw NumericError("non-finite gradient norm");
  if (norm > max_norm) {
    const Real k = max_norm / norm;
    for (Parameter* p : params) {
      for (Real& g : p->grad.data()) g *= k;
    }
  }
  return norm;
}

Real decayed_lr(Real lr0, Real decay, std::size_t epoch) { return lr0 * std::pow(decay, static_cast<Real>(epoch)); }

Optimizer::Optimizer(ParameterList params, Real lr) : params_(std::move(params)), lr_(lr) {
  if (!(lr > 0)) throw ConfigError("learning rate must be positive");
}

Sgd::Sgd(ParameterList params, Real lr, Real momentum) : Optimizer(std::move(params), lr), momentum_(momentum) {
  if (!(momentum >= 0 && momentum < 1)) throw ConfigError("SGD momentum must lie in [0, 1)");
  for (const Parameter* p : params_) velocity_.emplace_back(p->value.shape(), 0.0);
}

void Sgd::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    if (p.frozen) continue;
    auto w = p.value.data();
    auto g = p.grad.data();
    auto v = velocity_[i].data();
    for (std::size_t k = 0; k < w.size(); ++k) {
      v[k] = momentum_ * v[k] + g[k];
      w[k] -= lr_ * v[k];
    }
  }
}

std::vector<NamedState> Sgd::state() const {
  std::vector<NamedState> out;
  for (std::size_t i = 0; i < params_.size(); ++i) out.push_back({"sgd/" + params_[i]->name + "/velocity", velocity_[i]});
  return out;
}

void Sgd::load_state(const std::vector<NamedState>& state) {
  const auto index = index_state(state);
  for (std::size_t i = 0; i < params_.size(); ++i) restore(index, "sgd/" + params_[i]->name + "/velocity", velocity_[i]);
}

Adam::Adam(ParameterList params, Real lr, Real beta1, Real beta2, Real eps)
    : Optimizer(std::move(params), lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && eps > 0)) throw ConfigError("invalid Adam hyperparameters");
  for (const Parameter* p : params_) {
    m_.emplace_back(p->value.shape(), 0.0);
    v_.emplace_back(p->value.shape(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const Real c1 = 1 - std::pow(beta1_, static_cast<Real>(t_));
  const Real c2 = 1 - std::pow(beta2_, static_cast<Real>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    if (p.frozen) continue;
    auto w = p.value.data();
    auto g = p.grad.data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = beta1_ * m[k] + (1 - beta1_) * g[k];
      v[k] = beta2_ * v[k] + (1 - beta2_) * g[k] * g[k];
      w[k] -= lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
    }
  }
}

std::vector<NamedState> Adam::state() const {
  std::vector<NamedState> out;
  out.push_back({"adam/step", Tensor({1}, static_cast<Real>(t_))});
  for (std::size_t i = 0; i < params_.size(); ++i) {
    out.push_back({"adam/" + params_[i]->name + "/m", m_[i]});
    out.push_back({"adam/" + params_[i]->name + "/v", v_[i]});
  }
  return out;
}

void Adam::load_state(const std::vector<NamedState>& state) {
  const auto index = index_state(state);
  Tensor step({1}, 0.0);
  restore(index, "adam/step", step);
  t_ = static_cast<std::uint64_t>(step[0]);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    restore(index, "adam/" + params_[i]->name + "/m", m_[i]);
    restore(index, "adam/" + params_[i]->name + "/v", v_[i]);
  }
}

}  // namespace tandem
