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
#include "core/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>

#include "core/errors.hpp"
#include "core/parallel.hpp"

namespace tandem {
namespace {

std::vector<const Sample*> gather(const Corpus& corpus, std::span<const std::size_t> indices) {
  std::vector<const Sample*> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(&corpus.samples.at(i));
  return out;
}

struct Snapshot {
  std::vector<Tensor> params, buffers;

  static Snapshot take(TandemModel& m) {
    Snapshot s;
    for (const Parameter* p : m.parameters()) s.params.push_back(p->value);
    for (const auto& b : m.buffers()) s.buffers.push_back(*b.tensor);
    return s;
  }
  void apply(TandemModel& m) const {
    auto ps = m.parameters();
    for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->value = params[i];
    auto bs = m.buffers();
    for (std::size_t i = 0; i < bs.size(); ++i) *bs[i].tensor = buffers[i];
  }
};

}  // namespace

OptimizerConfig OptimizerConfig::full_scale() {
  OptimizerConfig o;
  o.attention_lr = 1e-4;
  return o;
}

void OptimizerConfig::validate() const {
  if (!(cnn_lr > 0)) throw ConfigError("optimizer.cnn_lr must be positive");
  if (!(attention_lr > 0)) throw ConfigError("optimizer.attention_lr must be positive");
  if (!(cnn_momentum >= 0 && cnn_momentum < 1)) throw ConfigError("optimizer.cnn_momentum must lie in [0, 1)");
  if (!(decay > 0 && decay <= 1)) throw ConfigError("optimizer.decay must lie in (0, 1]");
  if (!(clip_norm > 0)) throw ConfigError("optimizer.clip_norm must be positive");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && eps > 0)) {
    throw ConfigError("optimizer: invalid Adam hyperparameters");
  }
}

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("train.epochs must be positive");
  if (batch_size == 0) throw ConfigError("train.batch_size must be positive");
  optimizer.validate();
}

void TrainConfig::write(KeyValues& kv) const {
  kv["train.epochs"] = std::to_string(epochs);
  kv["train.batch_size"] = std::to_string(batch_size);
  kv["train.seed"] = std::to_string(seed);
  kv["train.select_best"] = select_best ? "true" : "false";
  kv["optimizer.cnn_lr"] = format_real(optimizer.cnn_lr);
  kv["optimizer.cnn_momentum"] = format_real(optimizer.cnn_momentum);
  kv["optimizer.attention_lr"] = format_real(optimizer.attention_lr);
  kv["optimizer.beta1"] = format_real(optimizer.beta1);
  kv["optimizer.beta2"] = format_real(optimizer.beta2);
  kv["optimizer.eps"] = format_real(optimizer.eps);
  kv["optimizer.decay"] = format_real(optimizer.decay);
  kv["optimizer.clip_norm"] = format_real(optimizer.clip_norm);
}

TrainConfig TrainConfig::read(KeyValueReader& kv) {
  TrainConfig c;
  c.epochs = kv.get_size("train.epochs", c.epochs);
  c.batch_size = kv.get_size("train.batch_size", c.batch_size);
  c.seed = kv.get_u64("train.seed", c.seed);
  c.select_best = kv.get_bool("train.select_best", c.select_best);
  auto& o = c.optimizer;
  o.cnn_lr = kv.get_real("optimizer.cnn_lr", o.cnn_lr);
  o.cnn_momentum = kv.get_real("optimizer.cnn_momentum", o.cnn_momentum);
  o.attention_lr = kv.get_real("optimizer.attention_lr", o.attention_lr);
  o.beta1 = kv.get_real("optimizer.beta1", o.beta1);
  o.beta2 = kv.get_real("optimizer.beta2", o.beta2);
  o.eps = kv.get_real("optimizer.eps", o.eps);
  o.decay = kv.get_real("optimizer.decay", o.decay);
  o.clip_norm = kv.get_real("optimizer.clip_norm", o.clip_norm);
  return c;
}

EvalReport summarize_predictions(std::span<const std::size_t> labels, std::span<const std::size_t> predictions,
                                 std::size_t classes) {
  if (labels.size() != predictions.size()) throw DimensionError("labels and predictions differ in length");
  EvalReport r;
  r.samples = labels.size();
  r.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes || predictions[i] >= classes) throw InputError("class index out of range");
    ++r.confusion[labels[i]][predictions[i]];
    correct += labels[i] == predictions[i];
  }
  r.accuracy = labels.empty() ? 0.0 : static_cast<Real>(correct) / static_cast<Real>(labels.size());
  r.per_class_accuracy.resize(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    std::size_t row = 0;
    for (std::size_t v : r.confusion[c]) row += v;
    r.per_class_accuracy[c] = row == 0 ? std::numeric_limits<Real>::quiet_NaN()
                                       : static_cast<Real>(r.confusion[c][c]) / static_cast<Real>(row);
  }
  r.predictions.assign(predictions.begin(), predictions.end());
  return r;
}

EvalReport evaluate(TandemModel& model, const Corpus& corpus, std::span<const std::size_t> indices,
                    bool text_available, std::size_t batch_size) {
  if (indices.empty()) throw InputError("evaluate: empty sample set");
  if (batch_size == 0) throw ConfigError("evaluate: batch_size must be positive");
  const auto samples = gather(corpus, indices);
  const std::size_t batches = (samples.size() + batch_size - 1) / batch_size;
  std::vector<std::size_t> predictions(samples.size());
  std::vector<std::vector<Real>> probabilities(samples.size());
  std::vector<Real> losses(batches);
  ForwardOptions opts;
  opts.policy = {model.config().drop_rate, Mode::kEval, text_available};
  opts.random_report = false;
  parallel_for(batches, [&](std::size_t b, std::size_t) {
    const std::size_t begin = b * batch_size;
    const std::size_t end = std::min(samples.size(), begin + batch_size);
    Tape tape;
    Rng unused(0);
    auto res = forward_batch(tape, model, std::span(samples).subspan(begin, end - begin), opts, unused);
    losses[b] = res.loss.value()[0] * static_cast<Real>(end - begin);
    for (std::size_t i = begin; i < end; ++i) {
      const auto pred = make_prediction(res.samples[i - begin].logits.value());
      predictions[i] = pred.predicted_class;
      probabilities[i].assign(pred.probabilities.data().begin(), pred.probabilities.data().end());
    }
  });
  std::vector<std::size_t> labels;
  for (const Sample* s : samples) labels.push_back(s->label);
  EvalReport r = summarize_predictions(labels, predictions, model.config().classes);
  Real total = 0;
  for (Real l : losses) total += l;
  r.loss = total / static_cast<Real>(samples.size());
  r.probabilities = std::move(probabilities);
  return r;
}

Trainer::Trainer(TandemModel& model, const TrainConfig& config)
    : model_(model), config_(config), rng_(derive_rng(config.seed, 0x7a1)) {
  config_.validate();
  const auto& o = config_.optimizer;
  cnn_ = std::make_unique<Sgd>(model_.cnn_group(), o.cnn_lr, o.cnn_momentum);
  fusion_ = std::make_unique<Adam>(model_.fusion_group(), o.attention_lr, o.beta1, o.beta2, o.eps);
}

EpochStats Trainer::train_epoch(const Corpus& corpus, std::span<const std::size_t> indices) {
  if (indices.empty()) throw InputError("train_epoch: empty training set");
  const auto& o = config_.optimizer;
  EpochStats st;
  st.epoch = epoch_;
  st.cnn_lr = decayed_lr(o.cnn_lr, o.decay, epoch_);
  st.attention_lr = decayed_lr(o.attention_lr, o.decay, epoch_);
  cnn_->set_lr(st.cnn_lr);
  fusion_->set_lr(st.attention_lr);

  std::vector<std::size_t> order(indices.begin(), indices.end());
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng_, i)]);

  ForwardOptions opts;
  opts.policy = {model_.config().drop_rate, Mode::kTrain, true};
  const ParameterList all = model_.parameters();
  const ParameterList fusion = model_.fusion_group();
  Real loss_sum = 0;
  std::size_t correct = 0;
  for (std::size_t begin = 0; begin < order.size(); begin += config_.batch_size) {
    const std::size_t end = std::min(order.size(), begin + config_.batch_size);
    const auto batch = gather(corpus, std::span(order).subspan(begin, end - begin));
    for (Parameter* p : all) p->zero_grad();
    Tape tape;
    auto res = forward_batch(tape, model_, batch, opts, rng_);
    const Real loss = res.loss.value()[0];
    if (!std::isfinite(loss)) {
      throw DivergenceError("training diverged: non-finite loss at epoch " + std::to_string(epoch_) + ", sample " +
                            std::to_string(begin));
    }
    tape.backward(res.loss);
    const Real norm = clip_grad_norm(fusion, o.clip_norm);
    st.max_fusion_grad_norm = std::max(st.max_fusion_grad_norm, norm);
    st.clipped_steps += norm > o.clip_norm;
    cnn_->step();
    fusion_->step();
    loss_sum += loss * static_cast<Real>(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      correct += make_prediction(res.samples[i].logits.value()).predicted_class == batch[i]->label;
    }
  }
  st.train_loss = loss_sum / static_cast<Real>(order.size());
  st.train_accuracy = static_cast<Real>(correct) / static_cast<Real>(order.size());
  ++epoch_;
  return st;
}

std::vector<EpochStats> Trainer::fit(const Corpus& corpus, const Split& split, const EpochCallback& on_epoch) {
  if (split.train.empty()) throw InputError("fit: empty training split");
  model_.rgb_mean() = rgb_mean_of(corpus, split.train);
  std::vector<EpochStats> history;
  std::optional<Snapshot> best;
  const bool tandem = model_.config().kind == ModelKind::kTandem;
  while (epoch_ < config_.epochs) {
    EpochStats st = train_epoch(corpus, split.train);
    if (!split.val.empty()) {
      const EvalReport without = evaluate(model_, corpus, split.val, false);
      st.val_acc_without_text = without.accuracy;
      if (tandem) {
        const EvalReport with = evaluate(model_, corpus, split.val, true);
        st.val_acc_with_text = with.accuracy;
        st.val_loss = with.loss;
      } else {
        st.val_acc_with_text = without.accuracy;
        st.val_loss = without.loss;
      }
      const Real score = tandem ? 0.5 * (st.val_acc_with_text + st.val_acc_without_text) : st.val_acc_without_text;
      if (score > best_score_) {
        best_score_ = score;
        if (config_.select_best) best = Snapshot::take(model_);
      }
    }
    history.push_back(st);
    if (on_epoch) on_epoch(st);
  }
  if (best) best->apply(model_);
  return history;
}

TrainingState Trainer::state(const KeyValues& config_echo) const {
  TrainingState s;
  s.epoch = epoch_;
  s.best_score = best_score_;
  std::ostringstream os;
  os << rng_;
  s.rng_state = os.str();
  for (auto& e : cnn_->state()) s.optimizer.push_back(std::move(e));
  for (auto& e : fusion_->state()) s.optimizer.push_back(std::move(e));
  s.config = config_echo;
  config_.write(s.config);
  return s;
}

void Trainer::restore(const TrainingState& s) {
  epoch_ = s.epoch;
  best_score_ = s.best_score;
  if (!s.rng_state.empty()) {
    std::istringstream is(s.rng_state);
    is >> rng_;
    if (!is) throw FormatError("corrupt RNG state in checkpoint");
  }
  cnn_->load_state(s.optimizer);
  fusion_->load_state(s.optimizer);
}

std::string metrics_csv(const std::vector<EpochStats>& history) {
  std::string out = "epoch,split,loss,acc_with_text,acc_without_text\n";
  for (const auto& st : history) {
    out += std::to_string(st.epoch) + ",train," + format_real(st.train_loss) + "," + format_real(st.train_accuracy) +
           ",\n";
    out += std::to_string(st.epoch) + ",val," + format_real(st.val_loss) + "," + format_real(st.val_acc_with_text) +
           "," + format_real(st.val_acc_without_text) + "\n";
  }
  return out;
}

std::vector<SweepRow> drop_rate_sweep(const ModelConfig& base, const TrainConfig& train, const Corpus& corpus,
                                      const Split& split, std::span<const Real> rates, std::uint64_t model_seed) {
  std::vector<SweepRow> rows;
  for (Real rate : rates) {
    SweepRow row;
    row.drop_rate = rate;
    try {
      ModelConfig cfg = base;
      cfg.drop_rate = rate;
      TandemModel model(cfg, corpus.vocab, model_seed);
      Trainer trainer(model, train);
      trainer.fit(corpus, split);
      const auto& eval = split.test.empty() ? split.val : split.test;
      row.acc_with_text = evaluate(model, corpus, eval, true).accuracy;
      row.acc_without_text = evaluate(model, corpus, eval, false).accuracy;
    } catch (const Error& e) {
      row.acc_with_text = row.acc_without_text = std::numeric_limits<Real>::quiet_NaN();
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "drop_rate,acc_with_text,acc_without_text,error\n";
  for (const auto& r : rows) {
    std::string error = r.error;
    std::replace_if(error.begin(), error.end(), [](char ch) { return ch == ',' || ch == '\n'; }, ';');
    out += format_real(r.drop_rate) + "," + format_real(r.acc_with_text) + "," + format_real(r.acc_without_text) + "," +
           error + "\n";
  }
  return out;
}

}  // namespace tandem
