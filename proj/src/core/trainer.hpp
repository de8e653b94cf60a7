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

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "core/checkpoint.hpp"
#include "core/corpus.hpp"
#include "core/key_values.hpp"
#include "core/model.hpp"
#include "core/optimizer.hpp"

namespace tandem {

/// SGD for the image encoder, Adam for the text encoder, attention and head
/// ("fusion" group). Both learning rates are multiplied by `decay` every
/// epoch; the fusion group's gradient norm is clipped to `clip_norm`.
///
/// The default fusion rate is sized for the desk corpus (~40 steps/epoch).
/// At 1e-4 the text path never leaves its initialization within 30 epochs.
struct OptimizerConfig {
  Real cnn_lr = 1e-2;
  Real cnn_momentum = 0.9;
  Real attention_lr = 1e-2;
  Real beta1 = 0.9;
  Real beta2 = 0.999;
  Real eps = 1e-8;
  Real decay = 0.9;
  Real clip_norm = 0.1;

  /// Rates used with the full-size encoder on a large dataset.
  static OptimizerConfig full_scale();

  void validate() const;
};

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  OptimizerConfig optimizer;
  std::uint64_t seed = 1;
  /// Keep the weights of the epoch with the best validation score.
  bool select_best = true;

  void validate() const;
  void write(KeyValues& kv) const;
  static TrainConfig read(KeyValueReader& kv);
};

struct EpochStats {
  std::size_t epoch = 0;
  Real train_loss = 0;
  Real train_accuracy = 0;
  Real cnn_lr = 0;
  Real attention_lr = 0;
  /// Largest fusion-group gradient norm seen before clipping, and how many
  /// steps were clipped.
  Real max_fusion_grad_norm = 0;
  std::size_t clipped_steps = 0;
  Real val_loss = 0;
  Real val_acc_with_text = 0;
  Real val_acc_without_text = 0;
};

struct EvalReport {
  std::size_t samples = 0;
  Real accuracy = 0;
  Real loss = 0;
  /// Rows are true classes, columns predictions.
  std::vector<std::vector<std::size_t>> confusion;
  /// NaN for classes without samples.
  std::vector<Real> per_class_accuracy;
  std::vector<std::size_t> predictions;
  std::vector<std::vector<Real>> probabilities;
};

EvalReport evaluate(TandemModel& model, const Corpus& corpus, std::span<const std::size_t> indices,
                    bool text_available, std::size_t batch_size = 32);

/// Confusion matrix + accuracy from labels and predictions.
EvalReport summarize_predictions(std::span<const std::size_t> labels, std::span<const std::size_t> predictions,
                                 std::size_t classes);

class Trainer {
 public:
  Trainer(TandemModel& model, const TrainConfig& config);

  /// One shuffled pass over `indices` at the current epoch's learning rates.
  /// Throws DivergenceError on a non-finite loss.
  EpochStats train_epoch(const Corpus& corpus, std::span<const std::size_t> indices);

  using EpochCallback = std::function<void(const EpochStats&)>;

  /// Trains for config.epochs epochs on split.train, scoring each epoch on
  /// split.val by the mean of with-text and without-text accuracy (image-only
  /// models: without-text accuracy). Restores the best epoch when
  /// select_best is set.
  std::vector<EpochStats> fit(const Corpus& corpus, const Split& split, const EpochCallback& on_epoch = {});

  std::size_t epoch() const { return epoch_; }
  Real best_score() const { return best_score_; }
  Sgd& cnn_optimizer() { return *cnn_; }
  Adam& fusion_optimizer() { return *fusion_; }
  Rng& rng() { return rng_; }

  TrainingState state(const KeyValues& config_echo) const;
  void restore(const TrainingState& state);

 private:
  TandemModel& model_;
  TrainConfig config_;
  Rng rng_;
  std::unique_ptr<Sgd> cnn_;
  std::unique_ptr<Adam> fusion_;
  std::size_t epoch_ = 0;
  Real best_score_ = -1;
};

/// CSV: epoch,split,loss,acc_with_text,acc_without_text. The train row's
/// accuracy is measured under the stochastic training policy and written in
/// acc_with_text; acc_without_text is left empty.
std::string metrics_csv(const std::vector<EpochStats>& history);

struct SweepRow {
  Real drop_rate = 0;
  Real acc_with_text = 0;
  Real acc_without_text = 0;
  std::string error;  // non-empty if this cell failed
};

/// Trains one fresh model per rate (same seed) and evaluates it on `eval`.
/// Errors in one cell are recorded and the sweep continues.
std::vector<SweepRow> drop_rate_sweep(const ModelConfig& base, const TrainConfig& train, const Corpus& corpus,
                                      const Split& split, std::span<const Real> rates, std::uint64_t model_seed);
std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace tandem
