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

/* C interface to the tandem image+text classifier.
 *
 * Every call returns a tandem_status; on failure tandem_last_error() holds a
 * message for the calling thread. Settings are passed as "key=value" lines
 * (the same format the CLI's --config files use); NULL means defaults.
 * Strings handed back through char** must be released with tandem_free(). */
#ifndef TANDEM_TANDEM_H_
#define TANDEM_TANDEM_H_

#include <stddef.h>

#if defined(_WIN32)
#define TANDEM_API __declspec(dllexport)
#else
#define TANDEM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum tandem_status {
  TANDEM_OK = 0,
  TANDEM_ERR_USAGE = 2,     /* bad argument, unknown split, index out of range */
  TANDEM_ERR_CONFIG = 3,    /* invariant violation in a setting */
  TANDEM_ERR_NUMERIC = 4,   /* NaN/Inf or divergence */
  TANDEM_ERR_IO = 5,        /* file missing, unreadable or corrupt */
  TANDEM_ERR_INTERNAL = 70
} tandem_status;

typedef struct tandem_corpus tandem_corpus;
typedef struct tandem_model tandem_model;

TANDEM_API const char* tandem_last_error(void);
TANDEM_API const char* tandem_version(void);
TANDEM_API void tandem_free(char* str);

/* Validates every key without doing any work: unknown keys, unparsable
 * values and violated invariants (e.g. model.attention_dim != encoder
 * channels) give TANDEM_ERR_CONFIG naming the field. */
TANDEM_API tandem_status tandem_check_settings(const char* settings);

/* ---- corpus ---- */

/* Keys: corpus.patients, corpus.samples_per_patient, corpus.image_size,
 * corpus.levels, corpus.reports, corpus.noise, corpus.pixel_noise, corpus.seed,
 * split.test_fraction, split.val_fraction, split.seed. */
TANDEM_API tandem_status tandem_corpus_generate(const char* settings, tandem_corpus** out);
TANDEM_API tandem_status tandem_corpus_load(const char* path, tandem_corpus** out);
TANDEM_API tandem_status tandem_corpus_save(const tandem_corpus* corpus, const char* path);
TANDEM_API void tandem_corpus_free(tandem_corpus* corpus);

/* Recomputes the patient split from split.* keys (loaded corpora start with
 * the defaults: 20% test, 20% of the rest val, seed 7). */
TANDEM_API tandem_status tandem_corpus_set_split(tandem_corpus* corpus, const char* settings);
TANDEM_API size_t tandem_corpus_size(const tandem_corpus* corpus);
/* Number of samples in "train", "val", "test" or "all"; 0 for other names. */
TANDEM_API size_t tandem_corpus_split_size(const tandem_corpus* corpus, const char* split);
/* Corpus index of the `position`-th sample of a split. */
TANDEM_API tandem_status tandem_corpus_split_sample(const tandem_corpus* corpus, const char* split, size_t position,
                                                    size_t* index);
/* Writes sample `index` as a binary PPM. */
TANDEM_API tandem_status tandem_corpus_write_image(const tandem_corpus* corpus, size_t index, const char* path);
/* Reference report of sample `index` (variant 0), one sentence per line. */
TANDEM_API tandem_status tandem_corpus_report(const tandem_corpus* corpus, size_t index, char** text);
/* The generator and split settings actually used, as key=value lines. */
TANDEM_API tandem_status tandem_corpus_settings(const tandem_corpus* corpus, char** text);

/* ---- model ---- */

/* Keys: model.kind (tandem|image_only), model.drop_rate, model.embed_dim,
 * model.hidden_dim, model.attention_dim, model.sentences, model.classes,
 * encoder.*, model.seed. Vocabulary comes from the corpus. */
TANDEM_API tandem_status tandem_model_create(const tandem_corpus* corpus, const char* settings, tandem_model** out);
TANDEM_API tandem_status tandem_model_load(const char* path, tandem_model** out);
TANDEM_API tandem_status tandem_model_save(tandem_model* model, const char* path);
TANDEM_API void tandem_model_free(tandem_model* model);
/* Config echo: model, training and any run settings seen so far. */
TANDEM_API tandem_status tandem_model_settings(const tandem_model* model, char** text);

typedef struct tandem_epoch {
  size_t epoch;
  double train_loss;
  double train_accuracy;
  double val_loss;
  double val_acc_with_text;
  double val_acc_without_text;
} tandem_epoch;

typedef void (*tandem_epoch_callback)(const tandem_epoch* stats, void* user);

/* Trains on the corpus's train split, selecting on val. Keys: train.epochs,
 * train.batch_size, train.seed, train.select_best, optimizer.*. The metrics
 * CSV (epoch,split,loss,acc_with_text,acc_without_text) is returned through
 * `metrics_csv` when non-NULL. */
TANDEM_API tandem_status tandem_train(tandem_model* model, const tandem_corpus* corpus, const char* settings,
                                      tandem_epoch_callback callback, void* user, char** metrics_csv);

typedef struct tandem_eval {
  size_t samples;
  double accuracy;
  double loss;
} tandem_eval;

/* Evaluates on a named split with or without the report text. `report_json`
 * (optional) receives accuracy, loss, confusion matrix and per-class
 * accuracy. */
TANDEM_API tandem_status tandem_evaluate(tandem_model* model, const tandem_corpus* corpus, const char* split,
                                         int with_text, tandem_eval* out, char** report_json);

/* Trains one fresh model per drop rate (model and train settings as above)
 * and returns drop_rate,acc_with_text,acc_without_text,error rows. */
TANDEM_API tandem_status tandem_sweep(const tandem_corpus* corpus, const char* settings, const double* rates,
                                      size_t rate_count, char** csv);

/* ---- attention ---- */

/* Writes <prefix>.pgm (upsampled region map, out_size x out_size) and
 * <prefix>.csv (all G + N weights) for sample `index`. */
TANDEM_API tandem_status tandem_attention_export(tandem_model* model, const tandem_corpus* corpus, size_t index,
                                                 int with_text, size_t out_size, const char* prefix);
/* Mean text attention per true class and sentence over a split, as CSV.
 * Warnings (e.g. classes without samples) go to `warnings` if non-NULL. */
TANDEM_API tandem_status tandem_text_attention_stats(tandem_model* model, const tandem_corpus* corpus,
                                                     const char* split, char** csv, char** warnings);

/* ---- report generation ---- */

/* Fine-tunes the model to decode reports. Keys: caption.epochs, caption.seed
 * and the caption.* settings. Returns epoch,caption_loss,class_loss,truncated
 * rows through `log_csv` when non-NULL. */
TANDEM_API tandem_status tandem_caption_train(tandem_model* model, const tandem_corpus* corpus, const char* settings,
                                              char** log_csv);
/* Greedy decode for sample `index`, one sentence per line. */
TANDEM_API tandem_status tandem_caption_generate(tandem_model* model, const tandem_corpus* corpus, size_t index,
                                                 size_t max_tokens, char** text);
/* Fraction of feature slots whose decoded severity matches, over a split. */
TANDEM_API tandem_status tandem_caption_slot_accuracy(tandem_model* model, const tandem_corpus* corpus,
                                                      const char* split, size_t max_tokens, double* accuracy);

#ifdef __cplusplus
}
#endif

#endif /* TANDEM_TANDEM_H_ */
