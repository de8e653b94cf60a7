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
#include "tandem/tandem.h"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <initializer_list>
#include <memory>
#include <new>
#include <string>
#include <string_view>

#include <json.hpp>

#include "core/attention_tools.hpp"
#include "core/binary_io.hpp"
#include "core/captioner.hpp"
#include "core/checkpoint.hpp"
#include "core/errors.hpp"
#include "core/trainer.hpp"

using namespace tandem;

struct tandem_corpus {
  Corpus corpus;
  Split split;
  KeyValues split_settings;
};

struct tandem_model {
  std::unique_ptr<TandemModel> model;
  TrainingState state;
};

namespace {

thread_local std::string g_last_error;

template <class F>
tandem_status guarded(F&& f) noexcept {
  try {
    f();
    g_last_error.clear();
    return TANDEM_OK;
  } catch (const InputError& e) {
    g_last_error = e.what();
    return TANDEM_ERR_USAGE;
  } catch (const ConfigError& e) {
    g_last_error = e.what();
    return TANDEM_ERR_CONFIG;
  } catch (const DimensionError& e) {
    g_last_error = e.what();
    return TANDEM_ERR_CONFIG;
  } catch (const NumericError& e) {
    g_last_error = e.what();
    return TANDEM_ERR_NUMERIC;
  } catch (const IoError& e) {
    g_last_error = e.what();
    return TANDEM_ERR_IO;
  } catch (const FormatError& e) {
    g_last_error = e.what();
    return TANDEM_ERR_IO;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return TANDEM_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return TANDEM_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return TANDEM_ERR_INTERNAL;
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw InputError(what);
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void hand_out(char** dst, const std::string& s) {
  if (dst) *dst = dup_string(s);
}

/// The subset of `settings` whose keys start with one of `prefixes`. Keys
/// owned by other calls pass through silently; typos inside an owned prefix
/// are caught by reject_unknown().
KeyValues owned(const char* settings, std::initializer_list<std::string_view> prefixes) {
  KeyValues out;
  if (!settings) return out;
  for (auto& [k, v] : parse_key_values(settings)) {
    for (auto p : prefixes) {
      if (std::string_view(k).substr(0, p.size()) == p) {
        out[k] = v;
        break;
      }
    }
  }
  return out;
}

Split make_split(const Corpus& corpus, KeyValues& settings) {
  KeyValueReader r(settings);
  const Real test = r.get_real("split.test_fraction", 0.2);
  const Real val = r.get_real("split.val_fraction", 0.2);
  const std::uint64_t seed = r.get_u64("split.seed", 7);
  r.reject_unknown();
  if (!(test >= 0 && test < 1) || !(val >= 0 && val < 1)) throw ConfigError("split fractions must lie in [0, 1)");
  settings["split.test_fraction"] = format_real(test);
  settings["split.val_fraction"] = format_real(val);
  settings["split.seed"] = std::to_string(seed);
  return patient_split(corpus, test, val, seed);
}

const std::vector<std::size_t>& split_indices(const tandem_corpus* c, const char* name, std::vector<std::size_t>& all) {
  require(name != nullptr, "split name is null");
  const std::string_view n(name);
  if (n == "train") return c->split.train;
  if (n == "val") return c->split.val;
  if (n == "test") return c->split.test;
  if (n == "all") {
    all.resize(c->corpus.samples.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return all;
  }
  throw InputError("unknown split '" + std::string(n) + "' (expected train, val, test or all)");
}

const Sample& sample_at(const tandem_corpus* c, std::size_t index) {
  if (index >= c->corpus.samples.size()) {
    throw InputError("sample index " + std::to_string(index) + " out of range (corpus has " +
                     std::to_string(c->corpus.samples.size()) + ")");
  }
  return c->corpus.samples[index];
}

void check_compatible(const TandemModel& m, const Corpus& c) {
  if (m.config().encoder.input_size != c.image_size()) {
    throw ConfigError("encoder.input_size " + std::to_string(m.config().encoder.input_size) +
                      " does not match corpus image size " + std::to_string(c.image_size()));
  }
  if (m.vocab().serialize() != c.vocab.serialize()) {
    throw ConfigError("model vocabulary differs from the corpus vocabulary");
  }
}

GeneratorSpec read_generator_spec(KeyValueReader& r) {
  GeneratorSpec spec;
  spec.num_patients = r.get_size("corpus.patients", spec.num_patients);
  spec.samples_per_patient = r.get_size("corpus.samples_per_patient", spec.samples_per_patient);
  spec.image_size = r.get_size("corpus.image_size", spec.image_size);
  spec.levels = r.get_size("corpus.levels", spec.levels);
  spec.reports_per_sample = r.get_size("corpus.reports", spec.reports_per_sample);
  spec.noise = r.get_real("corpus.noise", spec.noise);
  spec.pixel_noise = r.get_real("corpus.pixel_noise", spec.pixel_noise);
  spec.seed = r.get_u64("corpus.seed", spec.seed);
  return spec;
}

std::string join_lines(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) out += l + "\n";
  return out;
}

}  // namespace

extern "C" {

const char* tandem_last_error(void) { return g_last_error.c_str(); }

const char* tandem_version(void) { return "0.1.0"; }

void tandem_free(char* str) { std::free(str); }

tandem_status tandem_check_settings(const char* settings) {
  return guarded([&] {
    const KeyValues kv = settings ? parse_key_values(settings) : KeyValues{};
    for (const auto& [k, v] : kv) {
      bool known = false;
      for (const char* p : {"corpus.", "split.", "model.", "encoder.", "train.", "optimizer.", "caption."}) {
        known = known || k.rfind(p, 0) == 0;
      }
      if (!known) throw ConfigError("unknown config key: " + k);
    }
    KeyValues gen = owned(settings, {"corpus."});
    KeyValueReader gr(gen);
    read_generator_spec(gr).validate(default_templates());
    gr.reject_unknown();

    KeyValues split = owned(settings, {"split."});
    KeyValueReader sr(split);
    const Real test = sr.get_real("split.test_fraction", 0.2);
    const Real val = sr.get_real("split.val_fraction", 0.2);
    sr.get_u64("split.seed", 7);
    sr.reject_unknown();
    if (!(test >= 0 && test < 1) || !(val >= 0 && val < 1)) throw ConfigError("split fractions must lie in [0, 1)");

    KeyValues model = owned(settings, {"model.", "encoder."});
    KeyValueReader mr(model);
    mr.get_u64("model.seed", 1);
    ModelConfig::read(mr).validate();
    mr.reject_unknown();

    KeyValues train = owned(settings, {"train.", "optimizer."});
    KeyValueReader tr(train);
    TrainConfig::read(tr).validate();
    tr.reject_unknown();

    KeyValues caption = owned(settings, {"caption."});
    KeyValueReader cr(caption);
    cr.get_size("caption.epochs", 10);
    cr.get_u64("caption.seed", 1);
    CaptionConfig::read(cr).validate();
    cr.reject_unknown();
  });
}

tandem_status tandem_corpus_generate(const char* settings, tandem_corpus** out) {
  return guarded([&] {
    require(out != nullptr, "out is null");
    KeyValues gen = owned(settings, {"corpus."});
    KeyValues split = owned(settings, {"split."});
    KeyValueReader r(gen);
    const GeneratorSpec spec = read_generator_spec(r);
    r.reject_unknown();
    auto c = std::make_unique<tandem_corpus>();
    c->corpus = generate_corpus(spec);
    c->split = make_split(c->corpus, split);
    c->split_settings = std::move(split);
    *out = c.release();
  });
}

tandem_status tandem_corpus_load(const char* path, tandem_corpus** out) {
  return guarded([&] {
    require(path && out, "path or out is null");
    auto c = std::make_unique<tandem_corpus>();
    c->corpus = read_corpus(path);
    c->split = make_split(c->corpus, c->split_settings);
    *out = c.release();
  });
}

tandem_status tandem_corpus_save(const tandem_corpus* corpus, const char* path) {
  return guarded([&] {
    require(corpus && path, "corpus or path is null");
    write_corpus(corpus->corpus, path);
  });
}

void tandem_corpus_free(tandem_corpus* corpus) { delete corpus; }

tandem_status tandem_corpus_set_split(tandem_corpus* corpus, const char* settings) {
  return guarded([&] {
    require(corpus != nullptr, "corpus is null");
    KeyValues split = owned(settings, {"split."});
    Split s = make_split(corpus->corpus, split);
    corpus->split = std::move(s);
    corpus->split_settings = std::move(split);
  });
}

size_t tandem_corpus_size(const tandem_corpus* corpus) { return corpus ? corpus->corpus.samples.size() : 0; }

size_t tandem_corpus_split_size(const tandem_corpus* corpus, const char* split) {
  if (!corpus || !split) return 0;
  const std::string_view n(split);
  if (n == "train") return corpus->split.train.size();
  if (n == "val") return corpus->split.val.size();
  if (n == "test") return corpus->split.test.size();
  if (n == "all") return corpus->corpus.samples.size();
  return 0;
}

tandem_status tandem_corpus_split_sample(const tandem_corpus* corpus, const char* split, size_t position,
                                         size_t* index) {
  return guarded([&] {
    require(corpus && index, "corpus or index is null");
    std::vector<std::size_t> all;
    const auto& idx = split_indices(corpus, split, all);
    if (position >= idx.size()) {
      throw InputError("position " + std::to_string(position) + " out of range (split has " +
                       std::to_string(idx.size()) + ")");
    }
    *index = idx[position];
  });
}

tandem_status tandem_corpus_write_image(const tandem_corpus* corpus, size_t index, const char* path) {
  return guarded([&] {
    require(corpus && path, "corpus or path is null");
    write_ppm(path, sample_at(corpus, index).image, corpus->corpus.image_size());
  });
}

tandem_status tandem_corpus_report(const tandem_corpus* corpus, size_t index, char** text) {
  return guarded([&] {
    require(corpus && text, "corpus or text is null");
    const Sample& s = sample_at(corpus, index);
    require(!s.reports.empty(), "sample has no report");
    hand_out(text, join_lines(decode_sentences(corpus->corpus.vocab, s.reports[0].tokens)));
  });
}

tandem_status tandem_corpus_settings(const tandem_corpus* corpus, char** text) {
  return guarded([&] {
    require(corpus && text, "corpus or text is null");
    const GeneratorSpec& s = corpus->corpus.spec;
    KeyValues kv = corpus->split_settings;
    kv["corpus.patients"] = std::to_string(s.num_patients);
    kv["corpus.samples_per_patient"] = std::to_string(s.samples_per_patient);
    kv["corpus.image_size"] = std::to_string(s.image_size);
    kv["corpus.levels"] = std::to_string(s.levels);
    kv["corpus.reports"] = std::to_string(s.reports_per_sample);
    kv["corpus.noise"] = format_real(s.noise);
    kv["corpus.pixel_noise"] = format_real(s.pixel_noise);
    kv["corpus.seed"] = std::to_string(s.seed);
    hand_out(text, format_key_values(kv));
  });
}

tandem_status tandem_model_create(const tandem_corpus* corpus, const char* settings, tandem_model** out) {
  return guarded([&] {
    require(corpus && out, "corpus or out is null");
    KeyValues kv = owned(settings, {"model.", "encoder."});
    if (!kv.count("encoder.input_size")) kv["encoder.input_size"] = std::to_string(corpus->corpus.image_size());
    KeyValueReader r(kv);
    const std::uint64_t seed = r.get_u64("model.seed", 1);
    const ModelConfig cfg = ModelConfig::read(r);
    r.reject_unknown();
    auto m = std::make_unique<tandem_model>();
    m->model = std::make_unique<TandemModel>(cfg, corpus->corpus.vocab, seed);
    check_compatible(*m->model, corpus->corpus);
    m->state.config["model.seed"] = std::to_string(seed);
    cfg.write(m->state.config);
    *out = m.release();
  });
}

tandem_status tandem_model_load(const char* path, tandem_model** out) {
  return guarded([&] {
    require(path && out, "path or out is null");
    LoadedCheckpoint ck = load_checkpoint(path);
    auto m = std::make_unique<tandem_model>();
    m->model = std::move(ck.model);
    m->state = std::move(ck.state);
    *out = m.release();
  });
}

tandem_status tandem_model_save(tandem_model* model, const char* path) {
  return guarded([&] {
    require(model && path, "model or path is null");
    save_checkpoint(path, *model->model, model->state);
  });
}

void tandem_model_free(tandem_model* model) { delete model; }

tandem_status tandem_model_settings(const tandem_model* model, char** text) {
  return guarded([&] {
    require(model && text, "model or text is null");
    KeyValues kv = model->state.config;
    model->model->config().write(kv);
    hand_out(text, format_key_values(kv));
  });
}

tandem_status tandem_train(tandem_model* model, const tandem_corpus* corpus, const char* settings,
                           tandem_epoch_callback callback, void* user, char** metrics_csv) {
  return guarded([&] {
    require(model && corpus, "model or corpus is null");
    check_compatible(*model->model, corpus->corpus);
    KeyValues kv = owned(settings, {"train.", "optimizer."});
    KeyValueReader r(kv);
    const TrainConfig cfg = TrainConfig::read(r);
    r.reject_unknown();
    Trainer trainer(*model->model, cfg);
    // Resume when the checkpoint carries optimizer state from a previous run.
    if (!model->state.optimizer.empty()) trainer.restore(model->state);
    const auto history = trainer.fit(corpus->corpus, corpus->split, [&](const EpochStats& st) {
      if (!callback) return;
      const tandem_epoch e{st.epoch, st.train_loss, st.train_accuracy, st.val_loss, st.val_acc_with_text,
                           st.val_acc_without_text};
      callback(&e, user);
    });
    KeyValues echo = model->state.config;
    for (auto& [k, v] : corpus->split_settings) echo[k] = v;
    model->state = trainer.state(echo);
    hand_out(metrics_csv, tandem::metrics_csv(history));
  });
}

tandem_status tandem_evaluate(tandem_model* model, const tandem_corpus* corpus, const char* split, int with_text,
                              tandem_eval* out, char** report_json) {
  return guarded([&] {
    require(model && corpus, "model or corpus is null");
    check_compatible(*model->model, corpus->corpus);
    std::vector<std::size_t> all;
    const auto& idx = split_indices(corpus, split, all);
    require(!idx.empty(), "split is empty");
    const EvalReport r = evaluate(*model->model, corpus->corpus, idx, with_text != 0);
    if (out) *out = tandem_eval{r.samples, r.accuracy, r.loss};
    if (report_json) {
      nlohmann::json j;
      j["split"] = split;
      j["with_text"] = with_text != 0;
      j["samples"] = r.samples;
      j["accuracy"] = r.accuracy;
      j["loss"] = r.loss;
      j["confusion"] = r.confusion;
      nlohmann::json per_class = nlohmann::json::array();
      for (Real a : r.per_class_accuracy) per_class.push_back(std::isnan(a) ? nlohmann::json() : nlohmann::json(a));
      j["per_class_accuracy"] = per_class;
      hand_out(report_json, j.dump(2) + "\n");
    }
  });
}

tandem_status tandem_sweep(const tandem_corpus* corpus, const char* settings, const double* rates, size_t rate_count,
                           char** csv) {
  return guarded([&] {
    require(corpus && csv, "corpus or csv is null");
    require(rates != nullptr && rate_count > 0, "no drop rates given");
    KeyValues model_kv = owned(settings, {"model.", "encoder."});
    if (!model_kv.count("encoder.input_size")) model_kv["encoder.input_size"] = std::to_string(corpus->corpus.image_size());
    KeyValueReader mr(model_kv);
    const std::uint64_t seed = mr.get_u64("model.seed", 1);
    const ModelConfig base = ModelConfig::read(mr);
    mr.reject_unknown();
    KeyValues train_kv = owned(settings, {"train.", "optimizer."});
    KeyValueReader tr(train_kv);
    const TrainConfig train = TrainConfig::read(tr);
    tr.reject_unknown();
    const auto rows =
        drop_rate_sweep(base, train, corpus->corpus, corpus->split, std::span(rates, rate_count), seed);
    hand_out(csv, sweep_csv(rows));
  });
}

tandem_status tandem_attention_export(tandem_model* model, const tandem_corpus* corpus, size_t index, int with_text,
                                      size_t out_size, const char* prefix) {
  return guarded([&] {
    require(model && corpus && prefix, "model, corpus or prefix is null");
    check_compatible(*model->model, corpus->corpus);
    const Tensor alpha = sample_attention(*model->model, sample_at(corpus, index), with_text != 0);
    const std::size_t g = model->model->config().encoder.grid_side();
    const AttentionMap map = export_attention_map(alpha.data(), g, out_size);
    write_pgm(std::string(prefix) + ".pgm", map);
    write_text_file(std::string(prefix) + ".csv", attention_csv(alpha.data(), g));
  });
}

tandem_status tandem_text_attention_stats(tandem_model* model, const tandem_corpus* corpus, const char* split,
                                          char** csv, char** warnings) {
  return guarded([&] {
    require(model && corpus && csv, "model, corpus or csv is null");
    check_compatible(*model->model, corpus->corpus);
    std::vector<std::size_t> all;
    const auto& idx = split_indices(corpus, split, all);
    const TextAttentionStats st = text_attention_stats(*model->model, corpus->corpus, idx);
    hand_out(csv, text_attention_csv(st));
    hand_out(warnings, join_lines(st.warnings));
  });
}

tandem_status tandem_caption_train(tandem_model* model, const tandem_corpus* corpus, const char* settings,
                                   char** log_csv) {
  return guarded([&] {
    require(model && corpus, "model or corpus is null");
    check_compatible(*model->model, corpus->corpus);
    KeyValues kv = owned(settings, {"caption."});
    KeyValueReader r(kv);
    const std::size_t epochs = r.get_size("caption.epochs", 10);
    const std::uint64_t seed = r.get_u64("caption.seed", 1);
    const CaptionConfig cfg = CaptionConfig::read(r);
    r.reject_unknown();
    CaptionTrainer trainer(*model->model, cfg);
    Rng rng = derive_rng(seed, 0xca9);
    std::string log = "epoch,caption_loss,class_loss,truncated\n";
    for (std::size_t e = 0; e < epochs; ++e) {
      const auto st = trainer.train_epoch(corpus->corpus, corpus->split.train, e, rng);
      log += std::to_string(e) + "," + format_real(st.caption_loss) + "," + format_real(st.class_loss) + "," +
             std::to_string(st.truncated) + "\n";
    }
    cfg.write(model->state.config);
    model->state.config["caption.epochs"] = std::to_string(epochs);
    model->state.config["caption.seed"] = std::to_string(seed);
    // Classification optimizer moments no longer describe these weights.
    model->state.optimizer.clear();
    hand_out(log_csv, log);
  });
}

tandem_status tandem_caption_generate(tandem_model* model, const tandem_corpus* corpus, size_t index,
                                      size_t max_tokens, char** text) {
  return guarded([&] {
    require(model && corpus && text, "model, corpus or text is null");
    check_compatible(*model->model, corpus->corpus);
    const auto tokens = generate_report(*model->model, sample_at(corpus, index), max_tokens);
    hand_out(text, join_lines(decode_sentences(model->model->vocab(), tokens)));
  });
}

tandem_status tandem_caption_slot_accuracy(tandem_model* model, const tandem_corpus* corpus, const char* split,
                                           size_t max_tokens, double* accuracy) {
  return guarded([&] {
    require(model && corpus && accuracy, "model, corpus or accuracy is null");
    check_compatible(*model->model, corpus->corpus);
    std::vector<std::size_t> all;
    const auto& idx = split_indices(corpus, split, all);
    *accuracy = caption_slot_accuracy(*model->model, corpus->corpus, idx, max_tokens);
  });
}

}  // extern "C"
