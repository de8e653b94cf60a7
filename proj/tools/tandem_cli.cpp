// Copyright 2026 The Tandem Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line front end. Talks to the library only through tandem.h.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tandem/tandem.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitIo = 5;

struct Failure {
  int code;
  std::string message;
};

void check(tandem_status st) {
  if (st != TANDEM_OK) throw Failure{static_cast<int>(st), tandem_last_error()};
}

std::string take(char* s) {
  std::string out = s ? s : "";
  tandem_free(s);
  return out;
}

struct CorpusDeleter {
  void operator()(tandem_corpus* c) const { tandem_corpus_free(c); }
};
struct ModelDeleter {
  void operator()(tandem_model* m) const { tandem_model_free(m); }
};
using CorpusPtr = std::unique_ptr<tandem_corpus, CorpusDeleter>;
using ModelPtr = std::unique_ptr<tandem_model, ModelDeleter>;

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Failure{kExitIo, "cannot read " + path.string()};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Failure{kExitIo, "cannot write " + path.string()};
}

void require_file(const std::string& path, const char* what) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) throw Failure{kExitIo, std::string(what) + " not found: " + path};
}

void prepare_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Failure{kExitIo, "cannot create directory " + dir.string()};
}

void prepare_parent(const fs::path& file) {
  if (file.has_parent_path()) prepare_dir(file.parent_path());
}

/// Options shared by every subcommand. Settings are the --config file
/// followed by flag overrides; later lines win.
struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::uint64_t seed = 1;

  std::string settings;

  void set(const std::string& key, const std::string& value) { settings += key + "=" + value + "\n"; }

  template <class T>
  void set(const std::string& key, const std::optional<T>& value) {
    if (value) {
      std::ostringstream ss;
      ss.precision(17);
      ss << *value;
      set(key, ss.str());
    }
  }

  void load() {
    if (!config_path.empty()) {
      require_file(config_path, "config file");
      settings = read_text(config_path);
      if (!settings.empty() && settings.back() != '\n') settings += '\n';
    }
    for (const auto& o : overrides) {
      if (o.find('=') == std::string::npos) throw Failure{kExitUsage, "--set expects key=value, got '" + o + "'"};
      settings += o + "\n";
    }
  }

  void validate() const { check(tandem_check_settings(settings.c_str())); }
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "key=value settings file; flags override it");
  cmd->add_option("--set", c.overrides, "extra key=value setting (repeatable)");
  cmd->add_option("--seed", c.seed, "seed for every random choice of this command")->capture_default_str();
}

std::string echo_header(const std::string& command, const std::vector<std::pair<std::string, std::string>>& args) {
  std::string out = std::string("# tandem ") + tandem_version() + " " + command + "\n";
  for (const auto& [k, v] : args) out += "# " + k + ": " + v + "\n";
  return out;
}

fs::path echo_path_for(const fs::path& file) { return fs::path(file.string() + ".config.txt"); }

CorpusPtr load_corpus(const std::string& path) {
  require_file(path, "corpus");
  tandem_corpus* c = nullptr;
  check(tandem_corpus_load(path.c_str(), &c));
  return CorpusPtr(c);
}

ModelPtr load_model(const std::string& path) {
  require_file(path, "checkpoint");
  tandem_model* m = nullptr;
  check(tandem_model_load(path.c_str(), &m));
  return ModelPtr(m);
}

/// The split recorded in the checkpoint, overridden by any split.* lines the
/// user passed, so evaluation sees the same held-out patients as training.
std::string split_settings(tandem_model* model, const std::string& user) {
  char* text = nullptr;
  check(tandem_model_settings(model, &text));
  std::istringstream in(take(text) + user);
  std::string line, out;
  while (std::getline(in, line)) {
    if (line.rfind("split.", 0) == 0) out += line + "\n";
  }
  return out;
}

void print_epoch(const tandem_epoch* e, void*) {
  std::fprintf(stderr, "epoch %zu  loss %.4f  train_acc %.3f  val_loss %.4f  val_acc %.3f (no text %.3f)\n", e->epoch,
               e->train_loss, e->train_accuracy, e->val_loss, e->val_acc_with_text, e->val_acc_without_text);
}

// ---- subcommands ----

struct GenerateArgs {
  Common common;
  std::string out;
  std::optional<std::size_t> patients, per_patient, image_size;
  std::optional<double> noise;
  std::string images_dir;
  std::size_t image_count = 8;
};

int run_generate(GenerateArgs& a) {
  a.common.load();
  a.common.set("corpus.seed", std::to_string(a.common.seed));
  a.common.set("corpus.patients", a.patients);
  a.common.set("corpus.samples_per_patient", a.per_patient);
  a.common.set("corpus.image_size", a.image_size);
  a.common.set("corpus.noise", a.noise);
  a.common.validate();
  prepare_parent(a.out);
  if (!a.images_dir.empty()) prepare_dir(a.images_dir);

  tandem_corpus* raw = nullptr;
  check(tandem_corpus_generate(a.common.settings.c_str(), &raw));
  CorpusPtr corpus(raw);
  check(tandem_corpus_save(corpus.get(), a.out.c_str()));
  char* echo = nullptr;
  check(tandem_corpus_settings(corpus.get(), &echo));
  write_text(echo_path_for(a.out), echo_header("generate", {{"out", a.out}}) + take(echo));

  if (!a.images_dir.empty()) {
    const std::size_t n = std::min(a.image_count, tandem_corpus_size(corpus.get()));
    for (std::size_t i = 0; i < n; ++i) {
      const fs::path base = fs::path(a.images_dir) / ("sample_" + std::to_string(i));
      check(tandem_corpus_write_image(corpus.get(), i, (base.string() + ".ppm").c_str()));
      char* report = nullptr;
      check(tandem_corpus_report(corpus.get(), i, &report));
      write_text(base.string() + ".txt", take(report));
    }
  }
  std::printf("wrote %zu samples (train %zu, val %zu, test %zu) to %s\n", tandem_corpus_size(corpus.get()),
              tandem_corpus_split_size(corpus.get(), "train"), tandem_corpus_split_size(corpus.get(), "val"),
              tandem_corpus_split_size(corpus.get(), "test"), a.out.c_str());
  return 0;
}

struct TrainArgs {
  Common common;
  std::string corpus, out, resume;
  std::optional<double> drop_rate;
  std::optional<std::size_t> epochs;
  bool image_only = false;
  bool quiet = false;
};

int run_train(TrainArgs& a) {
  a.common.load();
  a.common.set("model.seed", std::to_string(a.common.seed));
  a.common.set("train.seed", std::to_string(a.common.seed));
  a.common.set("model.drop_rate", a.drop_rate);
  a.common.set("train.epochs", a.epochs);
  if (a.image_only) a.common.set("model.kind", "image_only");
  a.common.validate();
  CorpusPtr corpus = load_corpus(a.corpus);
  if (!a.resume.empty()) require_file(a.resume, "checkpoint");
  prepare_dir(a.out);

  check(tandem_corpus_set_split(corpus.get(), a.common.settings.c_str()));
  ModelPtr model;
  if (a.resume.empty()) {
    tandem_model* m = nullptr;
    check(tandem_model_create(corpus.get(), a.common.settings.c_str(), &m));
    model.reset(m);
  } else {
    model = load_model(a.resume);
  }
  char* metrics = nullptr;
  check(tandem_train(model.get(), corpus.get(), a.common.settings.c_str(), a.quiet ? nullptr : print_epoch, nullptr,
                     &metrics));
  const fs::path dir(a.out);
  write_text(dir / "metrics.csv", take(metrics));
  check(tandem_model_save(model.get(), (dir / "model.ckpt").string().c_str()));
  char* echo = nullptr;
  check(tandem_model_settings(model.get(), &echo));
  write_text(dir / "config.txt", echo_header("train", {{"corpus", a.corpus}, {"out", a.out}}) + take(echo));
  std::printf("wrote %s and %s\n", (dir / "model.ckpt").string().c_str(), (dir / "metrics.csv").string().c_str());
  return 0;
}

struct EvalArgs {
  Common common;
  std::string checkpoint, corpus, split = "test", out;
  bool with_text = false, no_text = false;
};

int run_eval(EvalArgs& a) {
  a.common.load();
  a.common.validate();
  ModelPtr model = load_model(a.checkpoint);
  CorpusPtr corpus = load_corpus(a.corpus);
  if (!a.out.empty()) prepare_parent(a.out);
  check(tandem_corpus_set_split(corpus.get(), split_settings(model.get(), a.common.settings).c_str()));

  std::vector<bool> modes;
  if (a.with_text || !a.no_text) modes.push_back(true);
  if (a.no_text || !a.with_text) modes.push_back(false);
  std::string json = "[\n";
  for (std::size_t i = 0; i < modes.size(); ++i) {
    tandem_eval r{};
    char* report = nullptr;
    check(tandem_evaluate(model.get(), corpus.get(), a.split.c_str(), modes[i] ? 1 : 0, &r, &report));
    json += take(report) + (i + 1 < modes.size() ? ",\n" : "");
    std::printf("%s accuracy %s: %.4f (%zu samples, loss %.4f)\n", a.split.c_str(),
                modes[i] ? "with text" : "without text", r.accuracy, r.samples, r.loss);
  }
  json += "]\n";
  if (!a.out.empty()) {
    write_text(a.out, json);
    write_text(echo_path_for(a.out),
               echo_header("eval", {{"checkpoint", a.checkpoint}, {"corpus", a.corpus}, {"split", a.split}}) +
                   a.common.settings);
  }
  return 0;
}

struct SweepArgs {
  Common common;
  std::string corpus, out;
  std::vector<double> rates;
  std::optional<std::size_t> epochs;
};

int run_sweep(SweepArgs& a) {
  a.common.load();
  a.common.set("model.seed", std::to_string(a.common.seed));
  a.common.set("train.seed", std::to_string(a.common.seed));
  a.common.set("train.epochs", a.epochs);
  a.common.validate();
  CorpusPtr corpus = load_corpus(a.corpus);
  prepare_parent(a.out);
  check(tandem_corpus_set_split(corpus.get(), a.common.settings.c_str()));
  char* csv = nullptr;
  check(tandem_sweep(corpus.get(), a.common.settings.c_str(), a.rates.data(), a.rates.size(), &csv));
  const std::string table = take(csv);
  write_text(a.out, table);
  std::string rates;
  for (double r : a.rates) rates += (rates.empty() ? "" : ",") + std::to_string(r);
  write_text(echo_path_for(a.out),
             echo_header("sweep", {{"corpus", a.corpus}, {"rates", rates}}) + a.common.settings);
  std::printf("%s", table.c_str());
  return 0;
}

struct AttnExportArgs {
  Common common;
  std::string checkpoint, corpus, out;
  std::size_t index = 0, size = 256;
  bool no_text = false;
};

int run_attn_export(AttnExportArgs& a) {
  a.common.load();
  a.common.validate();
  ModelPtr model = load_model(a.checkpoint);
  CorpusPtr corpus = load_corpus(a.corpus);
  prepare_parent(a.out);
  check(tandem_attention_export(model.get(), corpus.get(), a.index, a.no_text ? 0 : 1, a.size, a.out.c_str()));
  write_text(a.out + ".config.txt", echo_header("attn-export", {{"checkpoint", a.checkpoint},
                                                                {"corpus", a.corpus},
                                                                {"index", std::to_string(a.index)},
                                                                {"size", std::to_string(a.size)},
                                                                {"text", a.no_text ? "no" : "yes"}}));
  std::printf("wrote %s.pgm and %s.csv\n", a.out.c_str(), a.out.c_str());
  return 0;
}

struct TextStatsArgs {
  Common common;
  std::string checkpoint, corpus, split = "test", out;
};

int run_text_stats(TextStatsArgs& a) {
  a.common.load();
  a.common.validate();
  ModelPtr model = load_model(a.checkpoint);
  CorpusPtr corpus = load_corpus(a.corpus);
  if (!a.out.empty()) prepare_parent(a.out);
  check(tandem_corpus_set_split(corpus.get(), split_settings(model.get(), a.common.settings).c_str()));
  char* csv = nullptr;
  char* warnings = nullptr;
  check(tandem_text_attention_stats(model.get(), corpus.get(), a.split.c_str(), &csv, &warnings));
  const std::string table = take(csv);
  const std::string warn = take(warnings);
  if (!warn.empty()) std::fprintf(stderr, "warning: %s", warn.c_str());
  if (!a.out.empty()) {
    write_text(a.out, table);
    write_text(echo_path_for(a.out),
               echo_header("text-attn-stats", {{"checkpoint", a.checkpoint}, {"corpus", a.corpus}, {"split", a.split}}) +
                   a.common.settings);
  }
  std::printf("%s", table.c_str());
  return 0;
}

struct CaptionArgs {
  Common common;
  std::string checkpoint, corpus, out;
  std::optional<std::size_t> epochs;
  std::size_t count = 5, max_tokens = 80;
};

int run_caption(CaptionArgs& a) {
  a.common.load();
  a.common.set("caption.seed", std::to_string(a.common.seed));
  a.common.set("caption.epochs", a.epochs);
  a.common.validate();
  ModelPtr model = load_model(a.checkpoint);
  CorpusPtr corpus = load_corpus(a.corpus);
  const fs::path dir(a.out);
  prepare_dir(dir / "reports");
  check(tandem_corpus_set_split(corpus.get(), split_settings(model.get(), a.common.settings).c_str()));

  char* log = nullptr;
  check(tandem_caption_train(model.get(), corpus.get(), a.common.settings.c_str(), &log));
  const std::string log_csv = take(log);
  write_text(dir / "caption_log.csv", log_csv);
  // The last column counts reports cut at the decode limit during the epoch.
  std::istringstream rows(log_csv);
  std::string row;
  std::getline(rows, row);
  std::size_t truncated = 0;
  while (std::getline(rows, row)) truncated += std::stoul(row.substr(row.rfind(',') + 1));
  if (truncated > 0) {
    std::fprintf(stderr, "warning: %zu training reports were longer than the decode limit and were truncated\n",
                 truncated);
  }
  check(tandem_model_save(model.get(), (dir / "caption.ckpt").string().c_str()));

  // Reports for the first `count` samples of the held-out test split.
  std::vector<std::size_t> test;
  const std::size_t n = std::min(a.count, tandem_corpus_split_size(corpus.get(), "test"));
  for (std::size_t pos = 0; pos < n; ++pos) {
    std::size_t index = 0;
    check(tandem_corpus_split_sample(corpus.get(), "test", pos, &index));
    test.push_back(index);
  }
  for (std::size_t i : test) {
    char* text = nullptr;
    check(tandem_caption_generate(model.get(), corpus.get(), i, a.max_tokens, &text));
    write_text(dir / "reports" / ("sample_" + std::to_string(i) + ".txt"), take(text));
  }
  double slot = 0;
  check(tandem_caption_slot_accuracy(model.get(), corpus.get(), "test", a.max_tokens, &slot));
  char* echo = nullptr;
  check(tandem_model_settings(model.get(), &echo));
  write_text(dir / "config.txt", echo_header("caption", {{"checkpoint", a.checkpoint}, {"corpus", a.corpus}}) +
                                     take(echo));
  std::printf("test slot accuracy: %.4f\nwrote %s\n", slot, dir.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tandem: image classification with optional report text"};
  app.require_subcommand(1);
  app.set_version_flag("--version", tandem_version());

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "render a synthetic corpus");
  add_common(g, gen.common);
  g->add_option("--out", gen.out, "corpus file")->required();
  g->add_option("--patients", gen.patients);
  g->add_option("--samples-per-patient", gen.per_patient);
  g->add_option("--image-size", gen.image_size);
  g->add_option("--noise", gen.noise, "std of the observed-severity noise");
  g->add_option("--images", gen.images_dir, "also dump PPM images and reports here");
  g->add_option("--image-count", gen.image_count, "number of samples to dump")->capture_default_str();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train a classifier");
  add_common(t, tr.common);
  t->add_option("--corpus", tr.corpus)->required();
  t->add_option("--out", tr.out, "output directory")->required();
  t->add_option("--drop-rate", tr.drop_rate, "probability of dropping the text during training");
  t->add_option("--epochs", tr.epochs);
  t->add_option("--resume", tr.resume, "continue from this checkpoint");
  t->add_flag("--image-only", tr.image_only, "baseline without text and attention");
  t->add_flag("--quiet", tr.quiet);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(e, ev.common);
  e->add_option("--checkpoint", ev.checkpoint)->required();
  e->add_option("--corpus", ev.corpus)->required();
  e->add_option("--split", ev.split)->check(CLI::IsMember({"train", "val", "test", "all"}))->capture_default_str();
  auto* wt = e->add_flag("--with-text", ev.with_text);
  auto* nt = e->add_flag("--no-text", ev.no_text);
  wt->excludes(nt);
  e->add_option("--out", ev.out, "JSON report");

  SweepArgs sw;
  auto* s = app.add_subcommand("sweep", "train one model per drop rate");
  add_common(s, sw.common);
  s->add_option("--corpus", sw.corpus)->required();
  s->add_option("--rates", sw.rates)->delimiter(',')->required()->check(CLI::Range(0.0, 1.0));
  s->add_option("--out", sw.out, "CSV file")->required();
  s->add_option("--epochs", sw.epochs);

  AttnExportArgs ax;
  auto* x = app.add_subcommand("attn-export", "write the attention map of one sample");
  add_common(x, ax.common);
  x->add_option("--checkpoint", ax.checkpoint)->required();
  x->add_option("--corpus", ax.corpus)->required();
  x->add_option("--index", ax.index)->required();
  x->add_option("--out", ax.out, "output prefix (.pgm and .csv are appended)")->required();
  x->add_option("--size", ax.size, "side of the upsampled map")->capture_default_str();
  x->add_flag("--no-text", ax.no_text);

  TextStatsArgs ts;
  auto* a = app.add_subcommand("text-attn-stats", "mean text attention per class and sentence");
  add_common(a, ts.common);
  a->add_option("--checkpoint", ts.checkpoint)->required();
  a->add_option("--corpus", ts.corpus)->required();
  a->add_option("--split", ts.split)->check(CLI::IsMember({"train", "val", "test", "all"}))->capture_default_str();
  a->add_option("--out", ts.out, "CSV file");

  CaptionArgs cp;
  auto* c = app.add_subcommand("caption", "fine-tune report generation and decode test reports");
  add_common(c, cp.common);
  c->add_option("--checkpoint", cp.checkpoint)->required();
  c->add_option("--corpus", cp.corpus)->required();
  c->add_option("--out", cp.out, "output directory")->required();
  c->add_option("--epochs", cp.epochs);
  c->add_option("--count", cp.count, "reports to write")->capture_default_str();
  c->add_option("--max-tokens", cp.max_tokens)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::CallForAllHelp& err) {
    return app.exit(err);
  } catch (const CLI::CallForVersion& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    std::fprintf(stderr, "error: %s\n\n", err.what());
    const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    std::fprintf(stderr, "%s", sub->help().c_str());
    return kExitUsage;
  }

  try {
    if (*g) return run_generate(gen);
    if (*t) return run_train(tr);
    if (*e) return run_eval(ev);
    if (*s) return run_sweep(sw);
    if (*x) return run_attn_export(ax);
    if (*a) return run_text_stats(ts);
    if (*c) return run_caption(cp);
  } catch (const Failure& f) {
    std::fprintf(stderr, "error: %s\n", f.message.c_str());
    return f.code;
  }
  return kExitUsage;
}
