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
#include "core/checkpoint.hpp"

#include "core/binary_io.hpp"
#include "core/errors.hpp"

namespace tandem {
namespace {

constexpr char kMagic[] = "TNDMCKPT";
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kF64 = 0;
constexpr std::uint8_t kBytes = 1;

}  // namespace

void Bundle::claim(const std::string& name) {
  if (has(name)) throw InputError("duplicate checkpoint record " + name);
  order_.push_back(name);
}

void Bundle::put(const std::string& name, const Tensor& t) {
  claim(name);
  tensors_.emplace(name, t);
}

void Bundle::put_bytes(const std::string& name, std::string bytes) {
  claim(name);
  blobs_.emplace(name, std::move(bytes));
}

bool Bundle::has(const std::string& name) const { return tensors_.count(name) || blobs_.count(name); }

const Tensor& Bundle::tensor(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw FormatError("checkpoint has no tensor record " + name);
  return it->second;
}

const std::string& Bundle::bytes(const std::string& name) const {
  auto it = blobs_.find(name);
  if (it == blobs_.end()) throw FormatError("checkpoint has no byte record " + name);
  return it->second;
}

std::vector<std::string> Bundle::names() const { return order_; }

std::vector<std::uint8_t> Bundle::serialize() const {
  ByteWriter w;
  w.bytes(kMagic, 8);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(order_.size()));
  for (const auto& name : order_) {
    w.str(name);
    if (auto it = tensors_.find(name); it != tensors_.end()) {
      const Tensor& t = it->second;
      w.u8(kF64);
      w.u32(static_cast<std::uint32_t>(t.rank()));
      for (std::size_t d : t.shape()) w.u64(d);
      w.bytes(t.data().data(), t.size() * sizeof(Real));
    } else {
      const std::string& b = blobs_.at(name);
      w.u8(kBytes);
      w.u32(1);
      w.u64(b.size());
      w.bytes(b.data(), b.size());
    }
  }
  return w.take();
}

Bundle Bundle::parse(std::span<const std::uint8_t> data) {
  ByteReader r(data);
  r.expect_magic(std::string_view(kMagic, 8), "checkpoint");
  const std::size_t version_at = r.offset();
  const std::uint32_t version = r.u32("version");
  if (version != kVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version), version_at);
  }
  const std::uint32_t count = r.u32("record count");
  Bundle b;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t record_at = r.offset();
    std::string name = r.str("record name");
    const std::uint8_t dtype = r.u8("dtype");
    const std::uint32_t rank = r.u32("rank");
    if (rank > 8) throw FormatError("implausible rank in record " + name, record_at);
    Shape shape(rank);
    std::size_t total = 1;
    for (auto& d : shape) {
      d = r.u64("dimension");
      if (d != 0 && total > r.remaining() / d) throw FormatError("record " + name + " exceeds file size", record_at);
      total *= d;
    }
    if (b.has(name)) throw FormatError("duplicate record " + name, record_at);
    if (dtype == kF64) {
      if (total > r.remaining() / sizeof(Real)) throw FormatError("truncated record " + name, r.offset());
      Tensor t(shape);
      r.bytes(t.data().data(), total * sizeof(Real), "tensor data");
      b.put(name, t);
    } else if (dtype == kBytes && rank == 1) {
      std::string s(total, '\0');
      r.bytes(s.data(), total, "byte record");
      b.put_bytes(name, std::move(s));
    } else {
      throw FormatError("unknown dtype in record " + name, record_at);
    }
  }
  if (!r.at_end()) throw FormatError("trailing bytes after checkpoint", r.offset());
  return b;
}

Bundle make_checkpoint(TandemModel& model, const TrainingState& state) {
  Bundle b;
  KeyValues config = state.config;
  model.config().write(config);
  b.put_bytes("meta/config", format_key_values(config));
  b.put_bytes("meta/vocab", model.vocab().serialize());
  b.put_bytes("meta/rng", state.rng_state);
  b.put("meta/epoch", Tensor({1}, static_cast<Real>(state.epoch)));
  b.put("meta/best_score", Tensor({1}, state.best_score));
  for (const Parameter* p : model.parameters()) b.put("param/" + p->name, p->value);
  for (const auto& buf : model.buffers()) b.put("buffer/" + buf.name, *buf.tensor);
  for (const auto& s : state.optimizer) b.put("optim/" + s.name, s.value);
  return b;
}

void save_checkpoint(const std::filesystem::path& path, TandemModel& model, const TrainingState& state) {
  write_file_bytes(path, make_checkpoint(model, state).serialize());
}

LoadedCheckpoint restore_checkpoint(const Bundle& b) {
  LoadedCheckpoint out;
  out.state.config = parse_key_values(b.bytes("meta/config"));
  KeyValueReader reader(out.state.config);
  const ModelConfig cfg = ModelConfig::read(reader);
  Vocabulary vocab;
  try {
    vocab = Vocabulary::parse(b.bytes("meta/vocab"));
  } catch (const FormatError& e) {
    throw FormatError(std::string("checkpoint vocabulary: ") + e.what());
  }
  out.model = std::make_unique<TandemModel>(cfg, std::move(vocab), 0);
  for (Parameter* p : out.model->parameters()) {
    const Tensor& t = b.tensor("param/" + p->name);
    if (t.shape() != p->value.shape()) {
      throw FormatError("checkpoint parameter " + p->name + " has shape " + to_string(t.shape()) + ", model expects " +
                        to_string(p->value.shape()));
    }
    p->value = t;
  }
  for (auto& buf : out.model->buffers()) {
    const Tensor& t = b.tensor("buffer/" + buf.name);
    if (t.shape() != buf.tensor->shape()) throw FormatError("checkpoint buffer " + buf.name + " has the wrong shape");
    *buf.tensor = t;
  }
  out.state.epoch = static_cast<std::size_t>(b.tensor("meta/epoch")[0]);
  out.state.best_score = b.tensor("meta/best_score")[0];
  out.state.rng_state = b.bytes("meta/rng");
  for (const auto& name : b.names()) {
    if (name.rfind("optim/", 0) == 0) out.state.optimizer.push_back({name.substr(6), b.tensor(name)});
  }
  return out;
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  return restore_checkpoint(Bundle::parse(read_file_bytes(path)));
}

void copy_weights(TandemModel& src, TandemModel& dst) {
  auto sp = src.parameters();
  auto dp = dst.parameters();
  if (sp.size() != dp.size()) throw DimensionError("copy_weights: parameter lists differ");
  for (std::size_t i = 0; i < sp.size(); ++i) {
    if (sp[i]->value.shape() != dp[i]->value.shape()) throw DimensionError("copy_weights: shape mismatch " + sp[i]->name);
    dp[i]->value = sp[i]->value;
  }
  auto sb = src.buffers();
  auto db = dst.buffers();
  for (std::size_t i = 0; i < sb.size(); ++i) *db[i].tensor = *sb[i].tensor;
}

}  // namespace tandem
