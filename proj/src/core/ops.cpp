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
#include "core/ops.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Core>

#include "core/errors.hpp"

namespace tandem {
namespace {

using RowMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

template <typename Fn>
void accumulate(Tape& t, std::size_t id, Fn&& fn) {
  if (t.needs_grad(id)) fn(t.grad_accumulator(id));
}

Tape& same_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw Error("operands recorded on different tapes");
  return a.tape();
}

void require_rank(const Var& v, std::size_t rank, const char* op) {
  if (v.value().rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         to_string(v.shape()));
  }
}

enum class Broadcast { kNone, kColumn, kScalar };

Broadcast broadcast_kind(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return Broadcast::kNone;
  if (a.size() == 2 && b.size() == 1 && b[0] == a[0]) return Broadcast::kColumn;
  if (shape_size(b) == 1) return Broadcast::kScalar;
  throw DimensionError(std::string(op) + ": shapes " + to_string(a) + " and " + to_string(b) +
                       " are not broadcast-compatible");
}

template <typename F, typename DF>
Var unary(const Var& a, F f, DF df_from_output) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const std::size_t ia = a.id();
  const std::size_t out_id = a.tape().size();
  return a.tape().record(std::move(y), {a}, [ia, out_id, df_from_output](Tape& t, const Tensor& g) {
    const Tensor& y = t.value(out_id);
    accumulate(t, ia, [&](Tensor& ga) {
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df_from_output(y[i]);
    });
  });
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  Tape& tape = same_tape(a, b);
  require_rank(a, 2, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const bool vec = bv.rank() == 1;
  if (!vec && bv.rank() != 2) throw DimensionError("matmul: right operand must be rank 1 or 2, got " + to_string(bv.shape()));
  const std::size_t m = av.dim(0), k = av.dim(1);
  const std::size_t kb = bv.dim(0);
  const std::size_t n = vec ? 1 : bv.dim(1);
  if (k != kb) {
    throw DimensionError("matmul: inner dimensions disagree for " + to_string(av.shape()) + " and " +
                         to_string(bv.shape()));
  }
  Tensor out(vec ? Shape{m} : Shape{m, n});
  MatMap(out.data().data(), m, n).noalias() =
      ConstMatMap(av.data().data(), m, k) * ConstMatMap(bv.data().data(), k, n);

  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {a, b}, [ia, ib, m, k, n](Tape& t, const Tensor& g) {
    ConstMatMap gm(g.data().data(), m, n);
    accumulate(t, ia, [&](Tensor& ga) {
      MatMap(ga.data().data(), m, k).noalias() += gm * ConstMatMap(t.value(ib).data().data(), k, n).transpose();
    });
    accumulate(t, ib, [&](Tensor& gb) {
      MatMap(gb.data().data(), k, n).noalias() += ConstMatMap(t.value(ia).data().data(), m, k).transpose() * gm;
    });
  });
}

namespace {

// Shared implementation of add/sub: out = a + sign * b.
Var add_signed(const Var& a, const Var& b, Real sign, const char* name) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Broadcast kind = broadcast_kind(av.shape(), bv.shape(), name);
  Tensor out = av;
  const std::size_t cols = kind == Broadcast::kColumn ? av.dim(1) : 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    switch (kind) {
      case Broadcast::kNone: out[i] += sign * bv[i]; break;
      case Broadcast::kColumn: out[i] += sign * bv[i / cols]; break;
      case Broadcast::kScalar: out[i] += sign * bv[0]; break;
    }
  }
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {a, b}, [ia, ib, kind, cols, sign](Tape& t, const Tensor& g) {
    accumulate(t, ia, [&](Tensor& ga) {
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
    accumulate(t, ib, [&](Tensor& gb) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        switch (kind) {
          case Broadcast::kNone: gb[i] += sign * g[i]; break;
          case Broadcast::kColumn: gb[i / cols] += sign * g[i]; break;
          case Broadcast::kScalar: gb[0] += sign * g[i]; break;
        }
      }
    });
  });
}

}  // namespace

Var add(const Var& a, const Var& b) { return add_signed(a, b, 1, "add"); }

Var sub(const Var& a, const Var& b) { return add_signed(a, b, -1, "sub"); }

Var mul(const Var& a, const Var& b) {
  Tape& tape = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape()) {
    throw DimensionError("mul: shapes " + to_string(av.shape()) + " and " + to_string(bv.shape()) + " differ");
  }
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    accumulate(t, ia, [&](Tensor& ga) {
      const Tensor& bv = t.value(ib);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    });
    accumulate(t, ib, [&](Tensor& gb) {
      const Tensor& av = t.value(ia);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    });
  });
}

Var scale(const Var& a, Real k) {
  Tensor out = a.value();
  for (Real& v : out.data()) v *= k;
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, k](Tape& t, const Tensor& g) {
    accumulate(t, ia, [&](Tensor& ga) {
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += k * g[i];
    });
  });
}

Var tanh(const Var& a) {
  return unary(a, [](Real x) { return std::tanh(x); }, [](Real y) { return 1 - y * y; });
}

Var sigmoid(const Var& a) {
  return unary(a, [](Real x) { return 1 / (1 + std::exp(-x)); }, [](Real y) { return y * (1 - y); });
}

Var relu(const Var& a) {
  return unary(a, [](Real x) { return x > 0 ? x : Real{0}; }, [](Real y) { return y > 0 ? Real{1} : Real{0}; });
}

Var softmax(const Var& logits) {
  require_rank(logits, 1, "softmax");
  const Tensor& e = logits.value();
  if (e.size() == 0) throw DimensionError("softmax: empty input");
  if (!e.all_finite()) throw NumericError("softmax: non-finite logits");
  const Real shift = *std::max_element(e.data().begin(), e.data().end());
  Tensor y(e.shape());
  Real total = 0;
  for (std::size_t i = 0; i < e.size(); ++i) total += (y[i] = std::exp(e[i] - shift));
  for (Real& v : y.data()) v /= total;
  const std::size_t ia = logits.id();
  const std::size_t out_id = logits.tape().size();
  return logits.tape().record(std::move(y), {logits}, [ia, out_id](Tape& t, const Tensor& g) {
    const Tensor& y = t.value(out_id);
    Real dot = 0;
    for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * y[i];
    accumulate(t, ia, [&](Tensor& ga) {
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += y[i] * (g[i] - dot);
    });
  });
}

Var cross_entropy(const Var& logits, std::size_t target) {
  require_rank(logits, 1, "cross_entropy");
  const Tensor& z = logits.value();
  if (target >= z.size()) {
    throw DimensionError("cross_entropy: target " + std::to_string(target) + " outside " + to_string(z.shape()));
  }
  if (!z.all_finite()) throw NumericError("cross_entropy: non-finite logits");
  const Real shift = *std::max_element(z.data().begin(), z.data().end());
  std::vector<Real> p(z.size());
  Real total = 0;
  for (std::size_t i = 0; i < z.size(); ++i) total += (p[i] = std::exp(z[i] - shift));
  for (Real& v : p) v /= total;
  Tensor out({1}, -(z[target] - shift - std::log(total)));
  const std::size_t ia = logits.id();
  return logits.tape().record(std::move(out), {logits}, [ia, target, p = std::move(p)](Tape& t, const Tensor& g) {
    accumulate(t, ia, [&](Tensor& ga) {
      for (std::size_t i = 0; i < p.size(); ++i) ga[i] += g[0] * (p[i] - (i == target ? 1 : 0));
    });
  });
}

Var sum(const Var& a) {
  Tensor out({1}, a.value().sum());
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia](Tape& t, const Tensor& g) {
    accumulate(t, ia, [&](Tensor& ga) {
      for (Real& v : ga.data()) v += g[0];
    });
  });
}

Var add_n(std::span<const Var> terms) {
  if (terms.empty()) throw DimensionError("add_n: no terms");
  Tape& tape = terms.front().tape();
  Tensor out = terms.front().value();
  for (std::size_t k = 1; k < terms.size(); ++k) {
    const Tensor& v = terms[k].value();
    if (v.shape() != out.shape()) {
      throw DimensionError("add_n: shape " + to_string(v.shape()) + " differs from " + to_string(out.shape()));
    }
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += v[i];
  }
  std::vector<std::size_t> ids;
  for (const Var& v : terms) ids.push_back(v.id());
  return tape.record(std::move(out), terms, [ids = std::move(ids)](Tape& t, const Tensor& g) {
    for (std::size_t id : ids) {
      accumulate(t, id, [&](Tensor& gi) {
        for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
      });
    }
  });
}

Var mean(std::span<const Var> terms) {
  return scale(add_n(terms), Real{1} / static_cast<Real>(terms.size()));
}

Var global_avg_pool(const Var& x) {
  require_rank(x, 2, "global_avg_pool");
  const Tensor& xv = x.value();
  const std::size_t rows = xv.dim(0), cols = xv.dim(1);
  if (cols == 0) throw DimensionError("global_avg_pool: empty last dimension in " + to_string(xv.shape()));
  Tensor out({rows});
  for (std::size_t r = 0; r < rows; ++r) {
    Real s = 0;
    for (std::size_t c = 0; c < cols; ++c) s += xv.at(r, c);
    out[r] = s / static_cast<Real>(cols);
  }
  const std::size_t ia = x.id();
  return x.tape().record(std::move(out), {x}, [ia, rows, cols](Tape& t, const Tensor& g) {
    accumulate(t, ia, [&](Tensor& gx) {
      const Real inv = Real{1} / static_cast<Real>(cols);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) gx.at(r, c) += g[r] * inv;
    });
  });
}

Var concat_cols(const Var& a, const Var& b) {
  Tape& tape = same_tape(a, b);
  require_rank(a, 2, "concat_cols");
  require_rank(b, 2, "concat_cols");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.dim(0) != bv.dim(0)) {
    throw DimensionError("concat_cols: row counts differ for " + to_string(av.shape()) + " and " +
                         to_string(bv.shape()));
  }
  const std::size_t rows = av.dim(0), ca = av.dim(1), cb = bv.dim(1);
  Tensor out({rows, ca + cb});
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(&av.data()[r * ca], ca, &out.data()[r * (ca + cb)]);
    std::copy_n(&bv.data()[r * cb], cb, &out.data()[r * (ca + cb) + ca]);
  }
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {a, b}, [ia, ib, rows, ca, cb](Tape& t, const Tensor& g) {
    accumulate(t, ia, [&](Tensor& ga) {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < ca; ++c) ga.at(r, c) += g.at(r, c);
    });
    accumulate(t, ib, [&](Tensor& gb) {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cb; ++c) gb.at(r, c) += g.at(r, ca + c);
    });
  });
}

Var slice_cols(const Var& x, std::size_t begin, std::size_t end) {
  require_rank(x, 2, "slice_cols");
  const Tensor& xv = x.value();
  const std::size_t rows = xv.dim(0), cols = xv.dim(1);
  if (begin > end || end > cols) {
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") outside " + to_string(xv.shape()));
  }
  const std::size_t w = end - begin;
  Tensor out({rows, w});
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(&xv.data()[r * cols + begin], w, &out.data()[r * w]);
  const std::size_t ia = x.id();
  return x.tape().record(std::move(out), {x}, [ia, rows, cols, begin, w](Tape& t, const Tensor& g) {
    accumulate(t, ia, [&](Tensor& gx) {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < w; ++c) gx[r * cols + begin + c] += g[r * w + c];
    });
  });
}

Var stack_cols(std::span<const Var> columns) {
  if (columns.empty()) throw DimensionError("stack_cols: no columns");
  Tape& tape = columns.front().tape();
  const std::size_t rows = columns.front().value().size();
  const std::size_t n = columns.size();
  Tensor out({rows, n});
  for (std::size_t j = 0; j < n; ++j) {
    const Tensor& c = columns[j].value();
    if (c.rank() != 1 || c.size() != rows) {
      throw DimensionError("stack_cols: column " + std::to_string(j) + " has shape " + to_string(c.shape()) +
                           ", expected [" + std::to_string(rows) + "]");
    }
    for (std::size_t r = 0; r < rows; ++r) out.at(r, j) = c[r];
  }
  std::vector<std::size_t> ids;
  for (const Var& v : columns) ids.push_back(v.id());
  return tape.record(std::move(out), columns, [ids = std::move(ids), rows](Tape& t, const Tensor& g) {
    const std::size_t n = ids.size();
    for (std::size_t j = 0; j < n; ++j) {
      accumulate(t, ids[j], [&](Tensor& gc) {
        for (std::size_t r = 0; r < rows; ++r) gc[r] += g[r * n + j];
      });
    }
  });
}

Var column(const Var& x, std::size_t j) {
  require_rank(x, 2, "column");
  const Tensor& xv = x.value();
  const std::size_t rows = xv.dim(0), cols = xv.dim(1);
  if (j >= cols) throw DimensionError("column: index " + std::to_string(j) + " outside " + to_string(xv.shape()));
  Tensor out({rows});
  for (std::size_t r = 0; r < rows; ++r) out[r] = xv.at(r, j);
  const std::size_t ia = x.id();
  return x.tape().record(std::move(out), {x}, [ia, rows, cols, j](Tape& t, const Tensor& g) {
    accumulate(t, ia, [&](Tensor& gx) {
      for (std::size_t r = 0; r < rows; ++r) gx[r * cols + j] += g[r];
    });
  });
}

Var slice(const Var& v, std::size_t begin, std::size_t end) {
  require_rank(v, 1, "slice");
  const Tensor& vv = v.value();
  if (begin > end || end > vv.size()) {
    throw DimensionError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) + ") outside " +
                         to_string(vv.shape()));
  }
  Tensor out({end - begin}, std::vector<Real>(vv.data().begin() + begin, vv.data().begin() + end));
  const std::size_t ia = v.id();
  return v.tape().record(std::move(out), {v}, [ia, begin](Tape& t, const Tensor& g) {
    accumulate(t, ia, [&](Tensor& gv) {
      for (std::size_t i = 0; i < g.size(); ++i) gv[begin + i] += g[i];
    });
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  const std::size_t ia = x.id();
  return x.tape().record(std::move(out), {x}, [ia](Tape& t, const Tensor& g) {
    accumulate(t, ia, [&](Tensor& gx) {
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  });
}

Var batch_item(const Var& x, std::size_t b) {
  const Tensor& xv = x.value();
  if (xv.rank() < 2) throw DimensionError("batch_item: need a batched tensor, got " + to_string(xv.shape()));
  if (b >= xv.dim(0)) throw DimensionError("batch_item: index " + std::to_string(b) + " outside " + to_string(xv.shape()));
  Shape item(xv.shape().begin() + 1, xv.shape().end());
  const std::size_t n = shape_size(item);
  Tensor out(item, std::vector<Real>(xv.data().begin() + b * n, xv.data().begin() + (b + 1) * n));
  const std::size_t ia = x.id();
  return x.tape().record(std::move(out), {x}, [ia, b, n](Tape& t, const Tensor& g) {
    accumulate(t, ia, [&](Tensor& gx) {
      for (std::size_t i = 0; i < n; ++i) gx[b * n + i] += g[i];
    });
  });
}

Var detach(const Var& x) { return x.tape().constant(x.value()); }

}  // namespace tandem
