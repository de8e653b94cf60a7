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
#include "core/nn_ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include <Eigen/Core>

#include "core/errors.hpp"
#include "core/parallel.hpp"

namespace tandem {
namespace {

using RowMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

struct ConvPlan {
  std::size_t batch, cin, h, w, cout, kh, kw, stride, pad, ho, wo;
  std::size_t patch() const { return cin * kh * kw; }
  std::size_t pixels() const { return ho * wo; }
};

void im2col(const Real* x, const ConvPlan& p, Real* cols) {
  const std::size_t np = p.pixels();
  for (std::size_t c = 0; c < p.cin; ++c) {
    for (std::size_t ky = 0; ky < p.kh; ++ky) {
      for (std::size_t kx = 0; kx < p.kw; ++kx) {
        Real* row = cols + ((c * p.kh + ky) * p.kw + kx) * np;
        for (std::size_t oy = 0; oy < p.ho; ++oy) {
          const long iy = static_cast<long>(oy * p.stride + ky) - static_cast<long>(p.pad);
          for (std::size_t ox = 0; ox < p.wo; ++ox) {
            const long ix = static_cast<long>(ox * p.stride + kx) - static_cast<long>(p.pad);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<long>(p.h) && ix < static_cast<long>(p.w);
            row[oy * p.wo + ox] = inside ? x[(c * p.h + iy) * p.w + ix] : Real{0};
          }
        }
      }
    }
  }
}

void col2im(const Real* cols, const ConvPlan& p, Real* gx) {
  const std::size_t np = p.pixels();
  for (std::size_t c = 0; c < p.cin; ++c) {
    for (std::size_t ky = 0; ky < p.kh; ++ky) {
      for (std::size_t kx = 0; kx < p.kw; ++kx) {
        const Real* row = cols + ((c * p.kh + ky) * p.kw + kx) * np;
        for (std::size_t oy = 0; oy < p.ho; ++oy) {
          const long iy = static_cast<long>(oy * p.stride + ky) - static_cast<long>(p.pad);
          if (iy < 0 || iy >= static_cast<long>(p.h)) continue;
          for (std::size_t ox = 0; ox < p.wo; ++ox) {
            const long ix = static_cast<long>(ox * p.stride + kx) - static_cast<long>(p.pad);
            if (ix < 0 || ix >= static_cast<long>(p.w)) continue;
            gx[(c * p.h + iy) * p.w + ix] += row[oy * p.wo + ox];
          }
        }
      }
    }
  }
}

void require_4d(const Tensor& t, const char* op) {
  if (t.rank() != 4) throw DimensionError(std::string(op) + ": expected NCHW tensor, got " + to_string(t.shape()));
}

}  // namespace

Var conv2d(const Var& x, const Var& weight, Conv2dGeometry geometry) {
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  require_4d(xv, "conv2d");
  require_4d(wv, "conv2d weight");
  if (geometry.stride == 0) throw DimensionError("conv2d: stride must be positive");
  ConvPlan p{};
  p.batch = xv.dim(0);
  p.cin = xv.dim(1);
  p.h = xv.dim(2);
  p.w = xv.dim(3);
  p.cout = wv.dim(0);
  p.kh = wv.dim(2);
  p.kw = wv.dim(3);
  p.stride = geometry.stride;
  p.pad = geometry.padding;
  if (wv.dim(1) != p.cin) {
    throw DimensionError("conv2d: weight " + to_string(wv.shape()) + " expects " + std::to_string(wv.dim(1)) +
                         " input channels, input is " + to_string(xv.shape()));
  }
  if (p.kh > p.h + 2 * p.pad || p.kw > p.w + 2 * p.pad) {
    throw DimensionError("conv2d: kernel " + to_string(wv.shape()) + " larger than padded input " +
                         to_string(xv.shape()));
  }
  p.ho = (p.h + 2 * p.pad - p.kh) / p.stride + 1;
  p.wo = (p.w + 2 * p.pad - p.kw) / p.stride + 1;

  Tensor out({p.batch, p.cout, p.ho, p.wo});
  const std::size_t in_item = p.cin * p.h * p.w;
  const std::size_t out_item = p.cout * p.pixels();
  parallel_for(p.batch, [&](std::size_t b, std::size_t) {
    std::vector<Real> cols(p.patch() * p.pixels());
    im2col(xv.data().data() + b * in_item, p, cols.data());
    MatMap(out.data().data() + b * out_item, p.cout, p.pixels()).noalias() =
        ConstMatMap(wv.data().data(), p.cout, p.patch()) * ConstMatMap(cols.data(), p.patch(), p.pixels());
  });

  const std::size_t ix = x.id(), iw = weight.id();
  return x.tape().record(std::move(out), {x, weight}, [ix, iw, p, in_item, out_item](Tape& t, const Tensor& g) {
    const bool need_x = t.needs_grad(ix);
    const bool need_w = t.needs_grad(iw);
    const Tensor& xv = t.value(ix);
    const Tensor& wv = t.value(iw);
    const std::size_t workers = std::max<std::size_t>(1, std::min(worker_threads(), p.batch));
    std::vector<RowMatrix> partial_w(need_w ? workers : 0, RowMatrix::Zero(p.cout, p.patch()));
    Real* gx = need_x ? t.grad_accumulator(ix).data().data() : nullptr;
    parallel_for(p.batch, [&](std::size_t b, std::size_t worker) {
      ConstMatMap gb(g.data().data() + b * out_item, p.cout, p.pixels());
      std::vector<Real> cols(p.patch() * p.pixels());
      if (need_w) {
        im2col(xv.data().data() + b * in_item, p, cols.data());
        partial_w[worker].noalias() += gb * ConstMatMap(cols.data(), p.patch(), p.pixels()).transpose();
      }
      if (need_x) {
        MatMap(cols.data(), p.patch(), p.pixels()).noalias() =
            ConstMatMap(wv.data().data(), p.cout, p.patch()).transpose() * gb;
        col2im(cols.data(), p, gx + b * in_item);
      }
    });
    if (need_w) {
      MatMap gw(t.grad_accumulator(iw).data().data(), p.cout, p.patch());
      for (const auto& part : partial_w) gw += part;
    }
  });
}

Var avg_pool2d(const Var& x, std::size_t kernel) {
  const Tensor& xv = x.value();
  require_4d(xv, "avg_pool2d");
  if (kernel == 0 || kernel > xv.dim(2) || kernel > xv.dim(3)) {
    throw DimensionError("avg_pool2d: kernel " + std::to_string(kernel) + " does not fit " + to_string(xv.shape()));
  }
  const std::size_t planes = xv.dim(0) * xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const std::size_t ho = h / kernel, wo = w / kernel;
  const Real inv = Real{1} / static_cast<Real>(kernel * kernel);
  Tensor out({xv.dim(0), xv.dim(1), ho, wo});
  for (std::size_t pl = 0; pl < planes; ++pl)
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox) {
        Real s = 0;
        for (std::size_t ky = 0; ky < kernel; ++ky)
          for (std::size_t kx = 0; kx < kernel; ++kx) s += xv[(pl * h + oy * kernel + ky) * w + ox * kernel + kx];
        out[(pl * ho + oy) * wo + ox] = s * inv;
      }
  const std::size_t ia = x.id();
  return x.tape().record(std::move(out), {x}, [ia, planes, h, w, ho, wo, kernel, inv](Tape& t, const Tensor& g) {
    if (!t.needs_grad(ia)) return;
    Tensor& gx = t.grad_accumulator(ia);
    for (std::size_t pl = 0; pl < planes; ++pl)
      for (std::size_t oy = 0; oy < ho; ++oy)
        for (std::size_t ox = 0; ox < wo; ++ox) {
          const Real v = g[(pl * ho + oy) * wo + ox] * inv;
          for (std::size_t ky = 0; ky < kernel; ++ky)
            for (std::size_t kx = 0; kx < kernel; ++kx) gx[(pl * h + oy * kernel + ky) * w + ox * kernel + kx] += v;
        }
  });
}

Var batch_norm2d(const Var& x, const Var& gamma, const Var& beta, BatchNormStats& stats, bool training, Real momentum,
                 Real eps) {
  const Tensor& xv = x.value();
  require_4d(xv, "batch_norm2d");
  const std::size_t batch = xv.dim(0), ch = xv.dim(1), plane = xv.dim(2) * xv.dim(3);
  if (gamma.value().size() != ch || beta.value().size() != ch || stats.mean.size() != ch || stats.var.size() != ch) {
    throw DimensionError("batch_norm2d: parameters do not match " + std::to_string(ch) + " channels");
  }
  const std::size_t count = batch * plane;
  std::vector<Real> mean(ch), inv_std(ch);
  for (std::size_t c = 0; c < ch; ++c) {
    if (training) {
      Real s = 0;
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < plane; ++i) s += xv[(b * ch + c) * plane + i];
      const Real mu = s / static_cast<Real>(count);
      Real ss = 0;
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < plane; ++i) {
          const Real d = xv[(b * ch + c) * plane + i] - mu;
          ss += d * d;
        }
      const Real var = ss / static_cast<Real>(count);
      mean[c] = mu;
      inv_std[c] = 1 / std::sqrt(var + eps);
      const Real unbiased = count > 1 ? ss / static_cast<Real>(count - 1) : var;
      stats.mean[c] = (1 - momentum) * stats.mean[c] + momentum * mu;
      stats.var[c] = (1 - momentum) * stats.var[c] + momentum * unbiased;
    } else {
      mean[c] = stats.mean[c];
      inv_std[c] = 1 / std::sqrt(stats.var[c] + eps);
    }
  }
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  auto xhat = std::make_shared<Tensor>(xv.shape());
  Tensor out(xv.shape());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < ch; ++c)
      for (std::size_t i = 0; i < plane; ++i) {
        const std::size_t k = (b * ch + c) * plane + i;
        (*xhat)[k] = (xv[k] - mean[c]) * inv_std[c];
        out[k] = gv[c] * (*xhat)[k] + bv[c];
      }

  const std::size_t ix = x.id(), ig = gamma.id(), ib = beta.id();
  return x.tape().record(
      std::move(out), {x, gamma, beta},
      [ix, ig, ib, xhat, inv_std = std::move(inv_std), batch, ch, plane, count, training](Tape& t, const Tensor& g) {
        std::vector<Real> sum_g(ch, 0), sum_gx(ch, 0);
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t c = 0; c < ch; ++c)
            for (std::size_t i = 0; i < plane; ++i) {
              const std::size_t k = (b * ch + c) * plane + i;
              sum_g[c] += g[k];
              sum_gx[c] += g[k] * (*xhat)[k];
            }
        if (t.needs_grad(ig)) {
          Tensor& gg = t.grad_accumulator(ig);
          for (std::size_t c = 0; c < ch; ++c) gg[c] += sum_gx[c];
        }
        if (t.needs_grad(ib)) {
          Tensor& gb = t.grad_accumulator(ib);
          for (std::size_t c = 0; c < ch; ++c) gb[c] += sum_g[c];
        }
        if (!t.needs_grad(ix)) return;
        const Tensor& gamma_v = t.value(ig);
        Tensor& gx = t.grad_accumulator(ix);
        const Real n = static_cast<Real>(count);
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t c = 0; c < ch; ++c) {
            const Real k0 = gamma_v[c] * inv_std[c];
            for (std::size_t i = 0; i < plane; ++i) {
              const std::size_t k = (b * ch + c) * plane + i;
              if (training) {
                gx[k] += k0 / n * (n * g[k] - sum_g[c] - (*xhat)[k] * sum_gx[c]);
              } else {
                gx[k] += k0 * g[k];
              }
            }
          }
      });
}

Var dropout(const Var& x, Real p, bool training, Rng& rng) {
  if (!(p >= 0 && p < 1)) throw ConfigError("dropout: rate must lie in [0, 1), got " + std::to_string(p));
  if (!training || p == 0) return x;
  const Tensor& xv = x.value();
  auto mask = std::make_shared<std::vector<Real>>(xv.size());
  const Real keep_scale = 1 / (1 - p);
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    (*mask)[i] = bernoulli(rng, p) ? Real{0} : keep_scale;
    out[i] = xv[i] * (*mask)[i];
  }
  const std::size_t ia = x.id();
  return x.tape().record(std::move(out), {x}, [ia, mask](Tape& t, const Tensor& g) {
    if (!t.needs_grad(ia)) return;
    Tensor& gx = t.grad_accumulator(ia);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (*mask)[i];
  });
}

Var lstm_gates(const Var& preact, const Var& m_prev) {
  const Tensor& pv = preact.value();
  const Tensor& mv = m_prev.value();
  const std::size_t d = mv.size();
  if (pv.rank() != 1 || mv.rank() != 1 || pv.size() != 4 * d) {
    throw DimensionError("lstm_gates: pre-activation " + to_string(pv.shape()) + " incompatible with state " +
                         to_string(mv.shape()));
  }
  if (!pv.all_finite() || !mv.all_finite()) throw NumericError("lstm_gates: non-finite input");
  // gates layout: i | f | o | g, post-activation
  auto gates = std::make_shared<std::vector<Real>>(4 * d);
  Tensor out({2 * d});
  for (std::size_t k = 0; k < d; ++k) {
    const Real i = 1 / (1 + std::exp(-pv[k]));
    const Real f = 1 / (1 + std::exp(-pv[d + k]));
    const Real o = 1 / (1 + std::exp(-pv[2 * d + k]));
    const Real c = std::tanh(pv[3 * d + k]);
    (*gates)[k] = i;
    (*gates)[d + k] = f;
    (*gates)[2 * d + k] = o;
    (*gates)[3 * d + k] = c;
    const Real m = f * mv[k] + i * c;
    out[d + k] = m;
    out[k] = o * std::tanh(m);
  }
  const std::size_t ip = preact.id(), im = m_prev.id();
  const std::size_t out_id = preact.tape().size();
  return preact.tape().record(std::move(out), {preact, m_prev}, [ip, im, out_id, d, gates](Tape& t, const Tensor& g) {
    const Tensor& out = t.value(out_id);
    const Tensor& m_prev = t.value(im);
    const auto& gt = *gates;
    Tensor* gp = t.needs_grad(ip) ? &t.grad_accumulator(ip) : nullptr;
    Tensor* gm = t.needs_grad(im) ? &t.grad_accumulator(im) : nullptr;
    for (std::size_t k = 0; k < d; ++k) {
      const Real i = gt[k], f = gt[d + k], o = gt[2 * d + k], c = gt[3 * d + k];
      const Real tm = std::tanh(out[d + k]);
      const Real dm = g[d + k] + g[k] * o * (1 - tm * tm);
      if (gp) {
        (*gp)[k] += dm * c * i * (1 - i);
        (*gp)[d + k] += dm * m_prev[k] * f * (1 - f);
        (*gp)[2 * d + k] += g[k] * tm * o * (1 - o);
        (*gp)[3 * d + k] += dm * i * (1 - c * c);
      }
      if (gm) (*gm)[k] += dm * f;
    }
  });
}

}  // namespace tandem
