// Copyright 2026 The cxrseg Authors
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

#include "cxrseg/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "cxrseg/simd/kernels.hpp"

namespace cxrseg {

const Tensor& Var::value() const {
  if (tape == nullptr) throw UsageError("Var is not bound to a tape");
  return tape->value(id);
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  Entry e;
  e.value = std::move(value);
  e.leaf = true;
  e.needs_grad = requires_grad;
  entries_.push_back(std::move(e));
  return Var{this, entries_.size() - 1};
}

Var Tape::push(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
  Entry e;
  e.value = std::move(value);
  if (record_) {
    for (std::size_t in : inputs) {
      if (entries_.at(in).needs_grad) e.needs_grad = true;
    }
    e.inputs = std::move(inputs);
    if (e.needs_grad) e.backward = std::move(backward);
  }
  entries_.push_back(std::move(e));
  return Var{this, entries_.size() - 1};
}

std::map<std::size_t, Tensor> backward(const Tape& tape, Var loss) {
  if (loss.tape != &tape) throw UsageError("backward: loss belongs to another tape");
  const Tensor& lv = tape.value(loss.id);
  if (lv.numel() != 1) throw UsageError("backward: loss must be scalar, got shape " + shape_str(lv.shape()));

  std::vector<std::optional<Tensor>> grads(tape.entries_.size());
  grads[loss.id] = Tensor::filled(lv.shape(), 1.0, lv.dtype());

  std::vector<Tensor*> slots;
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    const auto& e = tape.entries_[id];
    if (!grads[id] || e.leaf || !e.needs_grad) continue;
    if (!e.backward) throw UsageError("backward: tape was not recording");
    slots.assign(e.inputs.size(), nullptr);
    for (std::size_t i = 0; i < e.inputs.size(); ++i) {
      const std::size_t in = e.inputs[i];
      if (!tape.entries_[in].needs_grad) continue;
      if (!grads[in]) grads[in] = Tensor(tape.entries_[in].value.shape(), tape.entries_[in].value.dtype());
      slots[i] = &*grads[in];
    }
    e.backward(*grads[id], slots);
  }

  std::map<std::size_t, Tensor> out;
  for (std::size_t id = 0; id <= loss.id; ++id) {
    const auto& e = tape.entries_[id];
    if (e.leaf && e.needs_grad && grads[id]) out.emplace(id, std::move(*grads[id]));
  }
  return out;
}

namespace {

void require_same_tape(Var a, Var b, const char* op) {
  if (a.tape == nullptr || a.tape != b.tape) throw UsageError(std::string(op) + ": operands on different tapes");
}

void require_dtype(const Tensor& a, const Tensor& b, const char* op) {
  if (a.dtype() != b.dtype()) throw DimensionError(std::string(op) + ": mixed precision operands");
}

void require_rank4(const Tensor& t, const char* op) {
  if (t.rank() != 4) throw DimensionError(std::string(op) + ": expected N x C x H x W, got " + shape_str(t.shape()));
}

struct ConvGeom {
  std::size_t n, cin, h, w, cout, k, stride, pad, ho, wo;
  std::size_t kdim() const { return cin * k * k; }
  std::size_t plane() const { return ho * wo; }
  bool is_pointwise() const { return k == 1 && stride == 1 && pad == 0; }
};

ConvGeom conv_geometry(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride,
                       std::size_t padding) {
  require_rank4(input, "conv2d");
  if (weight.rank() != 4) throw DimensionError("conv2d: weight must be Cout x Cin x k x k");
  ConvGeom g{};
  g.n = input.dim(0);
  g.cin = input.dim(1);
  g.h = input.dim(2);
  g.w = input.dim(3);
  g.cout = weight.dim(0);
  g.k = weight.dim(2);
  g.stride = stride;
  g.pad = padding;
  if (weight.dim(1) != g.cin) {
    throw DimensionError("conv2d: input has " + std::to_string(g.cin) + " channels, weight expects " +
                         std::to_string(weight.dim(1)));
  }
  if (weight.dim(3) != g.k || (g.k != 1 && g.k != 3)) {
    throw DimensionError("conv2d: kernel must be 1x1 or 3x3, got " + shape_str(weight.shape()));
  }
  if (bias.numel() != g.cout) throw DimensionError("conv2d: bias size does not match Cout");
  if (stride == 0) throw DimensionError("conv2d: stride must be positive");
  if (g.h + 2 * g.pad < g.k || g.w + 2 * g.pad < g.k) throw DimensionError("conv2d: input smaller than kernel");
  g.ho = (g.h + 2 * g.pad - g.k) / stride + 1;
  g.wo = (g.w + 2 * g.pad - g.k) / stride + 1;
  require_dtype(input, weight, "conv2d");
  require_dtype(input, bias, "conv2d");
  return g;
}

template <typename T>
void im2col(const ConvGeom& g, const T* img, T* col) {
  const auto k = g.k;
  for (std::size_t ci = 0; ci < g.cin; ++ci) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        T* row = col + ((ci * k + ky) * k + kx) * g.plane();
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          T* dst = row + oy * g.wo;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(dst, dst + g.wo, T(0));
            continue;
          }
          const T* src = img + (ci * g.h + static_cast<std::size_t>(iy)) * g.w;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) ? T(0) : src[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const ConvGeom& g, const T* col, T* img) {
  const auto k = g.k;
  for (std::size_t ci = 0; ci < g.cin; ++ci) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const T* row = col + ((ci * k + ky) * k + kx) * g.plane();
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          const T* src = row + oy * g.wo;
          T* dst = img + (ci * g.h + static_cast<std::size_t>(iy)) * g.w;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <typename T>
void conv_forward(const ConvGeom& g, const T* x, const T* w, const T* b, T* y) {
  std::vector<T> col;
  if (!g.is_pointwise()) col.resize(g.kdim() * g.plane());
  const std::size_t kd = g.kdim();
  for (std::size_t n = 0; n < g.n; ++n) {
    const T* img = x + n * g.cin * g.h * g.w;
    const T* cols = img;
    if (!g.is_pointwise()) {
      im2col(g, img, col.data());
      cols = col.data();
    }
    T* out = y + n * g.cout * g.plane();
    for (std::size_t co = 0; co < g.cout; ++co) std::fill(out + co * g.plane(), out + (co + 1) * g.plane(), b[co]);
    // Row of `cols` stays hot while it is scattered into every output channel.
    for (std::size_t kk = 0; kk < kd; ++kk) {
      const T* src = cols + kk * g.plane();
      for (std::size_t co = 0; co < g.cout; ++co) {
        const T wv = w[co * kd + kk];
        if (wv != T(0)) simd::axpy(wv, src, out + co * g.plane(), g.plane());
      }
    }
  }
}

template <typename T>
void conv_backward(const ConvGeom& g, const T* x, const T* w, const T* gy, T* gx, T* gw, T* gb) {
  const std::size_t kd = g.kdim();
  std::vector<T> col, gcol;
  if (!g.is_pointwise()) {
    col.resize(kd * g.plane());
    if (gx) gcol.resize(kd * g.plane());
  }
  for (std::size_t n = 0; n < g.n; ++n) {
    const T* img = x + n * g.cin * g.h * g.w;
    const T* go = gy + n * g.cout * g.plane();
    if (gb) {
      for (std::size_t co = 0; co < g.cout; ++co) gb[co] += simd::sum(go + co * g.plane(), g.plane());
    }
    if (gw) {
      const T* cols = img;
      if (!g.is_pointwise()) {
        im2col(g, img, col.data());
        cols = col.data();
      }
      for (std::size_t co = 0; co < g.cout; ++co) {
        for (std::size_t kk = 0; kk < kd; ++kk) {
          gw[co * kd + kk] += simd::dot(go + co * g.plane(), cols + kk * g.plane(), g.plane());
        }
      }
    }
    if (gx) {
      T* gimg = gx + n * g.cin * g.h * g.w;
      T* gcols = gimg;
      if (!g.is_pointwise()) {
        std::fill(gcol.begin(), gcol.end(), T(0));
        gcols = gcol.data();
      }
      for (std::size_t kk = 0; kk < kd; ++kk) {
        T* dst = gcols + kk * g.plane();
        for (std::size_t co = 0; co < g.cout; ++co) {
          simd::axpy(w[co * kd + kk], go + co * g.plane(), dst, g.plane());
        }
      }
      if (!g.is_pointwise()) col2im_add(g, gcol.data(), gimg);
    }
  }
}

template <typename T>
T* ptr_or_null(Tensor* t) {
  return t ? t->data<T>().data() : nullptr;
}

}  // namespace

Tensor conv2d_forward(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride,
                      std::size_t padding) {
  const ConvGeom g = conv_geometry(input, weight, bias, stride, padding);
  Tensor out(Shape{g.n, g.cout, g.ho, g.wo}, input.dtype());
  dispatch_dtype(input.dtype(), [&]<typename T>() {
    conv_forward<T>(g, input.data<T>().data(), weight.data<T>().data(), bias.data<T>().data(),
                    out.data<T>().data());
  });
  return out;
}

Var conv2d(Var input, Var weight, Var bias, std::size_t stride, std::size_t padding) {
  require_same_tape(input, weight, "conv2d");
  require_same_tape(input, bias, "conv2d");
  const ConvGeom g = conv_geometry(input.value(), weight.value(), bias.value(), stride, padding);
  Tensor out = conv2d_forward(input.value(), weight.value(), bias.value(), stride, padding);
  const Tape* tape = input.tape;
  const std::size_t xi = input.id, wi = weight.id;
  return input.tape->push(std::move(out), {input.id, weight.id, bias.id},
                          [tape, g, xi, wi](const Tensor& gy, std::span<Tensor* const> gin) {
                            const Tensor& x = tape->value(xi);
                            const Tensor& w = tape->value(wi);
                            dispatch_dtype(x.dtype(), [&]<typename T>() {
                              conv_backward<T>(g, x.data<T>().data(), w.data<T>().data(), gy.data<T>().data(),
                                               ptr_or_null<T>(gin[0]), ptr_or_null<T>(gin[1]),
                                               ptr_or_null<T>(gin[2]));
                            });
                          });
}

Var max_pool2x2(Var input) {
  const Tensor& x = input.value();
  require_rank4(x, "max_pool2x2");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % 2 != 0 || w % 2 != 0) throw DimensionError("max_pool2x2: H and W must be even, got " + shape_str(x.shape()));
  const std::size_t ho = h / 2, wo = w / 2;
  Tensor out(Shape{n, c, ho, wo}, x.dtype());
  std::vector<std::uint32_t> argmax(out.numel());
  dispatch_dtype(x.dtype(), [&]<typename T>() {
    const T* src = x.data<T>().data();
    T* dst = out.data<T>().data();
    std::size_t o = 0;
    for (std::size_t p = 0; p < n * c; ++p) {
      const T* plane = src + p * h * w;
      for (std::size_t oy = 0; oy < ho; ++oy) {
        for (std::size_t ox = 0; ox < wo; ++ox, ++o) {
          // Row-major scan; strict > keeps the first maximum on ties.
          std::size_t best = (2 * oy) * w + 2 * ox;
          const std::size_t cand[3] = {best + 1, best + w, best + w + 1};
          for (std::size_t ci : cand) {
            if (plane[ci] > plane[best]) best = ci;
          }
          dst[o] = plane[best];
          argmax[o] = static_cast<std::uint32_t>(p * h * w + best);
        }
      }
    }
  });
  return input.tape->push(std::move(out), {input.id},
                          [argmax = std::move(argmax)](const Tensor& gy, std::span<Tensor* const> gin) {
                            if (!gin[0]) return;
                            dispatch_dtype(gy.dtype(), [&]<typename T>() {
                              const T* g = gy.data<T>().data();
                              T* gx = gin[0]->data<T>().data();
                              for (std::size_t i = 0; i < argmax.size(); ++i) gx[argmax[i]] += g[i];
                            });
                          });
}

Var upsample2x(Var input) {
  const Tensor& x = input.value();
  require_rank4(x, "upsample2x");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor out(Shape{n, c, 2 * h, 2 * w}, x.dtype());
  dispatch_dtype(x.dtype(), [&]<typename T>() {
    const T* src = x.data<T>().data();
    T* dst = out.data<T>().data();
    for (std::size_t p = 0; p < n * c; ++p) {
      for (std::size_t y = 0; y < 2 * h; ++y) {
        const T* srow = src + (p * h + y / 2) * w;
        T* drow = dst + (p * 2 * h + y) * 2 * w;
        for (std::size_t xx = 0; xx < 2 * w; ++xx) drow[xx] = srow[xx / 2];
      }
    }
  });
  return input.tape->push(std::move(out), {input.id}, [n, c, h, w](const Tensor& gy, std::span<Tensor* const> gin) {
    if (!gin[0]) return;
    dispatch_dtype(gy.dtype(), [&]<typename T>() {
      const T* g = gy.data<T>().data();
      T* gx = gin[0]->data<T>().data();
      for (std::size_t p = 0; p < n * c; ++p) {
        for (std::size_t y = 0; y < 2 * h; ++y) {
          const T* grow = g + (p * 2 * h + y) * 2 * w;
          T* xrow = gx + (p * h + y / 2) * w;
          for (std::size_t xx = 0; xx < 2 * w; ++xx) xrow[xx / 2] += grow[xx];
        }
      }
    });
  });
}

Var relu(Var input) {
  const Tensor& x = input.value();
  Tensor out(x.shape(), x.dtype());
  dispatch_dtype(x.dtype(), [&]<typename T>() { simd::relu(x.data<T>().data(), out.data<T>().data(), x.numel()); });
  const Tape* tape = input.tape;
  const std::size_t xi = input.id;
  return input.tape->push(std::move(out), {input.id}, [tape, xi](const Tensor& gy, std::span<Tensor* const> gin) {
    if (!gin[0]) return;
    const Tensor& xv = tape->value(xi);
    dispatch_dtype(gy.dtype(), [&]<typename T>() {
      simd::relu_grad(xv.data<T>().data(), gy.data<T>().data(), gin[0]->data<T>().data(), xv.numel());
    });
  });
}

Var concat_channels(Var a, Var b) {
  require_same_tape(a, b, "concat_channels");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank4(av, "concat_channels");
  require_rank4(bv, "concat_channels");
  require_dtype(av, bv, "concat_channels");
  if (av.dim(0) != bv.dim(0) || av.dim(2) != bv.dim(2) || av.dim(3) != bv.dim(3)) {
    throw DimensionError("concat_channels: " + shape_str(av.shape()) + " vs " + shape_str(bv.shape()));
  }
  const std::size_t n = av.dim(0), ca = av.dim(1), cb = bv.dim(1), hw = av.dim(2) * av.dim(3);
  Tensor out(Shape{n, ca + cb, av.dim(2), av.dim(3)}, av.dtype());
  dispatch_dtype(av.dtype(), [&]<typename T>() {
    const T* pa = av.data<T>().data();
    const T* pb = bv.data<T>().data();
    T* dst = out.data<T>().data();
    for (std::size_t i = 0; i < n; ++i) {
      dst = std::copy(pa + i * ca * hw, pa + (i + 1) * ca * hw, dst);
      dst = std::copy(pb + i * cb * hw, pb + (i + 1) * cb * hw, dst);
    }
  });
  return a.tape->push(std::move(out), {a.id, b.id}, [n, ca, cb, hw](const Tensor& gy, std::span<Tensor* const> gin) {
    dispatch_dtype(gy.dtype(), [&]<typename T>() {
      const T* g = gy.data<T>().data();
      for (std::size_t i = 0; i < n; ++i) {
        const T* row = g + i * (ca + cb) * hw;
        if (gin[0]) simd::add(row, gin[0]->data<T>().data() + i * ca * hw, ca * hw);
        if (gin[1]) simd::add(row + ca * hw, gin[1]->data<T>().data() + i * cb * hw, cb * hw);
      }
    });
  });
}

Var add(Var a, Var b) {
  require_same_tape(a, b, "add");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape()) throw DimensionError("add: " + shape_str(av.shape()) + " vs " + shape_str(bv.shape()));
  require_dtype(av, bv, "add");
  Tensor out = av;
  out.accumulate(bv);
  return a.tape->push(std::move(out), {a.id, b.id}, [](const Tensor& gy, std::span<Tensor* const> gin) {
    for (Tensor* g : gin) {
      if (g) g->accumulate(gy);
    }
  });
}

Var mul(Var a, Var b) {
  require_same_tape(a, b, "mul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape()) throw DimensionError("mul: " + shape_str(av.shape()) + " vs " + shape_str(bv.shape()));
  require_dtype(av, bv, "mul");
  Tensor out(av.shape(), av.dtype());
  dispatch_dtype(av.dtype(), [&]<typename T>() {
    auto pa = av.data<T>();
    auto pb = bv.data<T>();
    auto po = out.data<T>();
    for (std::size_t i = 0; i < po.size(); ++i) po[i] = pa[i] * pb[i];
  });
  const Tape* tape = a.tape;
  const std::size_t ai = a.id, bi = b.id;
  return a.tape->push(std::move(out), {a.id, b.id}, [tape, ai, bi](const Tensor& gy, std::span<Tensor* const> gin) {
    const Tensor& av2 = tape->value(ai);
    const Tensor& bv2 = tape->value(bi);
    dispatch_dtype(gy.dtype(), [&]<typename T>() {
      auto g = gy.data<T>();
      if (gin[0]) {
        auto d = gin[0]->data<T>();
        auto o = bv2.data<T>();
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * o[i];
      }
      if (gin[1]) {
        auto d = gin[1]->data<T>();
        auto o = av2.data<T>();
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * o[i];
      }
    });
  });
}

Var scale(Var a, double factor) {
  const Tensor& av = a.value();
  Tensor out(av.shape(), av.dtype());
  dispatch_dtype(av.dtype(), [&]<typename T>() {
    simd::axpy(static_cast<T>(factor), av.data<T>().data(), out.data<T>().data(), av.numel());
  });
  return a.tape->push(std::move(out), {a.id}, [factor](const Tensor& gy, std::span<Tensor* const> gin) {
    if (!gin[0]) return;
    dispatch_dtype(gy.dtype(), [&]<typename T>() {
      simd::axpy(static_cast<T>(factor), gy.data<T>().data(), gin[0]->data<T>().data(), gy.numel());
    });
  });
}

Var sum(Var a) {
  const Tensor& av = a.value();
  Tensor out(Shape{1}, av.dtype());
  dispatch_dtype(av.dtype(), [&]<typename T>() { out.data<T>()[0] = simd::sum(av.data<T>().data(), av.numel()); });
  return a.tape->push(std::move(out), {a.id}, [](const Tensor& gy, std::span<Tensor* const> gin) {
    if (!gin[0]) return;
    dispatch_dtype(gy.dtype(), [&]<typename T>() {
      const T g = gy.data<T>()[0];
      for (auto& v : gin[0]->data<T>()) v += g;
    });
  });
}

Tensor softmax2_forward(const Tensor& logits) {
  require_rank4(logits, "softmax2");
  if (logits.dim(1) != 2) {
    throw DimensionError("softmax2: expected 2 channels, got " + std::to_string(logits.dim(1)));
  }
  const std::size_t n = logits.dim(0), hw = logits.dim(2) * logits.dim(3);
  Tensor out(logits.shape(), logits.dtype());
  dispatch_dtype(logits.dtype(), [&]<typename T>() {
    const T* z = logits.data<T>().data();
    T* p = out.data<T>().data();
    for (std::size_t i = 0; i < n; ++i) {
      const T* z0 = z + i * 2 * hw;
      const T* z1 = z0 + hw;
      T* p0 = p + i * 2 * hw;
      T* p1 = p0 + hw;
      for (std::size_t k = 0; k < hw; ++k) {
        const T m = std::max(z0[k], z1[k]);
        const T e0 = std::exp(z0[k] - m);
        const T e1 = std::exp(z1[k] - m);
        const T s = e0 + e1;
        p0[k] = e0 / s;
        p1[k] = e1 / s;
      }
    }
  });
  return out;
}

Var softmax2(Var logits) {
  Tensor out = softmax2_forward(logits.value());
  const Tape* tape = logits.tape;
  const std::size_t n = out.dim(0), hw = out.dim(2) * out.dim(3);
  // push() appends, so the output's id is the current tape size.
  const std::size_t pi = tape->size();
  return logits.tape->push(std::move(out), {logits.id},
                           [tape, pi, n, hw](const Tensor& gy, std::span<Tensor* const> gin) {
                             if (!gin[0]) return;
                             const Tensor& pv = tape->value(pi);
                             dispatch_dtype(gy.dtype(), [&]<typename T>() {
                               const T* p = pv.data<T>().data();
                               const T* g = gy.data<T>().data();
                               T* gx = gin[0]->data<T>().data();
                               for (std::size_t i = 0; i < n; ++i) {
                                 const std::size_t o = i * 2 * hw;
                                 for (std::size_t k = 0; k < hw; ++k) {
                                   const T p0 = p[o + k], p1 = p[o + hw + k];
                                   const T g0 = g[o + k], g1 = g[o + hw + k];
                                   const T dotpg = p0 * g0 + p1 * g1;
                                   gx[o + k] += p0 * (g0 - dotpg);
                                   gx[o + hw + k] += p1 * (g1 - dotpg);
                                 }
                               }
                             });
                           });
}

double finite_diff_check(const std::function<Var(std::span<const Var>)>& f, const std::vector<Tensor>& inputs,
                         std::size_t which, double step) {
  if (which >= inputs.size()) throw UsageError("finite_diff_check: input index out of range");
  auto eval = [&](const std::vector<Tensor>& xs, Tape& tape, bool grad) {
    std::vector<Var> vars;
    vars.reserve(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) vars.push_back(tape.leaf(xs[i], grad && i == which));
    Var y = f(vars);
    if (y.value().numel() != 1) throw UsageError("finite_diff_check: f must return a scalar");
    return std::pair<Var, std::size_t>(y, vars[which].id);
  };

  Tape tape;
  auto [y, xid] = eval(inputs, tape, true);
  const auto grads = backward(tape, y);
  const Tensor& x = inputs[which];
  Tensor analytic(x.shape(), x.dtype());
  if (auto it = grads.find(xid); it != grads.end()) analytic = it->second;

  std::vector<Tensor> probe = inputs;
  double worst = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double x0 = x.at(i);
    probe[which].set(i, x0 + step);
    Tape tp(false);
    const double fp = eval(probe, tp, false).first.value().at(0);
    probe[which].set(i, x0 - step);
    Tape tm(false);
    const double fm = eval(probe, tm, false).first.value().at(0);
    probe[which].set(i, x0);
    const double numeric = (fp - fm) / (2.0 * step);
    const double a = analytic.at(i);
    worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
  }
  return worst;
}

double finite_diff_check(const std::function<Var(Var)>& f, const Tensor& x, double step) {
  return finite_diff_check([&f](std::span<const Var> vs) { return f(vs[0]); }, std::vector<Tensor>{x}, 0, step);
}

}  // namespace cxrseg
