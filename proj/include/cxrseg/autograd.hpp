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

// Reverse-mode differentiation over a linear tape.
//
// A Tape owns every value produced during a forward pass. Ops append an entry
// holding the output, the ids of their inputs and a closure that maps the
// output gradient to input gradients. `backward` walks the tape in reverse.

#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include "cxrseg/tensor.hpp"

namespace cxrseg {

class Tape;

/// Handle to a value recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

class Tape {
 public:
  /// grad_in[i] is null when input i does not need a gradient. Closures
  /// accumulate (+=) into the non-null slots.
  using BackwardFn = std::function<void(const Tensor& grad_out, std::span<Tensor* const> grad_in)>;

  /// With record = false no closures are kept (inference).
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = false);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  Var push(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);

  const Tensor& value(std::size_t id) const { return entries_.at(id).value; }
  bool needs_grad(std::size_t id) const { return entries_.at(id).needs_grad; }
  bool is_leaf(std::size_t id) const { return entries_.at(id).leaf; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool recording() const noexcept { return record_; }

 private:
  friend std::map<std::size_t, Tensor> backward(const Tape& tape, Var loss);

  struct Entry {
    Tensor value;
    bool leaf = false;
    bool needs_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
  };

  bool record_;
  std::vector<Entry> entries_;
};

/// Gradient of a scalar loss w.r.t. every requires_grad leaf reachable from
/// it, keyed by leaf id. Leaves the loss does not depend on are absent.
std::map<std::size_t, Tensor> backward(const Tape& tape, Var loss);

// ---- ops ---------------------------------------------------------------

/// weight: Cout x Cin x k x k, bias: Cout. k must be 1 or 3.
Var conv2d(Var input, Var weight, Var bias, std::size_t stride = 1, std::size_t padding = 0);
Var max_pool2x2(Var input);
Var upsample2x(Var input);
Var relu(Var input);
Var concat_channels(Var a, Var b);
Var add(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var sum(Var a);
/// Two-class softmax over the channel axis of an N x 2 x H x W tensor.
Var softmax2(Var logits);

// Tape-free forward kernels, shared with the ops above.
Tensor conv2d_forward(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride,
                      std::size_t padding);
Tensor softmax2_forward(const Tensor& logits);

/// Compares the tape gradient of f at x with central differences of step
/// `step`. Returns max_i |analytic_i - numeric_i| / max(1, |analytic_i|).
double finite_diff_check(const std::function<Var(Var)>& f, const Tensor& x, double step = 1e-5);

/// Same, for the gradient w.r.t. one of several inputs. `f` receives vars for
/// all inputs in order and the check perturbs inputs[which].
double finite_diff_check(const std::function<Var(std::span<const Var>)>& f, const std::vector<Tensor>& inputs,
                         std::size_t which, double step = 1e-5);

}  // namespace cxrseg
