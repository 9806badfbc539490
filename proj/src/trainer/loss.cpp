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

#include <algorithm>
#include <cmath>

#include "cxrseg/trainer.hpp"

namespace cxrseg {
namespace {

void check_loss_inputs(const Tensor& p, std::span<const std::uint8_t> labels) {
  if (p.rank() != 4 || p.dim(1) != 2) throw DimensionError("ce_loss: expected N x 2 x H x W, got " + shape_str(p.shape()));
  if (labels.size() != p.dim(0) * p.dim(2) * p.dim(3)) {
    throw DimensionError("ce_loss: " + std::to_string(labels.size()) + " labels for probabilities " +
                         shape_str(p.shape()));
  }
}

template <typename T>
double ce_sum(const Tensor& p, std::span<const std::uint8_t> labels) {
  const std::size_t n = p.dim(0), hw = p.dim(2) * p.dim(3);
  const T* d = p.data<T>().data();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < hw; ++k) {
      const std::size_t c = labels[i * hw + k] ? 1 : 0;
      acc -= std::log(std::max(static_cast<double>(d[(i * 2 + c) * hw + k]), kProbClamp));
    }
  }
  return acc;
}

}  // namespace

double ce_loss_value(const Tensor& probs, std::span<const std::uint8_t> labels) {
  check_loss_inputs(probs, labels);
  const double total = dispatch_dtype(probs.dtype(), [&]<typename T>() { return ce_sum<T>(probs, labels); });
  return total / static_cast<double>(labels.size());
}

Var ce_loss(Var probs, std::span<const std::uint8_t> labels) {
  const Tensor& p = probs.value();
  check_loss_inputs(p, labels);
  const double value = ce_loss_value(p, labels);
  std::vector<std::uint8_t> y(labels.begin(), labels.end());
  const Tape* tape = probs.tape;
  const std::size_t pid = probs.id;
  return probs.tape->push(
      Tensor::scalar(value, p.dtype()), {probs.id},
      [tape, pid, y = std::move(y)](const Tensor& gy, std::span<Tensor* const> gin) {
        if (!gin[0]) return;
        const Tensor& pv = tape->value(pid);
        const std::size_t n = pv.dim(0), hw = pv.dim(2) * pv.dim(3);
        const double scale = -gy.at(0) / static_cast<double>(y.size());
        dispatch_dtype(pv.dtype(), [&]<typename T>() {
          const T* p = pv.data<T>().data();
          T* g = gin[0]->data<T>().data();
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < hw; ++k) {
              const std::size_t at = (i * 2 + (y[i * hw + k] ? 1 : 0)) * hw + k;
              // Clamped probabilities are constant, so they pass no gradient.
              if (static_cast<double>(p[at]) > kProbClamp) g[at] += static_cast<T>(scale / static_cast<double>(p[at]));
            }
          }
        });
      });
}

}  // namespace cxrseg
