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

// Miniature encoder-decoder segmentation networks.
//
// All three topologies share a plain encoder: level i holds two 3x3
// conv+ReLU layers with base_channels * 2^i filters, levels joined by 2x2
// max pooling. They differ in the decoder:
//
//   unet    one decoder block per level, fed by the upsampled coarser block
//           and the encoder skip at the same level; 1x1 output conv.
//   unetpp  nested nodes X(i,j), j >= 1, each fed by X(i,0..j-1) and the
//           upsampled X(i+1,j-1); X(0,depth-1) feeds the 1x1 output conv.
//   fpn     1x1 laterals to base_channels, top-down sums, a 3x3 two-channel
//           prediction per level upsampled to full size, concatenated and
//           fused by a final 3x3 conv.
//
// Every network ends in a two-class softmax.

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cxrseg/autograd.hpp"

namespace cxrseg {

/// Numeric codes are the ones stored in weights files.
enum class Arch : std::uint8_t { unet = 0, unetpp = 1, fpn = 2 };

std::string arch_name(Arch arch);
Arch parse_arch(const std::string& name);

struct ModelConfig {
  static constexpr std::size_t kOutClasses = 2;

  Arch arch = Arch::unet;
  std::size_t depth = 3;  // 2..4 levels
  std::size_t base_channels = 8;
  std::size_t in_channels = 1;

  void validate() const;
  /// Input H and W must be multiples of this.
  std::size_t spatial_multiple() const { return std::size_t{1} << (depth - 1); }
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// One convolution of the wiring, in parameter order.
struct LayerSpec {
  std::string name;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 3;
  bool relu = true;

  std::size_t param_count() const { return kernel * kernel * in_channels * out_channels + out_channels; }
};

std::vector<LayerSpec> layer_plan(const ModelConfig& config);

class SegModel {
 public:
  SegModel(ModelConfig config, std::vector<LayerSpec> layers, std::vector<std::pair<std::string, Tensor>> params);

  const ModelConfig& config() const noexcept { return config_; }
  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  /// "<layer>.weight" (Cout x Cin x k x k) and "<layer>.bias" (Cout), in layer order.
  const std::vector<std::pair<std::string, Tensor>>& params() const noexcept { return params_; }
  std::vector<std::pair<std::string, Tensor>>& params() noexcept { return params_; }

  const Tensor& param(const std::string& name) const;
  Tensor& param(const std::string& name);
  std::size_t param_count() const;
  DType dtype() const;

 private:
  ModelConfig config_;
  std::vector<LayerSpec> layers_;
  std::vector<std::pair<std::string, Tensor>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Glorot-uniform weights from a generator seeded with `seed`; zero biases.
SegModel build_model(const ModelConfig& config, std::uint64_t seed, DType dtype = default_dtype());

/// Parameters of a model placed on a tape, in params() order.
struct ModelBinding {
  std::vector<Var> params;
};

ModelBinding bind(const SegModel& model, Tape& tape, bool requires_grad);

/// N x 2 x H x W logits (pre-softmax) for an N x in x H x W batch.
Var forward_logits(const SegModel& model, const ModelBinding& binding, Var batch);

/// Softmax probabilities, computed on a non-recording tape.
Tensor forward(const SegModel& model, const Tensor& batch);

struct ModelSummary {
  std::size_t param_count = 0;
  double inference_ms = 0.0;  // median per forward pass of timing_input
};

ModelSummary model_summary(const SegModel& model, const Tensor& timing_input, std::size_t repeats = 10);

}  // namespace cxrseg
