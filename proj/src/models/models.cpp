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

#include "cxrseg/models.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

namespace cxrseg {

std::string arch_name(Arch arch) {
  switch (arch) {
    case Arch::unet:
      return "unet";
    case Arch::unetpp:
      return "unetpp";
    case Arch::fpn:
      return "fpn";
  }
  return "unknown";
}

Arch parse_arch(const std::string& name) {
  if (name == "unet") return Arch::unet;
  if (name == "unetpp" || name == "unet++") return Arch::unetpp;
  if (name == "fpn") return Arch::fpn;
  throw ConfigError("unknown architecture '" + name + "' (expected unet, unetpp or fpn)");
}

void ModelConfig::validate() const {
  if (static_cast<std::uint8_t>(arch) > 2) throw ConfigError("invalid architecture code");
  if (depth < 2 || depth > 4) throw ConfigError("depth must be in [2,4], got " + std::to_string(depth));
  if (base_channels < 4) throw ConfigError("base_channels must be >= 4, got " + std::to_string(base_channels));
  if (in_channels < 1) throw ConfigError("in_channels must be >= 1");
}

namespace {

std::string lvl(const char* prefix, std::size_t i) { return prefix + std::to_string(i); }
std::string node(std::size_t i, std::size_t j) { return "x" + std::to_string(i) + "_" + std::to_string(j); }

void block(std::vector<LayerSpec>& out, const std::string& name, std::size_t cin, std::size_t cout) {
  out.push_back({name + ".conv1", cin, cout, 3, true});
  out.push_back({name + ".conv2", cout, cout, 3, true});
}

}  // namespace

std::vector<LayerSpec> layer_plan(const ModelConfig& config) {
  config.validate();
  const std::size_t d = config.depth;
  const std::size_t b = config.base_channels;
  auto ch = [b](std::size_t level) { return b << level; };

  std::vector<LayerSpec> plan;
  switch (config.arch) {
    case Arch::unet:
      for (std::size_t i = 0; i < d; ++i) block(plan, lvl("enc", i), i == 0 ? config.in_channels : ch(i - 1), ch(i));
      for (std::size_t i = d - 1; i-- > 0;) block(plan, lvl("dec", i), ch(i) + ch(i + 1), ch(i));
      plan.push_back({"head", ch(0), ModelConfig::kOutClasses, 1, false});
      break;
    case Arch::unetpp:
      for (std::size_t i = 0; i < d; ++i) block(plan, node(i, 0), i == 0 ? config.in_channels : ch(i - 1), ch(i));
      // Column by column so every node's inputs exist when it is built.
      for (std::size_t j = 1; j < d; ++j) {
        for (std::size_t i = 0; i + j < d; ++i) block(plan, node(i, j), j * ch(i) + ch(i + 1), ch(i));
      }
      plan.push_back({"head", ch(0), ModelConfig::kOutClasses, 1, false});
      break;
    case Arch::fpn:
      for (std::size_t i = 0; i < d; ++i) block(plan, lvl("enc", i), i == 0 ? config.in_channels : ch(i - 1), ch(i));
      for (std::size_t i = 0; i < d; ++i) plan.push_back({lvl("lateral", i), ch(i), b, 1, false});
      for (std::size_t i = 0; i < d; ++i) plan.push_back({lvl("pred", i), b, ModelConfig::kOutClasses, 3, false});
      plan.push_back({"fuse", ModelConfig::kOutClasses * d, ModelConfig::kOutClasses, 3, false});
      break;
  }
  return plan;
}

SegModel::SegModel(ModelConfig config, std::vector<LayerSpec> layers, std::vector<std::pair<std::string, Tensor>> params)
    : config_(config), layers_(std::move(layers)), params_(std::move(params)) {
  if (params_.size() != 2 * layers_.size()) throw ConfigError("parameter list does not match the layer plan");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    const Shape ws{l.out_channels, l.in_channels, l.kernel, l.kernel};
    const Shape bs{l.out_channels};
    if (params_[2 * i].first != l.name + ".weight" || params_[2 * i + 1].first != l.name + ".bias") {
      throw ConfigError("parameter order does not match the layer plan at " + l.name);
    }
    if (params_[2 * i].second.shape() != ws || params_[2 * i + 1].second.shape() != bs) {
      throw DimensionError("parameter shape mismatch at " + l.name);
    }
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!index_.emplace(params_[i].first, i).second) throw ConfigError("duplicate parameter " + params_[i].first);
  }
}

const Tensor& SegModel::param(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw NotFoundError("no parameter named " + name);
  return params_[it->second].second;
}

Tensor& SegModel::param(const std::string& name) {
  return const_cast<Tensor&>(static_cast<const SegModel&>(*this).param(name));
}

std::size_t SegModel::param_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.numel();
  return n;
}

DType SegModel::dtype() const { return params_.empty() ? default_dtype() : params_.front().second.dtype(); }

SegModel build_model(const ModelConfig& config, std::uint64_t seed, DType dtype) {
  std::vector<LayerSpec> plan = layer_plan(config);
  std::mt19937_64 rng(seed);
  std::vector<std::pair<std::string, Tensor>> params;
  params.reserve(2 * plan.size());
  for (const LayerSpec& l : plan) {
    const std::size_t k2 = l.kernel * l.kernel;
    const double limit = std::sqrt(6.0 / static_cast<double>(k2 * (l.in_channels + l.out_channels)));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Tensor w(Shape{l.out_channels, l.in_channels, l.kernel, l.kernel}, dtype);
    for (std::size_t i = 0; i < w.numel(); ++i) w.set(i, dist(rng));
    params.emplace_back(l.name + ".weight", std::move(w));
    params.emplace_back(l.name + ".bias", Tensor(Shape{l.out_channels}, dtype));
  }
  return SegModel(config, std::move(plan), std::move(params));
}

ModelBinding bind(const SegModel& model, Tape& tape, bool requires_grad) {
  ModelBinding b;
  b.params.reserve(model.params().size());
  for (const auto& [_, t] : model.params()) b.params.push_back(tape.leaf(t, requires_grad));
  return b;
}

namespace {

class Net {
 public:
  Net(const SegModel& model, const ModelBinding& binding) : model_(model), binding_(binding) {
    for (std::size_t i = 0; i < model.layers().size(); ++i) layer_index_.emplace(model.layers()[i].name, i);
  }

  Var conv(const std::string& name, Var x) const {
    const std::size_t i = layer_index_.at(name);
    const LayerSpec& l = model_.layers()[i];
    Var y = conv2d(x, binding_.params[2 * i], binding_.params[2 * i + 1], 1, l.kernel / 2);
    return l.relu ? relu(y) : y;
  }

  Var block(const std::string& name, Var x) const { return conv(name + ".conv2", conv(name + ".conv1", x)); }

  Var unet(Var x) const {
    const std::size_t d = model_.config().depth;
    std::vector<Var> enc;
    for (std::size_t i = 0; i < d; ++i) {
      x = block(lvl("enc", i), i == 0 ? x : max_pool2x2(enc.back()));
      enc.push_back(x);
    }
    Var up = enc.back();
    for (std::size_t i = d - 1; i-- > 0;) up = block(lvl("dec", i), concat_channels(enc[i], upsample2x(up)));
    return conv("head", up);
  }

  Var unetpp(Var x) const {
    const std::size_t d = model_.config().depth;
    std::vector<std::vector<Var>> grid(d);
    for (std::size_t i = 0; i < d; ++i) {
      grid[i].push_back(block(node(i, 0), i == 0 ? x : max_pool2x2(grid[i - 1][0])));
    }
    for (std::size_t j = 1; j < d; ++j) {
      for (std::size_t i = 0; i + j < d; ++i) {
        Var in = grid[i][0];
        for (std::size_t k = 1; k < j; ++k) in = concat_channels(in, grid[i][k]);
        in = concat_channels(in, upsample2x(grid[i + 1][j - 1]));
        grid[i].push_back(block(node(i, j), in));
      }
    }
    return conv("head", grid[0][d - 1]);
  }

  Var fpn(Var x) const {
    const std::size_t d = model_.config().depth;
    std::vector<Var> enc;
    for (std::size_t i = 0; i < d; ++i) {
      x = block(lvl("enc", i), i == 0 ? x : max_pool2x2(enc.back()));
      enc.push_back(x);
    }
    std::vector<Var> pyramid(d);
    pyramid[d - 1] = conv(lvl("lateral", d - 1), enc[d - 1]);
    for (std::size_t i = d - 1; i-- > 0;) pyramid[i] = add(conv(lvl("lateral", i), enc[i]), upsample2x(pyramid[i + 1]));
    Var merged;
    for (std::size_t i = 0; i < d; ++i) {
      Var p = conv(lvl("pred", i), pyramid[i]);
      for (std::size_t s = 0; s < i; ++s) p = upsample2x(p);
      merged = i == 0 ? p : concat_channels(merged, p);
    }
    return conv("fuse", merged);
  }

 private:
  const SegModel& model_;
  const ModelBinding& binding_;
  std::unordered_map<std::string, std::size_t> layer_index_;
};

}  // namespace

Var forward_logits(const SegModel& model, const ModelBinding& binding, Var batch) {
  const Tensor& x = batch.value();
  const ModelConfig& cfg = model.config();
  if (x.rank() != 4 || x.dim(1) != cfg.in_channels) {
    throw DimensionError("model expects N x " + std::to_string(cfg.in_channels) + " x H x W input, got " +
                         shape_str(x.shape()));
  }
  const std::size_t m = cfg.spatial_multiple();
  if (x.dim(2) % m != 0 || x.dim(3) % m != 0 || x.dim(2) == 0 || x.dim(3) == 0) {
    throw DimensionError("input " + shape_str(x.shape()) + " spatial dims must be positive multiples of " +
                         std::to_string(m));
  }
  if (binding.params.size() != model.params().size()) throw UsageError("binding does not match the model");
  Net net(model, binding);
  switch (cfg.arch) {
    case Arch::unet:
      return net.unet(batch);
    case Arch::unetpp:
      return net.unetpp(batch);
    case Arch::fpn:
      return net.fpn(batch);
  }
  throw ConfigError("invalid architecture");
}

Tensor forward(const SegModel& model, const Tensor& batch) {
  Tape tape(false);
  const ModelBinding b = bind(model, tape, false);
  Var x = tape.constant(batch.dtype() == model.dtype() ? batch : batch.cast(model.dtype()));
  return softmax2(forward_logits(model, b, x)).value();
}

ModelSummary model_summary(const SegModel& model, const Tensor& timing_input, std::size_t repeats) {
  repeats = std::max<std::size_t>(repeats, 10);
  std::vector<double> ms;
  ms.reserve(repeats);
  for (std::size_t r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    const Tensor out = forward(model, timing_input);
    const auto t1 = std::chrono::steady_clock::now();
    ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count() /
                 static_cast<double>(std::max<std::size_t>(1, timing_input.dim(0))));
  }
  std::sort(ms.begin(), ms.end());
  const std::size_t mid = ms.size() / 2;
  const double median = ms.size() % 2 ? ms[mid] : 0.5 * (ms[mid - 1] + ms[mid]);
  return ModelSummary{model.param_count(), median};
}

}  // namespace cxrseg
