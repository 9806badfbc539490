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

#include <cmath>

#include "cxrseg/trainer.hpp"

namespace cxrseg {

void TrainConfig::validate() const {
  if (!(alpha > 0.0)) throw ConfigError("alpha must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("betas must lie in [0,1)");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (max_epochs == 0) throw ConfigError("max_epochs must be positive");
  if (plateau_patience == 0 || early_stop_patience == 0) throw ConfigError("patience values must be positive");
  if (!(plateau_factor > 1.0)) throw ConfigError("plateau_factor must exceed 1");
  if (!(improvement_threshold >= 0.0)) throw ConfigError("improvement_threshold must be non-negative");
}

OptimizerState make_optimizer_state(const SegModel& model, const TrainConfig& config) {
  config.validate();
  OptimizerState s;
  for (const auto& [_, t] : model.params()) {
    s.m.emplace_back(t.shape(), t.dtype());
    s.v.emplace_back(t.shape(), t.dtype());
  }
  s.lr = config.alpha;
  return s;
}

void adam_step(ParamList& params, const std::map<std::string, Tensor>& grads, OptimizerState& state,
               const TrainConfig& config) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw UsageError("adam_step: optimizer state does not match the parameter list");
  }
  std::vector<const Tensor*> g(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto it = grads.find(params[i].first);
    if (it == grads.end()) throw UsageError("adam_step: no gradient for " + params[i].first);
    if (it->second.shape() != params[i].second.shape()) {
      throw DimensionError("adam_step: gradient shape mismatch for " + params[i].first);
    }
    g[i] = &it->second;
  }

  state.t += 1;
  const double b1 = config.beta1, b2 = config.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i].second;
    dispatch_dtype(p.dtype(), [&]<typename T>() {
      auto w = p.data<T>();
      auto gr = g[i]->data<T>();
      auto m = state.m[i].data<T>();
      auto v = state.v[i].data<T>();
      for (std::size_t j = 0; j < w.size(); ++j) {
        const double gj = gr[j];
        const double mj = b1 * m[j] + (1.0 - b1) * gj;
        const double vj = b2 * v[j] + (1.0 - b2) * gj * gj;
        m[j] = static_cast<T>(mj);
        v[j] = static_cast<T>(vj);
        const double step = state.lr * (mj / c1) / (std::sqrt(vj / c2) + config.epsilon);
        w[j] = static_cast<T>(w[j] - step);
      }
    });
  }
}

}  // namespace cxrseg
