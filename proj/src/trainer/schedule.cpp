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

#include "cxrseg/trainer.hpp"

namespace cxrseg {

PlateauEvent plateau_update(OptimizerState& state, double val_loss, const TrainConfig& config) {
  PlateauEvent ev;
  if (val_loss < state.best_val_loss - config.improvement_threshold) {
    ev.improved = true;
    state.best_val_loss = val_loss;
    state.plateau_counter = 0;
    state.stale_epochs = 0;
    return ev;
  }
  // The two counters share the improvement signal but a reduction only
  // resets the plateau counter.
  ++state.stale_epochs;
  if (++state.plateau_counter >= config.plateau_patience) {
    state.lr /= config.plateau_factor;
    state.plateau_counter = 0;
    ev.lr_reduced = true;
  }
  return ev;
}

bool early_stop_check(const OptimizerState& state, const TrainConfig& config) {
  return state.stale_epochs >= config.early_stop_patience;
}

}  // namespace cxrseg
