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

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cxrseg/autograd.hpp"
#include "cxrseg/data_io.hpp"
#include "cxrseg/models.hpp"

namespace cxrseg {

// ---- loss --------------------------------------------------------------

inline constexpr double kProbClamp = 1e-12;

/// Mean pixel-wise cross-entropy of N x 2 x H x W probabilities against
/// per-pixel class labels (N*H*W values in {0,1}). Probabilities are clamped
/// at kProbClamp before the log.
Var ce_loss(Var probs, std::span<const std::uint8_t> labels);
double ce_loss_value(const Tensor& probs, std::span<const std::uint8_t> labels);

// ---- optimisation ------------------------------------------------------

struct TrainConfig {
  double alpha = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 4;
  std::size_t max_epochs = 40;
  std::size_t plateau_patience = 3;
  double plateau_factor = 5.0;  // lr is divided by this
  std::size_t early_stop_patience = 8;
  double improvement_threshold = 1e-9;
  std::uint64_t seed = 0;

  void validate() const;
};

struct OptimizerState {
  std::vector<Tensor> m;  // first moments, params() order
  std::vector<Tensor> v;  // second moments
  std::uint64_t t = 0;
  double lr = 0.0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::size_t plateau_counter = 0;
  std::size_t stale_epochs = 0;  // epochs since the last improvement
};

OptimizerState make_optimizer_state(const SegModel& model, const TrainConfig& config);

using ParamList = std::vector<std::pair<std::string, Tensor>>;

/// One bias-corrected Adam update at state.lr. Every parameter needs a
/// gradient in `grads` (keyed by parameter name).
void adam_step(ParamList& params, const std::map<std::string, Tensor>& grads, OptimizerState& state,
               const TrainConfig& config);

struct PlateauEvent {
  bool improved = false;
  bool lr_reduced = false;
};

/// End-of-epoch bookkeeping for the plateau schedule and early stopping.
PlateauEvent plateau_update(OptimizerState& state, double val_loss, const TrainConfig& config);
bool early_stop_check(const OptimizerState& state, const TrainConfig& config);

// ---- training loop -----------------------------------------------------

struct SegExample {
  GrayImage image;
  BinaryMask target;
};
using SegDataset = std::vector<SegExample>;

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_dsc = 0.0;
  double lr = 0.0;  // rate used during this epoch
  bool improved = false;
  bool lr_reduced = false;  // applied after this epoch
};

struct TrainResult {
  ParamList best_params;
  std::vector<EpochRecord> history;
  std::size_t stopped_epoch = 0;
  std::size_t best_epoch = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains in place; on return the model holds the parameters of the epoch
/// with the lowest validation loss.
TrainResult train(SegModel& model, const SegDataset& train_set, const SegDataset& val_set, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

struct EvalResult {
  double loss = 0.0;
  double dsc = 0.0;  // micro-averaged, threshold 0.5
};

EvalResult evaluate_model(const SegModel& model, const SegDataset& data, std::size_t batch_size = 4);

/// Runs the model on one image and returns its probability map.
ProbMap predict(const SegModel& model, const GrayImage& image);

enum class MaskTarget { lung, infection };
std::string target_name(MaskTarget t);
MaskTarget parse_target(const std::string& name);

/// Loads records resized to size x size, paired with the chosen mask.
SegDataset load_dataset(const std::vector<DatasetRecord>& records, MaskTarget target, std::size_t size);

// ---- fold plans --------------------------------------------------------

struct FoldPlan {
  struct ClassCounts {
    std::size_t total = 0, train = 0, val = 0, test = 0;
  };

  std::size_t k = 5;
  std::map<SampleClass, std::vector<std::string>> test;
  std::map<SampleClass, std::vector<std::vector<std::string>>> folds;  // k validation lists per class
  std::map<SampleClass, std::vector<std::string>> always_train;         // in no validation list

  std::vector<std::string> test_ids() const;
  std::vector<std::string> val_ids(std::size_t fold) const;
  std::vector<std::string> train_ids(std::size_t fold) const;
  std::map<SampleClass, ClassCounts> counts(std::size_t fold) const;
};

/// Honors split/fold tags when the manifest carries them; otherwise holds out
/// round(test_fraction * n) items per class and deals the rest into k folds.
FoldPlan make_fold_plan(const std::vector<DatasetRecord>& manifest, double test_fraction = 0.2, std::size_t k = 5,
                        std::uint64_t seed = 0);

}  // namespace cxrseg
