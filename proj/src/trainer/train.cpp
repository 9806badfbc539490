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
#include <numeric>
#include <random>

#include "cxrseg/metrics.hpp"
#include "cxrseg/trainer.hpp"

namespace cxrseg {
namespace {

struct Batch {
  Tensor images;
  std::vector<std::uint8_t> labels;
};

Batch make_batch(const SegDataset& data, std::span<const std::size_t> idx, DType dtype) {
  std::vector<const GrayImage*> images;
  std::vector<const BinaryMask*> masks;
  for (std::size_t i : idx) {
    const SegExample& ex = data[i];
    if (ex.target.height() != ex.image.height || ex.target.width() != ex.image.width) {
      throw DimensionError("training example has a target of different size than its image");
    }
    images.push_back(&ex.image);
    masks.push_back(&ex.target);
  }
  return {images_to_tensor(images, dtype), stack_labels(masks)};
}

double train_step(SegModel& model, const Batch& batch, OptimizerState& state, const TrainConfig& config) {
  Tape tape;
  ModelBinding binding = bind(model, tape, true);
  Var x = tape.constant(batch.images);
  Var loss = ce_loss(softmax2(forward_logits(model, binding, x)), batch.labels);
  auto grads_by_id = backward(tape, loss);

  std::map<std::string, Tensor> grads;
  auto& params = model.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto it = grads_by_id.find(binding.params[i].id);
    grads.emplace(params[i].first, it != grads_by_id.end() ? std::move(it->second)
                                                          : Tensor(params[i].second.shape(), params[i].second.dtype()));
  }
  adam_step(params, grads, state, config);
  return loss.value().at(0);
}

}  // namespace

EvalResult evaluate_model(const SegModel& model, const SegDataset& data, std::size_t batch_size) {
  if (data.empty()) throw UsageError("evaluate_model: empty dataset");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  double loss_sum = 0.0;
  ConfusionCounts counts;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t end = std::min(start + batch_size, data.size());
    std::span<const std::size_t> idx(order.data() + start, end - start);
    Batch batch = make_batch(data, idx, model.dtype());
    Tensor probs = forward(model, batch.images);
    loss_sum += ce_loss_value(probs, batch.labels) * static_cast<double>(idx.size());
    for (std::size_t b = 0; b < idx.size(); ++b) {
      ProbMap pm = ProbMap::from_batch(probs, b);
      const auto& gt = data[idx[b]].target;
      std::vector<std::uint8_t> pred(pm.foreground().size());
      for (std::size_t i = 0; i < pred.size(); ++i) pred[i] = pm.foreground(i) > 0.5 ? 1 : 0;
      counts += confusion(pred, gt.values());
    }
  }
  return {loss_sum / static_cast<double>(data.size()), seg_metrics(counts).dsc};
}

ProbMap predict(const SegModel& model, const GrayImage& image) {
  return ProbMap::from_batch(forward(model, image_to_tensor(image, model.dtype())), 0);
}

std::string target_name(MaskTarget t) { return t == MaskTarget::lung ? "lung" : "infection"; }

MaskTarget parse_target(const std::string& name) {
  if (name == "lung") return MaskTarget::lung;
  if (name == "infection") return MaskTarget::infection;
  throw ConfigError("unknown mask target '" + name + "' (expected lung or infection)");
}

SegDataset load_dataset(const std::vector<DatasetRecord>& records, MaskTarget target, std::size_t size) {
  SegDataset out;
  out.reserve(records.size());
  for (const auto& r : records) {
    Sample s = load_sample(r, size);
    out.push_back({std::move(s.image), target == MaskTarget::lung ? std::move(s.lung) : std::move(s.infection)});
  }
  return out;
}

TrainResult train(SegModel& model, const SegDataset& train_set, const SegDataset& val_set, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (train_set.empty()) throw UsageError("train: empty training set");
  if (val_set.empty()) throw UsageError("train: empty validation set");

  OptimizerState state = make_optimizer_state(model, config);
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  result.best_params = model.params();
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = state.lr;

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(start + config.batch_size, order.size());
      std::span<const std::size_t> idx(order.data() + start, end - start);
      loss_sum += train_step(model, make_batch(train_set, idx, model.dtype()), state, config) *
                  static_cast<double>(idx.size());
    }
    rec.train_loss = loss_sum / static_cast<double>(order.size());

    const EvalResult val = evaluate_model(model, val_set, config.batch_size);
    rec.val_loss = val.loss;
    rec.val_dsc = val.dsc;
    const PlateauEvent ev = plateau_update(state, val.loss, config);
    rec.improved = ev.improved;
    rec.lr_reduced = ev.lr_reduced;
    if (ev.improved) {
      result.best_params = model.params();
      result.best_epoch = epoch;
    }
    result.history.push_back(rec);
    result.stopped_epoch = epoch;
    if (on_epoch) on_epoch(rec);
    if (early_stop_check(state, config)) break;
  }
  model.params() = result.best_params;
  return result;
}

}  // namespace cxrseg
