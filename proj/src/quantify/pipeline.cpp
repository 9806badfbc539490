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

#include <future>

#include "cxrseg/quantify.hpp"

namespace cxrseg {
namespace {

void check_model_input(const SegModel& m, const GrayImage& image, const char* which) {
  const ModelConfig& c = m.config();
  if (c.in_channels != 1) {
    throw DimensionError(std::string(which) + " model expects " + std::to_string(c.in_channels) +
                         " input channels; grayscale images have 1");
  }
  const std::size_t k = c.spatial_multiple();
  if (image.height == 0 || image.width == 0 || image.height % k != 0 || image.width % k != 0) {
    throw DimensionError(std::string(which) + " model needs sides divisible by " + std::to_string(k) + ", got " +
                         std::to_string(image.height) + "x" + std::to_string(image.width));
  }
}

ProbMap infer(const SegModel& m, const GrayImage& image) {
  return ProbMap::from_batch(forward(m, image_to_tensor(image, m.dtype())), 0);
}

}  // namespace

std::string mode_name(PipelineMode m) { return m == PipelineMode::cascaded ? "cascaded" : "parallel"; }

PipelineMode parse_mode(const std::string& name) {
  if (name == "parallel") return PipelineMode::parallel;
  if (name == "cascaded") return PipelineMode::cascaded;
  throw ConfigError("unknown pipeline mode '" + name + "' (expected parallel or cascaded)");
}

PipelineResult run_pipeline(const GrayImage& image, const SegModel& lung_model, const SegModel& inf_model,
                            const PipelineOptions& opts) {
  check_model_input(lung_model, image, "lung");
  check_model_input(inf_model, image, "infection");

  PipelineResult out;
  if (opts.mode == PipelineMode::parallel) {
    auto inf = std::async(std::launch::async, [&] { return infer(inf_model, image); });
    out.lung_probs = infer(lung_model, image);
    out.infection_probs = inf.get();
    out.lung = postprocess_lung(out.lung_probs, opts.post);
  } else {
    out.lung_probs = infer(lung_model, image);
    out.lung = postprocess_lung(out.lung_probs, opts.post);
    GrayImage masked = image;
    for (std::size_t i = 0; i < masked.pixels.size(); ++i) {
      if (!out.lung[i]) masked.pixels[i] = 0;
    }
    out.infection_probs = infer(inf_model, masked);
  }
  out.infection = postprocess_infection(out.infection_probs, out.lung, opts.post);
  out.report = quantify(out.infection, out.lung, opts.case_id, opts.timestamp);
  return out;
}

}  // namespace cxrseg
