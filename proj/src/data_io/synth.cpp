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
#include <cstdio>
#include <random>

#include "cxrseg/data_io.hpp"

namespace cxrseg {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct Ellipse {
  double row, col, ry, rx;
  double norm(double r, double c) const {
    const double dy = (r - row) / ry, dx = (c - col) / rx;
    return dy * dy + dx * dx;
  }
};

}  // namespace

Sample synth_sample(SampleClass sample_class, std::size_t size, std::uint64_t seed, const std::string& id) {
  if (size < 16 || size % 4 != 0) throw ConfigError("synthetic image size must be a multiple of 4 and >= 16");
  std::mt19937_64 rng(seed);
  auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  const double s = static_cast<double>(size);

  // Image-left and image-right lobes; margins keep both inside the frame and
  // apart from each other.
  const Ellipse lobes[2] = {
      {uni(0.45, 0.55) * s, uni(0.27, 0.33) * s, uni(0.26, 0.32) * s, uni(0.11, 0.15) * s},
      {uni(0.45, 0.55) * s, uni(0.67, 0.73) * s, uni(0.26, 0.32) * s, uni(0.11, 0.15) * s},
  };
  const double body = uni(160.0, 185.0);
  const double lung_level = uni(55.0, 80.0);

  Sample out;
  out.id = id;
  out.sample_class = sample_class;
  out.lung = BinaryMask(size, size);
  out.infection = BinaryMask(size, size);
  std::vector<double> px(size * size);
  for (std::size_t r = 0; r < size; ++r) {
    for (std::size_t c = 0; c < size; ++c) {
      const double rr = static_cast<double>(r) + 0.5, cc = static_cast<double>(c) + 0.5;
      const bool in_lung = lobes[0].norm(rr, cc) <= 1.0 || lobes[1].norm(rr, cc) <= 1.0;
      out.lung.set(r, c, in_lung);
      // Mild vertical gradient on the body, like tissue thickness.
      px[r * size + c] = in_lung ? lung_level : body - 20.0 * (rr / s);
    }
  }

  if (sample_class == SampleClass::covid) {
    const int blobs = std::uniform_int_distribution<int>(1, 3)(rng);
    for (int b = 0; b < blobs; ++b) {
      const Ellipse& lobe = lobes[std::uniform_int_distribution<int>(0, 1)(rng)];
      const double t = uni(0.0, 2.0 * M_PI), rad = std::sqrt(uni(0.0, 1.0)) * 0.6;
      const Ellipse blob{lobe.row + rad * lobe.ry * std::sin(t), lobe.col + rad * lobe.rx * std::cos(t),
                         uni(0.05, 0.09) * s, uni(0.05, 0.09) * s};
      const double lift = uni(55.0, 75.0);
      for (std::size_t r = 0; r < size; ++r) {
        for (std::size_t c = 0; c < size; ++c) {
          const double rr = static_cast<double>(r) + 0.5, cc = static_cast<double>(c) + 0.5;
          if (out.lung(r, c) && blob.norm(rr, cc) <= 1.0 && !out.infection(r, c)) {
            out.infection.set(r, c, true);
            px[r * size + c] += lift;
          }
        }
      }
    }
  } else if (sample_class == SampleClass::non_covid) {
    // Fine speckle texture inside the lobes; no infection label.
    const int dots = std::uniform_int_distribution<int>(10, 25)(rng);
    for (int d = 0; d < dots; ++d) {
      const Ellipse& lobe = lobes[std::uniform_int_distribution<int>(0, 1)(rng)];
      const double t = uni(0.0, 2.0 * M_PI), rad = std::sqrt(uni(0.0, 1.0)) * 0.85;
      const auto r = static_cast<std::size_t>(lobe.row + rad * lobe.ry * std::sin(t));
      const auto c = static_cast<std::size_t>(lobe.col + rad * lobe.rx * std::cos(t));
      if (r < size && c < size && out.lung(r, c)) px[r * size + c] += uni(20.0, 35.0);
    }
  }

  std::normal_distribution<double> noise(0.0, 6.0);
  out.image = GrayImage(size, size);
  for (std::size_t i = 0; i < px.size(); ++i) {
    out.image.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::lround(px[i] + noise(rng)), 0L, 255L));
  }
  return out;
}

std::vector<DatasetRecord> synth_generate(std::size_t n_per_class, std::size_t size, std::uint64_t seed,
                                          const std::filesystem::path& out_dir) {
  if (size % 4 != 0) throw ConfigError("synthetic image size must be divisible by 4");
  std::vector<DatasetRecord> records;
  const SampleClass classes[] = {SampleClass::covid, SampleClass::non_covid, SampleClass::normal};
  for (std::size_t ci = 0; ci < 3; ++ci) {
    for (std::size_t i = 0; i < n_per_class; ++i) {
      char id[64];
      std::snprintf(id, sizeof id, "%s_%04zu", class_name(classes[ci]).c_str(), i);
      const std::uint64_t sample_seed = splitmix64(splitmix64(seed) ^ (ci * 0x100000001b3ULL + i));
      const Sample s = synth_sample(classes[ci], size, sample_seed, id);
      DatasetRecord r;
      r.id = id;
      r.sample_class = classes[ci];
      r.image = out_dir / "images" / (std::string(id) + ".pgm");
      r.lung_mask = out_dir / "lung" / (std::string(id) + ".pgm");
      r.infection_mask = out_dir / "infection" / (std::string(id) + ".pgm");
      write_image(r.image, s.image);
      write_mask(*r.lung_mask, s.lung);
      write_mask(*r.infection_mask, s.infection);
      records.push_back(std::move(r));
    }
  }
  save_manifest(out_dir / "manifest.jsonl", records);
  return records;
}

}  // namespace cxrseg
