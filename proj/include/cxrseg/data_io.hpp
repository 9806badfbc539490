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
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cxrseg/mask.hpp"
#include "cxrseg/models.hpp"

namespace cxrseg {

struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;  // row-major

  GrayImage() = default;
  GrayImage(std::size_t h, std::size_t w, std::uint8_t value = 0) : height(h), width(w), pixels(h * w, value) {}
  GrayImage(std::size_t h, std::size_t w, std::vector<std::uint8_t> px);

  std::uint8_t operator()(std::size_t row, std::size_t col) const { return pixels[row * width + col]; }
  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

// ---- image files -------------------------------------------------------
//
// Canonical format is binary portable graymap ("P5", maxval 255). PNG is
// accepted on read, and written when the path ends in .png.

GrayImage decode_pgm(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_pgm(const GrayImage& image);
GrayImage decode_png(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_png(const GrayImage& image);

GrayImage read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const GrayImage& image);

/// Nonzero pixels are foreground.
BinaryMask mask_from_image(const GrayImage& image);
/// Foreground written as 255.
GrayImage mask_to_image(const BinaryMask& mask);
BinaryMask read_mask(const std::filesystem::path& path);
void write_mask(const std::filesystem::path& path, const BinaryMask& mask);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

// ---- resizing ----------------------------------------------------------

/// Bilinear with half-pixel centres (corners not aligned).
GrayImage resize(const GrayImage& image, std::size_t height, std::size_t width);
inline GrayImage resize(const GrayImage& image, std::size_t size = 256) { return resize(image, size, size); }
/// Nearest neighbour, so the result stays binary.
BinaryMask resize_mask(const BinaryMask& mask, std::size_t height, std::size_t width);
inline BinaryMask resize_mask(const BinaryMask& mask, std::size_t size = 256) {
  return resize_mask(mask, size, size);
}

/// Stacks images into an N x 1 x H x W tensor with intensities divided by 255.
Tensor images_to_tensor(const std::vector<const GrayImage*>& images, DType dtype = default_dtype());
Tensor image_to_tensor(const GrayImage& image, DType dtype = default_dtype());

// ---- manifests ---------------------------------------------------------

enum class SampleClass { covid, non_covid, normal };
enum class Split { train, val, test };

std::string class_name(SampleClass c);
std::optional<SampleClass> parse_class(const std::string& name);
std::string split_name(Split s);
std::optional<Split> parse_split(const std::string& name);

struct DatasetRecord {
  std::string id;
  std::filesystem::path image;
  std::optional<std::filesystem::path> lung_mask;
  std::optional<std::filesystem::path> infection_mask;
  SampleClass sample_class = SampleClass::normal;
  std::optional<Split> split;
  std::optional<std::size_t> fold;
};

struct ManifestOptions {
  /// Reject records whose referenced files do not exist.
  bool check_files = true;
};

/// One JSON object per line with keys id, image, lung_mask, infection_mask,
/// class, split, fold. Relative paths resolve against the manifest's folder.
/// All problems are collected and reported together, one per line.
std::vector<DatasetRecord> load_manifest(const std::filesystem::path& path, const ManifestOptions& opts = {});
std::vector<DatasetRecord> parse_manifest(const std::string& text, const std::filesystem::path& base_dir,
                                          const ManifestOptions& opts = {});
void save_manifest(const std::filesystem::path& path, const std::vector<DatasetRecord>& records);

/// An image with its masks, loaded and resized for a model.
struct Sample {
  std::string id;
  SampleClass sample_class = SampleClass::normal;
  GrayImage image;
  BinaryMask lung;
  BinaryMask infection;
};

/// Loads a record; missing masks become empty masks. size 0 keeps native size.
Sample load_sample(const DatasetRecord& record, std::size_t size = 0);

// ---- synthetic data ----------------------------------------------------

/// Writes n_per_class radiograph-like samples per class to out_dir (images
/// under images/, masks under lung/ and infection/) plus manifest.jsonl, and
/// returns the records. Deterministic in seed.
std::vector<DatasetRecord> synth_generate(std::size_t n_per_class, std::size_t size, std::uint64_t seed,
                                          const std::filesystem::path& out_dir);

/// In-memory variant used by tests and the generator.
Sample synth_sample(SampleClass sample_class, std::size_t size, std::uint64_t seed, const std::string& id);

// ---- weights -----------------------------------------------------------

inline constexpr std::uint32_t kWeightsVersion = 1;

std::vector<std::uint8_t> encode_weights(const SegModel& model);
SegModel decode_weights(const std::vector<std::uint8_t>& bytes);
void save_weights(const std::filesystem::path& path, const SegModel& model);
SegModel load_weights(const std::filesystem::path& path);
/// Loads and checks the stored config against `expected`.
SegModel load_weights(const std::filesystem::path& path, const ModelConfig& expected);

}  // namespace cxrseg
