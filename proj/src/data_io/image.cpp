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

#include <png.h>

#include <cctype>
#include <cstring>
#include <fstream>
#include <iterator>

#include "cxrseg/data_io.hpp"

namespace cxrseg {

GrayImage::GrayImage(std::size_t h, std::size_t w, std::vector<std::uint8_t> px)
    : height(h), width(w), pixels(std::move(px)) {
  if (pixels.size() != h * w) throw DimensionError("image pixel count does not match its dimensions");
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("short write to " + path.string());
}

namespace {

class PgmHeader {
 public:
  explicit PgmHeader(const std::vector<std::uint8_t>& b) : b_(b) {}

  // Skips whitespace and '#' comments, then reads a decimal field.
  std::size_t number(const char* what) {
    skip_space();
    const std::size_t start = pos_;
    std::size_t value = 0;
    while (pos_ < b_.size() && std::isdigit(b_[pos_])) {
      value = value * 10 + (b_[pos_] - '0');
      if (value > (1u << 24)) throw ParseError(std::string("PGM ") + what + " too large", start);
      ++pos_;
    }
    if (pos_ == start) throw ParseError(std::string("PGM header: expected ") + what, start);
    return value;
  }

  void skip_space() {
    while (pos_ < b_.size()) {
      if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else if (std::isspace(b_[pos_])) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t pos_ = 0;

 private:
  const std::vector<std::uint8_t>& b_;
};

}  // namespace

GrayImage decode_pgm(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw ParseError("not a binary PGM file (magic must be P5)", 0);
  }
  PgmHeader h(bytes);
  h.pos_ = 2;
  if (h.pos_ >= bytes.size() || !(std::isspace(bytes[h.pos_]) || bytes[h.pos_] == '#')) {
    throw ParseError("PGM header: expected whitespace after magic", h.pos_);
  }
  const std::size_t width = h.number("width");
  const std::size_t height = h.number("height");
  h.skip_space();
  const std::size_t maxval_at = h.pos_;
  const std::size_t maxval = h.number("maxval");
  if (width == 0 || height == 0) throw ParseError("PGM dimensions must be positive", maxval_at);
  if (maxval != 255) throw ParseError("PGM maxval must be 255, got " + std::to_string(maxval), maxval_at);
  if (h.pos_ >= bytes.size() || !std::isspace(bytes[h.pos_])) {
    throw ParseError("PGM header: expected single whitespace before raster", h.pos_);
  }
  const std::size_t data = h.pos_ + 1;
  const std::size_t need = width * height;
  if (bytes.size() - data < need) {
    throw ParseError("PGM raster truncated: need " + std::to_string(need) + " bytes, have " +
                         std::to_string(bytes.size() - data),
                     data);
  }
  return GrayImage(height, width,
                   std::vector<std::uint8_t>(bytes.begin() + static_cast<std::ptrdiff_t>(data),
                                             bytes.begin() + static_cast<std::ptrdiff_t>(data + need)));
}

std::vector<std::uint8_t> encode_pgm(const GrayImage& image) {
  const std::string header =
      "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

GrayImage decode_png(const std::vector<std::uint8_t>& bytes) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    throw ParseError(std::string("PNG: ") + img.message, 0);
  }
  img.format = PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> px(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, px.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw ParseError("PNG: " + msg, 0);
  }
  return GrayImage(img.height, img.width, std::move(px));
}

std::vector<std::uint8_t> encode_png(const GrayImage& image) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_get_memory_size(img, size, 0, image.pixels.data(), 0, nullptr)) {
    throw Error(std::string("PNG encode: ") + img.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, image.pixels.data(), 0, nullptr)) {
    throw Error(std::string("PNG encode: ") + img.message);
  }
  out.resize(size);
  return out;
}

GrayImage read_image(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  static constexpr std::uint8_t kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngSig, 8) == 0) return decode_png(bytes);
  try {
    return decode_pgm(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.message(), e.offset());
  }
}

void write_image(const std::filesystem::path& path, const GrayImage& image) {
  const bool png = path.extension() == ".png" || path.extension() == ".PNG";
  write_file(path, png ? encode_png(image) : encode_pgm(image));
}

BinaryMask mask_from_image(const GrayImage& image) {
  std::vector<std::uint8_t> v(image.pixels.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = image.pixels[i] != 0 ? 1 : 0;
  return BinaryMask(image.height, image.width, std::move(v));
}

GrayImage mask_to_image(const BinaryMask& mask) {
  std::vector<std::uint8_t> v(mask.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = mask[i] ? 255 : 0;
  return GrayImage(mask.height(), mask.width(), std::move(v));
}

BinaryMask read_mask(const std::filesystem::path& path) { return mask_from_image(read_image(path)); }

void write_mask(const std::filesystem::path& path, const BinaryMask& mask) { write_image(path, mask_to_image(mask)); }

}  // namespace cxrseg
