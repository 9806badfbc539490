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

#include "cxrseg/data_io.hpp"

namespace cxrseg {

GrayImage resize(const GrayImage& image, std::size_t height, std::size_t width) {
  if (height < 8 || width < 8) throw ConfigError("resize target must be at least 8 pixels");
  if (image.height == height && image.width == width) return image;
  if (image.height == 0 || image.width == 0) throw DimensionError("cannot resize an empty image");
  const double sy = static_cast<double>(image.height) / static_cast<double>(height);
  const double sx = static_cast<double>(image.width) / static_cast<double>(width);
  GrayImage out(height, width);
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(image.height - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(image.width - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - static_cast<double>(x0);
      const double top = (1.0 - wx) * image(y0, x0) + wx * image(y0, x1);
      const double bot = (1.0 - wx) * image(y1, x0) + wx * image(y1, x1);
      const double v = (1.0 - wy) * top + wy * bot;
      out.pixels[y * width + x] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
  }
  return out;
}

BinaryMask resize_mask(const BinaryMask& mask, std::size_t height, std::size_t width) {
  if (height < 8 || width < 8) throw ConfigError("resize target must be at least 8 pixels");
  if (mask.height() == height && mask.width() == width) return mask;
  BinaryMask out(height, width);
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t sy = std::min(mask.height() - 1, (2 * y + 1) * mask.height() / (2 * height));
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t sx = std::min(mask.width() - 1, (2 * x + 1) * mask.width() / (2 * width));
      out.set(y, x, mask(sy, sx) != 0);
    }
  }
  return out;
}

Tensor images_to_tensor(const std::vector<const GrayImage*>& images, DType dtype) {
  if (images.empty()) throw UsageError("images_to_tensor: no images");
  const std::size_t h = images.front()->height, w = images.front()->width;
  Tensor t(Shape{images.size(), 1, h, w}, dtype);
  dispatch_dtype(dtype, [&]<typename T>() {
    auto d = t.data<T>();
    for (std::size_t n = 0; n < images.size(); ++n) {
      if (images[n]->height != h || images[n]->width != w) throw DimensionError("images_to_tensor: size mismatch");
      for (std::size_t i = 0; i < h * w; ++i) d[n * h * w + i] = static_cast<T>(images[n]->pixels[i]) / T(255);
    }
  });
  return t;
}

Tensor image_to_tensor(const GrayImage& image, DType dtype) { return images_to_tensor({&image}, dtype); }

}  // namespace cxrseg
