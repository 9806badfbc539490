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

// Weights container, all integers little-endian:
//
//   "SEGW" | version u32 | arch u8 | depth u8 | base_channels u16 |
//   in_channels u16 | tensor count u32 |
//   per tensor: name length u16, name bytes, dtype u8 (0 f32, 1 f64),
//               rank u8, dims u32 x rank, raw values

#include <bit>
#include <cstring>

#include "cxrseg/data_io.hpp"

namespace cxrseg {
namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename T>
  void values(std::span<const T> v) {
    for (T x : v) {
      std::uint8_t raw[sizeof(T)];
      std::memcpy(raw, &x, sizeof(T));
      if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
      bytes(raw, sizeof(T));
    }
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : b_(b) {}
  std::uint8_t u8(const char* what) { return static_cast<std::uint8_t>(le(1, what)); }
  std::uint16_t u16(const char* what) { return static_cast<std::uint16_t>(le(2, what)); }
  std::uint32_t u32(const char* what) { return static_cast<std::uint32_t>(le(4, what)); }
  std::string str(std::size_t n, const std::string& what) {
    need(n, what);
    std::string s(b_.begin() + static_cast<std::ptrdiff_t>(pos_), b_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  template <typename T>
  void values(std::span<T> dst, const std::string& what) {
    need(dst.size() * sizeof(T), what);
    for (T& x : dst) {
      std::uint8_t raw[sizeof(T)];
      std::memcpy(raw, b_.data() + pos_, sizeof(T));
      if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
      std::memcpy(&x, raw, sizeof(T));
      pos_ += sizeof(T);
    }
  }
  std::size_t pos() const { return pos_; }
  bool at_end() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n, const std::string& what) {
    if (b_.size() - pos_ < n) throw ParseError("weights file truncated in " + what, pos_);
  }
  std::uint64_t le(int n, const char* what) {
    need(static_cast<std::size_t>(n), what);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(b_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_weights(const SegModel& model) {
  const ModelConfig& c = model.config();
  Writer w;
  w.bytes("SEGW", 4);
  w.u32(kWeightsVersion);
  w.u8(static_cast<std::uint8_t>(c.arch));
  w.u8(static_cast<std::uint8_t>(c.depth));
  w.u16(static_cast<std::uint16_t>(c.base_channels));
  w.u16(static_cast<std::uint16_t>(c.in_channels));
  w.u32(static_cast<std::uint32_t>(model.params().size()));
  for (const auto& [name, t] : model.params()) {
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.u8(static_cast<std::uint8_t>(t.dtype()));
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    dispatch_dtype(t.dtype(), [&]<typename T>() { w.values<T>(t.data<T>()); });
  }
  return w.take();
}

SegModel decode_weights(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (r.str(4, "magic") != "SEGW") throw ParseError("not a weights file (bad magic)", 0);
  const std::uint32_t version = r.u32("version");
  if (version != kWeightsVersion) {
    throw ParseError("unsupported weights version " + std::to_string(version), 4);
  }
  ModelConfig cfg;
  const std::uint8_t arch = r.u8("config");
  if (arch > 2) throw ParseError("unknown architecture code " + std::to_string(arch), 8);
  cfg.arch = static_cast<Arch>(arch);
  cfg.depth = r.u8("config");
  cfg.base_channels = r.u16("config");
  cfg.in_channels = r.u16("config");
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw ParseError(std::string("invalid model config: ") + e.what(), 8);
  }
  const std::vector<LayerSpec> plan = layer_plan(cfg);
  const std::uint32_t count = r.u32("tensor count");
  if (count != 2 * plan.size()) {
    throw ParseError("config expects " + std::to_string(2 * plan.size()) + " tensors, file has " +
                         std::to_string(count),
                     r.pos());
  }
  std::vector<std::pair<std::string, Tensor>> params;
  std::optional<DType> dtype;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t at = r.pos();
    const std::uint16_t len = r.u16("tensor header");
    std::string name = r.str(len, "tensor name");
    const std::uint8_t code = r.u8(name.c_str());
    if (code > 1) throw ParseError("tensor " + name + ": unknown dtype code " + std::to_string(code), at);
    const auto dt = static_cast<DType>(code);
    if (dtype && *dtype != dt) throw ParseError("tensor " + name + ": mixed dtypes in one file", at);
    dtype = dt;
    const std::uint8_t rank = r.u8(name.c_str());
    Shape shape(rank);
    for (auto& d : shape) d = r.u32(name.c_str());
    const LayerSpec& l = plan[i / 2];
    const std::string expect = l.name + (i % 2 == 0 ? ".weight" : ".bias");
    const Shape expect_shape = i % 2 == 0 ? Shape{l.out_channels, l.in_channels, l.kernel, l.kernel}
                                          : Shape{l.out_channels};
    if (name != expect) throw ParseError("expected tensor " + expect + ", found " + name, at);
    if (shape != expect_shape) {
      throw ParseError("tensor " + name + ": shape " + shape_str(shape) + " does not match " +
                           shape_str(expect_shape),
                       at);
    }
    Tensor t(shape, dt);
    dispatch_dtype(dt, [&]<typename T>() { r.values<T>(t.data<T>(), "tensor " + name); });
    params.emplace_back(std::move(name), std::move(t));
  }
  if (!r.at_end()) throw ParseError("trailing bytes after last tensor", r.pos());
  return SegModel(cfg, plan, std::move(params));
}

void save_weights(const std::filesystem::path& path, const SegModel& model) { write_file(path, encode_weights(model)); }

SegModel load_weights(const std::filesystem::path& path) {
  try {
    return decode_weights(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.message(), e.offset());
  }
}

SegModel load_weights(const std::filesystem::path& path, const ModelConfig& expected) {
  SegModel m = load_weights(path);
  if (!(m.config() == expected)) {
    throw ConfigError(path.string() + ": stored model is " + arch_name(m.config().arch) + " depth " +
                      std::to_string(m.config().depth) + " base " + std::to_string(m.config().base_channels) +
                      ", expected " + arch_name(expected.arch) + " depth " + std::to_string(expected.depth) +
                      " base " + std::to_string(expected.base_channels));
  }
  return m;
}

}  // namespace cxrseg
