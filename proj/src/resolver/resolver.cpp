// Copyright Contributors to the fvsplat project
// SPDX-License-Identifier: Apache-2.0
#include "fvs/resolver/resolver.hpp"

#include "fvs/error.hpp"
#include "fvs/scene/synthetic.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <tbb/blocked_range.h>
#include <tbb/parallel_for.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace fvs {
namespace {

// Channel-planar activations used inside the decoder.
struct Planes {
  int channels = 0, height = 0, width = 0;
  std::vector<float> data;

  Planes() = default;
  Planes(int c, int h, int w) : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, 0.0f) {}
  float* plane(int c) { return data.data() + static_cast<std::size_t>(c) * height * width; }
  const float* plane(int c) const { return data.data() + static_cast<std::size_t>(c) * height * width; }
};

Planes to_planes(const Image& img) {
  Planes p(img.channels, img.height, img.width);
  const std::size_t n = img.pixel_count();
  for (int c = 0; c < img.channels; ++c) {
    float* dst = p.plane(c);
    for (std::size_t i = 0; i < n; ++i) dst[i] = img.data[i * img.channels + c];
  }
  return p;
}

Planes concat(const std::vector<const Planes*>& parts) {
  int channels = 0;
  for (const Planes* p : parts) channels += p->channels;
  Planes out(channels, parts.front()->height, parts.front()->width);
  float* dst = out.data.data();
  for (const Planes* p : parts) {
    if (p->height != out.height || p->width != out.width) throw ShapeError("decoder inputs differ in resolution");
    dst = std::copy(p->data.begin(), p->data.end(), dst);
  }
  return out;
}

struct Taps {
  int i0, i1;
  float t;
};

std::vector<Taps> bilinear_taps(int in, int out) {
  std::vector<Taps> taps(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    const double src = std::max(0.0, (o + 0.5) * scale - 0.5);
    const int i0 = std::min(static_cast<int>(src), in - 1);
    taps[o] = {i0, std::min(i0 + 1, in - 1), static_cast<float>(src - i0)};
  }
  return taps;
}

Planes upsample(const Planes& src, int height, int width) {
  Planes out(src.channels, height, width);
  const auto tx = bilinear_taps(src.width, width);
  const auto ty = bilinear_taps(src.height, height);
  for (int c = 0; c < src.channels; ++c) {
    const float* s = src.plane(c);
    float* d = out.plane(c);
    for (int y = 0; y < height; ++y) {
      const float* r0 = s + static_cast<std::size_t>(ty[y].i0) * src.width;
      const float* r1 = s + static_cast<std::size_t>(ty[y].i1) * src.width;
      for (int x = 0; x < width; ++x) {
        const float top = r0[tx[x].i0] + (r0[tx[x].i1] - r0[tx[x].i0]) * tx[x].t;
        const float bottom = r1[tx[x].i0] + (r1[tx[x].i1] - r1[tx[x].i0]) * tx[x].t;
        d[static_cast<std::size_t>(y) * width + x] = top + (bottom - top) * ty[y].t;
      }
    }
  }
  return out;
}

Planes conv(const Planes& in, const ConvLayer& layer, bool elu) {
  if (in.channels != layer.in) throw ShapeError(fmt::format("convolution expects {} channels, got {}", layer.in, in.channels));
  Planes out(layer.out, in.height, in.width);
  const int k = layer.kernel, r = k / 2, w = in.width, h = in.height;
  tbb::parallel_for(tbb::blocked_range<int>(0, h, 4), [&](const tbb::blocked_range<int>& rows) {
    for (int y = rows.begin(); y < rows.end(); ++y)
      for (int o = 0; o < layer.out; ++o) {
        float* row = out.plane(o) + static_cast<std::size_t>(y) * w;
        std::fill(row, row + w, layer.bias[o]);
        for (int c = 0; c < layer.in; ++c)
          for (int ky = 0; ky < k; ++ky) {
            const int yy = y + ky - r;
            if (yy < 0 || yy >= h) continue;
            const float* src = in.plane(c) + static_cast<std::size_t>(yy) * w;
            for (int kx = 0; kx < k; ++kx) {
              const float wt = layer.weight[((static_cast<std::size_t>(o) * layer.in + c) * k + ky) * k + kx];
              const int dx = kx - r;
              const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
              for (int x = x0; x < x1; ++x) row[x] += wt * src[x + dx];
            }
          }
        if (elu)
          for (int x = 0; x < w; ++x) row[x] = row[x] > 0.0f ? row[x] : std::expm1(row[x]);
      }
  });
  return out;
}

ConvLayer make_layer(int in, int out, int kernel) {
  ConvLayer l;
  l.in = in;
  l.out = out;
  l.kernel = kernel;
  l.weight.assign(static_cast<std::size_t>(out) * in * kernel * kernel, 0.0f);
  l.bias.assign(static_cast<std::size_t>(out), 0.0f);
  return l;
}

ResolverWeights zero_weights(const ResolverArch& arch) {
  arch.validate();
  ResolverWeights w;
  w.arch = arch;
  for (int l = 0; l < arch.levels(); ++l)
    w.convs.push_back({make_layer(arch.input_channels(l), arch.filters[l], arch.kernel),
                       make_layer(arch.filters[l], arch.filters[l], arch.kernel)});
  w.project = make_layer(arch.filters[0], 3, 1);
  return w;
}

bool same_layer(const ConvLayer& a, const ConvLayer& b) {
  return a.in == b.in && a.out == b.out && a.kernel == b.kernel && a.weight == b.weight && a.bias == b.bias;
}

// ---- file format helpers ----

class ByteWriter {
public:
  void u32(std::uint32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void floats(const std::vector<float>& v) { raw(v.data(), v.size() * sizeof(float)); }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes.insert(bytes.end(), b, b + n);
  }
  std::vector<std::uint8_t> bytes;
};

class ByteReader {
public:
  ByteReader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}
  std::uint32_t u32() {
    std::uint32_t v;
    take(&v, 4);
    return v;
  }
  void take(void* out, std::size_t n) {
    if (n > size_ - pos_) throw ParseError("weights file ends inside a field");
    std::memcpy(out, data_ + pos_, n);
    pos_ += n;
  }
  bool done() const noexcept { return pos_ == size_; }

private:
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

void write_tensor(ByteWriter& w, const std::vector<std::uint32_t>& shape, const std::vector<float>& data) {
  w.u32(static_cast<std::uint32_t>(shape.size()));
  for (std::uint32_t d : shape) w.u32(d);
  w.floats(data);
}

void read_tensor(ByteReader& r, const std::vector<std::uint32_t>& expected, std::vector<float>& data, const char* what) {
  const std::uint32_t rank = r.u32();
  std::vector<std::uint32_t> shape(rank);
  for (auto& d : shape) d = r.u32();
  if (shape != expected) throw ShapeError(fmt::format("tensor '{}' has shape [{}], expected [{}]", what, fmt::join(shape, ","),
                                                      fmt::join(expected, ",")));
  r.take(data.data(), data.size() * sizeof(float));
}

std::vector<std::uint32_t> weight_shape(const ConvLayer& l) {
  return {static_cast<std::uint32_t>(l.out), static_cast<std::uint32_t>(l.in), static_cast<std::uint32_t>(l.kernel),
          static_cast<std::uint32_t>(l.kernel)};
}

} // namespace

int ResolverArch::input_channels(int level) const {
  int c = feature_dim + 1;
  if (level < levels() - 1) c += filters[level + 1];
  if (level == 0) c += 3;
  return c;
}

void ResolverArch::validate() const {
  if (feature_dim <= 0) throw ShapeError("resolver feature dimension must be positive");
  if (filters.empty()) throw ShapeError("resolver needs at least one level");
  for (int f : filters)
    if (f <= 0) throw ShapeError("filter counts must be positive");
  if (kernel <= 0 || kernel % 2 == 0) throw ShapeError("kernel size must be odd and positive");
  if (activation != Activation::Elu) throw ShapeError("unsupported activation");
  if (filters.size() >= 2) {
    const int want = full_width_level0 ? filters[1] : filters[1] / 2;
    if (filters[0] != want || (!full_width_level0 && filters[1] % 2 != 0))
      throw ShapeError(fmt::format("level-0 filter count {} does not match {} level-1 count {}", filters[0],
                                   full_width_level0 ? "the" : "half the", filters[1]));
  }
}

ResolverArch ResolverArch::standard(int feature_dim, bool full_width) {
  ResolverArch a;
  a.feature_dim = feature_dim;
  a.full_width_level0 = full_width;
  if (full_width) a.filters[0] = a.filters[1];
  return a;
}

void ResolverWeights::validate() const {
  arch.validate();
  if (static_cast<int>(convs.size()) != arch.levels()) throw ShapeError("weights level count disagrees with architecture");
  auto check = [](const ConvLayer& l, int in, int out, int k) {
    if (l.in != in || l.out != out || l.kernel != k || l.weight.size() != static_cast<std::size_t>(out) * in * k * k ||
        l.bias.size() != static_cast<std::size_t>(out))
      throw ShapeError("convolution tensor shape disagrees with architecture");
  };
  for (int l = 0; l < arch.levels(); ++l) {
    check(convs[l][0], arch.input_channels(l), arch.filters[l], arch.kernel);
    check(convs[l][1], arch.filters[l], arch.filters[l], arch.kernel);
  }
  check(project, arch.filters[0], 3, 1);
}

bool operator==(const ResolverWeights& a, const ResolverWeights& b) {
  if (a.arch.feature_dim != b.arch.feature_dim || a.arch.filters != b.arch.filters || a.arch.kernel != b.arch.kernel ||
      a.arch.activation != b.arch.activation || a.arch.full_width_level0 != b.arch.full_width_level0 ||
      a.convs.size() != b.convs.size())
    return false;
  for (std::size_t l = 0; l < a.convs.size(); ++l)
    if (!same_layer(a.convs[l][0], b.convs[l][0]) || !same_layer(a.convs[l][1], b.convs[l][1])) return false;
  return same_layer(a.project, b.project);
}

void write_weights(const std::filesystem::path& path, const ResolverWeights& weights) {
  weights.validate();
  const ResolverArch& a = weights.arch;
  ByteWriter w;
  w.raw(kWeightsMagic, sizeof kWeightsMagic);
  w.u32(static_cast<std::uint32_t>(a.feature_dim));
  w.u32(static_cast<std::uint32_t>(a.levels()));
  for (int f : a.filters) w.u32(static_cast<std::uint32_t>(f));
  w.u32(static_cast<std::uint32_t>(a.kernel));
  w.u32(static_cast<std::uint32_t>(a.activation));
  w.u32(a.full_width_level0 ? 1u : 0u);
  w.u32(static_cast<std::uint32_t>(4 * a.levels() + 2));
  for (int l = a.levels() - 1; l >= 0; --l)
    for (const ConvLayer& c : weights.convs[l]) {
      write_tensor(w, weight_shape(c), c.weight);
      write_tensor(w, {static_cast<std::uint32_t>(c.out)}, c.bias);
    }
  write_tensor(w, weight_shape(weights.project), weights.project.weight);
  write_tensor(w, {3u}, weights.project.bias);
  w.u64(fnv1a64(w.bytes.data(), w.bytes.size()));

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(w.bytes.data()), static_cast<std::streamsize>(w.bytes.size()));
  if (!out) throw std::runtime_error("failed writing weights: " + path.string());
}

ResolverWeights load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open weights file: " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < sizeof kWeightsMagic || std::memcmp(bytes.data(), kWeightsMagic, sizeof kWeightsMagic) != 0)
    throw ParseError("not a resolver weights file (bad magic): " + path.string());
  if (bytes.size() < sizeof kWeightsMagic + 8) throw ChecksumError("weights file too short for a checksum");
  const std::size_t body = bytes.size() - 8;
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + body, 8);
  if (stored != fnv1a64(bytes.data(), body)) throw ChecksumError("weights checksum mismatch: " + path.string());

  ByteReader r(bytes.data() + sizeof kWeightsMagic, body - sizeof kWeightsMagic);
  ResolverArch arch;
  arch.feature_dim = static_cast<int>(r.u32());
  const std::uint32_t levels = r.u32();
  if (levels == 0 || levels > 16) throw ShapeError("implausible resolver level count");
  arch.filters.resize(levels);
  for (int& f : arch.filters) f = static_cast<int>(r.u32());
  arch.kernel = static_cast<int>(r.u32());
  arch.activation = static_cast<Activation>(r.u32());
  arch.full_width_level0 = r.u32() != 0;
  const std::uint32_t tensors = r.u32();
  if (tensors != 4 * levels + 2) throw ShapeError("tensor count disagrees with architecture");

  ResolverWeights w = zero_weights(arch);
  for (int l = arch.levels() - 1; l >= 0; --l)
    for (ConvLayer& c : w.convs[l]) {
      read_tensor(r, weight_shape(c), c.weight, "conv weight");
      read_tensor(r, {static_cast<std::uint32_t>(c.out)}, c.bias, "conv bias");
    }
  read_tensor(r, weight_shape(w.project), w.project.weight, "projection weight");
  read_tensor(r, {3u}, w.project.bias, "projection bias");
  if (!r.done()) throw ParseError("trailing bytes after the last tensor");
  return w;
}

ResolverWeights identity_weights(const ResolverArch& arch) {
  ResolverWeights w = zero_weights(arch);
  if (arch.filters[0] < 3) throw ShapeError("identity weights need at least three level-0 filters");
  const int k = arch.kernel, centre = k / 2;
  auto tap = [&](ConvLayer& l, int o, int i) {
    l.weight[((static_cast<std::size_t>(o) * l.in + i) * k + centre) * k + centre] = 1.0f;
  };
  const int crop_first = arch.input_channels(0) - 3;
  for (int c = 0; c < 3; ++c) {
    tap(w.convs[0][0], c, crop_first + c);
    tap(w.convs[0][1], c, c);
    w.project.weight[static_cast<std::size_t>(c) * w.project.in + c] = 1.0f;
  }
  return w;
}

ResolverWeights random_weights(const ResolverArch& arch, std::uint64_t seed) {
  ResolverWeights w = zero_weights(arch);
  Rng rng(seed);
  auto fill = [&](ConvLayer& l) {
    const double stddev = std::sqrt(2.0 / (l.in * l.kernel * l.kernel));
    for (float& v : l.weight) v = static_cast<float>(stddev * rng.normal());
    for (float& v : l.bias) v = static_cast<float>(0.01 * rng.normal());
  };
  for (auto& level : w.convs)
    for (ConvLayer& l : level) fill(l);
  fill(w.project);
  return w;
}

Image resolve(const FramePyramid& pyramid, const Image& crop_rgb, const ResolverWeights& weights) {
  const ResolverArch& arch = weights.arch;
  if (pyramid.feature_dim != arch.feature_dim)
    throw ShapeError(fmt::format("pyramid has {} feature channels, resolver expects {}", pyramid.feature_dim, arch.feature_dim));
  if (pyramid.levels() != arch.levels())
    throw ShapeError(fmt::format("pyramid has {} levels, resolver expects {}", pyramid.levels(), arch.levels()));
  const Image& base = pyramid.layers.front();
  if (crop_rgb.width != base.width || crop_rgb.height != base.height || crop_rgb.channels != 3)
    throw ShapeError("peripheral crop must be RGB at pyramid layer-0 resolution");

  Planes prev;
  for (int l = arch.levels() - 1; l >= 0; --l) {
    const Image& layer = pyramid.layers[l];
    const Planes features = to_planes(layer);
    std::vector<const Planes*> parts;
    Planes up, crop;
    if (l < arch.levels() - 1) {
      up = upsample(prev, layer.height, layer.width);
      parts.push_back(&up);
    }
    parts.push_back(&features);
    if (l == 0) {
      crop = to_planes(crop_rgb);
      parts.push_back(&crop);
    }
    const Planes x = conv(concat(parts), weights.convs[l][0], true);
    prev = conv(x, weights.convs[l][1], true);
  }
  const Planes rgb = conv(prev, weights.project, false);

  Image out(crop_rgb.width, crop_rgb.height, 3);
  const std::size_t n = out.pixel_count();
  for (int c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < n; ++i) out.data[i * 3 + c] = rgb.plane(c)[i];
  return out;
}

Image resize_bilinear(const Image& src, int width, int height) {
  if (width <= 0 || height <= 0 || src.empty()) throw ShapeError("resize needs a non-empty source and target");
  const Planes up = upsample(to_planes(src), height, width);
  Image out(width, height, src.channels);
  const std::size_t n = out.pixel_count();
  for (int c = 0; c < src.channels; ++c)
    for (std::size_t i = 0; i < n; ++i) out.data[i * src.channels + c] = up.plane(c)[i];
  return out;
}

Image bypass_resolve(const FramePyramid& pyramid, const Image& crop_rgb) {
  if (pyramid.feature_dim < 3) throw ContractViolation("bypass resolve needs at least three feature channels");
  const Image& base = pyramid.layers.front();
  if (crop_rgb.width != base.width || crop_rgb.height != base.height || crop_rgb.channels != 3)
    throw ShapeError("peripheral crop must be RGB at pyramid layer-0 resolution");

  // Premultiplied (r, g, b, alpha) per layer; holes inherit from the coarser level.
  const int stride = pyramid.feature_dim + 1;
  Image filled;
  for (int l = pyramid.levels() - 1; l >= 0; --l) {
    const Image& layer = pyramid.layers[l];
    Image own(layer.width, layer.height, 4);
    for (std::size_t i = 0; i < layer.pixel_count(); ++i) {
      for (int c = 0; c < 3; ++c) own.data[i * 4 + c] = layer.data[i * stride + c];
      own.data[i * 4 + 3] = layer.data[i * stride + pyramid.feature_dim];
    }
    if (!filled.empty()) {
      const Image up = resize_bilinear(filled, layer.width, layer.height);
      for (std::size_t i = 0; i < own.pixel_count(); ++i)
        if (own.data[i * 4 + 3] == 0.0f)
          for (int c = 0; c < 4; ++c) own.data[i * 4 + c] = up.data[i * 4 + c];
    }
    filled = std::move(own);
  }

  Image out(crop_rgb.width, crop_rgb.height, 3);
  for (std::size_t i = 0; i < out.pixel_count(); ++i) {
    const float a = std::clamp(filled.data[i * 4 + 3], 0.0f, 1.0f);
    for (int c = 0; c < 3; ++c) {
      const float feat = a > 0.0f ? filled.data[i * 4 + c] / filled.data[i * 4 + 3] : 0.0f;
      out.data[i * 3 + c] = std::lerp(crop_rgb.data[i * 3 + c], feat, a);
    }
  }
  return out;
}

} // namespace fvs
