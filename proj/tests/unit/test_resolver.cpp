// Copyright Contributors to the fvsplat project
// SPDX-License-Identifier: Apache-2.0
#include "fvs/error.hpp"
#include "fvs/resolver/resolver.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace fvs;
using namespace fvs::testing;

namespace {

Image random_image(Rng& rng, int w, int h, int c, double lo = 0.0, double hi = 1.0) {
  Image img(w, h, c);
  for (float& v : img.data) v = static_cast<float>(rng.uniform(lo, hi));
  return img;
}

FramePyramid random_pyramid(Rng& rng, int crop, int dim, int levels) {
  FramePyramid p = FramePyramid::zeros(crop, dim, levels);
  for (Image& layer : p.layers) layer = random_image(rng, layer.width, layer.height, layer.channels);
  return p;
}

// Scalar reference decoder on interleaved images, double accumulation.
double ref_sample(const Image& img, double sx, double sy, int c) {
  auto tap = [](double s, int n, int& i0, int& i1) {
    s = std::max(0.0, s);
    i0 = std::min(static_cast<int>(std::floor(s)), n - 1);
    i1 = std::min(i0 + 1, n - 1);
    return s - i0;
  };
  int x0, x1, y0, y1;
  const double tx = tap(sx, img.width, x0, x1);
  const double ty = tap(sy, img.height, y0, y1);
  const double top = img.at(x0, y0, c) * (1 - tx) + img.at(x1, y0, c) * tx;
  const double bottom = img.at(x0, y1, c) * (1 - tx) + img.at(x1, y1, c) * tx;
  return top * (1 - ty) + bottom * ty;
}

Image ref_conv(const Image& in, const ConvLayer& layer, bool elu) {
  Image out(in.width, in.height, layer.out);
  const int r = layer.kernel / 2;
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x)
      for (int o = 0; o < layer.out; ++o) {
        double acc = layer.bias[o];
        for (int c = 0; c < layer.in; ++c)
          for (int ky = 0; ky < layer.kernel; ++ky)
            for (int kx = 0; kx < layer.kernel; ++kx) {
              const int xx = x + kx - r, yy = y + ky - r;
              if (xx < 0 || yy < 0 || xx >= in.width || yy >= in.height) continue;
              acc += static_cast<double>(layer.weight[((o * layer.in + c) * layer.kernel + ky) * layer.kernel + kx]) *
                     in.at(xx, yy, c);
            }
        out.at(x, y, o) = static_cast<float>(elu && acc <= 0 ? std::expm1(acc) : acc);
      }
  return out;
}

Image ref_resolve(const FramePyramid& p, const Image& crop, const ResolverWeights& w) {
  Image prev;
  for (int l = p.levels() - 1; l >= 0; --l) {
    const Image& layer = p.layers[l];
    const int extra = l == 0 ? 3 : 0;
    Image in(layer.width, layer.height, (prev.empty() ? 0 : prev.channels) + layer.channels + extra);
    for (int y = 0; y < layer.height; ++y)
      for (int x = 0; x < layer.width; ++x) {
        int k = 0;
        if (!prev.empty()) {
          const double sx = (x + 0.5) * prev.width / layer.width - 0.5;
          const double sy = (y + 0.5) * prev.height / layer.height - 0.5;
          for (int c = 0; c < prev.channels; ++c) in.at(x, y, k++) = static_cast<float>(ref_sample(prev, sx, sy, c));
        }
        for (int c = 0; c < layer.channels; ++c) in.at(x, y, k++) = layer.at(x, y, c);
        for (int c = 0; c < extra; ++c) in.at(x, y, k++) = crop.at(x, y, c);
      }
    prev = ref_conv(ref_conv(in, w.convs[l][0], true), w.convs[l][1], true);
  }
  return ref_conv(prev, w.project, false);
}

double max_abs_diff(const Image& a, const Image& b) {
  REQUIRE(a.same_shape(b));
  double m = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a.data[i]) - b.data[i]));
  return m;
}

Image window(const Image& img, int x0, int y0, int side) { return img.crop(x0, y0, side, side); }

} // namespace

TEST_CASE("standard architecture halves the level-0 filters") {
  const ResolverArch a = ResolverArch::standard();
  CHECK(a.filters == std::vector<int>{8, 16, 32, 32});
  CHECK(a.input_channels(0) == 16 + 5 + 3);
  CHECK(a.input_channels(3) == 5);
  CHECK_NOTHROW(a.validate());

  const ResolverArch wide = ResolverArch::standard(4, true);
  CHECK(wide.filters[0] == 16);
  CHECK_NOTHROW(wide.validate());

  ResolverArch bad = a;
  bad.filters[0] = 16;
  CHECK_THROWS_AS(bad.validate(), ShapeError);
  bad = a;
  bad.kernel = 2;
  CHECK_THROWS_AS(bad.validate(), ShapeError);
}

TEST_CASE("weights file round trip is bitwise") {
  TempDir dir("resolver");
  for (bool wide : {false, true}) {
    const ResolverWeights w = random_weights(ResolverArch::standard(4, wide), 77);
    write_weights(dir / "w.bin", w);
    const ResolverWeights back = load_weights(dir / "w.bin");
    CHECK(back == w);
    CHECK(back.arch.full_width_level0 == wide);
  }
  write_weights(dir / "id.bin", identity_weights());
  CHECK(load_weights(dir / "id.bin").arch.filters[0] == 8);
}

TEST_CASE("damaged weights files are rejected") {
  TempDir dir("resolver_bad");
  write_weights(dir / "w.bin", random_weights(ResolverArch::standard(), 1));
  const auto size = std::filesystem::file_size(dir / "w.bin");

  std::filesystem::copy_file(dir / "w.bin", dir / "trunc.bin");
  std::filesystem::resize_file(dir / "trunc.bin", size - 100);
  CHECK_THROWS_AS(load_weights(dir / "trunc.bin"), ChecksumError);

  std::filesystem::copy_file(dir / "w.bin", dir / "flip.bin");
  {
    std::fstream f(dir / "flip.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(200);
    f.put('\x7f');
  }
  CHECK_THROWS_AS(load_weights(dir / "flip.bin"), ChecksumError);

  {
    std::ofstream f(dir / "magic.bin", std::ios::binary);
    f << "NOTAWEIGHTSFILE";
  }
  CHECK_THROWS_AS(load_weights(dir / "magic.bin"), ParseError);
}

TEST_CASE("identity weights pass the crop through a zero pyramid") {
  Rng rng(3);
  const FramePyramid zero = FramePyramid::zeros(32, 4);
  const Image crop = random_image(rng, 32, 32, 3);
  CHECK(resolve(zero, crop, identity_weights()) == crop);

  // The skip path ignores pyramid content entirely.
  const FramePyramid busy = random_pyramid(rng, 32, 4, 4);
  CHECK(resolve(busy, crop, identity_weights()) == crop);
}

TEST_CASE("decoder matches a scalar reference") {
  Rng rng(11);
  for (bool wide : {false, true}) {
    const ResolverWeights w = random_weights(ResolverArch::standard(4, wide), 5);
    const FramePyramid p = random_pyramid(rng, 24, 4, 4);
    const Image crop = random_image(rng, 24, 24, 3);
    const Image got = resolve(p, crop, w);
    CHECK(got.width == 24);
    CHECK(got.channels == 3);
    CHECK(max_abs_diff(got, ref_resolve(p, crop, w)) < 1e-4);
  }
}

TEST_CASE("resolve is deterministic") {
  Rng rng(12);
  const ResolverWeights w = random_weights(ResolverArch::standard(), 9);
  const FramePyramid p = random_pyramid(rng, 40, 4, 4);
  const Image crop = random_image(rng, 40, 40, 3);
  const Image a = resolve(p, crop, w);
  CHECK(image_hash(a) == image_hash(resolve(p, crop, w)));
  CHECK(image_hash(a) == image_hash(resolve(p, crop, w)));
}

TEST_CASE("translation equivariance away from borders") {
  Rng rng(21);

  SUBCASE("2 px shift with a silent coarse path") {
    ResolverWeights w = random_weights(ResolverArch::standard(), 31);
    for (int l = 1; l < w.arch.levels(); ++l)
      for (ConvLayer& c : w.convs[l]) std::fill(c.bias.begin(), c.bias.end(), 0.0f);
    const int side = 48, shift = 2;
    const Image big_feat = random_image(rng, side + shift, side + shift, 5);
    const Image big_crop = random_image(rng, side + shift, side + shift, 3);
    auto run = [&](int off) {
      FramePyramid p = FramePyramid::zeros(side, 4);
      p.layers[0] = window(big_feat, off, off, side);
      return resolve(p, window(big_crop, off, off, side), w);
    };
    const Image a = run(0), b = run(shift);
    const int margin = 4;
    const int inner = side - 2 * margin - shift;
    CHECK(max_abs_diff(window(a, margin + shift, margin + shift, inner), window(b, margin, margin, inner)) < 1e-5);
  }

  SUBCASE("8 px shift through every level") {
    const ResolverWeights w = random_weights(ResolverArch::standard(), 32);
    const int side = 128, shift = 8;
    std::vector<Image> big;
    for (int l = 0; l < 4; ++l) big.push_back(random_image(rng, (side + shift) >> l, (side + shift) >> l, 5));
    const Image big_crop = random_image(rng, side + shift, side + shift, 3);
    auto run = [&](int off) {
      FramePyramid p = FramePyramid::zeros(side, 4);
      for (int l = 0; l < 4; ++l) p.layers[l] = window(big[l], off >> l, off >> l, side >> l);
      return resolve(p, window(big_crop, off, off, side), w);
    };
    const Image a = run(0), b = run(shift);
    const int margin = 52;
    const int inner = side - 2 * margin - shift;
    REQUIRE(inner > 0);
    CHECK(max_abs_diff(window(a, margin + shift, margin + shift, inner), window(b, margin, margin, inner)) < 1e-5);
  }
}

TEST_CASE("shape and feature mismatches throw") {
  Rng rng(4);
  const ResolverWeights w = identity_weights();
  CHECK_THROWS_AS(resolve(FramePyramid::zeros(32, 6), Image(32, 32, 3), w), ShapeError);
  CHECK_THROWS_AS(resolve(FramePyramid::zeros(32, 4, 3), Image(32, 32, 3), w), ShapeError);
  CHECK_THROWS_AS(resolve(FramePyramid::zeros(32, 4), Image(30, 32, 3), w), ShapeError);
  CHECK_THROWS_AS(resolve(FramePyramid::zeros(32, 4), Image(32, 32, 4), w), ShapeError);

  ResolverWeights broken = w;
  broken.convs[1][0].weight.pop_back();
  CHECK_THROWS_AS(broken.validate(), ShapeError);
}

TEST_CASE("outputs stay finite and bounded") {
  Rng rng(8);
  for (int trial = 0; trial < 5; ++trial) {
    const FramePyramid p = random_pyramid(rng, 32, 4, 4);
    const Image crop = random_image(rng, 32, 32, 3);
    for (float v : resolve(p, crop, identity_weights()).data) {
      CHECK(std::isfinite(v));
      CHECK(std::abs(v) <= 10.0f);
    }
    for (float v : resolve(p, crop, random_weights(ResolverArch::standard(), trial)).data) CHECK(std::isfinite(v));
  }
}

TEST_CASE("bypass examples") {
  Rng rng(2);
  const Image crop = random_image(rng, 16, 16, 3);

  FramePyramid red = FramePyramid::zeros(16, 4);
  for (std::size_t i = 0; i < red.layers[0].pixel_count(); ++i) {
    red.layers[0].data[i * 5 + 0] = 1.0f;
    red.layers[0].data[i * 5 + 4] = 1.0f;
  }
  const Image out = bypass_resolve(red, crop);
  for (std::size_t i = 0; i < out.pixel_count(); ++i) {
    CHECK(out.data[i * 3 + 0] == 1.0f);
    CHECK(out.data[i * 3 + 1] == 0.0f);
    CHECK(out.data[i * 3 + 2] == 0.0f);
  }

  CHECK(bypass_resolve(FramePyramid::zeros(16, 4), crop) == crop);

  // Holes at layer 0 inherit a uniform coarse layer.
  FramePyramid coarse = FramePyramid::zeros(16, 4);
  for (std::size_t i = 0; i < coarse.layers[2].pixel_count(); ++i) {
    coarse.layers[2].data[i * 5 + 2] = 1.0f;
    coarse.layers[2].data[i * 5 + 4] = 1.0f;
  }
  const Image blue = bypass_resolve(coarse, crop);
  for (std::size_t i = 0; i < blue.pixel_count(); ++i) CHECK(blue.data[i * 3 + 2] == doctest::Approx(1.0));

  CHECK_THROWS_AS(bypass_resolve(FramePyramid::zeros(16, 2), Image(16, 16, 3)), ContractViolation);
}

TEST_CASE("bypass on a half-covered image matches a per-pixel mix") {
  Rng rng(6);
  const int side = 20;
  const Image crop = random_image(rng, side, side, 3);
  FramePyramid p = FramePyramid::zeros(side, 4);
  Image& l0 = p.layers[0];
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      const float a = x < side / 2 ? 0.0f : static_cast<float>(rng.uniform(0.05, 1.0));
      for (int c = 0; c < 4; ++c) l0.at(x, y, c) = a * static_cast<float>(rng.uniform());
      l0.at(x, y, 4) = a;
    }
  // Coarser layers fully covered with a constant colour so the fill is exact.
  for (int l = 1; l < 4; ++l)
    for (std::size_t i = 0; i < p.layers[l].pixel_count(); ++i) {
      p.layers[l].data[i * 5 + 0] = 0.25f;
      p.layers[l].data[i * 5 + 1] = 0.5f;
      p.layers[l].data[i * 5 + 2] = 0.75f;
      p.layers[l].data[i * 5 + 4] = 1.0f;
    }
  const Image out = bypass_resolve(p, crop);
  const double fill[3] = {0.25, 0.5, 0.75};
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      const double a = l0.at(x, y, 4);
      for (int c = 0; c < 3; ++c) {
        const double expect = a == 0.0 ? fill[c] : a * (l0.at(x, y, c) / a) + (1 - a) * crop.at(x, y, c);
        CHECK(out.at(x, y, c) == doctest::Approx(expect).epsilon(1e-6));
      }
    }
}

TEST_CASE("resize_bilinear keeps constants and maps half-pixel centres") {
  Image src(4, 4, 1);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) src.at(x, y) = static_cast<float>(x);
  const Image up = resize_bilinear(src, 8, 8);
  CHECK(up.at(0, 0) == 0.0f);
  CHECK(up.at(1, 0) == doctest::Approx(0.25));
  CHECK(up.at(2, 0) == doctest::Approx(0.75));
  CHECK(up.at(7, 5) == 3.0f);
  const Image flat = resize_bilinear(Image(3, 5, 2, 0.4f), 7, 2);
  for (float v : flat.data) CHECK(v == doctest::Approx(0.4));
}
