#include <cmath>
#include <fstream>
#include <numeric>

#include "doctest.h"
#include "faceswap/error.hpp"
#include "faceswap/image.hpp"
#include "faceswap/oracles.hpp"
#include "support.hpp"

using namespace faceswap;
using namespace testing;

TEST_SUITE("imagecore") {
  TEST_CASE("black PNG loads as zeros") {
    TempDir dir("black");
    save_image(Image(4, 4, 0.0), dir / "black.png");
    const Image img = load_image(dir / "black.png");
    CHECK(img.height() == 4);
    CHECK(img.width() == 4);
    for (double v : img.tensor().values()) CHECK(v == 0.0);
  }

  TEST_CASE("8-bit 255 maps to exactly 1") {
    TempDir dir("white");
    save_image(Image(3, 5, 1.0), dir / "white.png");
    const Image back = load_image(dir / "white.png");
    for (double v : back.tensor().values()) CHECK(v == 1.0);
  }

  TEST_CASE("save/load round trip stays within one quantization step") {
    Rng rng(11);
    TempDir dir("roundtrip");
    const Image img = random_image(rng, 17, 23);
    save_image(img, dir / "r.png");
    const Image back = load_image(dir / "r.png");
    REQUIRE(back.tensor().same_shape(img.tensor()));
    CHECK(max_abs_diff(back.tensor(), img.tensor()) <= 1.0 / 255.0);
  }

  TEST_CASE("missing or non-PNG files are rejected") {
    TempDir dir("bad");
    CHECK_THROWS_AS(load_image(dir / "missing.png"), ValidationError);
    {
      std::ofstream(dir / "text.png") << "not an image";
    }
    CHECK_THROWS_AS(load_image(dir / "text.png"), ValidationError);
  }

  TEST_CASE("mask round trip") {
    TempDir dir("mask");
    Mask m(6, 7);
    m.at(2, 3) = 1;
    m.at(4, 1) = 1;
    save_mask(m, dir / "m.png");
    const Mask back = load_mask(dir / "m.png");
    CHECK(back.count() == 2);
    CHECK(back.inside(2, 3));
    CHECK(back.inside(4, 1));
    CHECK_FALSE(back.touches_border());
  }

  TEST_CASE("luminance of white and red") {
    Image white(5, 5, 1.0);
    const LuminanceImage lw = to_luminance(white);
    for (double v : lw.tensor().values()) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
    Image red(4, 4, 0.0);
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) red.at(0, y, x) = 1.0;
    const LuminanceImage lr = to_luminance(red);
    for (double v : lr.tensor().values()) CHECK(v == doctest::Approx(0.299).epsilon(1e-12));
  }

  TEST_CASE("luminance matches the per-pixel oracle") {
    Rng rng(12);
    const Image img = random_image(rng, 9, 13);
    CHECK(max_abs_diff(to_luminance(img).tensor(), oracle::luminance(img.tensor())) <= 1e-12);
  }

  TEST_CASE("luminance is linear") {
    Rng rng(13);
    const Image a = random_image(rng, 8, 8), b = random_image(rng, 8, 8);
    for (double t : {0.0, 0.25, 0.7, 1.0}) {
      Tensor mix = a.tensor();
      for (std::size_t i = 0; i < mix.size(); ++i) mix.values()[i] = t * a.tensor().values()[i] + (1 - t) * b.tensor().values()[i];
      const Tensor lm = to_luminance(Image(mix)).tensor();
      const Tensor la = to_luminance(a).tensor(), lb = to_luminance(b).tensor();
      for (std::size_t i = 0; i < lm.size(); ++i)
        CHECK(lm.values()[i] == doctest::Approx(t * la.values()[i] + (1 - t) * lb.values()[i]).epsilon(1e-12));
    }
  }

  TEST_CASE("luminance backward is the adjoint of the forward map") {
    Rng rng(14);
    const Image x = random_image(rng, 6, 5);
    const Tensor g = random_tensor(rng, 1, 6, 5, -1, 1);
    const Tensor back = luminance_backward(g);
    const Tensor lx = to_luminance(x).tensor();
    const double lhs = std::inner_product(lx.values().begin(), lx.values().end(), g.values().begin(), 0.0);
    const double rhs =
        std::inner_product(x.tensor().values().begin(), x.tensor().values().end(), back.values().begin(), 0.0);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }

  TEST_CASE("downsample of a constant keeps the constant") {
    const Image img(16, 8, 0.37);
    const Image d = downsample(img, 4);
    CHECK(d.height() == 4);
    CHECK(d.width() == 2);
    for (double v : d.tensor().values()) CHECK(v == doctest::Approx(0.37).epsilon(1e-15));
  }

  TEST_CASE("downsample averages each block") {
    Tensor t(1, 2, 2);
    t(0, 0, 0) = 0;
    t(0, 0, 1) = 0;
    t(0, 1, 0) = 1;
    t(0, 1, 1) = 1;
    CHECK(downsample(t, 2)(0, 0, 0) == 0.5);
  }

  TEST_CASE("factor 4 equals two factor-2 poolings and keeps the mean") {
    Rng rng(15);
    const Image img = random_image(rng, 32, 16);
    const Image once = downsample(img, 4);
    const Image twice = downsample(downsample(img, 2), 2);
    CHECK(max_abs_diff(once.tensor(), twice.tensor()) <= 1e-15);
    auto mean = [](const Tensor& t) { return std::accumulate(t.values().begin(), t.values().end(), 0.0) / t.size(); };
    CHECK(mean(once.tensor()) == doctest::Approx(mean(img.tensor())).epsilon(1e-12));
  }

  TEST_CASE("downsample rejects bad factors") {
    const Image img(12, 12);
    CHECK_THROWS_AS(downsample(img, 3), ValidationError);
    CHECK_THROWS_AS(downsample(img, 8), ValidationError);
  }

  TEST_CASE("horizontal flip is an involution") {
    Rng rng(16);
    const Image img = random_image(rng, 5, 7);
    const Image f = flip_horizontal(img);
    CHECK(f.at(1, 2, 0) == img.at(1, 2, 6));
    CHECK(flip_horizontal(f).tensor().values() == img.tensor().values());
  }

  TEST_CASE("gaussian blur keeps constants and range") {
    Rng rng(17);
    const Image c(10, 12, 0.6);
    CHECK(max_abs_diff(gaussian_blur(c, 1.3).tensor(), c.tensor()) <= 1e-12);
    const Image b = gaussian_blur(random_image(rng, 20, 20), 2.0);
    CHECK(b.in_unit_range());
    CHECK_THROWS_AS(gaussian_blur(c, 0.0), ValidationError);
  }

  TEST_CASE("clamp_unit reports the largest displacement") {
    Image img(2, 2, 0.5);
    img.at(0, 0, 0) = 1.25;
    img.at(2, 1, 1) = -0.1;
    CHECK(img.clamp_unit() == doctest::Approx(0.25));
    CHECK(img.in_unit_range());
  }
}
