#include <cmath>

#include "doctest.h"
#include "faceswap/compositing.hpp"
#include "faceswap/error.hpp"
#include "support.hpp"

using namespace faceswap;
using namespace testing;

namespace {

Mask disc(int h, int w, double cy, double cx, double r) {
  Mask m(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r) m.at(y, x) = 1;
  return m;
}

Image smooth(int h, int w, double phase) {
  Image img(h, w);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        img.at(c, y, x) = 0.5 + 0.3 * std::sin(0.15 * x + 0.1 * y + phase + c);
  return img;
}

}  // namespace

TEST_SUITE("compositing") {
  TEST_CASE("cloning an image into itself changes nothing") {
    Rng rng(91);
    const Image dst = random_image(rng, 24, 20);
    const Mask m = disc(24, 20, 12, 10, 7);
    const Image out = poisson_clone(dst, dst, m);
    CHECK(max_abs_diff(out.tensor(), dst.tensor()) <= 1e-6);
  }

  TEST_CASE("pixels outside the mask are copied exactly") {
    Rng rng(92);
    const Image src = random_image(rng, 24, 24), dst = random_image(rng, 24, 24);
    const Mask m = disc(24, 24, 11, 12, 8);
    const Image out = poisson_clone(src, dst, m);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 24; ++y)
        for (int x = 0; x < 24; ++x)
          if (!m.inside(y, x)) CHECK(out.at(c, y, x) == dst.at(c, y, x));
    CHECK(out.in_unit_range());
  }

  TEST_CASE("a constant offset in the source is absorbed by the boundary") {
    const Image dst = smooth(30, 30, 0.0);
    Image src = dst;
    for (double& v : src.tensor().values()) v += 0.1;
    const Image out = poisson_clone(src, dst, disc(30, 30, 15, 15, 10));
    CHECK(max_abs_diff(out.tensor(), dst.tensor()) <= 1e-6);
  }

  TEST_CASE("dense and iterative solvers agree on a 16x16 mask") {
    Rng rng(93);
    const Image src = random_image(rng, 20, 20), dst = random_image(rng, 20, 20);
    Mask m(20, 20);
    for (int y = 2; y < 18; ++y)
      for (int x = 2; x < 18; ++x) m.at(y, x) = 1;
    PoissonStats stats;
    const Tensor cg = solve_poisson(src, dst, m, {}, &stats);
    const Tensor dense = solve_poisson_dense(src, dst, m);
    CHECK(max_abs_diff(cg, dense) <= 1e-8);
    CHECK(poisson_residual(cg, src, m) <= 1e-8);
    CHECK(stats.residual <= 1e-8);
  }

  TEST_CASE("solver is deterministic") {
    Rng rng(94);
    const Image src = random_image(rng, 26, 22), dst = random_image(rng, 26, 22);
    const Mask m = disc(26, 22, 13, 11, 9);
    CHECK(poisson_clone(src, dst, m).tensor().values() == poisson_clone(src, dst, m).tensor().values());
  }

  TEST_CASE("invalid masks are rejected") {
    const Image a(10, 10, 0.5);
    CHECK_THROWS_AS(poisson_clone(a, a, Mask(10, 10)), ValidationError);
    Mask border(10, 10);
    border.at(0, 4) = 1;
    CHECK_THROWS_AS(poisson_clone(a, a, border), ValidationError);
    CHECK_THROWS_AS(poisson_clone(a, Image(10, 12, 0.5), disc(10, 10, 5, 5, 2)), ValidationError);
  }

  TEST_CASE("compositing the aligned original back recovers the original") {
    const Image original = smooth(60, 50, 0.3);
    AffineTransform to_ref;
    to_ref.A << 0.9 * std::cos(0.05), -0.9 * std::sin(0.05), 0.9 * std::sin(0.05), 0.9 * std::cos(0.05);
    to_ref.t = {-3.0, -6.0};
    const Image aligned = warp_image(original, to_ref, 48, 48);
    const Mask m = disc(60, 50, 30, 25, 14);
    const Image out = composite_swap(original, aligned, invert_affine(to_ref), m);
    double inside = 0.0;
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 60; ++y)
        for (int x = 0; x < 50; ++x) {
          if (m.inside(y, x))
            inside = std::max(inside, std::abs(out.at(c, y, x) - original.at(c, y, x)));
          else
            CHECK(out.at(c, y, x) == original.at(c, y, x));
        }
    CHECK(inside < 0.02);
  }
}
