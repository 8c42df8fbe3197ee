#include <cmath>
#include <fstream>

#include "doctest.h"
#include "faceswap/error.hpp"
#include "faceswap/geometry.hpp"
#include "faceswap/oracles.hpp"
#include "support.hpp"

using namespace faceswap;
using namespace testing;

namespace {

AffineTransform random_affine(Rng& rng) {
  AffineTransform T;
  const double angle = uniform(rng, -0.6, 0.6);
  const double sx = uniform(rng, 0.6, 1.6), sy = uniform(rng, 0.6, 1.6), shear = uniform(rng, -0.3, 0.3);
  Eigen::Matrix2d R;
  R << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
  Eigen::Matrix2d S;
  S << sx, shear, 0, sy;
  T.A = R * S;
  T.t = {uniform(rng, -20, 20), uniform(rng, -20, 20)};
  return T;
}

LandmarkSet shifted(const LandmarkSet& l, double dx, double dy) {
  std::array<Point2, kNumLandmarks> p = l.points();
  for (auto& q : p) q = {q.x + dx, q.y + dy};
  return LandmarkSet(p);
}

double residual(const AffineTransform& T, const LandmarkSet& src, const LandmarkSet& dst) {
  double s = 0.0;
  for (int i = 0; i < kNumLandmarks; ++i) {
    const Point2 p = T.apply(src[i]);
    s += (p.x - dst[i].x) * (p.x - dst[i].x) + (p.y - dst[i].y) * (p.y - dst[i].y);
  }
  return s;
}

}  // namespace

TEST_SUITE("geometry") {
  TEST_CASE("self-alignment gives the identity") {
    Rng rng(21);
    const LandmarkSet l = random_landmarks(rng, 0, 128);
    const AffineTransform T = estimate_affine(l, l);
    CHECK((T.A - Eigen::Matrix2d::Identity()).norm() < 1e-10);
    CHECK(T.t.norm() < 1e-8);
  }

  TEST_CASE("pure translation is recovered") {
    Rng rng(22);
    const LandmarkSet l = random_landmarks(rng, 0, 128);
    const AffineTransform T = estimate_affine(l, shifted(l, 5, 0));
    CHECK((T.A - Eigen::Matrix2d::Identity()).norm() < 1e-10);
    CHECK(T.t.x() == doctest::Approx(5.0).epsilon(1e-10));
    CHECK(std::abs(T.t.y()) < 1e-9);
  }

  TEST_CASE("random affine maps are recovered from 68 points") {
    Rng rng(23);
    for (int trial = 0; trial < 20; ++trial) {
      const LandmarkSet src = random_landmarks(rng, 0, 200);
      const AffineTransform truth = random_affine(rng);
      const AffineTransform T = estimate_affine(src, truth.apply(src));
      CHECK((T.A - truth.A).cwiseAbs().maxCoeff() < 1e-8);
      CHECK((T.t - truth.t).cwiseAbs().maxCoeff() < 1e-8);
    }
  }

  TEST_CASE("least-squares fit beats perturbed transforms") {
    Rng rng(24);
    const LandmarkSet src = random_landmarks(rng, 0, 128);
    std::array<Point2, kNumLandmarks> noisy = random_affine(rng).apply(src).points();
    for (auto& p : noisy) p = {p.x + uniform(rng, -2, 2), p.y + uniform(rng, -2, 2)};
    const LandmarkSet dst(noisy);
    const AffineTransform T = estimate_affine(src, dst);
    const double best = residual(T, src, dst);
    for (int i = 0; i < 1000; ++i) {
      AffineTransform P = T;
      for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) P.A(r, c) += uniform(rng, -1e-3, 1e-3);
      P.t += Eigen::Vector2d(uniform(rng, -0.1, 0.1), uniform(rng, -0.1, 0.1));
      CHECK(best <= residual(P, src, dst) + 1e-9);
    }
  }

  TEST_CASE("collinear landmarks are rejected") {
    std::array<Point2, kNumLandmarks> line;
    for (int i = 0; i < kNumLandmarks; ++i) line[i] = {1.0 * i, 2.0 * i + 1};
    CHECK_THROWS_AS(LandmarkSet{line}, ValidationError);
  }

  TEST_CASE("inverse of identity and translation") {
    const AffineTransform I = invert_affine(AffineTransform::identity());
    CHECK((I.A - Eigen::Matrix2d::Identity()).norm() == 0.0);
    CHECK(I.t.norm() == 0.0);
    const AffineTransform T = invert_affine(AffineTransform::translation(3, -7));
    CHECK(T.t.x() == -3.0);
    CHECK(T.t.y() == 7.0);
  }

  TEST_CASE("T composed with its inverse fixes points") {
    Rng rng(25);
    const AffineTransform T = random_affine(rng);
    const AffineTransform round = T.compose(invert_affine(T));
    for (int i = 0; i < 100; ++i) {
      const Point2 p{uniform(rng, -100, 300), uniform(rng, -100, 300)};
      const Point2 q = round.apply(p);
      CHECK(std::hypot(q.x - p.x, q.y - p.y) < 1e-8);
    }
  }

  TEST_CASE("singular transforms cannot be inverted") {
    AffineTransform T;
    T.A << 1, 2, 2, 4;
    CHECK_THROWS(invert_affine(T));
  }

  TEST_CASE("identity warp copies the image") {
    Rng rng(26);
    const Image img = random_image(rng, 9, 11);
    CHECK(warp_image(img, AffineTransform::identity(), 9, 11).tensor().values() == img.tensor().values());
  }

  TEST_CASE("integer translation is an index shift with zero fill") {
    Rng rng(27);
    const Image img = random_image(rng, 10, 12);
    const Image out = warp_image(img, AffineTransform::translation(3, -2), 10, 12);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 12; ++x) {
          const int sx = x - 3, sy = y + 2;
          const double want = (sx >= 0 && sx < 12 && sy >= 0 && sy < 10) ? img.at(c, sy, sx) : 0.0;
          CHECK(out.at(c, y, x) == want);
        }
  }

  TEST_CASE("warp matches the bilinear oracle") {
    Rng rng(28);
    const Image img = random_image(rng, 20, 16);
    AffineTransform T = random_affine(rng);
    T.t = {2, 3};
    const Image out = warp_image(img, T, 18, 18);
    const AffineTransform inv = invert_affine(T);
    for (int y = 0; y < 18; ++y)
      for (int x = 0; x < 18; ++x) {
        const Point2 s = inv.apply(Point2{double(x), double(y)});
        for (int c = 0; c < 3; ++c) CHECK(out.at(c, y, x) == doctest::Approx(oracle::bilinear(img.tensor(), c, s.y, s.x)).epsilon(1e-12));
      }
  }

  TEST_CASE("warp there and back preserves a linear gradient") {
    Image img(64, 64);
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x)
        for (int c = 0; c < 3; ++c) img.at(c, y, x) = (x + 2.0 * y + 10.0 * c) / 250.0;
    AffineTransform T;
    T.A << std::cos(0.1) * 0.95, -std::sin(0.1) * 0.95, std::sin(0.1) * 0.95, std::cos(0.1) * 0.95;
    T.t = {4.5, -2.25};
    const Image there = warp_image(img, T, 64, 64);
    const Image back = warp_image(there, invert_affine(T), 64, 64);
    double worst = 0.0;
    for (int y = 2; y < 62; ++y)
      for (int x = 2; x < 62; ++x) {
        const Point2 p = T.apply(Point2{double(x), double(y)});
        if (p.x < 1 || p.y < 1 || p.x > 62 || p.y > 62) continue;  // sampled from the zero fill
        for (int c = 0; c < 3; ++c) worst = std::max(worst, std::abs(back.at(c, y, x) - img.at(c, y, x)));
      }
    CHECK(worst < 0.02);
  }

  TEST_CASE("warp keeps values in [0, 1]") {
    Rng rng(29);
    const Image out = warp_image(random_image(rng, 30, 30), random_affine(rng), 40, 40);
    CHECK(out.in_unit_range());
  }

  TEST_CASE("landmark distance examples") {
    Rng rng(30);
    const LandmarkSet a = random_landmarks(rng, 0, 100);
    CHECK(landmark_distance(a, a) == 0.0);
    std::array<Point2, kNumLandmarks> p = a.points();
    p[17] = {p[17].x + 3, p[17].y + 4};
    CHECK(landmark_distance(a, LandmarkSet(p)) == doctest::Approx(5.0).epsilon(1e-12));
    const LandmarkSet b = random_landmarks(rng, 0, 100);
    CHECK(landmark_distance(a, b) == doctest::Approx(oracle::landmark_distance(a, b)).epsilon(1e-12));
  }

  TEST_CASE("landmark distance is a metric") {
    Rng rng(31);
    for (int i = 0; i < 50; ++i) {
      const LandmarkSet a = random_landmarks(rng, 0, 50), b = random_landmarks(rng, 0, 50),
                        c = random_landmarks(rng, 0, 50);
      CHECK(landmark_distance(a, b) == landmark_distance(b, a));
      CHECK(landmark_distance(a, b) > 0.0);
      CHECK(landmark_distance(a, c) <= landmark_distance(a, b) + landmark_distance(b, c) + 1e-12);
    }
  }

  TEST_CASE("mirroring twice restores the landmarks") {
    Rng rng(32);
    const LandmarkSet a = random_landmarks(rng, 0, 64);
    CHECK(landmark_distance(mirror_landmarks(mirror_landmarks(a, 64), 64), a) < 1e-12);
    // Jaw endpoints swap sides.
    const LandmarkSet m = mirror_landmarks(a, 64);
    CHECK(m[0].x == doctest::Approx(63 - a[16].x));
  }

  TEST_CASE("landmark, reference and transform files round trip") {
    Rng rng(33);
    TempDir dir("geom");
    const LandmarkSet a = random_landmarks(rng, 0, 64);
    save_landmarks(a, dir / "l.json");
    CHECK(landmark_distance(load_landmarks(dir / "l.json"), a) < 1e-9);
    save_reference({a, 64}, dir / "r.json");
    const ReferenceFace r = load_reference(dir / "r.json");
    CHECK(r.resolution == 64);
    CHECK(landmark_distance(r.landmarks, a) < 1e-9);
    const AffineTransform T = random_affine(rng);
    save_transform(T, dir / "t.json");
    const AffineTransform U = load_transform(dir / "t.json");
    CHECK((U.A - T.A).norm() < 1e-12);
    CHECK((U.t - T.t).norm() < 1e-12);
  }

  TEST_CASE("malformed landmark files are rejected") {
    TempDir dir("badlm");
    {
      std::ofstream(dir / "short.json") << "[[1, 2], [3, 4]]";
      std::ofstream(dir / "broken.json") << "{ not json";
    }
    CHECK_THROWS_AS(load_landmarks(dir / "short.json"), ValidationError);
    CHECK_THROWS_AS(load_landmarks(dir / "broken.json"), ValidationError);
  }

  TEST_CASE("reference rescaling maps pixel centres linearly") {
    Rng rng(34);
    const ReferenceFace r{random_landmarks(rng, 0, 128), 128};
    const ReferenceFace big = r.rescaled(256);
    CHECK(big.resolution == 256);
    CHECK(big.landmarks[5].x == doctest::Approx((r.landmarks[5].x + 0.5) * 2 - 0.5));
    CHECK(landmark_distance(big.rescaled(128).landmarks, r.landmarks) < 1e-9);
  }
}
