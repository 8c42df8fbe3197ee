#include "doctest.h"
#include "faceswap/compositing.hpp"
#include "faceswap/pipeline.hpp"
#include "faceswap/synthetic.hpp"
#include "support.hpp"

using namespace faceswap;
using namespace testing;

namespace {

constexpr int R = 32;

synth::Face posed_input(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const synth::Appearance look = synth::random_appearance(rng);
  return synth::render_posed_face(44, 52, R, 1.2, -0.15, {26.0, 22.0}, {}, look);
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("aligned landmarks land near the reference") {
    const synth::Face in = posed_input(1);
    const ReferenceFace ref = synth::default_reference(R);
    const AlignedFace a = align_face(in.image, in.landmarks, ref);
    CHECK(a.image.height() == R);
    CHECK(a.image.width() == R);
    const LandmarkSet mapped = a.to_reference.apply(in.landmarks);
    CHECK(landmark_distance(mapped, ref.landmarks) < landmark_distance(in.landmarks, ref.landmarks));
    for (int i = 0; i < kNumLandmarks; ++i) {
      CHECK(std::abs(mapped[i].x - ref.landmarks[i].x) < 3.0);
      CHECK(std::abs(mapped[i].y - ref.landmarks[i].y) < 3.0);
    }
  }

  TEST_CASE("swap is alignment, transform, then compositing") {
    const synth::Face in = posed_input(2);
    const ReferenceFace ref = synth::default_reference(R);
    auto transform = [](const Image& img) {
      Image out = img;
      for (double& v : out.tensor().values()) v = 1.0 - v;
      return out;
    };
    SwapDiagnostics diag;
    const Image out = swap(in.image, in.landmarks, in.mask, transform, ref, &diag);
    const AlignedFace a = align_face(in.image, in.landmarks, ref);
    const Image expected = composite_swap(in.image, transform(a.image), invert_affine(a.to_reference), in.mask);
    CHECK(out.tensor().values() == expected.tensor().values());
    CHECK(diag.aligned.image.tensor().values() == a.image.tensor().values());
    CHECK(diag.generated.tensor().values() == transform(a.image).tensor().values());
  }

  TEST_CASE("network swap is deterministic and preserves shape") {
    const synth::Face in = posed_input(3);
    const ReferenceFace ref = synth::default_reference(R);
    const TransformNet net = TransformNet::build(R, NetworkSpec::compact(3, 4, 6), 4);
    const Image a = swap(in.image, in.landmarks, in.mask, net, ref);
    const Image b = swap(in.image, in.landmarks, in.mask, net, ref);
    CHECK(a.height() == in.image.height());
    CHECK(a.width() == in.image.width());
    CHECK(a.tensor().values() == b.tensor().values());
    for (double v : a.tensor().values()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }

  TEST_CASE("detector overload matches explicit landmarks") {
    const synth::Face in = posed_input(5);
    const ReferenceFace ref = synth::default_reference(R);
    const TransformNet net = TransformNet::build(R, NetworkSpec::compact(3, 4, 6), 6);
    const Image a = swap(in.image, in.landmarks, in.mask, net, ref);
    const Image b = swap(in.image, FixedLandmarks(in.landmarks), in.mask, net, ref);
    CHECK(a.tensor().values() == b.tensor().values());
  }

  TEST_CASE("pass-through transform approximately reproduces a smooth input") {
    const synth::Face in = posed_input(7);
    const Image smooth = gaussian_blur(in.image, 2.0);
    const ReferenceFace ref = synth::default_reference(R);
    const Image out = swap(smooth, in.landmarks, in.mask, [](const Image& img) { return img; }, ref);
    double worst = 0.0;
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < smooth.height(); ++y)
        for (int x = 0; x < smooth.width(); ++x)
          if (in.mask.inside(y, x))
            worst = std::max(worst, std::abs(out.tensor()(c, y, x) - smooth.tensor()(c, y, x)));
    CHECK(worst < 0.05);
  }
}
