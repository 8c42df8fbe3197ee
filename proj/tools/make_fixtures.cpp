// Regenerates fixtures/: reference face, a posed input with landmarks and
// mask, aligned style faces, a small untrained model and a 64×64 toy corpus.
#include <cstdio>
#include <random>

#include "faceswap/error.hpp"
#include "faceswap/geometry.hpp"
#include "faceswap/synthetic.hpp"
#include "faceswap/transformnet.hpp"

namespace fs = std::filesystem;
using namespace faceswap;

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: %s FIXTURE_DIR\n", argv[0]);
    return 1;
  }
  const fs::path dir = argv[1];
  fs::create_directories(dir);
  std::mt19937_64 rng(20170411);

  // Reference: mean landmarks of a jittered aligned corpus.
  constexpr int R = 128;
  std::array<Point2, kNumLandmarks> mean{};
  constexpr int kSamples = 64;
  for (int s = 0; s < kSamples; ++s) {
    const LandmarkSet l = synth::random_aligned_landmarks(R, rng);
    for (int i = 0; i < kNumLandmarks; ++i) {
      mean[i].x += l[i].x / kSamples;
      mean[i].y += l[i].y / kSamples;
    }
  }
  save_reference({LandmarkSet(mean), R}, dir / "reference_face.json");

  // Posed input, 200 rows × 160 columns, with a camera-like blur so the
  // image carries no detail finer than the aligned sampling grid.
  const synth::Appearance subject = synth::random_appearance(rng);
  const synth::Face input = synth::render_posed_face(200, 160, R, 1.05, 0.08, {82.0, 104.0},
                                                     {0.02, 0.01, 0.005}, subject);
  save_image(gaussian_blur(input.image, 2.0), dir / "input.png");
  save_landmarks(input.landmarks, dir / "input_landmarks.json");
  save_mask(input.mask, dir / "input_mask.png");

  // Target identity for the baseline.
  const synth::Appearance target = synth::random_appearance(rng);
  std::vector<synth::Face> styles;
  for (int i = 0; i < 6; ++i)
    styles.push_back(synth::render_face(R, R, synth::random_aligned_landmarks(R, rng), target));
  synth::write_face_dir(styles, dir / "styles");

  TransformNet::build(R, NetworkSpec::compact(), 7).save(dir / "model_128");

  const synth::ToyCorpus toy = synth::make_toy_corpus(64, 8, 4, 64);
  synth::write_face_dir(toy.content, dir / "toy" / "content");
  synth::write_face_dir(toy.styles, dir / "toy" / "styles");
  std::printf("fixtures written to %s\n", dir.c_str());
  return 0;
}
