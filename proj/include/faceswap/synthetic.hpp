#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "faceswap/geometry.hpp"
#include "faceswap/image.hpp"

// Procedural faces with known landmarks and masks. They stand in for photo
// corpora in tests, toy training runs and CLI fixtures.
namespace faceswap::synth {

struct Expression {
  double mouth_open = 0.0;  // inner-lip gap, fraction of the face size
  double smile = 0.0;       // mouth-corner lift
  double brow_raise = 0.0;
};

/// Landmarks of the neutral template face in a resolution×resolution frame.
LandmarkSet template_landmarks(int resolution, const Expression& expr = {});

/// Template face at 128×128 (or another resolution) used as alignment target.
ReferenceFace default_reference(int resolution = 128);

struct Appearance {
  std::array<double, 3> skin{0.85, 0.68, 0.56};
  std::array<double, 3> lips{0.70, 0.35, 0.35};
  std::array<double, 3> eyes{0.20, 0.15, 0.12};
  std::array<double, 3> brows{0.30, 0.22, 0.15};
  std::array<double, 3> background_top{0.35, 0.45, 0.60};
  std::array<double, 3> background_bottom{0.55, 0.60, 0.65};
  /// Half-width of the feature edge ramps, in output pixels.
  double edge_px = 1.5;
};

Appearance random_appearance(std::mt19937_64& rng);

struct Face {
  Image image;
  LandmarkSet landmarks;
  Mask mask;  // skin region, kept away from the border
};

/// Renders a smooth face whose features sit on `landmarks`.
Face render_face(int height, int width, const LandmarkSet& landmarks, const Appearance& look);

/// Random expression plus a mild similarity jitter of the template, in the
/// resolution×resolution frame.
LandmarkSet random_aligned_landmarks(int resolution, std::mt19937_64& rng, double jitter = 1.0);

/// Face placed in an unaligned frame by a similarity transform (scale,
/// rotation in radians, translation of the template centre).
Face render_posed_face(int height, int width, int template_resolution, double scale, double angle,
                       Point2 centre, const Expression& expr, const Appearance& look);

struct ToyCorpus {
  std::vector<Face> content;  // varied identities
  std::vector<Face> styles;   // one target identity, varied expressions
};

/// Faces aligned to the template at `resolution`.
ToyCorpus make_toy_corpus(int resolution, int n_content, int n_styles, std::uint64_t seed);

/// Writes face_XXX.png + face_XXX.json (landmarks) for each face.
void write_face_dir(const std::vector<Face>& faces, const std::filesystem::path& dir);

}  // namespace faceswap::synth
