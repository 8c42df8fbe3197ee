#pragma once

#include <vector>

#include "faceswap/compositing.hpp"
#include "faceswap/geometry.hpp"
#include "faceswap/image.hpp"
#include "faceswap/trainer.hpp"

namespace faceswap {

/// Index of the style landmarks closest to `aligned` (lowest index on ties).
int nearest_style(const LandmarkSet& aligned, const std::vector<LandmarkSet>& style_landmarks);

struct BaselineResult {
  Image output;
  int selected = -1;
  PoissonStats poisson;
};

/// The swap pipeline with the network replaced by the landmark-nearest style
/// image. Styles are aligned to `ref`; distances are taken in that frame.
BaselineResult baseline_swap(const Image& input, const LandmarkSet& input_landmarks, const StyleSet& styles,
                             const Mask& mask, const ReferenceFace& ref);

}  // namespace faceswap
