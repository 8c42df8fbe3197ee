#include "faceswap/baseline.hpp"

#include "faceswap/error.hpp"
#include "faceswap/pipeline.hpp"

namespace faceswap {

int nearest_style(const LandmarkSet& aligned, const std::vector<LandmarkSet>& style_landmarks) {
  require(!style_landmarks.empty(), "style set is empty");
  return select_style_subset(aligned, style_landmarks, 1).front();
}

BaselineResult baseline_swap(const Image& input, const LandmarkSet& input_landmarks, const StyleSet& styles,
                             const Mask& mask, const ReferenceFace& ref) {
  require(styles.size() > 0, "style set is empty");
  require(styles.resolution() == ref.resolution, "style images do not match the reference resolution");
  BaselineResult result;
  const AffineTransform to_ref = estimate_affine(input_landmarks, ref.landmarks);
  result.selected = nearest_style(to_ref.apply(input_landmarks), styles.landmarks());
  const Image& chosen = styles.image(result.selected);
  SwapDiagnostics diag;
  result.output = swap(input, input_landmarks, mask, [&chosen](const Image&) { return chosen; }, ref, &diag);
  result.poisson = diag.poisson;
  return result;
}

}  // namespace faceswap
