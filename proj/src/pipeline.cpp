#include "faceswap/pipeline.hpp"

#include "faceswap/error.hpp"

namespace faceswap {

AlignedFace align_face(const Image& input, const LandmarkSet& landmarks, const ReferenceFace& ref) {
  require(ref.resolution > 0, "reference resolution must be positive");
  AlignedFace out;
  out.to_reference = estimate_affine(landmarks, ref.landmarks);
  out.image = warp_image(input, out.to_reference, ref.resolution, ref.resolution);
  return out;
}

Image swap(const Image& input, const LandmarkSet& landmarks, const Mask& mask, const FaceTransform& transform,
           const ReferenceFace& ref, SwapDiagnostics* diag) {
  require(mask.height() == input.height() && mask.width() == input.width(),
          "mask size does not match the input image");
  AlignedFace aligned = align_face(input, landmarks, ref);
  Image generated = transform(aligned.image);
  require(generated.height() == ref.resolution && generated.width() == ref.resolution,
          "face transform changed the aligned resolution");
  PoissonStats stats;
  Image out = composite_swap(input, generated, invert_affine(aligned.to_reference), mask, &stats);
  if (diag) {
    diag->aligned = std::move(aligned);
    diag->generated = std::move(generated);
    diag->poisson = stats;
  }
  return out;
}

Image swap(const Image& input, const LandmarkSet& landmarks, const Mask& mask, const TransformNet& net,
           const ReferenceFace& ref, SwapDiagnostics* diag) {
  require(net.resolution() == ref.resolution,
          "network resolution " + std::to_string(net.resolution()) + " does not match reference resolution " +
              std::to_string(ref.resolution));
  return swap(input, landmarks, mask, [&net](const Image& face) { return net.forward(face); }, ref, diag);
}

Image swap(const Image& input, const LandmarkDetector& detector, const Mask& mask, const TransformNet& net,
           const ReferenceFace& ref, SwapDiagnostics* diag) {
  return swap(input, detector.detect(input), mask, net, ref, diag);
}

}  // namespace faceswap
