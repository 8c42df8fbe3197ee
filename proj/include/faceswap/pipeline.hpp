#pragma once

#include <functional>

#include "faceswap/compositing.hpp"
#include "faceswap/geometry.hpp"
#include "faceswap/image.hpp"
#include "faceswap/transformnet.hpp"

namespace faceswap {

/// Boundary for plugging in an external keypoint detector.
class LandmarkDetector {
 public:
  virtual ~LandmarkDetector() = default;
  virtual LandmarkSet detect(const Image& img) const = 0;
};

/// Detector that returns landmarks supplied up front (e.g. read from a file).
class FixedLandmarks final : public LandmarkDetector {
 public:
  explicit FixedLandmarks(LandmarkSet points) : points_(points) {}
  LandmarkSet detect(const Image&) const override { return points_; }

 private:
  LandmarkSet points_;
};

struct AlignedFace {
  Image image;                   // ref.resolution × ref.resolution
  AffineTransform to_reference;  // original → reference frame
};

AlignedFace align_face(const Image& input, const LandmarkSet& landmarks, const ReferenceFace& ref);

using FaceTransform = std::function<Image(const Image&)>;

struct SwapDiagnostics {
  AlignedFace aligned;
  Image generated;
  PoissonStats poisson;
};

Image swap(const Image& input, const LandmarkSet& landmarks, const Mask& mask, const FaceTransform& transform,
           const ReferenceFace& ref, SwapDiagnostics* diag = nullptr);

Image swap(const Image& input, const LandmarkSet& landmarks, const Mask& mask, const TransformNet& net,
           const ReferenceFace& ref, SwapDiagnostics* diag = nullptr);

Image swap(const Image& input, const LandmarkDetector& detector, const Mask& mask, const TransformNet& net,
           const ReferenceFace& ref, SwapDiagnostics* diag = nullptr);

}  // namespace faceswap
