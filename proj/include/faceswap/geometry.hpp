#pragma once

#include <array>
#include <filesystem>

#include <Eigen/Core>

#include "faceswap/image.hpp"

namespace faceswap {

inline constexpr int kNumLandmarks = 68;

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// 68 facial keypoints in pixel coordinates, iBUG ordering.
class LandmarkSet {
 public:
  LandmarkSet() = default;
  /// Throws ValidationError on non-finite or collinear points.
  explicit LandmarkSet(const std::array<Point2, kNumLandmarks>& points);

  const Point2& operator[](int i) const { return points_[i]; }
  const std::array<Point2, kNumLandmarks>& points() const { return points_; }

 private:
  std::array<Point2, kNumLandmarks> points_{};
};

/// p ↦ A·p + t.
struct AffineTransform {
  Eigen::Matrix2d A = Eigen::Matrix2d::Identity();
  Eigen::Vector2d t = Eigen::Vector2d::Zero();

  static AffineTransform identity() { return {}; }
  static AffineTransform translation(double dx, double dy) {
    AffineTransform T;
    T.t = {dx, dy};
    return T;
  }

  Point2 apply(const Point2& p) const;
  LandmarkSet apply(const LandmarkSet& points) const;
  /// this ∘ other: apply `other` first.
  AffineTransform compose(const AffineTransform& other) const;
};

struct ReferenceFace {
  LandmarkSet landmarks;
  int resolution = 128;

  /// Same face geometry at a different square resolution.
  ReferenceFace rescaled(int new_resolution) const;
};

/// Least-squares affine map taking `src` onto `dst` over all 68 points.
/// Throws NumericalError when `src` is degenerate.
AffineTransform estimate_affine(const LandmarkSet& src, const LandmarkSet& dst);

AffineTransform invert_affine(const AffineTransform& T);

/// Output pixel p samples `img` at T⁻¹(p) bilinearly; samples outside the
/// source read as 0.
Image warp_image(const Image& img, const AffineTransform& T, int out_h, int out_w);
Mask warp_mask(const Mask& mask, const AffineTransform& T, int out_h, int out_w);

/// Euclidean norm of the 136-vector of coordinate differences.
double landmark_distance(const LandmarkSet& a, const LandmarkSet& b);

/// Mirror image of a landmark set about the vertical axis of a `width`-wide
/// image, with indices permuted so that semantic points keep their slot.
LandmarkSet mirror_landmarks(const LandmarkSet& points, int width);

/// Accepts a bare array of 68 [x, y] pairs or an object with a
/// "landmarks" array.
LandmarkSet load_landmarks(const std::filesystem::path& path);
void save_landmarks(const LandmarkSet& points, const std::filesystem::path& path);

/// Object with "resolution" and "landmarks".
ReferenceFace load_reference(const std::filesystem::path& path);
void save_reference(const ReferenceFace& ref, const std::filesystem::path& path);

AffineTransform load_transform(const std::filesystem::path& path);
void save_transform(const AffineTransform& T, const std::filesystem::path& path);

}  // namespace faceswap
