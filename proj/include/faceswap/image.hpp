#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "faceswap/tensor.hpp"

namespace faceswap {

/// Three-channel RGB raster with values in [0, 1].
class Image {
 public:
  Image() = default;
  Image(int height, int width, double fill = 0.0) : pixels_(3, height, width, fill) {}
  /// Takes ownership of a 3-channel tensor. Throws ValidationError otherwise.
  explicit Image(Tensor pixels);

  int height() const { return pixels_.height(); }
  int width() const { return pixels_.width(); }

  double& at(int c, int y, int x) { return pixels_(c, y, x); }
  double at(int c, int y, int x) const { return pixels_(c, y, x); }

  const Tensor& tensor() const { return pixels_; }
  Tensor& tensor() { return pixels_; }

  /// Clamps every value into [0, 1]; returns the largest displacement.
  double clamp_unit();
  bool in_unit_range() const;

 private:
  Tensor pixels_;
};

/// Single-channel luminance raster with values in [0, 1].
class LuminanceImage {
 public:
  LuminanceImage() = default;
  LuminanceImage(int height, int width, double fill = 0.0) : pixels_(1, height, width, fill) {}
  explicit LuminanceImage(Tensor pixels);

  int height() const { return pixels_.height(); }
  int width() const { return pixels_.width(); }
  double& at(int y, int x) { return pixels_(0, y, x); }
  double at(int y, int x) const { return pixels_(0, y, x); }

  const Tensor& tensor() const { return pixels_; }
  Tensor& tensor() { return pixels_; }

 private:
  Tensor pixels_;
};

/// Binary segmentation mask; 1 marks the face region.
class Mask {
 public:
  Mask() = default;
  Mask(int height, int width, std::uint8_t fill = 0);

  int height() const { return height_; }
  int width() const { return width_; }
  std::uint8_t& at(int y, int x) { return bits_[static_cast<std::size_t>(y) * width_ + x]; }
  std::uint8_t at(int y, int x) const { return bits_[static_cast<std::size_t>(y) * width_ + x]; }
  bool inside(int y, int x) const { return at(y, x) != 0; }

  std::size_t count() const;
  bool touches_border() const;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> bits_;
};

// Rec. 601 luma weights.
inline constexpr double kLumaR = 0.299;
inline constexpr double kLumaG = 0.587;
inline constexpr double kLumaB = 0.114;

/// Reads an 8- or 16-bit PNG. Grayscale is replicated to RGB and alpha is
/// dropped.
Image load_image(const std::filesystem::path& path);
void save_image(const Image& img, const std::filesystem::path& path);
LuminanceImage load_luminance(const std::filesystem::path& path);
void save_luminance(const LuminanceImage& img, const std::filesystem::path& path);

/// Masks are single-channel PNGs; any nonzero value counts as inside.
Mask load_mask(const std::filesystem::path& path);
void save_mask(const Mask& mask, const std::filesystem::path& path);

LuminanceImage to_luminance(const Image& img);
/// Adjoint of to_luminance: spreads a luminance gradient onto RGB.
Tensor luminance_backward(const Tensor& grad_luminance);

/// Average pooling over factor×factor blocks. `factor` must be a power of two
/// dividing both dimensions.
Image downsample(const Image& img, int factor);
Tensor downsample(const Tensor& t, int factor);

Image flip_horizontal(const Image& img);

/// Separable Gaussian blur with clamp-to-edge borders. sigma must be positive;
/// the kernel is truncated at 3·sigma.
Image gaussian_blur(const Image& img, double sigma);

}  // namespace faceswap
