#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace faceswap {

/// Dense channel-major C×H×W array of doubles. Index (c, y, x) lives at
/// (c * H + y) * W + x.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int channels, int height, int width, double fill = 0.0);

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }
  bool same_shape(const Tensor& other) const {
    return channels_ == other.channels_ && height_ == other.height_ &&
           width_ == other.width_;
  }
  std::string shape_string() const;

  double& operator()(int c, int y, int x) {
    return values_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
  }
  double operator()(int c, int y, int x) const {
    return values_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
  }

  std::span<double> channel(int c) {
    const std::size_t plane = static_cast<std::size_t>(height_) * width_;
    return {values_.data() + c * plane, plane};
  }
  std::span<const double> channel(int c) const {
    const std::size_t plane = static_cast<std::size_t>(height_) * width_;
    return {values_.data() + c * plane, plane};
  }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }
  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }

  void fill(double v);
  Tensor& operator+=(const Tensor& other);
  Tensor& operator*=(double s);

  bool all_finite() const;

 private:
  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<double> values_;
};

/// Copies `src` into channels [offset, offset + src.channels()) of `dst`.
void copy_channels(const Tensor& src, Tensor& dst, int offset);

}  // namespace faceswap
