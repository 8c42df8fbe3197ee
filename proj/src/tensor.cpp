#include "faceswap/tensor.hpp"

#include <cmath>
#include <sstream>

#include "faceswap/error.hpp"

namespace faceswap {

Tensor::Tensor(int channels, int height, int width, double fill)
    : channels_(channels), height_(height), width_(width) {
  require(channels >= 0 && height >= 0 && width >= 0, "tensor dimensions must be nonnegative");
  values_.assign(static_cast<std::size_t>(channels) * height * width, fill);
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << channels_ << "x" << height_ << "x" << width_;
  return os.str();
}

void Tensor::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

Tensor& Tensor::operator+=(const Tensor& other) {
  require(same_shape(other), "tensor shape mismatch in +=: " + shape_string() + " vs " +
                                 other.shape_string());
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : values_) v *= s;
  return *this;
}

bool Tensor::all_finite() const {
  for (double v : values_)
    if (!std::isfinite(v)) return false;
  return true;
}

void copy_channels(const Tensor& src, Tensor& dst, int offset) {
  require(src.height() == dst.height() && src.width() == dst.width() &&
              offset + src.channels() <= dst.channels(),
          "copy_channels: incompatible shapes");
  const std::size_t plane = static_cast<std::size_t>(src.height()) * src.width();
  std::copy(src.data(), src.data() + src.size(), dst.data() + offset * plane);
}

}  // namespace faceswap
