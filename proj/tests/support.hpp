#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "faceswap/geometry.hpp"
#include "faceswap/image.hpp"
#include "faceswap/tensor.hpp"

namespace testing {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline faceswap::Tensor random_tensor(Rng& rng, int c, int h, int w, double lo = 0.0, double hi = 1.0) {
  faceswap::Tensor t(c, h, w);
  for (double& v : t.values()) v = uniform(rng, lo, hi);
  return t;
}

inline faceswap::Image random_image(Rng& rng, int h, int w) {
  return faceswap::Image(random_tensor(rng, 3, h, w));
}

inline faceswap::LandmarkSet random_landmarks(Rng& rng, double lo, double hi) {
  std::array<faceswap::Point2, faceswap::kNumLandmarks> pts;
  for (auto& p : pts) p = {uniform(rng, lo, hi), uniform(rng, lo, hi)};
  return faceswap::LandmarkSet(pts);
}

inline double max_abs_diff(const faceswap::Tensor& a, const faceswap::Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& name) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("faceswap_test_" + name + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing
