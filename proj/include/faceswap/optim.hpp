#pragma once

#include <vector>

#include "faceswap/nn.hpp"

namespace faceswap {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. Frozen parameters are skipped and keep their
/// exact values.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  void step(const std::vector<nn::ParamRef>& params,
            const std::vector<std::vector<double>*>& grads, double learning_rate);
  long steps() const { return t_; }

 private:
  AdamConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  long t_ = 0;
};

}  // namespace faceswap
