#include "faceswap/optim.hpp"

#include <cmath>

#include "faceswap/error.hpp"

namespace faceswap {

void Adam::step(const std::vector<nn::ParamRef>& params,
                const std::vector<std::vector<double>*>& grads, double learning_rate) {
  require(params.size() == grads.size(), "Adam: parameter/gradient count mismatch");
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i].assign(params[i].values->size(), 0.0);
      v_[i].assign(params[i].values->size(), 0.0);
    }
  }
  require(m_.size() == params.size(), "Adam: parameter set changed between steps");
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].frozen) continue;
    auto& w = *params[i].values;
    const auto& g = *grads[i];
    require(g.size() == w.size(), "Adam: gradient size mismatch for " + params[i].name);
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = config_.beta1 * m[k] + (1.0 - config_.beta1) * g[k];
      v[k] = config_.beta2 * v[k] + (1.0 - config_.beta2) * g[k] * g[k];
      w[k] -= learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + config_.epsilon);
    }
  }
}

}  // namespace faceswap
