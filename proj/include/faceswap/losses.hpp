#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "faceswap/features.hpp"
#include "faceswap/geometry.hpp"
#include "faceswap/image.hpp"
#include "faceswap/lightnet.hpp"

namespace faceswap {

/// All k×k neighbourhoods of a feature map, flattened C×k×k, in row-major
/// location order. M = (H − k + 1)(W − k + 1).
struct PatchList {
  std::vector<double> data;   // M × length
  std::vector<double> norms;  // ‖patch_i‖
  int count = 0;              // M
  int length = 0;             // C·k·k
  int k = 1;
  int rows = 0;               // H − k + 1
  int cols = 0;               // W − k + 1
  std::string layer_name;

  std::span<const double> patch(int i) const {
    return {data.data() + static_cast<std::size_t>(i) * length, static_cast<std::size_t>(length)};
  }
};

/// Per-location index into the style list passed to nn_select.
struct PatchMatch {
  std::vector<int> nn_index;
};

struct LossWeights {
  double alpha = 0.0;  // style
  double beta = 0.0;   // lighting
  double gamma = 0.0;  // total variation
};

struct LossBreakdown {
  double content = 0.0;
  double style = 0.0;
  double light = 0.0;
  double tv = 0.0;
  double total = 0.0;
};

/// Patches whose norm is at most this are treated as zero vectors by the
/// cosine distance; ReLU features produce all-zero patches.
inline constexpr double kCosineEpsilon = 1e-8;

/// ‖gen − content‖² / (C·H·W). Writes dL/dgen into `grad` when given.
double content_loss(const FeatureMap& gen, const FeatureMap& content, Tensor* grad = nullptr);
/// Unit-weight sum of content_loss over `layers`.
double content_loss_multi(const FeatureMaps& gen, const FeatureMaps& content,
                          const std::vector<std::string>& layers,
                          std::map<std::string, Tensor>* grads = nullptr);

PatchList extract_patches(const FeatureMap& f, int k);

/// 1 − u·v / (‖u‖‖v‖) in [0, 2]; see kCosineEpsilon for zero patches.
double cosine_distance(std::span<const double> u, std::span<const double> v);

/// Indices of the n_best style landmark sets closest to `x`, by ascending
/// landmark distance, ties to the lower index.
std::vector<int> select_style_subset(const LandmarkSet& x, const std::vector<LandmarkSet>& styles,
                                     int n_best);

using StylePatches = std::vector<const PatchList*>;

/// For each location, the style whose patch at the same location is nearest in
/// cosine distance; ties to the lowest list index.
PatchMatch nn_select(const PatchList& gen, const StylePatches& styles);
PatchMatch nn_select(const PatchList& gen, const std::vector<PatchList>& styles);

/// Mean over locations of the matched cosine distances. When `grad` is given
/// it receives dL/dgen in feature-map layout (C × H × W).
double style_loss(const PatchList& gen, const StylePatches& styles, Tensor* grad = nullptr,
                  int channels = 0);
double style_loss(const PatchList& gen, const std::vector<PatchList>& styles);

/// ‖Γ(gen) − Γ(content)‖² / dim Γ. `grad` receives dL/dgen.
double light_loss(const LuminanceImage& gen, const LuminanceImage& content, const LightNet& net,
                  Tensor* grad = nullptr);

/// Sum over channels of squared forward differences along both axes.
double tv_loss(const Tensor& img, Tensor* grad = nullptr);
double tv_loss(const Image& img);

/// Which layers feed which loss, and the style patch size.
struct LossLayers {
  std::vector<std::string> content{"relu4_2"};
  std::vector<std::string> style{"relu3_1", "relu4_1"};
  int patch_size = 1;
};

/// Cached patches of the selected style subset, per style layer.
using StyleTargets = std::map<std::string, StylePatches>;

/// Everything the total objective needs besides the two images.
struct LossContext {
  const FeatureExtractor* extractor = nullptr;
  const LightNet* lightnet = nullptr;  // light term is 0 when null
  const FeatureMaps* content_features = nullptr;  // precomputed content-layer maps, optional
  LossLayers layers;
};

enum class GradientMode { None, Total, PerTerm };

struct LossEvaluation {
  LossBreakdown breakdown;
  Tensor grad_total;  // dL/dgen of the weighted total
  // PerTerm only: unweighted gradients of each component.
  Tensor grad_content, grad_style, grad_light, grad_tv;
};

/// L = content + α·style + β·light + γ·tv with optional gradients with
/// respect to the generated image.
LossEvaluation evaluate_loss(const Tensor& gen, const Tensor& content, const StyleTargets& style,
                             const LossWeights& weights, const LossContext& ctx,
                             GradientMode mode = GradientMode::None);

LossBreakdown total_loss(const Image& gen, const Image& content, const StyleTargets& style,
                         const LossWeights& weights, const LossContext& ctx);

}  // namespace faceswap
