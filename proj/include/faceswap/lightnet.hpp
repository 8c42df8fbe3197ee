#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "faceswap/image.hpp"
#include "faceswap/nn.hpp"

namespace faceswap {

struct LightNetConfig {
  int resolution = 128;
  std::array<int, 4> channels{8, 16, 32, 32};
  int embedding_dim = 64;
  bool with_bias = true;
  std::uint64_t seed = 0;
};

/// Lighting embedding Γ: four stride-2 3×3 conv+ReLU blocks followed by a
/// fully connected layer. The embedding is the FC output.
class LightNet {
 public:
  struct Trace {
    Tensor input;
    std::vector<Tensor> conv_out;
  };
  struct Gradients {
    std::vector<nn::ConvGrad> convs;
    std::vector<double> fc_weight;
    std::vector<double> fc_bias;
  };

  static LightNet build(const LightNetConfig& config);

  const LightNetConfig& config() const { return config_; }
  int resolution() const { return config_.resolution; }
  int embedding_dim() const { return config_.embedding_dim; }

  std::vector<double> embed(const LuminanceImage& img) const;
  std::vector<double> embed(const Tensor& luminance, Trace* trace) const;

  /// Returns dL/dinput; accumulates parameter gradients into `grads` when given.
  Tensor backward(const Trace& trace, std::span<const double> grad_embedding,
                  Gradients* grads) const;

  Gradients zero_gradients() const;
  std::vector<nn::ParamRef> parameters();
  std::vector<std::vector<double>*> gradient_refs(Gradients& grads) const;
  std::size_t param_count() const;

  void save(const std::filesystem::path& dir) const;
  static LightNet load(const std::filesystem::path& dir);

 private:
  LightNet() = default;

  LightNetConfig config_;
  std::vector<nn::Conv2d> convs_;
  nn::Linear fc_;
};

using LightNetParams = LightNet;

enum class LightingLabel { Same, Different };

struct LightingPair {
  LuminanceImage a;
  LuminanceImage b;
  LightingLabel label = LightingLabel::Same;
};

inline constexpr double kContrastiveMargin = 1.0;

/// Same light: d². Different light: max(0, margin − d)². d = ‖e_a − e_b‖.
/// Gradients with respect to both embeddings are written when requested.
double contrastive_loss(std::span<const double> e_a, std::span<const double> e_b,
                        LightingLabel label, double margin = kContrastiveMargin,
                        std::vector<double>* grad_a = nullptr, std::vector<double>* grad_b = nullptr);

struct LightTrainConfig {
  LightNetConfig net;
  int epochs = 12;
  int batch_size = 16;
  double lr_start = 1e-3;
  double lr_end = 1e-4;
  double margin = kContrastiveMargin;
  std::uint64_t seed = 0;
};

struct LightTrainResult {
  LightNet net;
  std::vector<double> epoch_loss;  // mean contrastive loss per epoch
};

/// Siamese training with Adam. Throws ValidationError unless both labels occur.
LightTrainResult train_lightnet(const std::vector<LightingPair>& dataset, const LightTrainConfig& config);

struct SeparationStats {
  double same_mean = 0.0;
  double different_mean = 0.0;
  double ratio() const { return different_mean / same_mean; }
};

SeparationStats lighting_separation(const LightNet& net, const std::vector<LightingPair>& pairs);

// Synthetic relighting corpus: Lambertian renderings of procedural height-map
// heads under directional lights.

struct RelightingImage {
  LuminanceImage image;
  int identity = 0;
  int pose = 0;
  int light = 0;
};

struct RelightingSet {
  int resolution = 0;
  int identities = 0;
  int poses = 0;
  int lights = 0;
  std::vector<RelightingImage> images;  // identity-major, then pose, then light

  const RelightingImage& at(int identity, int pose, int light) const {
    return images[(static_cast<std::size_t>(identity) * poses + pose) * lights + light];
  }
};

/// Defaults give 8 identities × 4 poses (32 identity/pose combinations)
/// under 16 lights.
RelightingSet generate_relighting_set(int resolution, std::uint64_t seed, int identities = 8,
                                      int poses = 4, int lights = 16);

/// Balanced pairs drawn from `identities`; both images of a pair share the
/// pose. Same-light pairs use two different identities.
std::vector<LightingPair> make_lighting_pairs(const RelightingSet& set,
                                              const std::vector<int>& identities, int count,
                                              std::uint64_t seed);

/// Writes one PNG per rendering plus `pairs.json` with "train" and
/// "held_out" pair lists (held-out identities are disjoint from training).
void write_relighting_dataset(const RelightingSet& set, const std::filesystem::path& dir,
                              std::uint64_t seed, int train_pairs = 512, int held_out_pairs = 256);

/// Reads the pairs of one split ("train" or "held_out") from a dataset dir.
std::vector<LightingPair> read_lighting_pairs(const std::filesystem::path& dir,
                                              const std::string& split);

}  // namespace faceswap
