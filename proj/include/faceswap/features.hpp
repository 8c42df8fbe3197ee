#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "faceswap/image.hpp"
#include "faceswap/nn.hpp"
#include "faceswap/tensor.hpp"

namespace faceswap {

/// Activations of one extractor layer, C_l × H_l × W_l.
struct FeatureMap {
  Tensor data;
  std::string layer_name;
};

using FeatureMaps = std::map<std::string, FeatureMap>;

struct LayerInfo {
  std::string name;  // e.g. "relu3_1"
  int factor = 1;    // spatial downsampling relative to the input
  int channels = 0;
};

/// Describes a VGG-19-shaped feature extractor: five stages of 2/2/4/4/4
/// zero-padded 3×3 convolutions with ReLU, 2×2 average pooling between
/// stages. Layers are exposed as relu{stage}_{index}.
struct ExtractorSpec {
  enum class Source { Random, Pretrained };

  Source source = Source::Random;
  std::array<int, 5> stage_channels{64, 128, 256, 512, 512};
  std::uint64_t seed = 0;
  bool with_bias = true;
  std::filesystem::path weights;  // archive directory when Source::Pretrained

  // Input preprocessing: channel c is fed as img[c]·input_scale − input_mean[c],
  // after swapping to BGR order when `bgr` is set.
  double input_scale = 1.0;
  std::array<double, 3> input_mean{0.0, 0.0, 0.0};
  bool bgr = false;

  /// Full-width VGG-19 reading Caffe-convention weights from `weights`.
  static ExtractorSpec vgg19(const std::filesystem::path& weights);
  /// Narrow seeded-random stack with the same topology, for tests and toy runs.
  static ExtractorSpec small_random(std::uint64_t seed, bool with_bias = true);

  std::vector<LayerInfo> layers() const;
  LayerInfo layer(const std::string& name) const;
};

class FeatureExtractor {
 public:
  /// Intermediate activations recorded by a forward pass, consumed by backward.
  struct Trace {
    std::vector<Tensor> activations;  // [0] = preprocessed input, [i+1] = output of op i
  };

  /// Builds or loads the weights. Throws ValidationError for missing/corrupt
  /// archives or channel mismatches.
  static FeatureExtractor load(const ExtractorSpec& spec);

  const ExtractorSpec& spec() const { return spec_; }
  /// Hash of the weights; style caches compare it to detect a changed extractor.
  std::uint64_t fingerprint() const { return fingerprint_; }
  std::size_t parameter_count() const;

  FeatureMaps extract(const Image& img, const std::vector<std::string>& layers) const;
  FeatureMaps extract(const Tensor& img, const std::vector<std::string>& layers,
                      Trace* trace = nullptr) const;

  /// dL/dimg given dL/dΦ_l for some of the layers recorded in `trace`.
  Tensor backward(const Trace& trace, const std::map<std::string, Tensor>& layer_grads) const;

 private:
  struct Op {
    bool pool = false;  // 2×2 average pooling when set, conv + ReLU otherwise
    int conv = -1;
    std::string name;   // relu name for conv ops
  };

  FeatureExtractor() = default;
  void build_ops();
  int op_index(const std::string& layer) const;

  ExtractorSpec spec_;
  std::vector<nn::Conv2d> convs_;
  std::vector<std::string> conv_names_;
  std::vector<Op> ops_;
  std::uint64_t fingerprint_ = 0;
};

/// load_extractor
inline FeatureExtractor load_extractor(const ExtractorSpec& spec) {
  return FeatureExtractor::load(spec);
}

}  // namespace faceswap
