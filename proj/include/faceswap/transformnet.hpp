#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "json.hpp"

#include "faceswap/image.hpp"
#include "faceswap/nn.hpp"

namespace faceswap {

/// Layout of one resolution branch. The branch path runs conv blocks over the
/// pooled input; the join path (absent on the coarsest branch) runs over the
/// concatenation of the upsampled coarser branch and the branch path.
struct BranchSpec {
  int kernel = 3;
  std::vector<int> branch_widths;
  std::vector<int> join_widths;
};

/// Branch layouts ordered from the coarsest resolution to the finest.
struct NetworkSpec {
  std::vector<BranchSpec> branches;

  /// Five scales of three 3×3 blocks (widths 32 / join 88): ≈0.99M parameters
  /// at 128×128.
  static NetworkSpec standard();
  /// Narrow variant for toy runs and tests.
  static NetworkSpec compact(int branches = 4, int width = 8, int join_width = 16);

  nlohmann::json to_json() const;
  static NetworkSpec from_json(const nlohmann::json& j);
};

/// Multi-scale feed-forward generator. Each branch sees an average-pooled
/// copy of the input; coarser branches merge into finer ones through
/// nearest-neighbour ×2 upsampling and channel concatenation; the finest
/// branch ends in a 1×1 convolution to RGB followed by a sigmoid.
class TransformNet {
 public:
  struct BranchTrace {
    Tensor input;                    // pooled image
    std::vector<Tensor> branch_out;  // post-ReLU output of each branch conv
    Tensor joined;                   // concat(upsampled coarser, branch path)
    std::vector<Tensor> join_out;
  };
  struct Trace {
    std::vector<BranchTrace> branches;
    Tensor head_input;
    Tensor output;
  };
  /// Gradient buffers, one per convolution in parameters() order.
  struct Gradients {
    std::vector<nn::ConvGrad> convs;
  };

  /// Orthogonally initialized weights (unit gain, zero bias), reproducible
  /// from `seed`. Throws ValidationError for a resolution not divisible by
  /// 2^(branches-1) or unsupported by the spec.
  static TransformNet build(int resolution, const NetworkSpec& spec, std::uint64_t seed);

  /// Adds a branch at twice the current resolution. Existing branches are
  /// copied and frozen; the old output convolution is replaced by a new one
  /// on the added branch. Without an explicit spec the added branch copies
  /// the finest branch's layout with widths scaled so that it carries about
  /// as many parameters as the network it extends.
  TransformNet grow(int new_resolution, std::uint64_t seed,
                    std::optional<BranchSpec> branch = std::nullopt) const;

  int resolution() const { return resolution_; }
  int branch_count() const { return static_cast<int>(branches_.size()); }
  int branch_resolution(int b) const;
  bool branch_frozen(int b) const { return branches_[b].frozen; }
  const NetworkSpec& spec() const { return spec_; }

  Image forward(const Image& img) const;
  Tensor forward(const Tensor& img, Trace* trace) const;

  Gradients zero_gradients() const;
  /// Accumulates parameter gradients of unfrozen branches into `grads`.
  void backward(const Trace& trace, const Tensor& grad_output, Gradients& grads) const;

  std::size_t param_count() const;
  std::size_t frozen_param_count() const;

  /// Named views in a fixed order: per branch its branch convs then join
  /// convs, finally the output convolution.
  std::vector<nn::ParamRef> parameters();
  std::vector<std::vector<double>*> gradient_refs(Gradients& grads) const;

  void save(const std::filesystem::path& dir) const;
  static TransformNet load(const std::filesystem::path& dir);

 private:
  struct Branch {
    BranchSpec spec;
    bool frozen = false;
    std::vector<nn::Conv2d> branch_convs;
    std::vector<nn::Conv2d> join_convs;
  };

  TransformNet() = default;
  static Branch make_branch(const BranchSpec& spec, int coarser_channels);
  static int output_channels(const Branch& branch, int coarser_channels);
  int top_channels() const;
  nlohmann::json architecture() const;

  int resolution_ = 0;
  NetworkSpec spec_;
  std::vector<Branch> branches_;
  nn::Conv2d head_;
};

using TransformNetParams = TransformNet;

/// Exact scalar count of weights and biases of a layout at build time.
std::size_t param_count(const NetworkSpec& spec);

}  // namespace faceswap
