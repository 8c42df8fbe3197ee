#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "faceswap/tensor.hpp"

// Minimal float64 layer set with hand-written backward passes. Shared by the
// feature extractor, the transformation network and the lighting network.
namespace faceswap::nn {

/// Zero-padded 2-D convolution. Weight layout is out × in × k × k.
struct Conv2d {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  int padding = 1;
  std::vector<double> weight;
  std::vector<double> bias;  // empty for bias-free layers

  Conv2d() = default;
  Conv2d(int in, int out, int kernel, int stride, int padding, bool with_bias);

  int output_size(int input) const { return (input + 2 * padding - kernel) / stride + 1; }
  std::size_t parameter_count() const { return weight.size() + bias.size(); }
};

struct ConvGrad {
  std::vector<double> weight;
  std::vector<double> bias;

  explicit ConvGrad(const Conv2d& conv)
      : weight(conv.weight.size(), 0.0), bias(conv.bias.size(), 0.0) {}
};

Tensor conv2d(const Tensor& input, const Conv2d& conv);

/// Backward pass of conv2d. `grad_input` (if non-null) receives dL/dinput;
/// `grad_params` (if non-null) is accumulated into.
void conv2d_backward(const Tensor& input, const Conv2d& conv, const Tensor& grad_output,
                     Tensor* grad_input, ConvGrad* grad_params);

/// y = W·x + b with W stored out × in.
struct Linear {
  int in_features = 0;
  int out_features = 0;
  std::vector<double> weight;
  std::vector<double> bias;

  Linear() = default;
  Linear(int in, int out, bool with_bias);
  std::size_t parameter_count() const { return weight.size() + bias.size(); }
};

std::vector<double> linear(std::span<const double> input, const Linear& layer);
void linear_backward(std::span<const double> input, const Linear& layer,
                     std::span<const double> grad_output, std::vector<double>* grad_input,
                     std::vector<double>* grad_weight, std::vector<double>* grad_bias);

void relu_inplace(Tensor& t);
/// Zeroes entries of `grad` where the ReLU output was not positive.
void relu_backward_inplace(const Tensor& output, Tensor& grad);

void sigmoid_inplace(Tensor& t);
void sigmoid_backward_inplace(const Tensor& output, Tensor& grad);

Tensor avg_pool(const Tensor& input, int factor);
Tensor avg_pool_backward(const Tensor& grad_output, int factor);

Tensor upsample_nearest(const Tensor& input, int factor);
Tensor upsample_nearest_backward(const Tensor& grad_output, int factor);

Tensor concat_channels(const Tensor& a, const Tensor& b);
/// Splits a gradient of concat_channels back into its two parts.
void split_channels(const Tensor& grad, int first_channels, Tensor& grad_a, Tensor& grad_b);

/// Fills a rows×cols row-major matrix with orthonormal rows (rows ≤ cols) or
/// orthonormal columns (rows > cols), scaled by `gain`.
void orthogonal_init(std::vector<double>& matrix, int rows, int cols, std::mt19937_64& rng,
                     double gain = 1.0);

/// Orthogonal init of a conv kernel reshaped to out × (in·k·k); zero bias.
void orthogonal_init(Conv2d& conv, std::mt19937_64& rng, double gain = 1.0);
void orthogonal_init(Linear& layer, std::mt19937_64& rng, double gain = 1.0);

/// Named view of a parameter tensor, used by serialization and optimizers.
struct ParamRef {
  std::string name;
  std::vector<std::int64_t> shape;
  std::vector<double>* values = nullptr;
  bool frozen = false;
};

void append_params(std::vector<ParamRef>& out, const std::string& prefix, Conv2d& conv,
                   bool frozen = false);
void append_params(std::vector<ParamRef>& out, const std::string& prefix, Linear& layer,
                   bool frozen = false);

}  // namespace faceswap::nn
