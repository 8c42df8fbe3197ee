#include "faceswap/nn.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "faceswap/error.hpp"

namespace faceswap::nn {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMatrix>;
using StridedMap = Eigen::Map<RowMatrix, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMatrix, 0, Eigen::OuterStride<>>;

// Upper bound on im2col buffer entries per chunk (~32 MB of doubles).
constexpr std::size_t kColumnBudget = std::size_t{1} << 22;

// Output rows processed per im2col chunk.
int rows_per_chunk(const Conv2d& conv, int out_w, int out_h) {
  const std::size_t patch = static_cast<std::size_t>(conv.in_channels) * conv.kernel * conv.kernel;
  const std::size_t per_row = patch * out_w;
  return static_cast<int>(std::clamp<std::size_t>(kColumnBudget / std::max<std::size_t>(per_row, 1),
                                                  1, out_h));
}

// Fills cols (patch × (rows·out_w), row-major) for output rows [row0, row0 + rows).
void im2col(const Tensor& in, const Conv2d& conv, int row0, int rows, int out_w,
            std::vector<double>& cols) {
  const int k = conv.kernel;
  const int P = rows * out_w;
  cols.assign(static_cast<std::size_t>(conv.in_channels) * k * k * P, 0.0);
  const int H = in.height();
  const int W = in.width();
  std::size_t r = 0;
  for (int c = 0; c < conv.in_channels; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx, ++r) {
        double* dst = cols.data() + r * P;
        for (int oy = 0; oy < rows; ++oy) {
          const int iy = (row0 + oy) * conv.stride - conv.padding + ky;
          if (iy < 0 || iy >= H) continue;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * conv.stride - conv.padding + kx;
            if (ix >= 0 && ix < W) dst[oy * out_w + ox] = in(c, iy, ix);
          }
        }
      }
}

void col2im_add(const std::vector<double>& cols, const Conv2d& conv, int row0, int rows,
                int out_w, Tensor& grad_in) {
  const int k = conv.kernel;
  const int P = rows * out_w;
  const int H = grad_in.height();
  const int W = grad_in.width();
  std::size_t r = 0;
  for (int c = 0; c < conv.in_channels; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx, ++r) {
        const double* src = cols.data() + r * P;
        for (int oy = 0; oy < rows; ++oy) {
          const int iy = (row0 + oy) * conv.stride - conv.padding + ky;
          if (iy < 0 || iy >= H) continue;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * conv.stride - conv.padding + kx;
            if (ix >= 0 && ix < W) grad_in(c, iy, ix) += src[oy * out_w + ox];
          }
        }
      }
}

}  // namespace

Conv2d::Conv2d(int in, int out, int k, int s, int pad, bool with_bias)
    : in_channels(in), out_channels(out), kernel(k), stride(s), padding(pad),
      weight(static_cast<std::size_t>(out) * in * k * k, 0.0),
      bias(with_bias ? static_cast<std::size_t>(out) : 0, 0.0) {
  require(in >= 1 && out >= 1 && k >= 1 && s >= 1 && pad >= 0, "invalid convolution geometry");
}

Tensor conv2d(const Tensor& input, const Conv2d& conv) {
  require(input.channels() == conv.in_channels,
          "conv2d: expected " + std::to_string(conv.in_channels) + " input channels, got " +
              input.shape_string());
  const int out_h = conv.output_size(input.height());
  const int out_w = conv.output_size(input.width());
  require(out_h >= 1 && out_w >= 1, "conv2d: input " + input.shape_string() + " too small");
  Tensor out(conv.out_channels, out_h, out_w);
  const int patch = conv.in_channels * conv.kernel * conv.kernel;
  const int P_total = out_h * out_w;
  const ConstRowMap weight(conv.weight.data(), conv.out_channels, patch);
  const int chunk = rows_per_chunk(conv, out_w, out_h);
  std::vector<double> cols;
  for (int row0 = 0; row0 < out_h; row0 += chunk) {
    const int rows = std::min(chunk, out_h - row0);
    const int P = rows * out_w;
    im2col(input, conv, row0, rows, out_w, cols);
    const ConstRowMap col_mat(cols.data(), patch, P);
    StridedMap out_block(out.data() + static_cast<std::size_t>(row0) * out_w, conv.out_channels,
                         P, Eigen::OuterStride<>(P_total));
    out_block.noalias() = weight * col_mat;
  }
  if (!conv.bias.empty())
    for (int c = 0; c < conv.out_channels; ++c)
      for (double& v : out.channel(c)) v += conv.bias[c];
  return out;
}

void conv2d_backward(const Tensor& input, const Conv2d& conv, const Tensor& grad_output,
                     Tensor* grad_input, ConvGrad* grad_params) {
  const int out_h = grad_output.height();
  const int out_w = grad_output.width();
  require(grad_output.channels() == conv.out_channels && out_h == conv.output_size(input.height()) &&
              out_w == conv.output_size(input.width()),
          "conv2d_backward: gradient shape mismatch");
  const int patch = conv.in_channels * conv.kernel * conv.kernel;
  const int P_total = out_h * out_w;
  const ConstRowMap weight(conv.weight.data(), conv.out_channels, patch);
  if (grad_input) *grad_input = Tensor(input.channels(), input.height(), input.width());

  if (grad_params && !grad_params->bias.empty())
    for (int c = 0; c < conv.out_channels; ++c) {
      double s = 0.0;
      for (double g : grad_output.channel(c)) s += g;
      grad_params->bias[c] += s;
    }

  const int chunk = rows_per_chunk(conv, out_w, out_h);
  std::vector<double> cols;
  for (int row0 = 0; row0 < out_h; row0 += chunk) {
    const int rows = std::min(chunk, out_h - row0);
    const int P = rows * out_w;
    const ConstStridedMap grad_block(grad_output.data() + static_cast<std::size_t>(row0) * out_w,
                                     conv.out_channels, P, Eigen::OuterStride<>(P_total));
    if (grad_params) {
      im2col(input, conv, row0, rows, out_w, cols);
      const ConstRowMap col_mat(cols.data(), patch, P);
      Eigen::Map<RowMatrix> grad_w(grad_params->weight.data(), conv.out_channels, patch);
      grad_w.noalias() += grad_block * col_mat.transpose();
    }
    if (grad_input) {
      cols.assign(static_cast<std::size_t>(patch) * P, 0.0);
      Eigen::Map<RowMatrix> grad_cols(cols.data(), patch, P);
      grad_cols.noalias() = weight.transpose() * grad_block;
      col2im_add(cols, conv, row0, rows, out_w, *grad_input);
    }
  }
}

Linear::Linear(int in, int out, bool with_bias)
    : in_features(in), out_features(out), weight(static_cast<std::size_t>(in) * out, 0.0),
      bias(with_bias ? static_cast<std::size_t>(out) : 0, 0.0) {
  require(in >= 1 && out >= 1, "invalid linear layer size");
}

std::vector<double> linear(std::span<const double> input, const Linear& layer) {
  require(static_cast<int>(input.size()) == layer.in_features, "linear: input size mismatch");
  std::vector<double> out(layer.out_features, 0.0);
  const ConstRowMap w(layer.weight.data(), layer.out_features, layer.in_features);
  Eigen::Map<Eigen::VectorXd>(out.data(), out.size()).noalias() =
      w * Eigen::Map<const Eigen::VectorXd>(input.data(), input.size());
  for (std::size_t i = 0; i < layer.bias.size(); ++i) out[i] += layer.bias[i];
  return out;
}

void linear_backward(std::span<const double> input, const Linear& layer,
                     std::span<const double> grad_output, std::vector<double>* grad_input,
                     std::vector<double>* grad_weight, std::vector<double>* grad_bias) {
  const ConstRowMap w(layer.weight.data(), layer.out_features, layer.in_features);
  const Eigen::Map<const Eigen::VectorXd> g(grad_output.data(), grad_output.size());
  const Eigen::Map<const Eigen::VectorXd> x(input.data(), input.size());
  if (grad_input) {
    grad_input->assign(layer.in_features, 0.0);
    Eigen::Map<Eigen::VectorXd>(grad_input->data(), layer.in_features).noalias() = w.transpose() * g;
  }
  if (grad_weight)
    Eigen::Map<RowMatrix>(grad_weight->data(), layer.out_features, layer.in_features).noalias() +=
        g * x.transpose();
  if (grad_bias && !layer.bias.empty())
    for (int i = 0; i < layer.out_features; ++i) (*grad_bias)[i] += grad_output[i];
}

void relu_inplace(Tensor& t) {
  for (double& v : t.values()) v = v > 0.0 ? v : 0.0;
}

void relu_backward_inplace(const Tensor& output, Tensor& grad) {
  const auto& y = output.values();
  auto& g = grad.values();
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!(y[i] > 0.0)) g[i] = 0.0;
}

void sigmoid_inplace(Tensor& t) {
  for (double& v : t.values()) v = 1.0 / (1.0 + std::exp(-v));
}

void sigmoid_backward_inplace(const Tensor& output, Tensor& grad) {
  const auto& y = output.values();
  auto& g = grad.values();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= y[i] * (1.0 - y[i]);
}

Tensor avg_pool(const Tensor& input, int factor) {
  require(input.height() % factor == 0 && input.width() % factor == 0,
          "avg_pool: " + input.shape_string() + " not divisible by " + std::to_string(factor));
  const int h = input.height() / factor;
  const int w = input.width() / factor;
  const double inv = 1.0 / (factor * factor);
  Tensor out(input.channels(), h, w);
  for (int c = 0; c < input.channels(); ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double s = 0.0;
        for (int dy = 0; dy < factor; ++dy)
          for (int dx = 0; dx < factor; ++dx) s += input(c, y * factor + dy, x * factor + dx);
        out(c, y, x) = s * inv;
      }
  return out;
}

Tensor avg_pool_backward(const Tensor& grad_output, int factor) {
  const double inv = 1.0 / (factor * factor);
  Tensor grad(grad_output.channels(), grad_output.height() * factor, grad_output.width() * factor);
  for (int c = 0; c < grad.channels(); ++c)
    for (int y = 0; y < grad.height(); ++y)
      for (int x = 0; x < grad.width(); ++x) grad(c, y, x) = grad_output(c, y / factor, x / factor) * inv;
  return grad;
}

Tensor upsample_nearest(const Tensor& input, int factor) {
  Tensor out(input.channels(), input.height() * factor, input.width() * factor);
  for (int c = 0; c < out.channels(); ++c)
    for (int y = 0; y < out.height(); ++y)
      for (int x = 0; x < out.width(); ++x) out(c, y, x) = input(c, y / factor, x / factor);
  return out;
}

Tensor upsample_nearest_backward(const Tensor& grad_output, int factor) {
  Tensor grad(grad_output.channels(), grad_output.height() / factor, grad_output.width() / factor);
  for (int c = 0; c < grad_output.channels(); ++c)
    for (int y = 0; y < grad_output.height(); ++y)
      for (int x = 0; x < grad_output.width(); ++x)
        grad(c, y / factor, x / factor) += grad_output(c, y, x);
  return grad;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require(a.height() == b.height() && a.width() == b.width(),
          "concat_channels: spatial mismatch " + a.shape_string() + " vs " + b.shape_string());
  Tensor out(a.channels() + b.channels(), a.height(), a.width());
  copy_channels(a, out, 0);
  copy_channels(b, out, a.channels());
  return out;
}

void split_channels(const Tensor& grad, int first_channels, Tensor& grad_a, Tensor& grad_b) {
  const std::size_t plane = static_cast<std::size_t>(grad.height()) * grad.width();
  grad_a = Tensor(first_channels, grad.height(), grad.width());
  grad_b = Tensor(grad.channels() - first_channels, grad.height(), grad.width());
  std::copy(grad.data(), grad.data() + first_channels * plane, grad_a.data());
  std::copy(grad.data() + first_channels * plane, grad.data() + grad.size(), grad_b.data());
}

void orthogonal_init(std::vector<double>& matrix, int rows, int cols, std::mt19937_64& rng,
                     double gain) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const int tall = std::max(rows, cols);
  const int thin = std::min(rows, cols);
  Eigen::MatrixXd gauss(tall, thin);
  for (int j = 0; j < thin; ++j)
    for (int i = 0; i < tall; ++i) gauss(i, j) = normal(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gauss);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(tall, thin);
  // Sign fix makes the draw uniform over the orthogonal group.
  const Eigen::MatrixXd& r = qr.matrixQR();
  for (int j = 0; j < thin; ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;
  matrix.resize(static_cast<std::size_t>(rows) * cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      matrix[static_cast<std::size_t>(i) * cols + j] = gain * (rows > cols ? q(i, j) : q(j, i));
}

void orthogonal_init(Conv2d& conv, std::mt19937_64& rng, double gain) {
  orthogonal_init(conv.weight, conv.out_channels, conv.in_channels * conv.kernel * conv.kernel, rng,
                  gain);
  std::fill(conv.bias.begin(), conv.bias.end(), 0.0);
}

void orthogonal_init(Linear& layer, std::mt19937_64& rng, double gain) {
  orthogonal_init(layer.weight, layer.out_features, layer.in_features, rng, gain);
  std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
}

void append_params(std::vector<ParamRef>& out, const std::string& prefix, Conv2d& conv,
                   bool frozen) {
  out.push_back({prefix + ".weight",
                 {conv.out_channels, conv.in_channels, conv.kernel, conv.kernel},
                 &conv.weight,
                 frozen});
  if (!conv.bias.empty()) out.push_back({prefix + ".bias", {conv.out_channels}, &conv.bias, frozen});
}

void append_params(std::vector<ParamRef>& out, const std::string& prefix, Linear& layer,
                   bool frozen) {
  out.push_back({prefix + ".weight", {layer.out_features, layer.in_features}, &layer.weight, frozen});
  if (!layer.bias.empty())
    out.push_back({prefix + ".bias", {layer.out_features}, &layer.bias, frozen});
}

}  // namespace faceswap::nn
