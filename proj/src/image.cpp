#include "faceswap/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>
#include <vector>

#include "faceswap/error.hpp"

namespace faceswap {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// Decoded PNG samples, widened to 16 bits. channels is 1 (gray) or 3 (RGB).
struct RawRaster {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 0;
  std::vector<std::uint16_t> samples;
};

// libpng reports errors through longjmp, so everything with a destructor is
// owned by the caller.
bool decode_png(std::FILE* fp, RawRaster& out, std::vector<png_bytep>& rows,
                std::vector<png_byte>& buffer) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_init_io(png, fp);
  png_read_info(png, info);

  const png_byte color = png_get_color_type(png, info);
  png_set_expand(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.channels = png_get_channels(png, info);
  out.bit_depth = png_get_bit_depth(png, info);

  const png_size_t stride = png_get_rowbytes(png, info);
  buffer.resize(stride * static_cast<std::size_t>(out.height));
  rows.resize(out.height);
  for (int y = 0; y < out.height; ++y) rows[y] = buffer.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const std::size_t n = static_cast<std::size_t>(out.width) * out.height * out.channels;
  out.samples.resize(n);
  if (out.bit_depth == 16) {
    for (std::size_t i = 0; i < n; ++i)
      out.samples[i] = static_cast<std::uint16_t>((buffer[2 * i] << 8) | buffer[2 * i + 1]);
  } else {
    for (std::size_t i = 0; i < n; ++i) out.samples[i] = buffer[i];
  }
  return true;
}

bool encode_png(std::FILE* fp, int width, int height, int channels,
                std::vector<png_bytep>& rows) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, width, height, 8,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

RawRaster read_raw(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw ValidationError("cannot open image: " + path.string());
  png_byte header[8] = {};
  if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8) != 0)
    throw ValidationError("unsupported image format (PNG required): " + path.string());
  std::rewind(fp.get());
  RawRaster raster;
  std::vector<png_bytep> rows;
  std::vector<png_byte> buffer;
  if (!decode_png(fp.get(), raster, rows, buffer))
    throw ValidationError("corrupt PNG: " + path.string());
  if (raster.width <= 0 || raster.height <= 0)
    throw ValidationError("zero-dimension image: " + path.string());
  return raster;
}

void write_raw(const std::filesystem::path& path, int width, int height, int channels,
               std::vector<png_byte>& bytes) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw NumericalError("cannot write image: " + path.string());
  std::vector<png_bytep> rows(height);
  const std::size_t stride = static_cast<std::size_t>(width) * channels;
  for (int y = 0; y < height; ++y) rows[y] = bytes.data() + y * stride;
  if (!encode_png(fp.get(), width, height, channels, rows))
    throw NumericalError("PNG encoding failed: " + path.string());
}

png_byte quantize(double v) {
  return static_cast<png_byte>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

Image::Image(Tensor pixels) : pixels_(std::move(pixels)) {
  require(pixels_.channels() == 3, "Image requires 3 channels, got " + pixels_.shape_string());
}

double Image::clamp_unit() {
  double worst = 0.0;
  for (double& v : pixels_.values()) {
    const double c = std::clamp(v, 0.0, 1.0);
    worst = std::max(worst, std::abs(c - v));
    v = c;
  }
  return worst;
}

bool Image::in_unit_range() const {
  return std::all_of(pixels_.values().begin(), pixels_.values().end(),
                     [](double v) { return v >= 0.0 && v <= 1.0; });
}

LuminanceImage::LuminanceImage(Tensor pixels) : pixels_(std::move(pixels)) {
  require(pixels_.channels() == 1,
          "LuminanceImage requires 1 channel, got " + pixels_.shape_string());
}

Mask::Mask(int height, int width, std::uint8_t fill)
    : height_(height), width_(width),
      bits_(static_cast<std::size_t>(height) * width, fill ? 1 : 0) {}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 1));
}

bool Mask::touches_border() const {
  for (int x = 0; x < width_; ++x)
    if (inside(0, x) || inside(height_ - 1, x)) return true;
  for (int y = 0; y < height_; ++y)
    if (inside(y, 0) || inside(y, width_ - 1)) return true;
  return false;
}

Image load_image(const std::filesystem::path& path) {
  const RawRaster raw = read_raw(path);
  const double scale = raw.bit_depth == 16 ? 65535.0 : 255.0;
  Image img(raw.height, raw.width);
  for (int y = 0; y < raw.height; ++y)
    for (int x = 0; x < raw.width; ++x)
      for (int c = 0; c < 3; ++c) {
        const int src_c = raw.channels == 3 ? c : 0;
        const std::size_t i =
            (static_cast<std::size_t>(y) * raw.width + x) * raw.channels + src_c;
        img.at(c, y, x) = raw.samples[i] / scale;
      }
  return img;
}

void save_image(const Image& img, const std::filesystem::path& path) {
  std::vector<png_byte> bytes(static_cast<std::size_t>(img.height()) * img.width() * 3);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < 3; ++c)
        bytes[(static_cast<std::size_t>(y) * img.width() + x) * 3 + c] = quantize(img.at(c, y, x));
  write_raw(path, img.width(), img.height(), 3, bytes);
}

LuminanceImage load_luminance(const std::filesystem::path& path) {
  const RawRaster raw = read_raw(path);
  if (raw.channels == 3) return to_luminance(load_image(path));
  const double scale = raw.bit_depth == 16 ? 65535.0 : 255.0;
  LuminanceImage img(raw.height, raw.width);
  for (int y = 0; y < raw.height; ++y)
    for (int x = 0; x < raw.width; ++x)
      img.at(y, x) = raw.samples[static_cast<std::size_t>(y) * raw.width + x] / scale;
  return img;
}

void save_luminance(const LuminanceImage& img, const std::filesystem::path& path) {
  std::vector<png_byte> bytes(static_cast<std::size_t>(img.height()) * img.width());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      bytes[static_cast<std::size_t>(y) * img.width() + x] = quantize(img.at(y, x));
  write_raw(path, img.width(), img.height(), 1, bytes);
}

Mask load_mask(const std::filesystem::path& path) {
  const RawRaster raw = read_raw(path);
  Mask mask(raw.height, raw.width);
  for (int y = 0; y < raw.height; ++y)
    for (int x = 0; x < raw.width; ++x)
      mask.at(y, x) =
          raw.samples[(static_cast<std::size_t>(y) * raw.width + x) * raw.channels] != 0 ? 1 : 0;
  return mask;
}

void save_mask(const Mask& mask, const std::filesystem::path& path) {
  std::vector<png_byte> bytes(static_cast<std::size_t>(mask.height()) * mask.width());
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x)
      bytes[static_cast<std::size_t>(y) * mask.width() + x] = mask.inside(y, x) ? 255 : 0;
  write_raw(path, mask.width(), mask.height(), 1, bytes);
}

LuminanceImage to_luminance(const Image& img) {
  LuminanceImage lum(img.height(), img.width());
  const auto r = img.tensor().channel(0);
  const auto g = img.tensor().channel(1);
  const auto b = img.tensor().channel(2);
  auto out = lum.tensor().channel(0);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = kLumaR * r[i] + kLumaG * g[i] + kLumaB * b[i];
  return lum;
}

Tensor luminance_backward(const Tensor& grad_luminance) {
  require(grad_luminance.channels() == 1, "luminance gradient must have one channel");
  Tensor grad(3, grad_luminance.height(), grad_luminance.width());
  const auto gl = grad_luminance.channel(0);
  const double weights[3] = {kLumaR, kLumaG, kLumaB};
  for (int c = 0; c < 3; ++c) {
    auto out = grad.channel(c);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = weights[c] * gl[i];
  }
  return grad;
}

Tensor downsample(const Tensor& t, int factor) {
  require(factor >= 1 && (factor & (factor - 1)) == 0, "downsample factor must be a power of two");
  require(t.height() % factor == 0 && t.width() % factor == 0,
          "downsample: " + t.shape_string() + " not divisible by " + std::to_string(factor));
  if (factor == 1) return t;
  const int h = t.height() / factor;
  const int w = t.width() / factor;
  const double inv = 1.0 / (factor * factor);
  Tensor out(t.channels(), h, w);
  for (int c = 0; c < t.channels(); ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double sum = 0.0;
        for (int dy = 0; dy < factor; ++dy)
          for (int dx = 0; dx < factor; ++dx) sum += t(c, y * factor + dy, x * factor + dx);
        out(c, y, x) = sum * inv;
      }
  return out;
}

Image downsample(const Image& img, int factor) { return Image(downsample(img.tensor(), factor)); }

Image flip_horizontal(const Image& img) {
  Image out(img.height(), img.width());
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) out.at(c, y, img.width() - 1 - x) = img.at(c, y, x);
  return out;
}

Image gaussian_blur(const Image& img, double sigma) {
  require(sigma > 0.0 && std::isfinite(sigma), "gaussian_blur: sigma must be positive");
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * r + 1);
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) sum += k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : k) v /= sum;

  const int H = img.height(), W = img.width();
  Image rows(H, W), out(H, W);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double a = 0.0;
        for (int i = -r; i <= r; ++i) a += k[i + r] * img.at(c, y, std::clamp(x + i, 0, W - 1));
        rows.at(c, y, x) = a;
      }
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double a = 0.0;
        for (int i = -r; i <= r; ++i) a += k[i + r] * rows.at(c, std::clamp(y + i, 0, H - 1), x);
        out.at(c, y, x) = a;
      }
  return out;
}

}  // namespace faceswap
