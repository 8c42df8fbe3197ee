#include "faceswap/oracles.hpp"

#include <algorithm>
#include <cmath>

namespace faceswap::oracle {

double content_loss(const Tensor& gen, const Tensor& content) {
  double s = 0.0;
  for (int c = 0; c < gen.channels(); ++c)
    for (int y = 0; y < gen.height(); ++y)
      for (int x = 0; x < gen.width(); ++x) {
        const double d = gen(c, y, x) - content(c, y, x);
        s += d * d;
      }
  return s / (static_cast<double>(gen.channels()) * gen.height() * gen.width());
}

std::vector<Vec> patches(const Tensor& f, int k) {
  std::vector<Vec> out;
  for (int y = 0; y + k <= f.height(); ++y)
    for (int x = 0; x + k <= f.width(); ++x) {
      Vec p;
      for (int c = 0; c < f.channels(); ++c)
        for (int dy = 0; dy < k; ++dy)
          for (int dx = 0; dx < k; ++dx) p.push_back(f(c, y + dy, x + dx));
      out.push_back(std::move(p));
    }
  return out;
}

double cosine_distance(const Vec& u, const Vec& v) {
  double uu = 0, vv = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  const bool zu = std::sqrt(uu) <= 1e-8, zv = std::sqrt(vv) <= 1e-8;
  if (zu && zv) return 0.0;
  if (zu || zv) return 1.0;
  // ½‖u/‖u‖ − v/‖v‖‖² equals 1 − cos but keeps exact ties exact.
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += std::pow(u[i] / std::sqrt(uu) - v[i] / std::sqrt(vv), 2);
  return 0.5 * s;
}

std::vector<int> nn_select(const std::vector<Vec>& gen, const std::vector<std::vector<Vec>>& styles) {
  std::vector<int> idx(gen.size(), -1);
  for (std::size_t i = 0; i < gen.size(); ++i) {
    double best = 1e300;
    for (std::size_t j = 0; j < styles.size(); ++j) {
      const double d = cosine_distance(gen[i], styles[j][i]);
      if (d < best) {
        best = d;
        idx[i] = static_cast<int>(j);
      }
    }
  }
  return idx;
}

double style_loss(const std::vector<Vec>& gen, const std::vector<std::vector<Vec>>& styles) {
  double s = 0.0;
  for (std::size_t i = 0; i < gen.size(); ++i) {
    double best = 1e300;
    for (const auto& style : styles) best = std::min(best, cosine_distance(gen[i], style[i]));
    s += best;
  }
  return s / static_cast<double>(gen.size());
}

double landmark_distance(const LandmarkSet& a, const LandmarkSet& b) {
  Vec flat;
  for (int i = 0; i < kNumLandmarks; ++i) {
    flat.push_back(a[i].x - b[i].x);
    flat.push_back(a[i].y - b[i].y);
  }
  double s = 0.0;
  for (double v : flat) s += v * v;
  return std::sqrt(s);
}

std::vector<int> select_style_subset(const LandmarkSet& x, const std::vector<LandmarkSet>& styles, int n_best) {
  std::vector<std::pair<double, int>> d;
  for (std::size_t j = 0; j < styles.size(); ++j) d.emplace_back(oracle::landmark_distance(x, styles[j]), static_cast<int>(j));
  std::sort(d.begin(), d.end());  // ties fall back to the index
  std::vector<int> out;
  for (int j = 0; j < n_best; ++j) out.push_back(d[j].second);
  return out;
}

double tv_loss(const Tensor& img) {
  double s = 0.0;
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x) {
        if (x + 1 < img.width()) s += std::pow(img(c, y, x + 1) - img(c, y, x), 2);
        if (y + 1 < img.height()) s += std::pow(img(c, y + 1, x) - img(c, y, x), 2);
      }
  return s;
}

Tensor luminance(const Tensor& rgb) {
  Tensor out(1, rgb.height(), rgb.width());
  for (int y = 0; y < rgb.height(); ++y)
    for (int x = 0; x < rgb.width(); ++x)
      out(0, y, x) = 0.299 * rgb(0, y, x) + 0.587 * rgb(1, y, x) + 0.114 * rgb(2, y, x);
  return out;
}

double light_loss(const Tensor& gen_lum, const Tensor& content_lum, const LightNet& net) {
  const Vec a = net.embed(LuminanceImage(gen_lum));
  const Vec b = net.embed(LuminanceImage(content_lum));
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

std::vector<double> central_differences(const std::function<double(const Tensor&)>& f, const Tensor& at,
                                        const std::vector<Coord>& coords, double step) {
  std::vector<double> out;
  Tensor x = at;
  for (const auto& p : coords) {
    const double orig = x(p.c, p.y, p.x);
    x(p.c, p.y, p.x) = orig + step;
    const double fp = f(x);
    x(p.c, p.y, p.x) = orig - step;
    const double fm = f(x);
    x(p.c, p.y, p.x) = orig;
    out.push_back((fp - fm) / (2.0 * step));
  }
  return out;
}

double bilinear(const Tensor& img, int c, double y, double x) {
  const int y0 = static_cast<int>(std::floor(y)), x0 = static_cast<int>(std::floor(x));
  const double fy = y - y0, fx = x - x0;
  auto px = [&](int yy, int xx) {
    if (yy < 0 || xx < 0 || yy >= img.height() || xx >= img.width()) return 0.0;
    return img(c, yy, xx);
  };
  return (1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x0 + 1)) +
         fy * ((1 - fx) * px(y0 + 1, x0) + fx * px(y0 + 1, x0 + 1));
}

}  // namespace faceswap::oracle
