#include "faceswap/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "faceswap/error.hpp"

namespace faceswap::synth {
namespace {

using Points = std::array<Point2, kNumLandmarks>;

// Template in unit coordinates; (0.5, 0.5) is the face centre.
Points unit_template(const Expression& e) {
  Points p{};
  const double pi = std::numbers::pi;
  for (int i = 0; i <= 16; ++i) {
    const double th = pi - i * pi / 16.0;
    p[i] = {0.5 + 0.34 * std::cos(th), 0.47 + 0.40 * std::sin(th)};
  }
  for (int i = 0; i < 5; ++i) {
    const double y = 0.34 - e.brow_raise - 0.03 * std::sin(pi * i / 4.0);
    p[17 + i] = {0.24 + 0.05 * i, y};
    p[26 - i] = {1.0 - (0.24 + 0.05 * i), y};
  }
  for (int i = 0; i < 4; ++i) p[27 + i] = {0.5, 0.42 + 0.06 * i};
  const double nx[5] = {0.44, 0.47, 0.5, 0.53, 0.56};
  const double ny[5] = {0.64, 0.655, 0.66, 0.655, 0.64};
  for (int i = 0; i < 5; ++i) p[31 + i] = {nx[i], ny[i]};

  auto eye = [&](int first, double cx) {
    const double w = 0.055, h = 0.022;
    p[first + 0] = {cx - w, 0.43};
    p[first + 1] = {cx - w / 3, 0.43 - h};
    p[first + 2] = {cx + w / 3, 0.43 - h};
    p[first + 3] = {cx + w, 0.43};
    p[first + 4] = {cx + w / 3, 0.43 + h};
    p[first + 5] = {cx - w / 3, 0.43 + h};
  };
  eye(36, 0.34);
  eye(42, 0.66);

  const double cx = 0.5, cy = 0.75, w = 0.12, hu = 0.035, hl = 0.045;
  const double lift = e.smile;
  const double gap = e.mouth_open;
  p[48] = {cx - w, cy - lift};
  p[49] = {cx - 2 * w / 3, cy - 0.7 * hu - 0.5 * lift};
  p[50] = {cx - w / 3, cy - hu};
  p[51] = {cx, cy - 0.85 * hu};
  p[52] = {cx + w / 3, cy - hu};
  p[53] = {cx + 2 * w / 3, cy - 0.7 * hu - 0.5 * lift};
  p[54] = {cx + w, cy - lift};
  p[55] = {cx + 2 * w / 3, cy + 0.7 * hl + gap - 0.5 * lift};
  p[56] = {cx + w / 3, cy + hl + gap};
  p[57] = {cx, cy + hl + gap};
  p[58] = {cx - w / 3, cy + hl + gap};
  p[59] = {cx - 2 * w / 3, cy + 0.7 * hl + gap - 0.5 * lift};
  const double it = cy - 0.2 * hu, ib = cy + 0.2 * hl + gap;
  p[60] = {cx - 0.75 * w, cy - 0.8 * lift};
  p[61] = {cx - w / 3, it};
  p[62] = {cx, it};
  p[63] = {cx + w / 3, it};
  p[64] = {cx + 0.75 * w, cy - 0.8 * lift};
  p[65] = {cx + w / 3, ib};
  p[66] = {cx, ib};
  p[67] = {cx - w / 3, ib};
  return p;
}

LandmarkSet scaled(const Points& unit, double scale, double angle, Point2 centre) {
  Points out{};
  const double c = std::cos(angle), s = std::sin(angle);
  for (int i = 0; i < kNumLandmarks; ++i) {
    const double dx = (unit[i].x - 0.5) * scale, dy = (unit[i].y - 0.5) * scale;
    out[i] = {centre.x + c * dx - s * dy, centre.y + s * dx + c * dy};
  }
  return LandmarkSet(out);
}

double smoothstep(double a, double b, double x) {
  const double t = std::clamp((x - a) / (b - a), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

Point2 mean_of(const LandmarkSet& l, int first, int last) {
  Point2 m;
  for (int i = first; i <= last; ++i) {
    m.x += l[i].x;
    m.y += l[i].y;
  }
  const double n = last - first + 1;
  return {m.x / n, m.y / n};
}

double dist(const Point2& a, const Point2& b) { return std::hypot(a.x - b.x, a.y - b.y); }

// Soft ellipse blob with axes along the local face frame.
struct Blob {
  Point2 centre;
  double rx, ry;  // in face-aligned axes
  double cos_a, sin_a;
  double soft;
  double weight(double x, double y) const {
    const double dx = x - centre.x, dy = y - centre.y;
    const double u = (cos_a * dx + sin_a * dy) / rx;
    const double v = (-sin_a * dx + cos_a * dy) / ry;
    const double r = std::sqrt(u * u + v * v);
    return 1.0 - smoothstep(1.0 - soft, 1.0 + soft, r);
  }
};

void blend(std::array<double, 3>& px, const std::array<double, 3>& colour, double w) {
  for (int c = 0; c < 3; ++c) px[c] += w * (colour[c] - px[c]);
}

std::array<double, 3> random_colour(std::mt19937_64& rng, std::array<double, 3> base, double spread) {
  std::uniform_real_distribution<double> u(-spread, spread);
  for (auto& v : base) v = std::clamp(v + u(rng), 0.02, 0.98);
  return base;
}

}  // namespace

LandmarkSet template_landmarks(int resolution, const Expression& expr) {
  require(resolution > 0, "template resolution must be positive");
  const double r = resolution;
  return scaled(unit_template(expr), r, 0.0, {0.5 * r, 0.5 * r});
}

ReferenceFace default_reference(int resolution) {
  return {template_landmarks(resolution), resolution};
}

Appearance random_appearance(std::mt19937_64& rng) {
  Appearance a;
  std::uniform_real_distribution<double> tone(0.35, 0.95);
  const double t = tone(rng);
  a.skin = random_colour(rng, {t, t * 0.80, t * 0.68}, 0.05);
  a.lips = random_colour(rng, a.lips, 0.15);
  a.eyes = random_colour(rng, a.eyes, 0.12);
  a.brows = random_colour(rng, a.brows, 0.12);
  a.background_top = random_colour(rng, a.background_top, 0.25);
  a.background_bottom = random_colour(rng, a.background_bottom, 0.25);
  return a;
}

Face render_face(int height, int width, const LandmarkSet& l, const Appearance& look) {
  require(height > 0 && width > 0, "face image must be non-empty");
  // Face frame: jaw width sets the scale, the eye line sets the roll.
  const Point2 re = mean_of(l, 36, 41), le = mean_of(l, 42, 47);
  const double roll = std::atan2(le.y - re.y, le.x - re.x);
  const double ca = std::cos(roll), sa = std::sin(roll);
  const double face = dist(l[0], l[16]) / 0.68;  // template jaw spans 0.68 face units
  const Point2 jaw_mid{(l[0].x + l[16].x) / 2, (l[0].y + l[16].y) / 2};
  const Point2 centre{jaw_mid.x - sa * 0.03 * face, jaw_mid.y + ca * 0.03 * face};
  const double px = 1.0 / std::max(face, 1e-9);  // one pixel in face units

  Blob skin{centre, 0.37 * face, 0.47 * face, ca, sa, std::max(0.06, (look.edge_px + 1.0) * px)};
  auto feature = [&](const Point2& c, double rx, double ry) {
    const double rmin = std::min(rx, ry);
    return Blob{c, rx, ry, ca, sa, std::clamp(look.edge_px / std::max(rmin, 1e-9), 0.15, 0.9)};
  };
  std::vector<Blob> eyes, brows, nose;
  for (const auto& [first, c] : {std::pair{36, re}, std::pair{42, le}}) {
    const double hw = dist(l[first], l[first + 3]) / 2;
    const double hh = (dist(l[first + 1], l[first + 5]) + dist(l[first + 2], l[first + 4])) / 4;
    eyes.push_back(feature(c, 0.85 * hw + 0.5, hh + 0.8));
  }
  for (int i = 17; i <= 26; ++i) brows.push_back(feature(l[i], 0.035 * face + 0.8, 0.012 * face + 0.8));
  for (int i = 31; i <= 35; ++i) nose.push_back(feature(l[i], 0.015 * face + 0.8, 0.012 * face + 0.8));
  const Point2 mouth = mean_of(l, 48, 59);
  const Blob lips = feature(mouth, dist(l[48], l[54]) / 2 + 0.5, dist(l[51], l[57]) / 2 + 0.8);
  const double gap = dist(l[62], l[66]);
  const Blob inner = feature(mean_of(l, 60, 67), dist(l[60], l[64]) / 2 + 0.5, gap / 2 + 0.5);
  const double inner_strength = std::clamp(gap / (0.01 * face + 1e-9), 0.0, 1.0);

  Face out{Image(height, width), l, Mask(height, width)};
  const std::array<double, 3> nose_shade{look.skin[0] * 0.8, look.skin[1] * 0.8, look.skin[2] * 0.8};
  const std::array<double, 3> mouth_dark{0.15, 0.05, 0.05};
  for (int y = 0; y < height; ++y) {
    const double vy = height > 1 ? static_cast<double>(y) / (height - 1) : 0.0;
    for (int x = 0; x < width; ++x) {
      std::array<double, 3> p;
      for (int c = 0; c < 3; ++c) p[c] = (1 - vy) * look.background_top[c] + vy * look.background_bottom[c];
      const double s = skin.weight(x, y);
      blend(p, look.skin, s);
      if (s > 0) {
        double b = 0;
        for (const auto& blob : brows) b = std::max(b, blob.weight(x, y));
        blend(p, look.brows, s * b);
        double n = 0;
        for (const auto& blob : nose) n = std::max(n, blob.weight(x, y));
        blend(p, nose_shade, s * n * 0.6);
        for (const auto& blob : eyes) blend(p, look.eyes, s * blob.weight(x, y));
        blend(p, look.lips, s * lips.weight(x, y));
        blend(p, mouth_dark, s * inner_strength * inner.weight(x, y));
      }
      for (int c = 0; c < 3; ++c) out.image.at(c, y, x) = std::clamp(p[c], 0.0, 1.0);
      if (s > 0.999 && x > 0 && y > 0 && x < width - 1 && y < height - 1) out.mask.at(y, x) = 1;
    }
  }
  return out;
}

LandmarkSet random_aligned_landmarks(int resolution, std::mt19937_64& rng, double jitter) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Expression e;
  e.mouth_open = 0.02 * (1.0 + u(rng)) * jitter;
  e.smile = 0.012 * u(rng) * jitter;
  e.brow_raise = 0.012 * u(rng) * jitter;
  const double r = resolution;
  const double scale = r * (1.0 + 0.04 * u(rng) * jitter);
  const double angle = 0.06 * u(rng) * jitter;
  const Point2 centre{0.5 * r + 0.02 * r * u(rng) * jitter, 0.5 * r + 0.02 * r * u(rng) * jitter};
  return scaled(unit_template(e), scale, angle, centre);
}

Face render_posed_face(int height, int width, int template_resolution, double scale, double angle,
                       Point2 centre, const Expression& expr, const Appearance& look) {
  return render_face(height, width, scaled(unit_template(expr), template_resolution * scale, angle, centre),
                     look);
}

ToyCorpus make_toy_corpus(int resolution, int n_content, int n_styles, std::uint64_t seed) {
  require(n_content >= 0 && n_styles >= 0, "corpus sizes must be non-negative");
  std::mt19937_64 rng(seed);
  ToyCorpus corpus;
  for (int i = 0; i < n_content; ++i) {
    const Appearance look = random_appearance(rng);
    corpus.content.push_back(render_face(resolution, resolution, random_aligned_landmarks(resolution, rng), look));
  }
  const Appearance target = random_appearance(rng);
  for (int i = 0; i < n_styles; ++i)
    corpus.styles.push_back(render_face(resolution, resolution, random_aligned_landmarks(resolution, rng), target));
  return corpus;
}

void write_face_dir(const std::vector<Face>& faces, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < faces.size(); ++i) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "face_%03zu", i);
    save_image(faces[i].image, dir / (std::string(stem) + ".png"));
    save_landmarks(faces[i].landmarks, dir / (std::string(stem) + ".json"));
  }
}

}  // namespace faceswap::synth
