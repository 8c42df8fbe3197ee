#include "faceswap/geometry.hpp"

#include <cmath>
#include <fstream>

#include <Eigen/Dense>

#include "faceswap/error.hpp"
#include "json.hpp"

namespace faceswap {

namespace {

using json = nlohmann::json;

// Smallest / largest eigenvalue of the landmark scatter matrix below this
// ratio means the points lie on a line.
constexpr double kCollinearRatio = 1e-12;

bool collinear(const std::array<Point2, kNumLandmarks>& pts) {
  double mx = 0.0, my = 0.0;
  for (const auto& p : pts) {
    mx += p.x;
    my += p.y;
  }
  mx /= kNumLandmarks;
  my /= kNumLandmarks;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& p : pts) {
    sxx += (p.x - mx) * (p.x - mx);
    sxy += (p.x - mx) * (p.y - my);
    syy += (p.y - my) * (p.y - my);
  }
  const double trace = sxx + syy;
  const double det = sxx * syy - sxy * sxy;
  if (trace <= 0.0) return true;
  const double disc = std::sqrt(std::max(0.0, trace * trace / 4.0 - det));
  const double hi = trace / 2.0 + disc;
  const double lo = trace / 2.0 - disc;
  return lo <= kCollinearRatio * hi;
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("invalid JSON in " + path.string() + ": " + e.what());
  }
}

void write_json(const json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw NumericalError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

LandmarkSet landmarks_from_json(const json& arr, const std::string& origin) {
  if (!arr.is_array() || arr.size() != kNumLandmarks)
    throw ValidationError(origin + ": expected an array of 68 [x, y] pairs");
  std::array<Point2, kNumLandmarks> pts;
  for (int i = 0; i < kNumLandmarks; ++i) {
    const json& p = arr[i];
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
      throw ValidationError(origin + ": landmark " + std::to_string(i) + " is not an [x, y] pair");
    pts[i] = {p[0].get<double>(), p[1].get<double>()};
  }
  return LandmarkSet(pts);
}

json landmarks_to_json(const LandmarkSet& points) {
  json arr = json::array();
  for (const auto& p : points.points()) arr.push_back({p.x, p.y});
  return arr;
}

// Index of each landmark's mirror partner in the 68-point iBUG layout.
constexpr std::array<int, kNumLandmarks> kMirror = {
    16, 15, 14, 13, 12, 11, 10, 9,  8,  7,  6,  5,  4,  3,  2,  1,  0,   // jaw
    26, 25, 24, 23, 22, 21, 20, 19, 18, 17,                              // brows
    27, 28, 29, 30,                                                      // nose bridge
    35, 34, 33, 32, 31,                                                  // nostrils
    45, 44, 43, 42, 47, 46, 39, 38, 37, 36, 41, 40,                      // eyes
    54, 53, 52, 51, 50, 49, 48, 59, 58, 57, 56, 55,                      // outer lip
    64, 63, 62, 61, 60, 67, 66, 65};                                     // inner lip

}  // namespace

LandmarkSet::LandmarkSet(const std::array<Point2, kNumLandmarks>& points) : points_(points) {
  for (const auto& p : points_)
    require(std::isfinite(p.x) && std::isfinite(p.y), "landmark coordinates must be finite");
  require(!collinear(points_), "landmarks are collinear");
}

Point2 AffineTransform::apply(const Point2& p) const {
  const Eigen::Vector2d q = A * Eigen::Vector2d(p.x, p.y) + t;
  return {q.x(), q.y()};
}

LandmarkSet AffineTransform::apply(const LandmarkSet& points) const {
  std::array<Point2, kNumLandmarks> out;
  for (int i = 0; i < kNumLandmarks; ++i) out[i] = apply(points[i]);
  return LandmarkSet(out);
}

AffineTransform AffineTransform::compose(const AffineTransform& other) const {
  AffineTransform T;
  T.A = A * other.A;
  T.t = A * other.t + t;
  return T;
}

ReferenceFace ReferenceFace::rescaled(int new_resolution) const {
  require(new_resolution > 0, "reference resolution must be positive");
  const double s = static_cast<double>(new_resolution) / resolution;
  std::array<Point2, kNumLandmarks> pts;
  for (int i = 0; i < kNumLandmarks; ++i)
    pts[i] = {(landmarks[i].x + 0.5) * s - 0.5, (landmarks[i].y + 0.5) * s - 0.5};
  return {LandmarkSet(pts), new_resolution};
}

AffineTransform estimate_affine(const LandmarkSet& src, const LandmarkSet& dst) {
  // Centre the source points so the normal equations stay well conditioned.
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& p : src.points()) mean += Eigen::Vector2d(p.x, p.y);
  mean /= kNumLandmarks;

  Eigen::Matrix3d normal = Eigen::Matrix3d::Zero();
  Eigen::Matrix<double, 3, 2> rhs = Eigen::Matrix<double, 3, 2>::Zero();
  for (int i = 0; i < kNumLandmarks; ++i) {
    const Eigen::Vector3d row(src[i].x - mean.x(), src[i].y - mean.y(), 1.0);
    normal += row * row.transpose();
    rhs += row * Eigen::RowVector2d(dst[i].x, dst[i].y);
  }
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(normal);
  const auto sv = svd.singularValues();
  if (!(sv(2) > kCollinearRatio * sv(0)))
    throw NumericalError("estimate_affine: singular system (degenerate source landmarks)");

  const Eigen::Matrix<double, 3, 2> solution = normal.ldlt().solve(rhs);
  AffineTransform T;
  T.A = solution.topRows<2>().transpose();
  T.t = solution.row(2).transpose() - T.A * mean;
  return T;
}

AffineTransform invert_affine(const AffineTransform& T) {
  const double det = T.A.determinant();
  const double scale = T.A.cwiseAbs().maxCoeff();
  if (!(std::abs(det) > 1e-14 * scale * scale) || !std::isfinite(det))
    throw NumericalError("invert_affine: singular linear part");
  AffineTransform inv;
  inv.A = T.A.inverse();
  inv.t = -inv.A * T.t;
  return inv;
}

Image warp_image(const Image& img, const AffineTransform& T, int out_h, int out_w) {
  require(out_h > 0 && out_w > 0, "warp_image: output size must be positive");
  const AffineTransform inv = invert_affine(T);
  const int h = img.height();
  const int w = img.width();
  Image out(out_h, out_w);
  auto sample = [&](int c, int y, int x) -> double {
    return (x >= 0 && x < w && y >= 0 && y < h) ? img.at(c, y, x) : 0.0;
  };
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x) {
      const Eigen::Vector2d s = inv.A * Eigen::Vector2d(x, y) + inv.t;
      const double fx0 = std::floor(s.x());
      const double fy0 = std::floor(s.y());
      if (fx0 < -1.0 || fy0 < -1.0 || fx0 > w || fy0 > h) continue;
      const int x0 = static_cast<int>(fx0);
      const int y0 = static_cast<int>(fy0);
      const double ax = s.x() - fx0;
      const double ay = s.y() - fy0;
      for (int c = 0; c < 3; ++c) {
        const double top = (1.0 - ax) * sample(c, y0, x0) + ax * sample(c, y0, x0 + 1);
        const double bottom = (1.0 - ax) * sample(c, y0 + 1, x0) + ax * sample(c, y0 + 1, x0 + 1);
        out.at(c, y, x) = (1.0 - ay) * top + ay * bottom;
      }
    }
  return out;
}

Mask warp_mask(const Mask& mask, const AffineTransform& T, int out_h, int out_w) {
  const AffineTransform inv = invert_affine(T);
  Mask out(out_h, out_w);
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x) {
      const Eigen::Vector2d s = inv.A * Eigen::Vector2d(x, y) + inv.t;
      const long sx = std::lround(s.x());
      const long sy = std::lround(s.y());
      if (sx >= 0 && sx < mask.width() && sy >= 0 && sy < mask.height())
        out.at(y, x) = mask.at(static_cast<int>(sy), static_cast<int>(sx));
    }
  return out;
}

double landmark_distance(const LandmarkSet& a, const LandmarkSet& b) {
  double sum = 0.0;
  for (int i = 0; i < kNumLandmarks; ++i) {
    const double dx = a[i].x - b[i].x;
    const double dy = a[i].y - b[i].y;
    sum += dx * dx + dy * dy;
  }
  return std::sqrt(sum);
}

LandmarkSet mirror_landmarks(const LandmarkSet& points, int width) {
  std::array<Point2, kNumLandmarks> out;
  for (int i = 0; i < kNumLandmarks; ++i) {
    const Point2& p = points[kMirror[i]];
    out[i] = {width - 1 - p.x, p.y};
  }
  return LandmarkSet(out);
}

LandmarkSet load_landmarks(const std::filesystem::path& path) {
  const json j = read_json(path);
  if (j.is_object()) {
    if (!j.contains("landmarks")) throw ValidationError(path.string() + ": missing \"landmarks\"");
    return landmarks_from_json(j["landmarks"], path.string());
  }
  return landmarks_from_json(j, path.string());
}

void save_landmarks(const LandmarkSet& points, const std::filesystem::path& path) {
  write_json(landmarks_to_json(points), path);
}

ReferenceFace load_reference(const std::filesystem::path& path) {
  const json j = read_json(path);
  if (!j.is_object() || !j.contains("resolution") || !j["resolution"].is_number_integer() ||
      !j.contains("landmarks"))
    throw ValidationError(path.string() + ": reference needs \"resolution\" and \"landmarks\"");
  ReferenceFace ref{landmarks_from_json(j["landmarks"], path.string()), j["resolution"].get<int>()};
  require(ref.resolution > 0, path.string() + ": resolution must be positive");
  for (const auto& p : ref.landmarks.points())
    require(p.x >= 0 && p.y >= 0 && p.x < ref.resolution && p.y < ref.resolution,
            path.string() + ": reference landmarks must lie inside the frame");
  return ref;
}

void save_reference(const ReferenceFace& ref, const std::filesystem::path& path) {
  write_json({{"resolution", ref.resolution}, {"landmarks", landmarks_to_json(ref.landmarks)}},
             path);
}

AffineTransform load_transform(const std::filesystem::path& path) {
  const json j = read_json(path);
  try {
    AffineTransform T;
    for (int r = 0; r < 2; ++r) {
      for (int c = 0; c < 2; ++c) T.A(r, c) = j.at("A").at(r).at(c).get<double>();
      T.t(r) = j.at("t").at(r).get<double>();
    }
    return T;
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": malformed transform: " + e.what());
  }
}

void save_transform(const AffineTransform& T, const std::filesystem::path& path) {
  write_json({{"A", {{T.A(0, 0), T.A(0, 1)}, {T.A(1, 0), T.A(1, 1)}}}, {"t", {T.t(0), T.t(1)}}},
             path);
}

}  // namespace faceswap
