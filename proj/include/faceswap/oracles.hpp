#pragma once

#include <functional>
#include <vector>

#include "faceswap/geometry.hpp"
#include "faceswap/image.hpp"
#include "faceswap/lightnet.hpp"
#include "faceswap/tensor.hpp"

// Brute-force reference implementations. Deliberately naive: plain loops over
// raw values, no shared helpers with the production code paths.
namespace faceswap::oracle {

using Vec = std::vector<double>;

double content_loss(const Tensor& gen, const Tensor& content);

/// Row-major locations; each patch flattened channel, row, column.
std::vector<Vec> patches(const Tensor& f, int k);

/// Zero vectors (norm ≤ 1e-8): identical to each other, orthogonal to the rest.
double cosine_distance(const Vec& u, const Vec& v);

/// styles[j][i] is patch i of style j.
std::vector<int> nn_select(const std::vector<Vec>& gen, const std::vector<std::vector<Vec>>& styles);
double style_loss(const std::vector<Vec>& gen, const std::vector<std::vector<Vec>>& styles);

double landmark_distance(const LandmarkSet& a, const LandmarkSet& b);
std::vector<int> select_style_subset(const LandmarkSet& x, const std::vector<LandmarkSet>& styles, int n_best);

double tv_loss(const Tensor& img);

/// Rec. 601 luma per pixel.
Tensor luminance(const Tensor& rgb);

double light_loss(const Tensor& gen_lum, const Tensor& content_lum, const LightNet& net);

/// Central difference of `f` along single tensor entries (c, y, x).
struct Coord {
  int c, y, x;
};
std::vector<double> central_differences(const std::function<double(const Tensor&)>& f, const Tensor& at,
                                        const std::vector<Coord>& coords, double step);

/// Bilinear sample with zero outside the image.
double bilinear(const Tensor& img, int c, double y, double x);

}  // namespace faceswap::oracle
