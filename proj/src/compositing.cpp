#include "faceswap/compositing.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include <Eigen/Dense>

#include "faceswap/error.hpp"

namespace faceswap {

namespace {

constexpr int kDy[4] = {-1, 1, 0, 0};
constexpr int kDx[4] = {0, 0, -1, 1};

// Masked pixels enumerated in row-major order, with a lookup back from pixels.
struct Unknowns {
  std::vector<std::pair<int, int>> pixels;  // (y, x)
  std::vector<int> index;                   // per pixel, -1 outside the mask
  int width = 0;

  int at(int y, int x) const { return index[static_cast<std::size_t>(y) * width + x]; }
};

Unknowns enumerate(const Mask& mask) {
  Unknowns u;
  u.width = mask.width();
  u.index.assign(static_cast<std::size_t>(mask.height()) * mask.width(), -1);
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x)
      if (mask.inside(y, x)) {
        u.index[static_cast<std::size_t>(y) * mask.width() + x] = static_cast<int>(u.pixels.size());
        u.pixels.emplace_back(y, x);
      }
  return u;
}

void validate(const Image& src, const Image& dst, const Mask& mask) {
  require(src.height() == dst.height() && src.width() == dst.width(),
          "poisson_clone: source and destination sizes differ");
  require(mask.height() == dst.height() && mask.width() == dst.width(),
          "poisson_clone: mask size differs from the images");
  require(mask.count() > 0, "poisson_clone: mask is empty");
  require(!mask.touches_border(), "poisson_clone: mask touches the image border");
}

// Right-hand side for channel c: source Laplacian plus boundary values.
Eigen::VectorXd rhs(const Image& src, const Image& dst, const Unknowns& u, int c) {
  Eigen::VectorXd b(u.pixels.size());
  for (std::size_t i = 0; i < u.pixels.size(); ++i) {
    const auto [y, x] = u.pixels[i];
    double v = 0.0;
    for (int n = 0; n < 4; ++n) {
      const int ny = y + kDy[n], nx = x + kDx[n];
      v += src.at(c, y, x) - src.at(c, ny, nx);
      if (u.at(ny, nx) < 0) v += dst.at(c, ny, nx);
    }
    b[static_cast<Eigen::Index>(i)] = v;
  }
  return b;
}

// y = A·x with A = 4I − adjacency restricted to the mask.
void apply_laplacian(const Unknowns& u, const Eigen::VectorXd& x, Eigen::VectorXd& y) {
  for (std::size_t i = 0; i < u.pixels.size(); ++i) {
    const auto [py, px] = u.pixels[i];
    double v = 4.0 * x[static_cast<Eigen::Index>(i)];
    for (int n = 0; n < 4; ++n) {
      const int j = u.at(py + kDy[n], px + kDx[n]);
      if (j >= 0) v -= x[j];
    }
    y[static_cast<Eigen::Index>(i)] = v;
  }
}

// Plain CG (the diagonal is constant, so Jacobi preconditioning is a no-op).
int conjugate_gradient(const Unknowns& u, const Eigen::VectorXd& b, Eigen::VectorXd& x,
                       double tolerance, int max_iterations, bool& converged) {
  const Eigen::Index n = b.size();
  Eigen::VectorXd r(n), p(n), Ap(n);
  apply_laplacian(u, x, Ap);
  r = b - Ap;
  p = r;
  double rr = r.squaredNorm();
  const double target = tolerance * tolerance * std::max(b.squaredNorm(), 1e-300);
  int it = 0;
  converged = rr <= target;
  while (!converged && it < max_iterations) {
    apply_laplacian(u, p, Ap);
    const double alpha = rr / p.dot(Ap);
    x += alpha * p;
    r -= alpha * Ap;
    ++it;
    // Refresh the recursive residual periodically to limit drift.
    if (it % 50 == 0) {
      apply_laplacian(u, x, Ap);
      r = b - Ap;
    }
    const double rr_new = r.squaredNorm();
    converged = rr_new <= target;
    p = r + (rr_new / rr) * p;
    rr = rr_new;
  }
  return it;
}

Eigen::MatrixXd dense_laplacian(const Unknowns& u) {
  const auto n = static_cast<Eigen::Index>(u.pixels.size());
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto [y, x] = u.pixels[i];
    A(i, i) = 4.0;
    for (int k = 0; k < 4; ++k) {
      const int j = u.at(y + kDy[k], x + kDx[k]);
      if (j >= 0) A(i, j) = -1.0;
    }
  }
  return A;
}

Tensor scatter(const Image& dst, const Unknowns& u, const std::vector<Eigen::VectorXd>& channels) {
  Tensor out = dst.tensor();
  for (int c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < u.pixels.size(); ++i)
      out(c, u.pixels[i].first, u.pixels[i].second) = channels[c][static_cast<Eigen::Index>(i)];
  return out;
}

}  // namespace

Tensor solve_poisson(const Image& src, const Image& dst, const Mask& mask,
                     const PoissonOptions& options, PoissonStats* stats) {
  validate(src, dst, mask);
  const Unknowns u = enumerate(mask);
  const int n = static_cast<int>(u.pixels.size());
  const int max_it = options.max_iterations > 0 ? options.max_iterations : 2 * n + 100;
  std::vector<Eigen::VectorXd> solved(3);
  PoissonStats local;
  std::optional<Eigen::LDLT<Eigen::MatrixXd>> dense;
  for (int c = 0; c < 3; ++c) {
    const Eigen::VectorXd b = rhs(src, dst, u, c);
    // dst inside the mask is the initial guess.
    Eigen::VectorXd x(n);
    for (int i = 0; i < n; ++i) x[i] = dst.at(c, u.pixels[i].first, u.pixels[i].second);
    bool converged = false;
    const int it = conjugate_gradient(u, b, x, options.tolerance, max_it, converged);
    local.iterations = std::max(local.iterations, it);
    if (!converged) {
      if (n > options.dense_fallback_limit)
        throw NumericalError("poisson_clone: conjugate gradient did not converge in " +
                             std::to_string(max_it) + " iterations");
      if (!dense) dense.emplace(dense_laplacian(u));
      x = dense->solve(b);
      local.used_dense = true;
    }
    solved[c] = std::move(x);
  }
  Tensor out = scatter(dst, u, solved);
  local.residual = poisson_residual(out, src, mask);
  if (stats) *stats = local;
  return out;
}

Tensor solve_poisson_dense(const Image& src, const Image& dst, const Mask& mask) {
  validate(src, dst, mask);
  const Unknowns u = enumerate(mask);
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(dense_laplacian(u));
  std::vector<Eigen::VectorXd> solved(3);
  for (int c = 0; c < 3; ++c) solved[c] = ldlt.solve(rhs(src, dst, u, c));
  return scatter(dst, u, solved);
}

double poisson_residual(const Tensor& solution, const Image& src, const Mask& mask) {
  double worst = 0.0;
  for (int c = 0; c < 3; ++c)
    for (int y = 1; y + 1 < mask.height(); ++y)
      for (int x = 1; x + 1 < mask.width(); ++x) {
        if (!mask.inside(y, x)) continue;
        double r = 0.0;
        for (int n = 0; n < 4; ++n) {
          const int ny = y + kDy[n], nx = x + kDx[n];
          r += (solution(c, y, x) - solution(c, ny, nx)) - (src.at(c, y, x) - src.at(c, ny, nx));
        }
        worst = std::max(worst, std::abs(r));
      }
  return worst;
}

Image poisson_clone(const Image& src, const Image& dst, const Mask& mask, PoissonStats* stats) {
  PoissonStats local;
  Image out(solve_poisson(src, dst, mask, {}, &local));
  local.clamp_displacement = out.clamp_unit();
  if (stats) *stats = local;
  return out;
}

Image composite_swap(const Image& original, const Image& generated_aligned,
                     const AffineTransform& reference_to_original, const Mask& mask,
                     PoissonStats* stats) {
  const Image warped =
      warp_image(generated_aligned, reference_to_original, original.height(), original.width());
  return poisson_clone(warped, original, mask, stats);
}

}  // namespace faceswap
