#pragma once

#include "faceswap/geometry.hpp"
#include "faceswap/image.hpp"

namespace faceswap {

struct PoissonOptions {
  /// CG stops once ‖r‖₂ ≤ tolerance·‖b‖₂.
  double tolerance = 1e-12;
  /// 0 picks 2·unknowns + 100.
  int max_iterations = 0;
  /// Dense LDLᵀ solve when CG stalls on masks below this many pixels.
  int dense_fallback_limit = 64 * 64;
};

struct PoissonStats {
  int iterations = 0;         // worst channel
  double residual = 0.0;      // max-norm of the discrete Poisson residual, worst channel
  bool used_dense = false;
  double clamp_displacement = 0.0;
};

/// Solves, per channel and over the masked pixels, the 4-neighbour discrete
/// Poisson equation whose guidance field is the gradient of `src` and whose
/// Dirichlet boundary comes from `dst`. Pixels outside the mask are copied
/// from `dst`. The result is not clamped.
Tensor solve_poisson(const Image& src, const Image& dst, const Mask& mask,
                     const PoissonOptions& options = {}, PoissonStats* stats = nullptr);

/// Same system solved by a dense direct factorization. Intended for small
/// masks and verification.
Tensor solve_poisson_dense(const Image& src, const Image& dst, const Mask& mask);

/// Max-norm of the Poisson residual of `solution` over the masked pixels.
double poisson_residual(const Tensor& solution, const Image& src, const Mask& mask);

/// Seamless (normal) cloning of `src` into `dst` inside `mask`, clamped to
/// [0, 1]. Throws ValidationError for an empty mask, a mask touching the
/// border or mismatched sizes, NumericalError when the solver fails.
Image poisson_clone(const Image& src, const Image& dst, const Mask& mask,
                    PoissonStats* stats = nullptr);

/// Warps the aligned generated face back with `reference_to_original` and
/// clones it into `original` under `mask` (original-image coordinates).
Image composite_swap(const Image& original, const Image& generated_aligned,
                     const AffineTransform& reference_to_original, const Mask& mask,
                     PoissonStats* stats = nullptr);

}  // namespace faceswap
