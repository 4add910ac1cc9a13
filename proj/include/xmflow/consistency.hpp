#pragma once

// Affine augmentation of image pairs and the flow it induces.
//
// The same transform A(x) = m x + t is applied to both images of a pair. A
// pixel x~ of the augmented second image comes from x = A^-1(x~); its match
// x + F(x) in the first image lands at A(x + F(x)), so the augmented flow is
//   F~(x~) = A(x + F(x)) - x~ = m F(A^-1 x~).

#include <Eigen/Core>
#include <Eigen/LU>

#include "xmflow/core.hpp"
#include "xmflow/losses.hpp"
#include "xmflow/renderer.hpp"

namespace xmflow {

using Mat2 = Eigen::Matrix2d;
using Vec2 = Eigen::Vector2d;

struct AffineTransform2D {
  Mat2 m = Mat2::Identity();
  Vec2 t = Vec2::Zero();

  static AffineTransform2D identity() { return {}; }
  bool invertible() const { return std::abs(m.determinant()) > 1e-8; }
  /// Throws InvalidInput when |det m| <= 1e-8.
  AffineTransform2D inverse() const;
  Vec2 apply(const Vec2& x) const { return m * x + t; }
};

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  friend bool operator==(const Range&, const Range&) = default;
};

struct AffineSamplingConfig {
  Range scale{0.9, 1.1};
  Range rotation_deg{-10.0, 10.0};
  Range translation_px{-10.0, 10.0};
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const AffineSamplingConfig&, const AffineSamplingConfig&) = default;
};

/// m = s * R(theta), t = (tx, ty); draw order s, theta, tx, ty.
AffineTransform2D sample_affine(const AffineSamplingConfig& cfg, Rng& rng);

/// Rotation by angle_deg and uniform scale about the given center.
AffineTransform2D affine_about(double scale, double angle_deg, const Vec2& center);

/// Augmented(x~) = bilinear(image, A^-1 x~); in_bounds false where the
/// footprint leaves the image.
WarpResult warp_image_affine(const ImageBuffer& image, const AffineTransform2D& a);

/// F~(x~) = m * F(A^-1 x~) with F bilinearly interpolated; valid only where
/// every weighted neighbor of F is valid and inside.
FlowField derive_transformed_flow(const FlowField& flow, const AffineTransform2D& a);

/// Trimmed L1 loss over the intersection of both valid masks.
double consistency_loss(const FlowField& predicted_augmented, const FlowField& reference,
                        const TrimConfig& cfg);

}  // namespace xmflow
