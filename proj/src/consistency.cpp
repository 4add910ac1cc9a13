#include "xmflow/consistency.hpp"

#include <Eigen/Dense>
#include <numbers>

namespace xmflow {

AffineTransform2D AffineTransform2D::inverse() const {
  if (!invertible()) fail(ErrorKind::InvalidInput, "affine transform is singular");
  const Mat2 mi = m.inverse();
  return {mi, -(mi * t)};
}

void AffineSamplingConfig::validate() const {
  auto ok = [](const Range& r) { return std::isfinite(r.lo) && std::isfinite(r.hi) && r.lo <= r.hi; };
  if (!ok(scale) || !ok(rotation_deg) || !ok(translation_px))
    fail(ErrorKind::InvalidConfig, "affine sampling ranges must be finite with lo <= hi");
  if (!(scale.lo > 0.0)) fail(ErrorKind::InvalidConfig, "affine scale bounds must be > 0");
}

AffineTransform2D sample_affine(const AffineSamplingConfig& cfg, Rng& rng) {
  cfg.validate();
  const double s = rng.uniform(cfg.scale.lo, cfg.scale.hi);
  const double theta = rng.uniform(cfg.rotation_deg.lo, cfg.rotation_deg.hi) * std::numbers::pi / 180.0;
  const double tx = rng.uniform(cfg.translation_px.lo, cfg.translation_px.hi);
  const double ty = rng.uniform(cfg.translation_px.lo, cfg.translation_px.hi);
  const double c = std::cos(theta);
  const double sn = std::sin(theta);
  AffineTransform2D a;
  a.m << s * c, -s * sn, s * sn, s * c;
  a.t = Vec2(tx, ty);
  return a;
}

AffineTransform2D affine_about(double scale, double angle_deg, const Vec2& center) {
  const double theta = angle_deg * std::numbers::pi / 180.0;
  AffineTransform2D a;
  a.m << scale * std::cos(theta), -scale * std::sin(theta), scale * std::sin(theta), scale * std::cos(theta);
  a.t = center - a.m * center;
  return a;
}

WarpResult warp_image_affine(const ImageBuffer& image, const AffineTransform2D& a) {
  const AffineTransform2D inv = a.inverse();
  const int w = image.width();
  const int h = image.height();
  WarpResult out{ImageBuffer(w, h, image.channels(), 0.0), Mask(w, h, false)};
  double px[3];
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      const Vec2 src = inv.apply(Vec2(u, v));
      if (!bilinear_sample(image, src.x(), src.y(), std::span<double>(px, 3))) continue;
      for (int c = 0; c < image.channels(); ++c) out.image.at(u, v, c) = px[c];
      out.in_bounds.set(u, v, true);
    }
  return out;
}

FlowField derive_transformed_flow(const FlowField& flow, const AffineTransform2D& a) {
  const AffineTransform2D inv = a.inverse();
  const int w = flow.width();
  const int h = flow.height();
  FlowField out(w, h, {}, false);
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      const Vec2 src = inv.apply(Vec2(u, v));
      const BilinearFootprint fp = bilinear_footprint(src.x(), src.y(), w, h);
      if (!fp.inside) continue;
      const int u1 = fp.au > 0.0 ? fp.u0 + 1 : fp.u0;
      const int v1 = fp.av > 0.0 ? fp.v0 + 1 : fp.v0;
      if (!flow.valid.at(fp.u0, fp.v0) || !flow.valid.at(u1, fp.v0) || !flow.valid.at(fp.u0, v1) ||
          !flow.valid.at(u1, v1))
        continue;
      auto lerp2 = [&](double FlowVector::*c) {
        const double top = (1.0 - fp.au) * (flow.flow(fp.u0, fp.v0).*c) + fp.au * (flow.flow(u1, fp.v0).*c);
        const double bot = (1.0 - fp.au) * (flow.flow(fp.u0, v1).*c) + fp.au * (flow.flow(u1, v1).*c);
        return (1.0 - fp.av) * top + fp.av * bot;
      };
      const Vec2 f = a.m * Vec2(lerp2(&FlowVector::u), lerp2(&FlowVector::v));
      out.flow(u, v) = {f.x(), f.y()};
      out.valid.set(u, v, true);
    }
  return out;
}

double consistency_loss(const FlowField& predicted_augmented, const FlowField& reference,
                        const TrimConfig& cfg) {
  if (!predicted_augmented.same_shape(reference.width(), reference.height()))
    fail(ErrorKind::InvalidInput, "consistency_loss: flow sizes differ");
  Mask joint(reference.width(), reference.height(), false);
  for (std::size_t i = 0; i < joint.size(); ++i)
    joint[i] = (predicted_augmented.valid[i] && reference.valid[i]) ? 1 : 0;
  if (!joint.any()) fail(ErrorKind::EmptyInput, "consistency_loss: no jointly valid pixels");
  return trimmed_flow_loss(predicted_augmented, reference, joint, cfg).value;
}

}  // namespace xmflow
