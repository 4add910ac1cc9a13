#include "xmflow/geometry.hpp"

#include <Eigen/Dense>
#include <numbers>

namespace xmflow {

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(fx) || !std::isfinite(fy))
    fail(ErrorKind::InvalidInput, "focal lengths must be finite and positive");
  if (!std::isfinite(cx) || !std::isfinite(cy))
    fail(ErrorKind::InvalidInput, "principal point must be finite");
  if (width < 1 || height < 1) fail(ErrorKind::InvalidInput, "image size must be at least 1x1");
}

std::vector<std::string> CameraIntrinsics::warnings() const {
  std::vector<std::string> out;
  if (cx < 0.0 || cx >= width) out.emplace_back("principal point cx outside [0, width)");
  if (cy < 0.0 || cy >= height) out.emplace_back("principal point cy outside [0, height)");
  return out;
}

Mat3 CameraIntrinsics::matrix() const {
  Mat3 k;
  k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

Mat3 CameraIntrinsics::inverse_matrix() const {
  Mat3 k;
  k << 1.0 / fx, 0.0, -cx / fx, 0.0, 1.0 / fy, -cy / fy, 0.0, 0.0, 1.0;
  return k;
}

bool rotation_validity_check(const Mat3& r) {
  if (!r.allFinite()) return false;
  const double ortho = (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
  const double det = r.determinant();
  return ortho <= 1e-6 && det >= 1.0 - 1e-6 && det <= 1.0 + 1e-6;
}

void RigidPose::validate() const {
  if (!rotation_validity_check(rotation))
    fail(ErrorKind::InvalidInput, "pose rotation is not a proper rotation matrix");
  if (!translation.allFinite()) fail(ErrorKind::InvalidInput, "pose translation is not finite");
}

RigidPose RigidPose::inverse() const {
  RigidPose inv;
  inv.rotation = rotation.transpose();
  inv.translation = -(inv.rotation * translation);
  return inv;
}

RigidPose RigidPose::compose(const RigidPose& other) const {
  return {rotation * other.rotation, rotation * other.translation + translation};
}

Point3 lift(Pixel x, double depth, const CameraIntrinsics& k) {
  if (!std::isfinite(depth) || !(depth > 0.0))
    fail(ErrorKind::InvalidInput, "lift requires a finite positive depth");
  // Written out rather than via K^-1 so that z == depth bit-exactly.
  return {depth * (x.u - k.cx) / k.fx, depth * (x.v - k.cy) / k.fy, depth};
}

Projection reproject(const Point3& point, const CameraIntrinsics& k, const RigidPose& pose,
                     double z_min) {
  const Vec3 p = pose.apply(point.vec());
  Projection out;
  out.depth = p.z();
  if (!(p.z() > z_min) || !p.allFinite()) return out;
  out.pixel = {k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy};
  out.valid = true;
  return out;
}

SynthFlowResult synth_flow_with_depth(const DepthMap& depth, const CameraIntrinsics& k,
                                      const RigidPose& pose, double z_min) {
  k.validate();
  if (depth.width() != k.width || depth.height() != k.height)
    fail(ErrorKind::InvalidInput, "depth map size does not match intrinsics");
  if (!depth.valid.any()) fail(ErrorKind::EmptyInput, "depth map has no valid pixels");

  const int w = depth.width();
  const int h = depth.height();
  SynthFlowResult out{FlowField(w, h, {}, false), Grid<double>(w, h, 0.0)};
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      if (!depth.usable(u, v)) continue;
      const Pixel x{static_cast<double>(u), static_cast<double>(v)};
      const Projection pr = reproject(lift(x, depth.depth(u, v), k), k, pose, z_min);
      if (!pr.valid) continue;
      // Target must land on a pixel of the novel view (nearest-pixel rule).
      const double ru = std::nearbyint(pr.pixel.u);
      const double rv = std::nearbyint(pr.pixel.v);
      if (ru < 0.0 || rv < 0.0 || ru > w - 1 || rv > h - 1) continue;
      out.flow.flow(u, v) = {pr.pixel.u - x.u, pr.pixel.v - x.v};
      out.flow.valid.set(u, v, true);
      out.projected_depth(u, v) = pr.depth;
    }
  }
  return out;
}

FlowField synth_flow(const DepthMap& depth, const CameraIntrinsics& k, const RigidPose& pose,
                     double z_min) {
  return synth_flow_with_depth(depth, k, pose, z_min).flow;
}

void PoseSamplingConfig::validate() const {
  if (!(max_rotation_deg >= 0.0) || !(max_translation_frac >= 0.0) ||
      !std::isfinite(max_rotation_deg) || !std::isfinite(max_translation_frac))
    fail(ErrorKind::InvalidConfig, "pose sampling bounds must be finite and >= 0");
}

Mat3 euler_zyx(double rx, double ry, double rz) {
  using Eigen::AngleAxisd;
  const Mat3 x = AngleAxisd(rx, Vec3::UnitX()).toRotationMatrix();
  const Mat3 y = AngleAxisd(ry, Vec3::UnitY()).toRotationMatrix();
  const Mat3 z = AngleAxisd(rz, Vec3::UnitZ()).toRotationMatrix();
  return z * y * x;
}

RigidPose sample_pose(const PoseSamplingConfig& cfg, double median_depth, Rng& rng) {
  cfg.validate();
  if (!(median_depth > 0.0) || !std::isfinite(median_depth))
    fail(ErrorKind::InvalidInput, "median depth must be finite and positive");
  const double a = cfg.max_rotation_deg * std::numbers::pi / 180.0;
  const double rx = rng.uniform(-a, a);
  const double ry = rng.uniform(-a, a);
  const double rz = rng.uniform(-a, a);
  const double t = cfg.max_translation_frac * median_depth;
  const double tx = rng.uniform(-t, t);
  const double ty = rng.uniform(-t, t);
  const double tz = rng.uniform(-t, t);
  return {euler_zyx(rx, ry, rz), Vec3(tx, ty, tz)};
}

CameraIntrinsics sample_intrinsics(int width, int height, Rng& rng) {
  if (width < 1 || height < 1) fail(ErrorKind::InvalidInput, "image size must be at least 1x1");
  const double f = rng.uniform(0.8, 1.5) * width;
  return {f, f, 0.5 * (width - 1), 0.5 * (height - 1), width, height};
}

}  // namespace xmflow
