#pragma once

// Pinhole camera model, rigid poses, lifting/reprojection and dense
// depth-induced flow.
//
// Pixel convention: pixel centers sit at integer coordinates, origin at the
// top-left pixel, u grows rightward and v downward.

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "xmflow/core.hpp"

namespace xmflow {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  Vec3 vec() const { return {x, y, z}; }
  static Point3 of(const Vec3& v) { return {v.x(), v.y(), v.z()}; }
};

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  /// Throws InvalidInput for non-positive focal lengths or image size.
  void validate() const;
  /// Human-readable warnings for a principal point outside the image.
  std::vector<std::string> warnings() const;

  Mat3 matrix() const;
  Mat3 inverse_matrix() const;

  friend bool operator==(const CameraIntrinsics&, const CameraIntrinsics&) = default;
};

/// Default minimum depth in front of the camera for a valid projection.
inline constexpr double kDefaultMinDepth = 1e-3;

/// true iff |R^T R - I|_inf <= 1e-6 and det(R) within 1e-6 of +1.
bool rotation_validity_check(const Mat3& r);

struct RigidPose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidPose identity() { return {}; }
  /// Throws InvalidInput when the rotation fails rotation_validity_check.
  void validate() const;
  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  RigidPose inverse() const;
  /// (this * other)(p) = this(other(p)).
  RigidPose compose(const RigidPose& other) const;
};

struct Projection {
  Pixel pixel;
  double depth = 0.0;
  bool valid = false;  // false when the transformed depth is <= z_min
};

/// depth * K^-1 [u, v, 1]^T. Result z equals depth exactly.
Point3 lift(Pixel x, double depth, const CameraIntrinsics& k);

Projection reproject(const Point3& point, const CameraIntrinsics& k, const RigidPose& pose,
                     double z_min = kDefaultMinDepth);

/// Flow from every valid source pixel to its reprojection under pose.
/// Invalid depth, behind-camera and out-of-image targets are invalid.
FlowField synth_flow(const DepthMap& depth, const CameraIntrinsics& k, const RigidPose& pose,
                     double z_min = kDefaultMinDepth);

/// Same as synth_flow but also returns the projected depth of each pixel in
/// the novel view (needed by the z-buffer). Entries are 0 where invalid.
struct SynthFlowResult {
  FlowField flow;
  Grid<double> projected_depth;
};
SynthFlowResult synth_flow_with_depth(const DepthMap& depth, const CameraIntrinsics& k,
                                      const RigidPose& pose, double z_min = kDefaultMinDepth);

struct PoseSamplingConfig {
  double max_rotation_deg = 5.0;
  double max_translation_frac = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const PoseSamplingConfig&, const PoseSamplingConfig&) = default;
};

/// Rotation about x, y, z by the given angles (radians), composed Rz * Ry * Rx.
Mat3 euler_zyx(double rx, double ry, double rz);

/// Per-axis angles uniform in +-max_rotation_deg composed Z*Y*X, translation
/// uniform in +-max_translation_frac * median_depth per component.
/// Draw order: rx, ry, rz, tx, ty, tz.
RigidPose sample_pose(const PoseSamplingConfig& cfg, double median_depth, Rng& rng);

/// Intrinsics when only depth is available: focal uniform in
/// [0.8, 1.5] * width (fx = fy), principal point at the image center.
CameraIntrinsics sample_intrinsics(int width, int height, Rng& rng);

}  // namespace xmflow
