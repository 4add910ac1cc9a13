#pragma once

// Cross-modal flow benchmark construction from LiDAR + calibrated cameras,
// sequence splitting, and EPE / F1 scoring.

#include <string>
#include <vector>

#include "xmflow/core.hpp"
#include "xmflow/geometry.hpp"
#include "xmflow/io.hpp"

namespace xmflow {

struct LidarFrame {
  std::vector<LidarPoint> points;  // LiDAR sensor frame, meters
};

/// Extrinsics map LiDAR-frame points into each camera frame.
struct CameraRig {
  CameraIntrinsics intrinsics_a;
  CameraIntrinsics intrinsics_b;
  RigidPose extrinsics_a;
  RigidPose extrinsics_b;

  void validate() const;
};

struct SparseFlowEntry {
  int u = 0;  // pixel in image B
  int v = 0;
  FlowVector flow;  // toward image A
};

struct SparseFlowGT {
  int width = 0;
  int height = 0;
  std::vector<SparseFlowEntry> entries;

  /// Dense field (valid only at labeled pixels) and its labeled mask.
  FlowField to_dense() const;
  static SparseFlowGT from_dense(const FlowField& dense);
};

struct OcclusionConfig {
  double radius_px = 1.0;
  double depth_m = 1.0;
};

struct LidarFlowResult {
  SparseFlowGT gt;
  std::vector<std::string> warnings;
};

/// Projects every point into both cameras and keeps those in-bounds with
/// positive depth in both and unoccluded in both. A point is occluded in an
/// image if another point projects within radius_px of it with a depth
/// smaller by more than depth_m. Among survivors sharing a pixel of image B
/// the nearest (in B) wins. Flow = pixel_A - pixel_B (subpixel projections),
/// keyed by the rounded pixel in B, entries sorted row-major.
LidarFlowResult lidar_to_flow(const LidarFrame& frame, const CameraRig& rig,
                              const OcclusionConfig& occlusion = {});

struct MetricReport {
  double epe = 0.0;
  double f1 = 0.0;  // percent
  std::size_t n_points = 0;

  // Raw sums for associative merging across frames.
  double epe_sum = 0.0;
  std::size_t outliers = 0;

  void merge(const MetricReport& other);
};

/// Outlier rule: endpoint error > 3 px and > 5% of the ground-truth magnitude.
bool is_outlier(double endpoint_error, double gt_magnitude);

/// Predictions are read at the exact integer GT pixel; an invalid prediction
/// counts as zero flow.
MetricReport score(const FlowField& prediction, const SparseFlowGT& gt);

struct FocalNormalized {
  ImageBuffer image;
  CameraIntrinsics intrinsics;
};

/// Rescales by target_f / fx horizontally and target_f / fy vertically
/// (coordinates scale about the origin pixel center: x' = s x), then
/// center-crops or zero-pads to target size. The crop offset is
/// floor((scaled - target) / 2) on each axis.
FocalNormalized focal_normalize(const ImageBuffer& image, const CameraIntrinsics& k,
                                double target_f, int target_width, int target_height);

struct SequenceSplit {
  std::vector<std::string> train;
  std::vector<std::string> test;
};

/// First floor(train_frac * N) frames train, the rest test.
SequenceSplit split_sequence(std::span<const std::string> frame_ids, double train_frac);
std::size_t split_train_count(std::size_t n, double train_frac);

}  // namespace xmflow
