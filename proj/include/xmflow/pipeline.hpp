#pragma once

// Manifests, configuration, seeded per-frame orchestration and the
// operations behind the command-line tool.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "xmflow/benchmark.hpp"
#include "xmflow/consistency.hpp"
#include "xmflow/geometry.hpp"
#include "xmflow/losses.hpp"
#include "xmflow/renderer.hpp"

namespace xmflow {

namespace fs = std::filesystem;

struct FocalTarget {
  double focal = 0.0;
  int width = 0;
  int height = 0;
  friend bool operator==(const FocalTarget&, const FocalTarget&) = default;
};

/// Training schedule; carried as metadata only, never executed here.
struct ScheduleMetadata {
  int iterations = 30000;
  int consistency_start = 10000;
  int batch_size = 4;
  friend bool operator==(const ScheduleMetadata&, const ScheduleMetadata&) = default;
};

struct PipelineConfig {
  std::uint64_t seed = 0;  // master seed
  PoseSamplingConfig pose;
  AffineSamplingConfig affine;
  TrimConfig trim;
  double photometric_threshold = kDefaultPhotometricThreshold;
  CombinedLossWeights loss_weights;
  std::optional<FocalTarget> focal_target;  // unset: native resolution
  double occlusion_radius_px = 1.0;
  double occlusion_depth_m = 1.0;
  double train_frac = 0.8;
  ScheduleMetadata schedule;

  void validate() const;
  friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;
};

/// Nested key-value text (JSON). Missing keys take defaults; unknown keys
/// are rejected with InvalidConfig.
PipelineConfig parse_config(const std::string& text);
std::string serialize_config(const PipelineConfig& cfg);
PipelineConfig load_config(const fs::path& path);

struct ManifestRecord {
  std::string sequence;
  std::string frame;
  std::string modality;
  std::string dataset = "default";
  fs::path image;
  std::optional<fs::path> depth;
  std::optional<fs::path> lidar;
  std::optional<CameraIntrinsics> intrinsics;
  std::optional<RigidPose> extrinsics;
};

struct Manifest {
  fs::path root;  // relative paths resolve against this
  std::vector<ManifestRecord> records;

  /// Distinct (sequence, frame) keys, sequences and frames in order of
  /// first appearance.
  std::vector<std::pair<std::string, std::vector<std::string>>> sequences() const;
};

/// Parses JSON {"records": [...]}; paths are resolved against root.
/// (sequence, frame, modality) must be unique. With check_paths, every
/// referenced file must exist; all missing ones are reported together.
Manifest parse_manifest(const std::string& text, const fs::path& root, bool check_paths = true);
Manifest load_manifest(const fs::path& path, bool check_paths = true);

CameraRig parse_rig(const std::string& text);
CameraRig load_rig(const fs::path& path);

/// Per-frame stream: (master seed, sequence, frame, branch tag).
Rng frame_rng(std::uint64_t master_seed, std::string_view sequence, std::string_view frame,
              std::string_view branch);

struct FlowTriplet {
  ImageBuffer source;
  ImageBuffer rendered;
  FlowField flow;
  ValidMask mask;
  Mask holes;
  CameraIntrinsics intrinsics;
  RigidPose pose;
  int bit_depth = 8;
};

/// Pose sampling, synthetic flow, forward rendering and the photometric mask.
/// Intrinsics are sampled when not given (drawn before the pose).
FlowTriplet make_triplet(const ImageBuffer& image, const DepthMap& depth,
                         const std::optional<CameraIntrinsics>& k, const PipelineConfig& cfg,
                         Rng& rng);
FlowTriplet make_triplet(const fs::path& image_path, const fs::path& depth_path,
                         const std::optional<CameraIntrinsics>& k, const PipelineConfig& cfg,
                         Rng& rng);

struct TripletCheck {
  bool passed = false;
  double self_loss = 0.0;           // masked_flow_loss(F_S, F_S, M)
  double max_roundtrip_error = 0.0; // over mask pixels
  std::size_t mask_pixels = 0;
};
TripletCheck check_triplet(const FlowTriplet& t, double threshold);

void write_triplet(const fs::path& dir, const FlowTriplet& t);

struct FrameIssue {
  std::string key;
  std::string message;
};

struct SynthesizeSummary {
  std::size_t written = 0;
  std::vector<FrameIssue> failures;
};

/// One triplet per record with a depth map, written to
/// out/<sequence>/<frame>/<modality>/. Output bytes are independent of the
/// worker count.
SynthesizeSummary run_synthesize(const Manifest& manifest, const fs::path& out,
                                 const PipelineConfig& cfg, unsigned workers = 1);

struct GtSummary {
  std::size_t written = 0;
  std::vector<FrameIssue> warnings;
};

/// One sparse GT per (sequence, frame) with a LiDAR file:
/// out/<sequence>/<frame>.flo and out/<sequence>/<frame>_mask.png.
GtSummary run_gt_from_lidar(const Manifest& manifest, const CameraRig& rig, const fs::path& out,
                            const PipelineConfig& cfg, unsigned workers = 1);

struct FrameScore {
  std::string dataset;
  std::string sequence;
  std::string frame;
  MetricReport report;
};

struct EvaluationReport {
  std::vector<FrameScore> frames;
  std::map<std::string, MetricReport> per_dataset;
  MetricReport aggregate;
  std::vector<FrameIssue> skipped;  // frames with empty ground truth
};

/// Scores the test split (per-sequence, train_frac from cfg). Predictions are
/// read from pred/<sequence>/<frame>.flo, GT from gt/<sequence>/<frame>.flo.
/// Every missing file is listed in a single Io error before anything is scored.
EvaluationReport run_evaluate(const Manifest& manifest, const fs::path& pred_dir,
                              const fs::path& gt_dir, const PipelineConfig& cfg);

/// JSON Lines: one record per frame, then one aggregate record.
std::string format_report_jsonl(const EvaluationReport& report);
/// Plain-text table with one EPE/F1 column pair per dataset.
std::string format_report_table(const EvaluationReport& report);

struct SplitReport {
  struct Sequence {
    std::string id;
    SequenceSplit split;
  };
  std::vector<Sequence> sequences;
  std::size_t train_total = 0;
  std::size_t test_total = 0;
};
SplitReport split_manifest(const Manifest& manifest, double train_frac);

/// Hue from flow angle, saturation from magnitude / max magnitude (or the
/// given normalisation), full value; invalid pixels black.
ImageBuffer flow_to_color(const FlowField& flow, double max_magnitude = 0.0);

}  // namespace xmflow
