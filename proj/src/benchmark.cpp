#include "xmflow/benchmark.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "xmflow/renderer.hpp"

namespace xmflow {

void CameraRig::validate() const {
  intrinsics_a.validate();
  intrinsics_b.validate();
  extrinsics_a.validate();
  extrinsics_b.validate();
}

FlowField SparseFlowGT::to_dense() const {
  FlowField f(width, height, {}, false);
  for (const auto& e : entries) {
    f.flow(e.u, e.v) = e.flow;
    f.valid.set(e.u, e.v, true);
  }
  return f;
}

SparseFlowGT SparseFlowGT::from_dense(const FlowField& dense) {
  SparseFlowGT gt{dense.width(), dense.height(), {}};
  for (int v = 0; v < dense.height(); ++v)
    for (int u = 0; u < dense.width(); ++u)
      if (dense.valid.at(u, v)) gt.entries.push_back({u, v, dense.flow(u, v)});
  return gt;
}

namespace {

struct Projected {
  double u = 0.0, v = 0.0, depth = 0.0;
  bool valid = false;
};

std::int64_t cell_key(std::int64_t cu, std::int64_t cv) { return (cu << 32) ^ (cv & 0xffffffff); }

/// Marks points occluded in one image: another point within radius with a
/// depth smaller by more than depth_m.
std::vector<bool> occluded_in(const std::vector<Projected>& proj, const OcclusionConfig& occ) {
  const double cell = std::max(occ.radius_px, 1.0);
  std::unordered_map<std::int64_t, std::vector<std::size_t>> grid;
  for (std::size_t i = 0; i < proj.size(); ++i) {
    if (!proj[i].valid) continue;
    const auto cu = static_cast<std::int64_t>(std::floor(proj[i].u / cell));
    const auto cv = static_cast<std::int64_t>(std::floor(proj[i].v / cell));
    grid[cell_key(cu, cv)].push_back(i);
  }
  std::vector<bool> occluded(proj.size(), false);
  const double r2 = occ.radius_px * occ.radius_px;
  for (std::size_t i = 0; i < proj.size(); ++i) {
    if (!proj[i].valid) continue;
    const auto cu = static_cast<std::int64_t>(std::floor(proj[i].u / cell));
    const auto cv = static_cast<std::int64_t>(std::floor(proj[i].v / cell));
    for (std::int64_t du = -1; du <= 1 && !occluded[i]; ++du)
      for (std::int64_t dv = -1; dv <= 1 && !occluded[i]; ++dv) {
        const auto it = grid.find(cell_key(cu + du, cv + dv));
        if (it == grid.end()) continue;
        for (std::size_t j : it->second) {
          if (j == i) continue;
          const double eu = proj[j].u - proj[i].u;
          const double ev = proj[j].v - proj[i].v;
          if (eu * eu + ev * ev <= r2 && proj[j].depth < proj[i].depth - occ.depth_m) {
            occluded[i] = true;
            break;
          }
        }
      }
  }
  return occluded;
}

std::vector<Projected> project_all(const LidarFrame& frame, const CameraIntrinsics& k,
                                   const RigidPose& extrinsics) {
  std::vector<Projected> out;
  out.reserve(frame.points.size());
  for (const auto& p : frame.points) {
    const Projection pr = reproject({p.x, p.y, p.z}, k, extrinsics);
    out.push_back({pr.pixel.u, pr.pixel.v, pr.depth, pr.valid});
  }
  return out;
}

bool rounds_inside(const Projected& p, const CameraIntrinsics& k) {
  const double ru = std::nearbyint(p.u);
  const double rv = std::nearbyint(p.v);
  return ru >= 0.0 && rv >= 0.0 && ru <= k.width - 1 && rv <= k.height - 1;
}

}  // namespace

LidarFlowResult lidar_to_flow(const LidarFrame& frame, const CameraRig& rig,
                              const OcclusionConfig& occlusion) {
  if (frame.points.empty()) fail(ErrorKind::EmptyInput, "lidar_to_flow: frame has no points");
  rig.validate();
  if (!(occlusion.radius_px >= 0.0) || !(occlusion.depth_m >= 0.0))
    fail(ErrorKind::InvalidConfig, "occlusion radius and depth gap must be >= 0");

  const auto pa = project_all(frame, rig.intrinsics_a, rig.extrinsics_a);
  const auto pb = project_all(frame, rig.intrinsics_b, rig.extrinsics_b);
  const auto occ_a = occluded_in(pa, occlusion);
  const auto occ_b = occluded_in(pb, occlusion);

  // Nearest point (in B) per pixel of B among survivors.
  std::unordered_map<std::int64_t, std::size_t> winner;
  for (std::size_t i = 0; i < frame.points.size(); ++i) {
    if (!pa[i].valid || !pb[i].valid || occ_a[i] || occ_b[i]) continue;
    if (!rounds_inside(pa[i], rig.intrinsics_a) || !rounds_inside(pb[i], rig.intrinsics_b)) continue;
    const auto key = cell_key(static_cast<std::int64_t>(std::nearbyint(pb[i].u)),
                              static_cast<std::int64_t>(std::nearbyint(pb[i].v)));
    auto [it, inserted] = winner.try_emplace(key, i);
    if (!inserted && pb[i].depth < pb[it->second].depth) it->second = i;
  }

  LidarFlowResult out;
  out.gt.width = rig.intrinsics_b.width;
  out.gt.height = rig.intrinsics_b.height;
  for (const auto& [key, i] : winner) {
    out.gt.entries.push_back({static_cast<int>(std::nearbyint(pb[i].u)),
                              static_cast<int>(std::nearbyint(pb[i].v)),
                              {pa[i].u - pb[i].u, pa[i].v - pb[i].v}});
  }
  std::sort(out.gt.entries.begin(), out.gt.entries.end(),
            [](const SparseFlowEntry& a, const SparseFlowEntry& b) {
              return a.v < b.v || (a.v == b.v && a.u < b.u);
            });
  if (out.gt.entries.empty()) out.warnings.emplace_back("no LiDAR point survived projection");
  return out;
}

void MetricReport::merge(const MetricReport& other) {
  epe_sum += other.epe_sum;
  outliers += other.outliers;
  n_points += other.n_points;
  epe = n_points ? epe_sum / static_cast<double>(n_points) : 0.0;
  f1 = n_points ? 100.0 * static_cast<double>(outliers) / static_cast<double>(n_points) : 0.0;
}

bool is_outlier(double endpoint_error, double gt_magnitude) {
  return endpoint_error > 3.0 && endpoint_error > 0.05 * gt_magnitude;
}

MetricReport score(const FlowField& prediction, const SparseFlowGT& gt) {
  if (gt.entries.empty()) fail(ErrorKind::EmptyInput, "score: ground truth has no entries");
  if (prediction.width() < gt.width || prediction.height() < gt.height)
    fail(ErrorKind::InvalidInput, "score: prediction does not cover the ground-truth image");
  std::vector<double> errors;
  errors.reserve(gt.entries.size());
  MetricReport r;
  for (const auto& e : gt.entries) {
    if (!prediction.flow.contains(e.u, e.v))
      fail(ErrorKind::InvalidInput, "score: ground-truth pixel outside prediction");
    const FlowVector p = prediction.valid.at(e.u, e.v) ? prediction.flow(e.u, e.v) : FlowVector{};
    const double err = std::hypot(p.u - e.flow.u, p.v - e.flow.v);
    errors.push_back(err);
    if (is_outlier(err, std::hypot(e.flow.u, e.flow.v))) ++r.outliers;
  }
  r.n_points = errors.size();
  r.epe_sum = pairwise_sum(errors);
  r.epe = r.epe_sum / static_cast<double>(r.n_points);
  r.f1 = 100.0 * static_cast<double>(r.outliers) / static_cast<double>(r.n_points);
  return r;
}

FocalNormalized focal_normalize(const ImageBuffer& image, const CameraIntrinsics& k,
                                double target_f, int target_width, int target_height) {
  k.validate();
  if (!(target_f > 0.0) || !std::isfinite(target_f))
    fail(ErrorKind::InvalidConfig, "target focal length must be positive");
  if (target_width < 8 || target_height < 8)
    fail(ErrorKind::InvalidConfig, "normalized image would be smaller than 8x8");
  const double sx = target_f / k.fx;
  const double sy = target_f / k.fy;
  const int sw = static_cast<int>(std::lround(image.width() * sx));
  const int sh = static_cast<int>(std::lround(image.height() * sy));
  if (sw < 8 || sh < 8) fail(ErrorKind::InvalidConfig, "rescaled image would be smaller than 8x8");

  const int ox = static_cast<int>(std::floor((sw - target_width) / 2.0));
  const int oy = static_cast<int>(std::floor((sh - target_height) / 2.0));

  FocalNormalized out{ImageBuffer(target_width, target_height, image.channels(), 0.0), k};
  double px[3];
  for (int v = 0; v < target_height; ++v)
    for (int u = 0; u < target_width; ++u) {
      const int su = u + ox;
      const int sv = v + oy;
      if (su < 0 || sv < 0 || su >= sw || sv >= sh) continue;  // padding
      const double x = std::clamp(su / sx, 0.0, image.width() - 1.0);
      const double y = std::clamp(sv / sy, 0.0, image.height() - 1.0);
      bilinear_sample(image, x, y, std::span<double>(px, 3));
      for (int c = 0; c < image.channels(); ++c) out.image.at(u, v, c) = px[c];
    }
  out.intrinsics = {target_f, target_f, k.cx * sx - ox, k.cy * sy - oy, target_width, target_height};
  return out;
}

std::size_t split_train_count(std::size_t n, double train_frac) {
  const double raw = train_frac * static_cast<double>(n);
  // Guard against products like 0.7 * 10 = 6.999999999999999.
  return static_cast<std::size_t>(std::floor(raw + 1e-9 * std::max(1.0, raw)));
}

SequenceSplit split_sequence(std::span<const std::string> frame_ids, double train_frac) {
  if (!(train_frac > 0.0 && train_frac < 1.0))
    fail(ErrorKind::InvalidConfig, "train fraction must lie in (0, 1)");
  if (frame_ids.empty()) fail(ErrorKind::EmptyInput, "split_sequence: no frames");
  const std::size_t n_train = split_train_count(frame_ids.size(), train_frac);
  SequenceSplit s;
  s.train.assign(frame_ids.begin(), frame_ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test.assign(frame_ids.begin() + static_cast<std::ptrdiff_t>(n_train), frame_ids.end());
  return s;
}

}  // namespace xmflow
