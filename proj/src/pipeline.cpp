#include "xmflow/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <numbers>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "xmflow/io.hpp"

namespace xmflow {

using nlohmann::json;

// ---------------------------------------------------------------------------
// JSON helpers

namespace {

[[noreturn]] void config_error(const std::string& what) { fail(ErrorKind::InvalidConfig, what); }

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) config_error(where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      config_error("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read_opt(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    config_error(std::string("bad value for '") + key + "' in " + where);
  }
}

void read_range(const json& j, const char* key, Range& r, const std::string& where) {
  if (!j.contains(key)) return;
  const json& a = j.at(key);
  if (!a.is_array() || a.size() != 2 || !a[0].is_number() || !a[1].is_number())
    config_error(std::string("'") + key + "' in " + where + " must be [lo, hi]");
  r = {a[0].get<double>(), a[1].get<double>()};
}

json intrinsics_to_json(const CameraIntrinsics& k) {
  return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}};
}

CameraIntrinsics intrinsics_from_json(const json& j, const std::string& where) {
  reject_unknown(j, {"fx", "fy", "cx", "cy", "width", "height"}, where);
  CameraIntrinsics k;
  for (const char* req : {"fx", "fy", "cx", "cy", "width", "height"})
    if (!j.contains(req)) config_error(std::string("missing '") + req + "' in " + where);
  read_opt(j, "fx", k.fx, where);
  read_opt(j, "fy", k.fy, where);
  read_opt(j, "cx", k.cx, where);
  read_opt(j, "cy", k.cy, where);
  read_opt(j, "width", k.width, where);
  read_opt(j, "height", k.height, where);
  try {
    k.validate();
  } catch (const Error& e) {
    config_error(where + ": " + e.what());
  }
  return k;
}

json pose_to_json(const RigidPose& p) {
  json r = json::array();
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) r.push_back(p.rotation(i, k));
  return {{"rotation", r}, {"translation", {p.translation.x(), p.translation.y(), p.translation.z()}}};
}

RigidPose pose_from_json(const json& j, const std::string& where) {
  reject_unknown(j, {"rotation", "translation"}, where);
  RigidPose p;
  std::vector<double> r, t;
  read_opt(j, "rotation", r, where);
  read_opt(j, "translation", t, where);
  if (j.contains("rotation")) {
    if (r.size() != 9) config_error(where + ": rotation needs 9 row-major entries");
    for (int i = 0; i < 3; ++i)
      for (int k = 0; k < 3; ++k) p.rotation(i, k) = r[static_cast<std::size_t>(3 * i + k)];
  }
  if (j.contains("translation")) {
    if (t.size() != 3) config_error(where + ": translation needs 3 entries");
    p.translation = Vec3(t[0], t[1], t[2]);
  }
  try {
    p.validate();
  } catch (const Error& e) {
    config_error(where + ": " + e.what());
  }
  return p;
}

std::string frame_key(const std::string& seq, const std::string& frame) { return seq + "/" + frame; }

}  // namespace

// ---------------------------------------------------------------------------
// Config

void PipelineConfig::validate() const {
  pose.validate();
  affine.validate();
  trim.validate();
  loss_weights.validate();
  if (!(photometric_threshold > 0.0) || !std::isfinite(photometric_threshold))
    config_error("photometric_threshold must be finite and > 0");
  if (focal_target) {
    if (!(focal_target->focal > 0.0)) config_error("focal_target.focal must be > 0");
    if (focal_target->width < 8 || focal_target->height < 8)
      config_error("focal_target size must be at least 8x8");
  }
  if (!(occlusion_radius_px >= 0.0) || !(occlusion_depth_m >= 0.0))
    config_error("occlusion thresholds must be >= 0");
  if (!(train_frac > 0.0 && train_frac < 1.0)) config_error("train_frac must lie in (0, 1)");
}

PipelineConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    config_error(std::string("config is not valid JSON: ") + e.what());
  }
  reject_unknown(j, {"seed", "pose", "affine", "trim", "photometric_threshold", "loss_weights",
                     "focal_target", "occlusion", "split", "schedule"},
                 "config");
  PipelineConfig c;
  read_opt(j, "seed", c.seed, "config");
  read_opt(j, "photometric_threshold", c.photometric_threshold, "config");
  if (j.contains("pose")) {
    const json& p = j["pose"];
    reject_unknown(p, {"max_rotation_deg", "max_translation_frac", "seed"}, "pose");
    read_opt(p, "max_rotation_deg", c.pose.max_rotation_deg, "pose");
    read_opt(p, "max_translation_frac", c.pose.max_translation_frac, "pose");
    read_opt(p, "seed", c.pose.seed, "pose");
  }
  if (j.contains("affine")) {
    const json& a = j["affine"];
    reject_unknown(a, {"scale", "rotation_deg", "translation_px", "seed"}, "affine");
    read_range(a, "scale", c.affine.scale, "affine");
    read_range(a, "rotation_deg", c.affine.rotation_deg, "affine");
    read_range(a, "translation_px", c.affine.translation_px, "affine");
    read_opt(a, "seed", c.affine.seed, "affine");
  }
  if (j.contains("trim")) {
    reject_unknown(j["trim"], {"tau_percent"}, "trim");
    read_opt(j["trim"], "tau_percent", c.trim.tau_percent, "trim");
  }
  if (j.contains("loss_weights")) {
    reject_unknown(j["loss_weights"], {"lambda_T", "lambda_C"}, "loss_weights");
    read_opt(j["loss_weights"], "lambda_T", c.loss_weights.lambda_transfer, "loss_weights");
    read_opt(j["loss_weights"], "lambda_C", c.loss_weights.lambda_consistency, "loss_weights");
  }
  if (j.contains("focal_target") && !j["focal_target"].is_null()) {
    const json& f = j["focal_target"];
    reject_unknown(f, {"focal", "width", "height"}, "focal_target");
    FocalTarget t;
    read_opt(f, "focal", t.focal, "focal_target");
    read_opt(f, "width", t.width, "focal_target");
    read_opt(f, "height", t.height, "focal_target");
    c.focal_target = t;
  }
  if (j.contains("occlusion")) {
    reject_unknown(j["occlusion"], {"radius_px", "depth_m"}, "occlusion");
    read_opt(j["occlusion"], "radius_px", c.occlusion_radius_px, "occlusion");
    read_opt(j["occlusion"], "depth_m", c.occlusion_depth_m, "occlusion");
  }
  if (j.contains("split")) {
    reject_unknown(j["split"], {"train_frac"}, "split");
    read_opt(j["split"], "train_frac", c.train_frac, "split");
  }
  if (j.contains("schedule")) {
    const json& s = j["schedule"];
    reject_unknown(s, {"iterations", "consistency_start", "batch_size"}, "schedule");
    read_opt(s, "iterations", c.schedule.iterations, "schedule");
    read_opt(s, "consistency_start", c.schedule.consistency_start, "schedule");
    read_opt(s, "batch_size", c.schedule.batch_size, "schedule");
  }
  c.validate();
  return c;
}

std::string serialize_config(const PipelineConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["pose"] = {{"max_rotation_deg", c.pose.max_rotation_deg},
               {"max_translation_frac", c.pose.max_translation_frac},
               {"seed", c.pose.seed}};
  j["affine"] = {{"scale", {c.affine.scale.lo, c.affine.scale.hi}},
                 {"rotation_deg", {c.affine.rotation_deg.lo, c.affine.rotation_deg.hi}},
                 {"translation_px", {c.affine.translation_px.lo, c.affine.translation_px.hi}},
                 {"seed", c.affine.seed}};
  j["trim"] = {{"tau_percent", c.trim.tau_percent}};
  j["photometric_threshold"] = c.photometric_threshold;
  j["loss_weights"] = {{"lambda_T", c.loss_weights.lambda_transfer},
                       {"lambda_C", c.loss_weights.lambda_consistency}};
  j["focal_target"] = c.focal_target
                          ? json{{"focal", c.focal_target->focal},
                                 {"width", c.focal_target->width},
                                 {"height", c.focal_target->height}}
                          : json(nullptr);
  j["occlusion"] = {{"radius_px", c.occlusion_radius_px}, {"depth_m", c.occlusion_depth_m}};
  j["split"] = {{"train_frac", c.train_frac}};
  j["schedule"] = {{"iterations", c.schedule.iterations},
                   {"consistency_start", c.schedule.consistency_start},
                   {"batch_size", c.schedule.batch_size}};
  return j.dump(2) + "\n";
}

PipelineConfig load_config(const fs::path& path) {
  const auto bytes = read_file(path);
  return parse_config(std::string(bytes.begin(), bytes.end()));
}

// ---------------------------------------------------------------------------
// Manifest

std::vector<std::pair<std::string, std::vector<std::string>>> Manifest::sequences() const {
  std::vector<std::pair<std::string, std::vector<std::string>>> out;
  std::map<std::string, std::size_t> seq_index;
  std::set<std::string> seen;
  for (const auto& r : records) {
    auto [it, inserted] = seq_index.try_emplace(r.sequence, out.size());
    if (inserted) out.emplace_back(r.sequence, std::vector<std::string>{});
    if (seen.insert(frame_key(r.sequence, r.frame)).second) out[it->second].second.push_back(r.frame);
  }
  return out;
}

Manifest parse_manifest(const std::string& text, const fs::path& root, bool check_paths) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::InvalidInput, std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("records") || !j["records"].is_array())
    fail(ErrorKind::InvalidInput, "manifest must be an object with a 'records' array");

  Manifest m;
  m.root = root;
  std::set<std::string> keys;
  std::vector<std::string> missing;
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : root / p; };
  std::size_t index = 0;
  for (const json& r : j["records"]) {
    const std::string where = "manifest record " + std::to_string(index++);
    try {
      reject_unknown(r, {"sequence", "frame", "modality", "dataset", "image", "depth", "lidar",
                         "intrinsics", "extrinsics"},
                     where);
      ManifestRecord rec;
      for (const char* req : {"sequence", "frame", "modality", "image"})
        if (!r.contains(req) || !r[req].is_string())
          config_error(where + ": missing string field '" + req + "'");
      rec.sequence = r["sequence"].get<std::string>();
      rec.frame = r["frame"].get<std::string>();
      rec.modality = r["modality"].get<std::string>();
      read_opt(r, "dataset", rec.dataset, where);
      rec.image = resolve(r["image"].get<std::string>());
      if (r.contains("depth")) rec.depth = resolve(r["depth"].get<std::string>());
      if (r.contains("lidar")) rec.lidar = resolve(r["lidar"].get<std::string>());
      if (r.contains("intrinsics")) rec.intrinsics = intrinsics_from_json(r["intrinsics"], where);
      if (r.contains("extrinsics")) rec.extrinsics = pose_from_json(r["extrinsics"], where);
      if (!keys.insert(rec.sequence + "\x1f" + rec.frame + "\x1f" + rec.modality).second)
        config_error(where + ": duplicate (sequence, frame, modality) " + rec.sequence + "/" +
                     rec.frame + "/" + rec.modality);
      m.records.push_back(std::move(rec));
    } catch (const json::exception& e) {
      fail(ErrorKind::InvalidInput, where + ": " + e.what());
    } catch (const Error& e) {
      fail(ErrorKind::InvalidInput, e.what());
    }
  }
  if (check_paths) {
    for (const auto& rec : m.records) {
      if (!fs::exists(rec.image)) missing.push_back(rec.image.string());
      if (rec.depth && !fs::exists(*rec.depth)) missing.push_back(rec.depth->string());
      if (rec.lidar && !fs::exists(*rec.lidar)) missing.push_back(rec.lidar->string());
    }
    if (!missing.empty()) {
      std::string msg = "manifest references missing files:";
      for (const auto& p : missing) msg += "\n  " + p;
      fail(ErrorKind::Io, msg);
    }
  }
  return m;
}

Manifest load_manifest(const fs::path& path, bool check_paths) {
  const auto bytes = read_file(path);
  return parse_manifest(std::string(bytes.begin(), bytes.end()), path.parent_path(), check_paths);
}

CameraRig parse_rig(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    config_error(std::string("rig is not valid JSON: ") + e.what());
  }
  reject_unknown(j, {"intrinsics_a", "intrinsics_b", "extrinsics_a", "extrinsics_b"}, "rig");
  for (const char* req : {"intrinsics_a", "intrinsics_b", "extrinsics_a", "extrinsics_b"})
    if (!j.contains(req)) config_error(std::string("rig: missing '") + req + "'");
  CameraRig rig;
  rig.intrinsics_a = intrinsics_from_json(j["intrinsics_a"], "rig.intrinsics_a");
  rig.intrinsics_b = intrinsics_from_json(j["intrinsics_b"], "rig.intrinsics_b");
  rig.extrinsics_a = pose_from_json(j["extrinsics_a"], "rig.extrinsics_a");
  rig.extrinsics_b = pose_from_json(j["extrinsics_b"], "rig.extrinsics_b");
  return rig;
}

CameraRig load_rig(const fs::path& path) {
  const auto bytes = read_file(path);
  return parse_rig(std::string(bytes.begin(), bytes.end()));
}

// ---------------------------------------------------------------------------
// Triplets

Rng frame_rng(std::uint64_t master_seed, std::string_view sequence, std::string_view frame,
              std::string_view branch) {
  std::string key;
  key.reserve(sequence.size() + frame.size() + branch.size() + 2);
  key.append(sequence).push_back('\x1f');
  key.append(frame).push_back('\x1f');
  key.append(branch);
  return Rng(master_seed, stable_hash(key));
}

FlowTriplet make_triplet(const ImageBuffer& image, const DepthMap& depth,
                         const std::optional<CameraIntrinsics>& k, const PipelineConfig& cfg,
                         Rng& rng) {
  cfg.validate();
  if (depth.width() != image.width() || depth.height() != image.height())
    fail(ErrorKind::InvalidInput, "image and depth dimensions differ");
  const CameraIntrinsics intr = k ? *k : sample_intrinsics(image.width(), image.height(), rng);
  if (intr.width != image.width() || intr.height != image.height())
    fail(ErrorKind::InvalidInput, "intrinsics image size does not match the image");

  const RigidPose pose = sample_pose(cfg.pose, depth.median_valid(), rng);
  SynthFlowResult synth = synth_flow_with_depth(depth, intr, pose);
  RenderResult render = forward_render(image, synth.flow, synth.projected_depth);
  ValidMask mask = photometric_mask(image, render, synth.flow, cfg.photometric_threshold);
  return {image, std::move(render.image), std::move(synth.flow), std::move(mask),
          std::move(render.hole_mask), intr, pose, 8};
}

FlowTriplet make_triplet(const fs::path& image_path, const fs::path& depth_path,
                         const std::optional<CameraIntrinsics>& k, const PipelineConfig& cfg,
                         Rng& rng) {
  PngImage png = read_png(image_path);
  const DepthMap depth = read_depth_pfm(depth_path);
  FlowTriplet t = make_triplet(png.image, depth, k, cfg, rng);
  t.bit_depth = png.bit_depth;
  return t;
}

TripletCheck check_triplet(const FlowTriplet& t, double threshold) {
  TripletCheck c;
  c.mask_pixels = t.mask.count();
  if (c.mask_pixels == 0) return c;
  c.self_loss = masked_flow_loss(t.flow, t.flow, t.mask);
  const WarpResult back = backward_warp(t.rendered, t.flow);
  for (int v = 0; v < t.source.height(); ++v)
    for (int u = 0; u < t.source.width(); ++u) {
      if (!t.mask.at(u, v)) continue;
      double e = 0.0;
      for (int ch = 0; ch < t.source.channels(); ++ch)
        e += std::abs(back.image.at(u, v, ch) - t.source.at(u, v, ch));
      c.max_roundtrip_error = std::max(c.max_roundtrip_error, e / t.source.channels());
    }
  c.passed = c.self_loss == 0.0 && c.max_roundtrip_error <= threshold;
  return c;
}

void write_triplet(const fs::path& dir, const FlowTriplet& t) {
  fs::create_directories(dir);
  write_png(dir / "rendered.png", t.rendered, t.bit_depth);
  write_flo(dir / "flow.flo", t.flow);
  write_mask_png(dir / "mask.png", t.mask);
  write_mask_png(dir / "holes.png", t.holes);
  json meta{{"intrinsics", intrinsics_to_json(t.intrinsics)}, {"pose", pose_to_json(t.pose)}};
  const std::string s = meta.dump(2) + "\n";
  write_file(dir / "meta.json", std::span(reinterpret_cast<const unsigned char*>(s.data()), s.size()));
}

// ---------------------------------------------------------------------------
// Orchestration

namespace {

/// Runs job(i) for i in [0, n) on a pool; jobs must not share mutable state.
template <typename Job>
void parallel_for(std::size_t n, unsigned workers, Job&& job) {
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) job(i);
    });
}

std::string describe(const std::exception& e) { return e.what(); }

}  // namespace

SynthesizeSummary run_synthesize(const Manifest& manifest, const fs::path& out,
                                 const PipelineConfig& cfg, unsigned workers) {
  cfg.validate();
  std::vector<const ManifestRecord*> jobs;
  for (const auto& r : manifest.records)
    if (r.depth) jobs.push_back(&r);

  std::vector<std::optional<std::string>> errors(jobs.size());
  const std::uint64_t stream_seed = cfg.seed ^ (cfg.pose.seed * 0x9e3779b97f4a7c15ULL);
  parallel_for(jobs.size(), workers, [&](std::size_t i) {
    const ManifestRecord& r = *jobs[i];
    try {
      Rng rng = frame_rng(stream_seed, r.sequence, r.frame, r.modality);
      FlowTriplet t = make_triplet(r.image, *r.depth, r.intrinsics, cfg, rng);
      const TripletCheck check = check_triplet(t, cfg.photometric_threshold);
      if (!check.passed) {
        errors[i] = check.mask_pixels == 0 ? "valid mask is empty" : "triplet self-check failed";
        return;
      }
      write_triplet(out / r.sequence / r.frame / r.modality, t);
    } catch (const std::exception& e) {
      errors[i] = describe(e);
    }
  });

  SynthesizeSummary s;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (errors[i])
      s.failures.push_back({jobs[i]->sequence + "/" + jobs[i]->frame + "/" + jobs[i]->modality, *errors[i]});
    else
      ++s.written;
  }
  return s;
}

GtSummary run_gt_from_lidar(const Manifest& manifest, const CameraRig& rig, const fs::path& out,
                            const PipelineConfig& cfg, unsigned workers) {
  cfg.validate();
  rig.validate();
  // First LiDAR file per (sequence, frame).
  std::vector<const ManifestRecord*> jobs;
  std::set<std::string> seen;
  for (const auto& r : manifest.records)
    if (r.lidar && seen.insert(frame_key(r.sequence, r.frame)).second) jobs.push_back(&r);

  const OcclusionConfig occ{cfg.occlusion_radius_px, cfg.occlusion_depth_m};
  std::vector<std::optional<std::string>> notes(jobs.size());
  std::vector<std::optional<std::string>> errors(jobs.size());
  parallel_for(jobs.size(), workers, [&](std::size_t i) {
    const ManifestRecord& r = *jobs[i];
    try {
      LidarFrame frame{read_lidar(*r.lidar)};
      if (frame.points.empty()) {
        errors[i] = "LiDAR file has no points";
        return;
      }
      const LidarFlowResult res = lidar_to_flow(frame, rig, occ);
      if (!res.warnings.empty()) notes[i] = res.warnings.front();
      const fs::path dir = out / r.sequence;
      const FlowField dense = res.gt.to_dense();
      write_flo(dir / (r.frame + ".flo"), dense);
      write_mask_png(dir / (r.frame + "_mask.png"), dense.valid);
    } catch (const std::exception& e) {
      errors[i] = describe(e);
    }
  });

  GtSummary s;
  std::string failed;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const std::string key = frame_key(jobs[i]->sequence, jobs[i]->frame);
    if (errors[i]) {
      failed += "\n  " + key + ": " + *errors[i];
      continue;
    }
    ++s.written;
    if (notes[i]) s.warnings.push_back({key, *notes[i]});
  }
  if (!failed.empty()) fail(ErrorKind::Io, "ground-truth generation failed:" + failed);
  return s;
}

SplitReport split_manifest(const Manifest& manifest, double train_frac) {
  SplitReport rep;
  for (const auto& [seq, frames] : manifest.sequences()) {
    rep.sequences.push_back({seq, split_sequence(frames, train_frac)});
    rep.train_total += rep.sequences.back().split.train.size();
    rep.test_total += rep.sequences.back().split.test.size();
  }
  return rep;
}

EvaluationReport run_evaluate(const Manifest& manifest, const fs::path& pred_dir,
                              const fs::path& gt_dir, const PipelineConfig& cfg) {
  cfg.validate();
  std::map<std::string, std::string> dataset_of;
  for (const auto& r : manifest.records) dataset_of.try_emplace(frame_key(r.sequence, r.frame), r.dataset);

  struct Job {
    std::string dataset, sequence, frame;
  };
  std::vector<Job> jobs;
  for (const auto& seq : split_manifest(manifest, cfg.train_frac).sequences)
    for (const auto& f : seq.split.test) jobs.push_back({dataset_of[frame_key(seq.id, f)], seq.id, f});

  std::vector<std::string> missing;
  for (const auto& j : jobs) {
    if (!fs::exists(pred_dir / j.sequence / (j.frame + ".flo")))
      missing.push_back("prediction for " + frame_key(j.sequence, j.frame));
    if (!fs::exists(gt_dir / j.sequence / (j.frame + ".flo")))
      missing.push_back("ground truth for " + frame_key(j.sequence, j.frame));
  }
  if (!missing.empty()) {
    std::string msg = "missing evaluation inputs:";
    for (const auto& m : missing) msg += "\n  " + m;
    fail(ErrorKind::Io, msg);
  }

  EvaluationReport rep;
  for (const auto& j : jobs) {
    const FlowField pred = read_flo(pred_dir / j.sequence / (j.frame + ".flo"));
    const SparseFlowGT gt = SparseFlowGT::from_dense(read_flo(gt_dir / j.sequence / (j.frame + ".flo")));
    if (gt.entries.empty()) {
      rep.skipped.push_back({frame_key(j.sequence, j.frame), "ground truth has no labeled pixels"});
      continue;
    }
    const MetricReport m = score(pred, gt);
    rep.frames.push_back({j.dataset, j.sequence, j.frame, m});
    rep.per_dataset[j.dataset].merge(m);
    rep.aggregate.merge(m);
  }
  return rep;
}

std::string format_report_jsonl(const EvaluationReport& report) {
  std::string out;
  for (const auto& f : report.frames) {
    json j{{"type", "frame"}, {"dataset", f.dataset}, {"sequence", f.sequence}, {"frame", f.frame},
           {"epe", f.report.epe}, {"f1", f.report.f1}, {"n_points", f.report.n_points}};
    out += j.dump() + "\n";
  }
  for (const auto& s : report.skipped) {
    json j{{"type", "skipped"}, {"key", s.key}, {"reason", s.message}};
    out += j.dump() + "\n";
  }
  json datasets = json::object();
  for (const auto& [name, m] : report.per_dataset)
    datasets[name] = {{"epe", m.epe}, {"f1", m.f1}, {"n_points", m.n_points}};
  json agg{{"type", "aggregate"}, {"epe", report.aggregate.epe}, {"f1", report.aggregate.f1},
           {"n_points", report.aggregate.n_points}, {"n_frames", report.frames.size()},
           {"datasets", datasets}};
  out += agg.dump() + "\n";
  return out;
}

std::string format_report_table(const EvaluationReport& report) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << std::left << std::setw(12) << "";
  for (const auto& [name, _] : report.per_dataset) os << std::setw(20) << name;
  os << std::setw(20) << "all" << "\n" << std::setw(12) << "";
  for (std::size_t i = 0; i <= report.per_dataset.size(); ++i) os << std::setw(10) << "EPE" << std::setw(10) << "F1";
  os << "\n" << std::setw(12) << "metrics";
  for (const auto& [_, m] : report.per_dataset) os << std::setw(10) << m.epe << std::setw(10) << m.f1;
  os << std::setw(10) << report.aggregate.epe << std::setw(10) << report.aggregate.f1 << "\n";
  return os.str();
}

ImageBuffer flow_to_color(const FlowField& flow, double max_magnitude) {
  double maxm = max_magnitude;
  if (!(maxm > 0.0)) {
    for (std::size_t i = 0; i < flow.flow.size(); ++i)
      if (flow.valid[i]) maxm = std::max(maxm, std::hypot(flow.flow[i].u, flow.flow[i].v));
  }
  ImageBuffer out(flow.width(), flow.height(), 3, 0.0);
  for (int v = 0; v < flow.height(); ++v)
    for (int u = 0; u < flow.width(); ++u) {
      if (!flow.valid.at(u, v)) continue;
      const FlowVector f = flow.flow(u, v);
      const double mag = std::hypot(f.u, f.v);
      const double sat = maxm > 0.0 ? std::min(1.0, mag / maxm) : 0.0;
      double hue = std::atan2(f.v, f.u) / (2.0 * std::numbers::pi);  // [-0.5, 0.5]
      if (hue < 0.0) hue += 1.0;
      // HSV -> RGB with V = 1.
      const double h6 = hue * 6.0;
      const int sector = static_cast<int>(std::floor(h6)) % 6;
      const double frac = h6 - std::floor(h6);
      const double p = 1.0 - sat;
      const double q = 1.0 - sat * frac;
      const double t = 1.0 - sat * (1.0 - frac);
      double rgb[3];
      switch (sector) {
        case 0: rgb[0] = 1; rgb[1] = t; rgb[2] = p; break;
        case 1: rgb[0] = q; rgb[1] = 1; rgb[2] = p; break;
        case 2: rgb[0] = p; rgb[1] = 1; rgb[2] = t; break;
        case 3: rgb[0] = p; rgb[1] = q; rgb[2] = 1; break;
        case 4: rgb[0] = t; rgb[1] = p; rgb[2] = 1; break;
        default: rgb[0] = 1; rgb[1] = p; rgb[2] = q; break;
      }
      for (int c = 0; c < 3; ++c) out.at(u, v, c) = rgb[c];
    }
  return out;
}

}  // namespace xmflow
