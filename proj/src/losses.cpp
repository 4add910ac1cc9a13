#include "xmflow/losses.hpp"

#include <algorithm>
#include <array>
#include <numeric>

#include "xmflow/io.hpp"

namespace xmflow {

void TrimConfig::validate() const {
  if (!(tau_percent >= 0.0 && tau_percent < 100.0))
    fail(ErrorKind::InvalidConfig, "tau_percent must lie in [0, 100)");
}

std::size_t trim_count(double tau_percent, std::size_t n_valid) {
  if (tau_percent <= 0.0 || n_valid == 0) return 0;
  // tau * n first keeps integral products exact (20 * 10 / 100 == 2, not 2.0000000000000004).
  const double raw = tau_percent * static_cast<double>(n_valid) / 100.0;
  const double drop = std::ceil(raw - 1e-9 * std::max(1.0, raw));
  return std::max<std::size_t>(1, static_cast<std::size_t>(drop));
}

namespace {

void require_same(const FlowField& a, const FlowField& b, const Mask& m, const char* op) {
  if (!a.same_shape(b.width(), b.height()) || !m.same_shape(a.width(), a.height()))
    fail(ErrorKind::InvalidInput, std::string(op) + ": flow and mask sizes differ");
}

}  // namespace

ValidMask photometric_mask(const ImageBuffer& source, const ImageBuffer& rendered,
                           const FlowField& synthetic_flow, double threshold,
                           const Mask* hole_mask) {
  if (!source.same_shape(rendered) || !synthetic_flow.same_shape(source.width(), source.height()))
    fail(ErrorKind::InvalidInput, "photometric_mask: image and flow sizes differ");
  if (hole_mask && !hole_mask->same_shape(source.width(), source.height()))
    fail(ErrorKind::InvalidInput, "photometric_mask: hole mask size differs");
  if (!(threshold >= 0.0)) fail(ErrorKind::InvalidInput, "photometric threshold must be >= 0");

  const WarpResult back = backward_warp(rendered, synthetic_flow);
  const int w = source.width();
  const int h = source.height();
  const int nc = source.channels();
  ValidMask mask(w, h, false);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      if (!back.in_bounds.at(u, v)) continue;
      if (hole_mask) {
        const FlowVector f = synthetic_flow.flow(u, v);
        const BilinearFootprint fp = bilinear_footprint(u + f.u, v + f.v, w, h);
        const int u1 = fp.au > 0.0 ? fp.u0 + 1 : fp.u0;
        const int v1 = fp.av > 0.0 ? fp.v0 + 1 : fp.v0;
        if (hole_mask->at(fp.u0, fp.v0) || hole_mask->at(u1, fp.v0) ||
            hole_mask->at(fp.u0, v1) || hole_mask->at(u1, v1))
          continue;
      }
      double err = 0.0;
      for (int c = 0; c < nc; ++c) err += std::abs(back.image.at(u, v, c) - source.at(u, v, c));
      err /= nc;
      if (err <= threshold) mask.set(u, v, true);
    }
  }
  return mask;
}

ValidMask photometric_mask(const ImageBuffer& source, const RenderResult& rendered,
                           const FlowField& synthetic_flow, double threshold) {
  return photometric_mask(source, rendered.image, synthetic_flow, threshold, &rendered.hole_mask);
}

double l1_residual(const FlowVector& a, const FlowVector& b) {
  return std::abs(a.u - b.u) + std::abs(a.v - b.v);
}

double masked_flow_loss(const FlowField& pred, const FlowField& target, const ValidMask& mask) {
  require_same(pred, target, mask, "masked_flow_loss");
  std::vector<double> r;
  r.reserve(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) r.push_back(l1_residual(pred.flow[i], target.flow[i]));
  if (r.empty()) fail(ErrorKind::EmptyInput, "masked_flow_loss: mask is empty");
  return pairwise_sum(r) / static_cast<double>(r.size());
}

TrimmedLoss trimmed_flow_loss(const FlowField& pred, const FlowField& target,
                              const ValidMask& mask, const TrimConfig& cfg) {
  cfg.validate();
  require_same(pred, target, mask, "trimmed_flow_loss");

  struct Entry {
    double residual;
    std::size_t index;
  };
  std::vector<Entry> entries;
  entries.reserve(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) entries.push_back({l1_residual(pred.flow[i], target.flow[i]), i});
  if (entries.empty()) fail(ErrorKind::EmptyInput, "trimmed_flow_loss: mask is empty");

  const std::size_t drop = trim_count(cfg.tau_percent, entries.size());
  if (drop >= entries.size())
    fail(ErrorKind::EmptyInput, "trimmed_flow_loss: trimming removes every pixel");
  const std::size_t keep = entries.size() - drop;

  // Total order on (residual, index): the kept set is unique.
  if (drop > 0) {
    std::nth_element(entries.begin(), entries.begin() + static_cast<std::ptrdiff_t>(keep),
                     entries.end(), [](const Entry& a, const Entry& b) {
                       return a.residual < b.residual ||
                              (a.residual == b.residual && a.index < b.index);
                     });
  }

  TrimmedLoss out{0.0, ValidMask(mask.width(), mask.height(), false)};
  for (std::size_t i = 0; i < keep; ++i) out.kept[entries[i].index] = 1;
  // Sum in row-major order so the value does not depend on the selection algorithm.
  std::vector<double> r;
  r.reserve(keep);
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (out.kept[i]) r.push_back(l1_residual(pred.flow[i], target.flow[i]));
  out.value = pairwise_sum(r) / static_cast<double>(keep);
  return out;
}

FlowField flow_loss_subgradient(const FlowField& pred, const FlowField& target,
                                const ValidMask& kept) {
  require_same(pred, target, kept, "flow_loss_subgradient");
  FlowField g(pred.width(), pred.height(), {}, true);
  const std::size_t n = kept.count();
  if (n == 0) return g;
  const double scale = 1.0 / static_cast<double>(n);
  auto sign = [](double x) { return static_cast<double>((x > 0.0) - (x < 0.0)); };
  for (std::size_t i = 0; i < kept.size(); ++i) {
    if (!kept[i]) continue;
    g.flow[i] = {sign(pred.flow[i].u - target.flow[i].u) * scale,
                 sign(pred.flow[i].v - target.flow[i].v) * scale};
  }
  return g;
}

// ---------------------------------------------------------------------------
// SSIM

namespace {

constexpr int kSsimRadius = 5;  // 11x11 window
constexpr double kSsimSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::array<double, 2 * kSsimRadius + 1> gaussian_taps() {
  std::array<double, 2 * kSsimRadius + 1> g{};
  for (int i = -kSsimRadius; i <= kSsimRadius; ++i)
    g[static_cast<std::size_t>(i + kSsimRadius)] = std::exp(-(i * i) / (2.0 * kSsimSigma * kSsimSigma));
  return g;
}

}  // namespace

Grid<double> ssim_map(const ImageBuffer& a, const ImageBuffer& b) {
  if (!a.same_shape(b)) fail(ErrorKind::InvalidInput, "ssim_map: image sizes differ");
  const auto taps = gaussian_taps();
  const int w = a.width();
  const int h = a.height();
  Grid<double> out(w, h, 0.0);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      double acc = 0.0;
      for (int c = 0; c < a.channels(); ++c) {
        double sw = 0, ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int dv = -kSsimRadius; dv <= kSsimRadius; ++dv) {
          const int y = v + dv;
          if (y < 0 || y >= h) continue;
          for (int du = -kSsimRadius; du <= kSsimRadius; ++du) {
            const int x = u + du;
            if (x < 0 || x >= w) continue;
            const double wt = taps[static_cast<std::size_t>(du + kSsimRadius)] *
                              taps[static_cast<std::size_t>(dv + kSsimRadius)];
            const double pa = a.at(x, y, c);
            const double pb = b.at(x, y, c);
            sw += wt;
            ma += wt * pa;
            mb += wt * pb;
            saa += wt * pa * pa;
            sbb += wt * pb * pb;
            sab += wt * pa * pb;
          }
        }
        ma /= sw;
        mb /= sw;
        const double va = std::max(0.0, saa / sw - ma * ma);
        const double vb = std::max(0.0, sbb / sw - mb * mb);
        const double cov = sab / sw - ma * mb;
        acc += ((2 * ma * mb + kC1) * (2 * cov + kC2)) /
               ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
      }
      out(u, v) = acc / a.channels();
    }
  }
  return out;
}

double photometric_loss(const ImageBuffer& warped, const ImageBuffer& target,
                        const ValidMask& mask, PhotometricKind kind) {
  if (!warped.same_shape(target) || !mask.same_shape(warped.width(), warped.height()))
    fail(ErrorKind::InvalidInput, "photometric_loss: sizes differ");
  std::vector<double> per_pixel;
  per_pixel.reserve(mask.size());
  if (kind == PhotometricKind::L1) {
    const int nc = warped.channels();
    for (int v = 0; v < warped.height(); ++v)
      for (int u = 0; u < warped.width(); ++u) {
        if (!mask.at(u, v)) continue;
        double e = 0.0;
        for (int c = 0; c < nc; ++c) e += std::abs(warped.at(u, v, c) - target.at(u, v, c));
        per_pixel.push_back(e / nc);
      }
  } else {
    const Grid<double> s = ssim_map(warped, target);
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (mask[i]) per_pixel.push_back(0.5 * (1.0 - s[i]));
  }
  if (per_pixel.empty()) fail(ErrorKind::EmptyInput, "photometric_loss: mask is empty");
  return pairwise_sum(per_pixel) / static_cast<double>(per_pixel.size());
}

// ---------------------------------------------------------------------------
// Feature distance

void FeatureDistanceConfig::validate() const {
  if (layer_weights.empty()) fail(ErrorKind::InvalidConfig, "feature distance needs >= 1 layer");
  for (double w : layer_weights)
    if (!std::isfinite(w) || w < 0.0)
      fail(ErrorKind::InvalidConfig, "layer weights must be finite and >= 0");
  if (source == FeatureSource::External &&
      (external_first.size() != layer_weights.size() ||
       external_second.size() != layer_weights.size()))
    fail(ErrorKind::InvalidConfig, "external features need one file per layer for each image");
}

namespace {

struct Plane {
  int w = 0, h = 0;
  std::vector<double> p;
  double at(int u, int v) const {
    u = std::clamp(u, 0, w - 1);
    v = std::clamp(v, 0, h - 1);
    return p[static_cast<std::size_t>(v) * static_cast<std::size_t>(w) + static_cast<std::size_t>(u)];
  }
};

Plane reduce(const Plane& in) {
  static constexpr double k[5] = {1 / 16.0, 4 / 16.0, 6 / 16.0, 4 / 16.0, 1 / 16.0};
  Plane tmp{in.w, in.h, std::vector<double>(in.p.size())};
  for (int v = 0; v < in.h; ++v)
    for (int u = 0; u < in.w; ++u) {
      double s = 0;
      for (int i = -2; i <= 2; ++i) s += k[i + 2] * in.at(u + i, v);
      tmp.p[static_cast<std::size_t>(v * in.w + u)] = s;
    }
  Plane blurred{in.w, in.h, std::vector<double>(in.p.size())};
  for (int v = 0; v < in.h; ++v)
    for (int u = 0; u < in.w; ++u) {
      double s = 0;
      for (int i = -2; i <= 2; ++i) s += k[i + 2] * tmp.at(u, v + i);
      blurred.p[static_cast<std::size_t>(v * in.w + u)] = s;
    }
  Plane out{(in.w + 1) / 2, (in.h + 1) / 2, {}};
  out.p.resize(static_cast<std::size_t>(out.w) * static_cast<std::size_t>(out.h));
  for (int v = 0; v < out.h; ++v)
    for (int u = 0; u < out.w; ++u)
      out.p[static_cast<std::size_t>(v * out.w + u)] = blurred.at(2 * u, 2 * v);
  return out;
}

}  // namespace

std::vector<FeatureMap> pyramid_gradient_features(const ImageBuffer& image, std::size_t levels) {
  const int nc = image.channels();
  std::vector<Plane> planes(static_cast<std::size_t>(nc));
  for (int c = 0; c < nc; ++c) {
    Plane& p = planes[static_cast<std::size_t>(c)];
    p.w = image.width();
    p.h = image.height();
    p.p.resize(image.pixel_count());
    for (int v = 0; v < p.h; ++v)
      for (int u = 0; u < p.w; ++u)
        p.p[static_cast<std::size_t>(v * p.w + u)] = image.at(u, v, c);
  }

  std::vector<FeatureMap> out;
  for (std::size_t level = 0; level < levels; ++level) {
    if (level > 0)
      for (auto& p : planes) p = reduce(p);
    const int w = planes[0].w;
    const int h = planes[0].h;
    FeatureMap fm{w, h, 3 * nc, {}};
    fm.values.resize(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) *
                     static_cast<std::size_t>(fm.channels));
    for (int v = 0; v < h; ++v)
      for (int u = 0; u < w; ++u) {
        double* px = &fm.values[(static_cast<std::size_t>(v) * static_cast<std::size_t>(w) +
                                 static_cast<std::size_t>(u)) * static_cast<std::size_t>(fm.channels)];
        for (int c = 0; c < nc; ++c) {
          const Plane& p = planes[static_cast<std::size_t>(c)];
          px[c] = p.at(u, v);
          px[nc + c] = 0.5 * (p.at(u + 1, v) - p.at(u - 1, v));
          px[2 * nc + c] = 0.5 * (p.at(u, v + 1) - p.at(u, v - 1));
        }
      }
    out.push_back(std::move(fm));
  }
  return out;
}

double weighted_layer_distance(std::span<const FeatureMap> a, std::span<const FeatureMap> b,
                               std::span<const double> weights) {
  if (a.size() != weights.size() || b.size() != weights.size())
    fail(ErrorKind::InvalidInput, "feature layer count does not match weight count");
  double total = 0.0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (a[l].width != b[l].width || a[l].height != b[l].height || a[l].channels != b[l].channels ||
        a[l].values.size() != b[l].values.size())
      fail(ErrorKind::InvalidInput, "feature layer shapes differ");
    std::vector<double> sq(a[l].values.size());
    for (std::size_t i = 0; i < sq.size(); ++i) {
      const double d = a[l].values[i] - b[l].values[i];
      sq[i] = d * d;
    }
    total += weights[l] * std::sqrt(pairwise_sum(sq));
  }
  return total;
}

double feature_distance(const ImageBuffer& first, const ImageBuffer& second,
                        const FeatureDistanceConfig& cfg) {
  cfg.validate();
  const std::size_t layers = cfg.layer_weights.size();
  std::vector<FeatureMap> fa, fb;
  switch (cfg.source) {
    case FeatureSource::PyramidGradient:
      if (!first.same_shape(second)) fail(ErrorKind::InvalidInput, "feature_distance: sizes differ");
      fa = pyramid_gradient_features(first, layers);
      fb = pyramid_gradient_features(second, layers);
      break;
    case FeatureSource::Identity: {
      if (!first.same_shape(second)) fail(ErrorKind::InvalidInput, "feature_distance: sizes differ");
      auto as_map = [](const ImageBuffer& im) {
        return FeatureMap{im.width(), im.height(), im.channels(),
                          std::vector<double>(im.values().begin(), im.values().end())};
      };
      fa.assign(layers, as_map(first));
      fb.assign(layers, as_map(second));
      break;
    }
    case FeatureSource::External:
      for (std::size_t l = 0; l < layers; ++l) {
        fa.push_back(read_pfm(cfg.external_first[l]));
        fb.push_back(read_pfm(cfg.external_second[l]));
      }
      break;
  }
  return weighted_layer_distance(fa, fb, cfg.layer_weights);
}

// ---------------------------------------------------------------------------

void CombinedLossWeights::validate() const {
  if (!std::isfinite(lambda_transfer) || !std::isfinite(lambda_consistency) ||
      lambda_transfer < 0.0 || lambda_consistency < 0.0)
    fail(ErrorKind::InvalidConfig, "loss weights must be finite and >= 0");
}

double combined_objective(double flow_loss_a, double flow_loss_b, double transfer_loss,
                          double consistency_loss, const CombinedLossWeights& w) {
  w.validate();
  for (double x : {flow_loss_a, flow_loss_b, transfer_loss, consistency_loss})
    if (!std::isfinite(x) || x < 0.0)
      fail(ErrorKind::InvalidInput, "combined_objective: loss terms must be finite and >= 0");
  return flow_loss_a + flow_loss_b + w.lambda_transfer * transfer_loss +
         w.lambda_consistency * consistency_loss;
}

}  // namespace xmflow
