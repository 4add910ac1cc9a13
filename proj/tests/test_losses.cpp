#include <gtest/gtest.h>

#include <filesystem>

#include "oracles.hpp"
#include "scenes.hpp"
#include "xmflow/geometry.hpp"
#include "xmflow/io.hpp"
#include "xmflow/losses.hpp"

namespace xmflow {
namespace {

FlowField offset(const FlowField& f, FlowVector d) {
  FlowField g = f;
  for (auto& x : g.flow.values()) x = {x.u + d.u, x.v + d.v};
  return g;
}

// --- photometric mask -------------------------------------------------------

TEST(PhotometricMask, ZeroMotionKeepsEverything) {
  Rng rng(1);
  const ImageBuffer im = scenes::random_image(rng, 20, 14, 3);
  const FlowField zero(20, 14);
  const RenderResult r = forward_render(im, zero, DepthMap(20, 14, 3.0));
  for (double thr : {1e-9, 0.01, 0.1}) EXPECT_EQ(photometric_mask(im, r, zero, thr).count(), 280u);
}

TEST(PhotometricMask, ZeroThresholdRejectsConstantOffset) {
  const ImageBuffer a(10, 6, 1, 0.25), b(10, 6, 1, 0.75);
  EXPECT_EQ(photometric_mask(a, b, FlowField(10, 6), 0.0).count(), 0u);
}

TEST(PhotometricMask, OcclusionBandMatchesHandTracedScene) {
  // Background plane at 8 m (intensity 0.2), near square at 2 m (0.9) over
  // columns 20..29, rows 5..14. With fx = 64, cx = cy = 0 and a 0.25 m
  // lateral move, the flows are exactly 2 px (background) and 8 px (square).
  // The square lands on columns 28..37 and hides the background sources at
  // columns 30..35; background columns 58..59 leave the image.
  const int w = 60, h = 20;
  const CameraIntrinsics k{64, 64, 0, 0, w, h};
  DepthMap d(w, h, 8.0);
  ImageBuffer im(w, h, 1, 0.2);
  for (int v = 5; v <= 14; ++v)
    for (int u = 20; u <= 29; ++u) {
      d.depth(u, v) = 2.0;
      im.at(u, v, 0) = 0.9;
    }
  RigidPose t;
  t.translation = Vec3(0.25, 0, 0);
  const SynthFlowResult s = synth_flow_with_depth(d, k, t);
  const RenderResult r = forward_render(im, s.flow, s.projected_depth);
  const ValidMask m = photometric_mask(im, r, s.flow, kDefaultPhotometricThreshold);
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      const bool occluded = u >= 30 && u <= 35 && v >= 5 && v <= 14;
      const bool leaves = u >= 58;
      EXPECT_EQ(m.at(u, v), !(occluded || leaves)) << "u=" << u << " v=" << v;
    }
}

TEST(PhotometricMask, RejectsMismatchedSizes) {
  EXPECT_THROW(photometric_mask(ImageBuffer(4, 4, 1), ImageBuffer(4, 5, 1), FlowField(4, 4), 0.1), Error);
}

// --- masked / trimmed flow loss ----------------------------------------------

TEST(MaskedFlowLoss, ZeroAtEqualityAndConstantResidual) {
  Rng rng(2);
  const FlowField f = scenes::random_flow(rng, 16, 12, 5.0);
  const Mask m = scenes::random_mask(rng, 16, 12, 0.7);
  EXPECT_EQ(masked_flow_loss(f, f, m), 0.0);
  // Quarter-integer flows keep f + (1, 2) exact.
  FlowField q(16, 12);
  for (auto& x : q.flow.values()) x = {std::round(rng.uniform(-8, 8)) / 4, std::round(rng.uniform(-8, 8)) / 4};
  EXPECT_EQ(masked_flow_loss(offset(q, {1, 2}), q, m), 3.0);
}

TEST(MaskedFlowLoss, MatchesNaiveAccumulation) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const int w = 1 + static_cast<int>(rng.uniform(0, 40)), h = 1 + static_cast<int>(rng.uniform(0, 40));
    const FlowField a = scenes::random_flow(rng, w, h, 10.0), b = scenes::random_flow(rng, w, h, 10.0);
    Mask m = scenes::random_mask(rng, w, h, 0.5);
    m[0] = 1;
    EXPECT_LE(oracle::rel_diff(masked_flow_loss(a, b, m), oracle::naive_masked_l1(a, b, m)), 1e-12);
  }
}

TEST(MaskedFlowLoss, EmptyMaskIsEmptyInput) {
  try {
    masked_flow_loss(FlowField(3, 3), FlowField(3, 3), Mask(3, 3, false));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyInput);
  }
}

TEST(TrimCount, CeilSemantics) {
  EXPECT_EQ(trim_count(0.0, 10), 0u);
  EXPECT_EQ(trim_count(20.0, 10), 2u);
  EXPECT_EQ(trim_count(10.0, 10), 1u);
  EXPECT_EQ(trim_count(10.0, 11), 2u);
  EXPECT_EQ(trim_count(0.001, 10), 1u);
  EXPECT_EQ(trim_count(99.0, 100), 99u);
}

TEST(TrimmedFlowLoss, TauZeroEqualsMaskedLoss) {
  Rng rng(4);
  const FlowField a = scenes::random_flow(rng, 20, 20, 4.0), b = scenes::random_flow(rng, 20, 20, 4.0);
  const Mask m = scenes::random_mask(rng, 20, 20, 0.6);
  const TrimmedLoss t = trimmed_flow_loss(a, b, m, {0.0});
  EXPECT_EQ(t.value, masked_flow_loss(a, b, m));
  EXPECT_EQ(t.kept, m);
}

TEST(TrimmedFlowLoss, OneToTenWithTwentyPercent) {
  FlowField pred(10, 1), target(10, 1);
  std::vector<double> residuals;
  for (int u = 0; u < 10; ++u) {
    pred.flow(u, 0) = {static_cast<double>(u + 1), 0.0};
    residuals.push_back(u + 1);
  }
  const double expected = oracle::trimmed_mean(residuals, 20.0);
  ASSERT_EQ(expected, 4.5);
  const TrimmedLoss t = trimmed_flow_loss(pred, target, Mask(10, 1, true), {20.0});
  EXPECT_EQ(t.value, 4.5);
  EXPECT_EQ(t.kept.count(), 8u);
  EXPECT_FALSE(t.kept.at(8, 0));
  EXPECT_FALSE(t.kept.at(9, 0));
}

TEST(TrimmedFlowLoss, ConstantResidualsForEveryTau) {
  FlowField pred(7, 5, {0.5, -0.25}), target(7, 5);
  for (double tau : {0.0, 1.0, 10.0, 50.0, 90.0, 97.0})
    EXPECT_EQ(trimmed_flow_loss(pred, target, Mask(7, 5, true), {tau}).value, 0.75);
}

TEST(TrimmedFlowLoss, BoundaryTiesKeepLowerIndex) {
  FlowField pred(5, 1, {1.0, 0.0}), target(5, 1);
  const TrimmedLoss t = trimmed_flow_loss(pred, target, Mask(5, 1, true), {40.0});
  EXPECT_EQ(t.kept.count(), 3u);
  EXPECT_TRUE(t.kept.at(0, 0) && t.kept.at(1, 0) && t.kept.at(2, 0));
}

TEST(TrimmedFlowLoss, PropertiesOnRandomInstances) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const int w = 1 + static_cast<int>(rng.uniform(0, 30)), h = 1 + static_cast<int>(rng.uniform(0, 30));
    const FlowField a = scenes::random_flow(rng, w, h, 6.0), b = scenes::random_flow(rng, w, h, 6.0);
    Mask m = scenes::random_mask(rng, w, h, 0.8);
    m[0] = 1;
    const std::size_t n = m.count();
    std::vector<double> res;
    for (std::size_t i = 0; i < m.size(); ++i)
      if (m[i]) res.push_back(l1_residual(a.flow[i], b.flow[i]));
    double prev = std::numeric_limits<double>::infinity();
    for (double tau : {0.0, 5.0, 10.0, 20.0, 50.0}) {
      if (trim_count(tau, n) >= n) break;
      const TrimmedLoss t = trimmed_flow_loss(a, b, m, {tau});
      EXPECT_LE(oracle::rel_diff(t.value, oracle::trimmed_mean(res, tau)), 1e-12);
      EXPECT_LE(t.value, prev);
      EXPECT_GE(t.value, 0.0);
      prev = t.value;
      EXPECT_EQ(t.kept.count(), n - trim_count(tau, n));
      for (std::size_t i = 0; i < m.size(); ++i)
        if (t.kept[i]) ASSERT_TRUE(m[i]);
    }
  }
}

TEST(TrimmedFlowLoss, PixelPermutationLeavesValueUnchanged) {
  Rng rng(6);
  const int w = 24, h = 16;
  const FlowField a = scenes::random_flow(rng, w, h, 5.0), b = scenes::random_flow(rng, w, h, 5.0);
  const Mask m = scenes::random_mask(rng, w, h, 0.7);
  std::vector<std::size_t> perm(m.size());
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = perm.size() - 1; i > 0; --i)
    std::swap(perm[i], perm[static_cast<std::size_t>(rng.next_u64() % (i + 1))]);
  FlowField pa(w, h), pb(w, h);
  Mask pm(w, h);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    pa.flow[i] = a.flow[perm[i]];
    pb.flow[i] = b.flow[perm[i]];
    pm[i] = m[perm[i]];
  }
  for (double tau : {0.0, 10.0, 30.0}) {
    EXPECT_NEAR(trimmed_flow_loss(a, b, m, {tau}).value, trimmed_flow_loss(pa, pb, pm, {tau}).value, 1e-12);
  }
  EXPECT_NEAR(masked_flow_loss(a, b, m), masked_flow_loss(pa, pb, pm), 1e-12);
}

TEST(TrimmedFlowLoss, Errors) {
  EXPECT_THROW(trimmed_flow_loss(FlowField(2, 2), FlowField(2, 2), Mask(2, 2, false), {10.0}), Error);
  // 60% of one pixel rounds up to removing it.
  try {
    trimmed_flow_loss(FlowField(1, 1), FlowField(1, 1), Mask(1, 1, true), {60.0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyInput);
  }
  EXPECT_THROW(trimmed_flow_loss(FlowField(2, 2), FlowField(2, 2), Mask(2, 2, true), {100.0}), Error);
}

// --- subgradient ------------------------------------------------------------

TEST(Subgradient, PositiveResidualGivesUniformEntries) {
  Rng rng(7);
  const FlowField target = scenes::random_flow(rng, 9, 9, 3.0);
  const FlowField pred = offset(target, {0.01, 0.02});
  const Mask kept = scenes::random_mask(rng, 9, 9, 0.5);
  const FlowField g = flow_loss_subgradient(pred, target, kept);
  const double inv = 1.0 / static_cast<double>(kept.count());
  for (std::size_t i = 0; i < kept.size(); ++i) {
    const FlowVector expect = kept[i] ? FlowVector{inv, inv} : FlowVector{0.0, 0.0};
    EXPECT_EQ(g.flow[i], expect);
  }
}

TEST(Subgradient, MatchesCentralDifferencesAwayFromKinks) {
  Rng rng(8);
  const int w = 10, h = 8;
  const FlowField pred = scenes::random_flow(rng, w, h, 4.0), target = scenes::random_flow(rng, w, h, 4.0);
  const TrimmedLoss t = trimmed_flow_loss(pred, target, Mask(w, h, true), {10.0});
  const FlowField g = flow_loss_subgradient(pred, target, t.kept);
  const double eps = 1e-6;
  for (std::size_t i = 0; i < t.kept.size(); ++i) {
    for (int comp = 0; comp < 2; ++comp) {
      double FlowVector::*c = comp == 0 ? &FlowVector::u : &FlowVector::v;
      if (std::abs(pred.flow[i].*c - target.flow[i].*c) <= 1e-3) continue;
      FlowField plus = pred, minus = pred;
      plus.flow[i].*c += eps;
      minus.flow[i].*c -= eps;
      const double fd = (masked_flow_loss(plus, target, t.kept) - masked_flow_loss(minus, target, t.kept)) / (2 * eps);
      EXPECT_NEAR(g.flow[i].*c, fd, 1e-5);
    }
  }
}

// --- photometric loss -------------------------------------------------------

TEST(PhotometricLoss, IdenticalImagesAreZero) {
  Rng rng(9);
  const ImageBuffer im = scenes::random_image(rng, 25, 19, 3);
  const Mask m(25, 19, true);
  EXPECT_EQ(photometric_loss(im, im, m, PhotometricKind::L1), 0.0);
  EXPECT_NEAR(photometric_loss(im, im, m, PhotometricKind::Ssim), 0.0, 1e-12);
}

TEST(PhotometricLoss, ConstantZeroVersusOne) {
  const Mask m(8, 8, true);
  EXPECT_EQ(photometric_loss(ImageBuffer(8, 8, 3, 0.0), ImageBuffer(8, 8, 3, 1.0), m, PhotometricKind::L1), 1.0);
  // SSIM of constants 0 and 1: luminance term C1 / (1 + C1), structure term 1.
  const double ssim = 1e-4 / (1.0 + 1e-4);
  EXPECT_NEAR(photometric_loss(ImageBuffer(8, 8, 1, 0.0), ImageBuffer(8, 8, 1, 1.0), m, PhotometricKind::Ssim),
              0.5 * (1.0 - ssim), 1e-15);
}

TEST(PhotometricLoss, L1MatchesNaiveLoop) {
  Rng rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    const ImageBuffer a = scenes::random_image(rng, 31, 17, 3), b = scenes::random_image(rng, 31, 17, 3);
    Mask m = scenes::random_mask(rng, 31, 17, 0.5);
    m[3] = 1;
    long double s = 0;
    std::size_t n = 0;
    for (int v = 0; v < 17; ++v)
      for (int u = 0; u < 31; ++u)
        if (m.at(u, v)) {
          for (int c = 0; c < 3; ++c) s += std::fabs(static_cast<long double>(a.at(u, v, c)) - b.at(u, v, c)) / 3;
          ++n;
        }
    EXPECT_LE(oracle::rel_diff(photometric_loss(a, b, m, PhotometricKind::L1), static_cast<double>(s / n)), 1e-12);
  }
}

TEST(PhotometricLoss, SsimMatchesDirectWindowFormulaAtInteriorPixel) {
  Rng rng(11);
  const ImageBuffer a = scenes::random_image(rng, 21, 21, 1), b = scenes::random_image(rng, 21, 21, 1);
  const Grid<double> s = ssim_map(a, b);
  // Full 11x11 window centred at (10, 10), normalised Gaussian.
  double wsum = 0, ma = 0, mb = 0;
  for (int y = 0; y < 21; ++y)
    for (int x = 0; x < 21; ++x) {
      if (std::abs(x - 10) > 5 || std::abs(y - 10) > 5) continue;
      const double g = std::exp(-((x - 10) * (x - 10) + (y - 10) * (y - 10)) / 4.5);
      wsum += g;
      ma += g * a.at(x, y, 0);
      mb += g * b.at(x, y, 0);
    }
  ma /= wsum;
  mb /= wsum;
  double va = 0, vb = 0, cov = 0;
  for (int y = 5; y <= 15; ++y)
    for (int x = 5; x <= 15; ++x) {
      const double g = std::exp(-((x - 10) * (x - 10) + (y - 10) * (y - 10)) / 4.5) / wsum;
      va += g * (a.at(x, y, 0) - ma) * (a.at(x, y, 0) - ma);
      vb += g * (b.at(x, y, 0) - mb) * (b.at(x, y, 0) - mb);
      cov += g * (a.at(x, y, 0) - ma) * (b.at(x, y, 0) - mb);
    }
  const double c1 = 1e-4, c2 = 9e-4;
  const double expect = (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  EXPECT_NEAR(s(10, 10), expect, 1e-12);
}

TEST(PhotometricLoss, EmptyMaskIsEmptyInput) {
  EXPECT_THROW(photometric_loss(ImageBuffer(3, 3, 1), ImageBuffer(3, 3, 1), Mask(3, 3, false), PhotometricKind::L1),
               Error);
}

// --- feature distance -------------------------------------------------------

/// Direct 5x5 separable-kernel convolution, decimation and central gradients.
std::vector<std::vector<double>> naive_pyramid_features(const ImageBuffer& im, int levels) {
  const double k1[5] = {1, 4, 6, 4, 1};
  std::vector<std::vector<double>> out;
  int w = im.width(), h = im.height();
  const int nc = im.channels();
  std::vector<double> cur(im.values().begin(), im.values().end());  // interleaved
  auto at = [&](const std::vector<double>& p, int pw, int ph, int u, int v, int c) {
    u = std::clamp(u, 0, pw - 1);
    v = std::clamp(v, 0, ph - 1);
    return p[(static_cast<std::size_t>(v) * pw + u) * nc + c];
  };
  for (int l = 0; l < levels; ++l) {
    if (l > 0) {
      const int nw = (w + 1) / 2, nh = (h + 1) / 2;
      std::vector<double> next(static_cast<std::size_t>(nw) * nh * nc);
      for (int v = 0; v < nh; ++v)
        for (int u = 0; u < nw; ++u)
          for (int c = 0; c < nc; ++c) {
            double s = 0;
            for (int j = -2; j <= 2; ++j)
              for (int i = -2; i <= 2; ++i) s += k1[i + 2] * k1[j + 2] / 256.0 * at(cur, w, h, 2 * u + i, 2 * v + j, c);
            next[(static_cast<std::size_t>(v) * nw + u) * nc + c] = s;
          }
      cur = std::move(next);
      w = nw;
      h = nh;
    }
    std::vector<double> f;
    for (int v = 0; v < h; ++v)
      for (int u = 0; u < w; ++u) {
        for (int c = 0; c < nc; ++c) f.push_back(at(cur, w, h, u, v, c));
        for (int c = 0; c < nc; ++c) f.push_back(0.5 * (at(cur, w, h, u + 1, v, c) - at(cur, w, h, u - 1, v, c)));
        for (int c = 0; c < nc; ++c) f.push_back(0.5 * (at(cur, w, h, u, v + 1, c) - at(cur, w, h, u, v - 1, c)));
      }
    out.push_back(std::move(f));
  }
  return out;
}

TEST(FeatureDistance, ZeroForIdenticalImages) {
  Rng rng(12);
  const ImageBuffer im = scenes::random_image(rng, 20, 16, 3);
  for (auto src : {FeatureSource::PyramidGradient, FeatureSource::Identity}) {
    FeatureDistanceConfig cfg;
    cfg.layer_weights = {1.0, 0.5, 0.25};
    cfg.source = src;
    EXPECT_EQ(feature_distance(im, im, cfg), 0.0);
  }
}

TEST(FeatureDistance, IdentityExtractorClosedForm) {
  FeatureDistanceConfig cfg;
  cfg.layer_weights = {1.0};
  cfg.source = FeatureSource::Identity;
  EXPECT_DOUBLE_EQ(feature_distance(ImageBuffer(12, 7, 3, 0.0), ImageBuffer(12, 7, 3, 1.0), cfg),
                   std::sqrt(12.0 * 7.0 * 3.0));
}

TEST(FeatureDistance, PyramidMatchesNaiveExtractor) {
  Rng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const int w = 9 + static_cast<int>(rng.uniform(0, 30)), h = 9 + static_cast<int>(rng.uniform(0, 30));
    const int nc = trial % 2 ? 3 : 1;
    const ImageBuffer a = scenes::random_image(rng, w, h, nc), b = scenes::random_image(rng, w, h, nc);
    const std::vector<double> weights{1.0, 0.7, 0.3, 0.1};
    const auto fa = naive_pyramid_features(a, 4), fb = naive_pyramid_features(b, 4);
    double expect = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      long double s = 0;
      for (std::size_t i = 0; i < fa[l].size(); ++i) s += (fa[l][i] - fb[l][i]) * (fa[l][i] - fb[l][i]);
      expect += weights[l] * std::sqrt(static_cast<double>(s));
    }
    FeatureDistanceConfig cfg;
    cfg.layer_weights = weights;
    EXPECT_LE(oracle::rel_diff(feature_distance(a, b, cfg), expect), 1e-9);
  }
}

TEST(FeatureDistance, ExternalFeatureFiles) {
  const auto dir = std::filesystem::temp_directory_path() / "xmflow_feat_test";
  std::filesystem::remove_all(dir);
  FeatureMap a{4, 3, 1, std::vector<double>(12, 0.0)}, b{4, 3, 1, std::vector<double>(12, 0.0)};
  b.values[5] = 3.0;
  b.values[7] = 4.0;
  write_pfm(dir / "a0.pfm", a);
  write_pfm(dir / "b0.pfm", b);
  FeatureDistanceConfig cfg;
  cfg.layer_weights = {2.0};
  cfg.source = FeatureSource::External;
  cfg.external_first = {dir / "a0.pfm"};
  cfg.external_second = {dir / "b0.pfm"};
  EXPECT_DOUBLE_EQ(feature_distance({}, {}, cfg), 10.0);
  cfg.external_second = {dir / "missing.pfm"};
  try {
    feature_distance({}, {}, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Io);
  }
  std::filesystem::remove_all(dir);
}

TEST(FeatureDistance, ConfigValidation) {
  FeatureDistanceConfig cfg;
  cfg.layer_weights = {};
  EXPECT_THROW(cfg.validate(), Error);
  cfg.layer_weights = {1.0, -0.5};
  EXPECT_THROW(cfg.validate(), Error);
}

// --- combined objective -----------------------------------------------------

TEST(CombinedObjective, Examples) {
  const CombinedLossWeights defaults;
  EXPECT_EQ(defaults.lambda_transfer, 2.0);
  EXPECT_EQ(defaults.lambda_consistency, 0.05);
  EXPECT_EQ(combined_objective(0, 0, 0, 0, defaults), 0.0);
  EXPECT_EQ(combined_objective(1, 1, 1, 1, defaults), 4.05);
  EXPECT_DOUBLE_EQ(combined_objective(0.3, 0.7, 0.5, 2.0, {1.0, 1.0}), 3.5);
  EXPECT_THROW(combined_objective(std::nan(""), 0, 0, 0, defaults), Error);
  EXPECT_THROW(combined_objective(1, 1, -1, 0, defaults), Error);
}

}  // namespace
}  // namespace xmflow
