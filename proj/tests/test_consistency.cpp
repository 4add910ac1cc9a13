#include <gtest/gtest.h>

#include <numbers>

#include "oracles.hpp"
#include "scenes.hpp"
#include "xmflow/consistency.hpp"

namespace xmflow {
namespace {

AffineTransform2D translation(double tx, double ty) {
  AffineTransform2D a;
  a.t = Vec2(tx, ty);
  return a;
}

TEST(DeriveTransformedFlow, IdentityTransformIsIdentity) {
  Rng rng(1);
  const FlowField f = scenes::random_flow(rng, 17, 13, 6.0, 0.8);
  const FlowField g = derive_transformed_flow(f, AffineTransform2D::identity());
  EXPECT_EQ(g.valid, f.valid);
  for (std::size_t i = 0; i < f.valid.size(); ++i)
    if (f.valid[i]) EXPECT_EQ(g.flow[i], f.flow[i]);
}

TEST(DeriveTransformedFlow, IntegerTranslationShiftsField) {
  Rng rng(2);
  const FlowField f = scenes::random_flow(rng, 20, 15, 4.0);
  const FlowField g = derive_transformed_flow(f, translation(3, -2));
  for (int v = 0; v < 15; ++v)
    for (int u = 0; u < 20; ++u) {
      const bool inside = u - 3 >= 0 && v + 2 < 15;
      ASSERT_EQ(static_cast<bool>(g.valid.at(u, v)), inside);
      if (inside) EXPECT_EQ(g.flow(u, v), f.flow(u - 3, v + 2));
    }
}

TEST(DeriveTransformedFlow, QuarterTurnRotatesVectors) {
  const FlowField f(21, 21, {1.0, 0.0});
  const AffineTransform2D a = affine_about(1.0, 90.0, Vec2(10, 10));
  const FlowField g = derive_transformed_flow(f, a);
  EXPECT_GT(g.valid.count(), 400u);
  for (std::size_t i = 0; i < g.valid.size(); ++i)
    if (g.valid[i]) {
      EXPECT_NEAR(g.flow[i].u, 0.0, 1e-12);
      EXPECT_NEAR(g.flow[i].v, 1.0, 1e-12);
    }
}

TEST(WarpImageAffine, HalfTurnAboutCenterReversesIndices) {
  Rng rng(3);
  const int w = 15, h = 9;
  const ImageBuffer im = scenes::random_image(rng, w, h, 3);
  AffineTransform2D half;
  half.m = -Mat2::Identity();
  half.t = Vec2(w - 1, h - 1);
  const WarpResult r = warp_image_affine(im, half);
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      ASSERT_TRUE(r.in_bounds.at(u, v));
      for (int c = 0; c < 3; ++c) EXPECT_EQ(r.image.at(u, v, c), im.at(w - 1 - u, h - 1 - v, c));
    }
}

TEST(DeriveTransformedFlow, MatchesTracingOracle) {
  Rng rng(4);
  AffineSamplingConfig cfg;
  for (int trial = 0; trial < 20; ++trial) {
    const int w = 24, h = 18;
    const FlowField f = scenes::random_flow(rng, w, h, 5.0, 0.9);
    const AffineTransform2D a = sample_affine(cfg, rng);
    const FlowField g = derive_transformed_flow(f, a);
    const Eigen::Matrix2d mi = a.m.inverse();
    for (int v = 0; v < h; ++v)
      for (int u = 0; u < w; ++u) {
        const Eigen::Vector2d x = mi * (Eigen::Vector2d(u, v) - a.t);
        bool ok = true, touched = false;
        auto lookup = [&](double FlowVector::*c) {
          return [&, c](int px, int py) {
            touched = true;
            if (px < 0 || py < 0 || px >= w || py >= h || !f.valid.at(px, py)) {
              ok = false;
              return 0.0;
            }
            return f.flow(px, py).*c;
          };
        };
        const double fu = oracle::bilinear(lookup(&FlowVector::u), x.x(), x.y());
        const double fv = oracle::bilinear(lookup(&FlowVector::v), x.x(), x.y());
        ASSERT_TRUE(touched);
        ASSERT_EQ(static_cast<bool>(g.valid.at(u, v)), ok) << u << "," << v;
        if (!ok) continue;
        const Eigen::Vector2d e = a.m * Eigen::Vector2d(fu, fv);
        EXPECT_NEAR(g.flow(u, v).u, e.x(), 1e-9);
        EXPECT_NEAR(g.flow(u, v).v, e.y(), 1e-9);
      }
  }
}

TEST(DeriveTransformedFlow, ComposingWithInverseRecoversAffineField) {
  Rng rng(5);
  AffineSamplingConfig cfg;
  for (int trial = 0; trial < 20; ++trial) {
    const double a[3] = {rng.uniform(-3, 3), rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05)};
    const double b[3] = {rng.uniform(-3, 3), rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05)};
    const FlowField f = scenes::affine_flow(64, 48, a, b);
    const AffineTransform2D t = sample_affine(cfg, rng);
    const FlowField back = derive_transformed_flow(derive_transformed_flow(f, t), t.inverse());
    std::size_t checked = 0;
    for (std::size_t i = 0; i < f.valid.size(); ++i)
      if (back.valid[i]) {
        EXPECT_NEAR(back.flow[i].u, f.flow[i].u, 1e-4);
        EXPECT_NEAR(back.flow[i].v, f.flow[i].v, 1e-4);
        ++checked;
      }
    EXPECT_GT(checked, 0u);
  }
}

TEST(DeriveTransformedFlow, SimilarityScalesNorms) {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const double s = rng.uniform(0.9, 1.1);
    const FlowVector c{rng.uniform(-4, 4), rng.uniform(-4, 4)};
    const FlowField f(30, 30, c);
    const FlowField g = derive_transformed_flow(f, affine_about(s, rng.uniform(-10, 10), Vec2(15, 15)));
    for (std::size_t i = 0; i < g.valid.size(); ++i)
      if (g.valid[i]) EXPECT_NEAR(std::hypot(g.flow[i].u, g.flow[i].v), s * std::hypot(c.u, c.v), 1e-9);
  }
}

TEST(SampleAffine, DeterminantStaysInScaleSquaredRange) {
  Rng rng(7);
  AffineSamplingConfig cfg;
  for (int i = 0; i < 10000; ++i) {
    const AffineTransform2D a = sample_affine(cfg, rng);
    const double det = a.m.determinant();
    ASSERT_GE(det, 0.81 - 1e-12);
    ASSERT_LE(det, 1.21 + 1e-12);
    ASSERT_LE(std::abs(a.t.x()), 10.0);
    ASSERT_LE(std::abs(a.t.y()), 10.0);
  }
}

TEST(SampleAffine, DeterministicPerSeed) {
  AffineSamplingConfig cfg;
  Rng r1(42, 3), r2(42, 3), r3(43, 3);
  const AffineTransform2D a = sample_affine(cfg, r1), b = sample_affine(cfg, r2), c = sample_affine(cfg, r3);
  EXPECT_EQ(a.m, b.m);
  EXPECT_EQ(a.t, b.t);
  EXPECT_NE(a.m, c.m);
}

TEST(SampleAffine, InvalidRangesRejected) {
  AffineSamplingConfig cfg;
  cfg.scale = {0.0, 1.0};
  Rng rng(1);
  EXPECT_THROW(sample_affine(cfg, rng), Error);
  cfg.scale = {1.2, 1.1};
  EXPECT_THROW(sample_affine(cfg, rng), Error);
}

TEST(AffineTransform2D, SingularInverseIsInvalidInput) {
  AffineTransform2D a;
  a.m << 1, 2, 2, 4;
  try {
    a.inverse();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidInput);
  }
  EXPECT_THROW(derive_transformed_flow(FlowField(4, 4), a), Error);
}

TEST(ConsistencyLoss, ZeroForMatchingFlowsAndJointMask) {
  Rng rng(8);
  FlowField a = scenes::random_flow(rng, 16, 16, 3.0, 0.7);
  FlowField b = a;
  EXPECT_EQ(consistency_loss(a, b, {10.0}), 0.0);
  // Pixels invalid in either field are ignored, whatever their values.
  for (std::size_t i = 0; i < b.valid.size(); ++i)
    if (!a.valid[i]) b.flow[i] = {100.0, 100.0};
  EXPECT_EQ(consistency_loss(a, b, {0.0}), 0.0);
  FlowField none(16, 16, {}, false);
  EXPECT_THROW(consistency_loss(a, none, {10.0}), Error);
}

TEST(ConsistencyLoss, EqualsTrimmedLossOverJointMask) {
  Rng rng(9);
  const FlowField a = scenes::random_flow(rng, 20, 12, 3.0, 0.8), b = scenes::random_flow(rng, 20, 12, 3.0, 0.8);
  std::vector<double> res;
  for (std::size_t i = 0; i < a.valid.size(); ++i)
    if (a.valid[i] && b.valid[i]) res.push_back(l1_residual(a.flow[i], b.flow[i]));
  EXPECT_LE(oracle::rel_diff(consistency_loss(a, b, {10.0}), oracle::trimmed_mean(res, 10.0)), 1e-12);
}

}  // namespace
}  // namespace xmflow
