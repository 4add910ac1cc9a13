#pragma once

#include <filesystem>
#include <vector>

#include "xmflow/core.hpp"
#include "xmflow/renderer.hpp"

namespace xmflow {

using ValidMask = Mask;

inline constexpr double kDefaultPhotometricThreshold = 0.1;
inline constexpr double kDefaultTauPercent = 10.0;

struct TrimConfig {
  double tau_percent = kDefaultTauPercent;

  void validate() const;
  friend bool operator==(const TrimConfig&, const TrimConfig&) = default;
};

/// Number of valid pixels dropped for a given tau: ceil(tau/100 * n), so any
/// tau > 0 drops at least one pixel.
std::size_t trim_count(double tau_percent, std::size_t n_valid);

/// Photometric consistency mask. Warps the rendered view back with the
/// synthetic flow and keeps pixels whose mean absolute channel error against
/// the source is <= threshold. Pixels with invalid flow, an out-of-image
/// footprint, or a footprint touching a hole are rejected.
ValidMask photometric_mask(const ImageBuffer& source, const ImageBuffer& rendered,
                           const FlowField& synthetic_flow, double threshold,
                           const Mask* hole_mask = nullptr);
ValidMask photometric_mask(const ImageBuffer& source, const RenderResult& rendered,
                           const FlowField& synthetic_flow, double threshold);

/// Per-pixel |du| + |dv|.
double l1_residual(const FlowVector& a, const FlowVector& b);

/// Mean L1 flow residual over mask pixels.
double masked_flow_loss(const FlowField& pred, const FlowField& target, const ValidMask& mask);

struct TrimmedLoss {
  double value = 0.0;
  ValidMask kept;  // the surviving set after trimming
};

/// Mean L1 residual after discarding the trim_count() largest residuals among
/// mask pixels. Ties at the boundary keep the lower row-major index.
TrimmedLoss trimmed_flow_loss(const FlowField& pred, const FlowField& target,
                              const ValidMask& mask, const TrimConfig& cfg);

/// sign(pred - target) / |kept| per component on kept pixels, zero elsewhere.
FlowField flow_loss_subgradient(const FlowField& pred, const FlowField& target,
                                const ValidMask& kept);

enum class PhotometricKind { L1, Ssim };

/// Per-pixel SSIM (averaged over channels) with an 11x11 Gaussian window,
/// sigma 1.5, C1 = 0.01^2, C2 = 0.03^2. Window weights are renormalised
/// over the in-image part at borders.
Grid<double> ssim_map(const ImageBuffer& a, const ImageBuffer& b);

double photometric_loss(const ImageBuffer& warped, const ImageBuffer& target,
                        const ValidMask& mask, PhotometricKind kind);

/// A feature map: channels-last tensor, like an ImageBuffer without the
/// [0,1] range restriction and with arbitrary channel count.
struct FeatureMap {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> values;  // (v * width + u) * channels + c
};

enum class FeatureSource { PyramidGradient, Identity, External };

struct FeatureDistanceConfig {
  std::vector<double> layer_weights{1.0};
  FeatureSource source = FeatureSource::PyramidGradient;
  // External source: one PFM file per layer for each image.
  std::vector<std::filesystem::path> external_first;
  std::vector<std::filesystem::path> external_second;

  void validate() const;
};

/// Built-in extractor: level l of a Gaussian pyramid (5-tap binomial blur,
/// replicated border, decimation by 2) with its central-difference horizontal
/// and vertical gradients appended as channels.
std::vector<FeatureMap> pyramid_gradient_features(const ImageBuffer& image, std::size_t levels);

/// sum_l w_l * || a_l - b_l ||_2 over matching layer lists.
double weighted_layer_distance(std::span<const FeatureMap> a, std::span<const FeatureMap> b,
                               std::span<const double> weights);

double feature_distance(const ImageBuffer& first, const ImageBuffer& second,
                        const FeatureDistanceConfig& cfg);

struct CombinedLossWeights {
  double lambda_transfer = 2.0;
  double lambda_consistency = 0.05;

  void validate() const;
  friend bool operator==(const CombinedLossWeights&, const CombinedLossWeights&) = default;
};

/// flow_a + flow_b + lambda_transfer * transfer + lambda_consistency * consistency.
double combined_objective(double flow_loss_a, double flow_loss_b, double transfer_loss,
                          double consistency_loss, const CombinedLossWeights& w);

}  // namespace xmflow
