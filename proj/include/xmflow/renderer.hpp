#pragma once

#include "xmflow/core.hpp"

namespace xmflow {

struct RenderResult {
  ImageBuffer image;     // novel view; holes hold 0
  Mask hole_mask;        // true where nothing splatted
  Grid<double> zbuffer;  // nearest projected depth, 0 at holes
};

/// Forward splat: every valid source pixel x writes its color to
/// round(x + flow(x)). Collisions keep the smallest projected depth; exact
/// depth ties keep the lowest row-major source index. The winner is a pure
/// min over (depth, source index), so the result is independent of
/// traversal order.
///
/// projected_depth is the depth of each source pixel in the novel view; pass
/// the source depth map when only that is available.
RenderResult forward_render(const ImageBuffer& image, const FlowField& flow,
                            const Grid<double>& projected_depth);
RenderResult forward_render(const ImageBuffer& image, const FlowField& flow,
                            const DepthMap& depth);

struct WarpResult {
  ImageBuffer image;
  Mask in_bounds;
};

/// Bilinear sample of a channel at (x, y). Returns false when a neighbor with
/// non-zero weight lies outside the image; *out is untouched in that case.
bool bilinear_sample(const ImageBuffer& image, double x, double y, std::span<double> out);

/// Neighbor footprint of a bilinear sample at (x, y): integer base corner and
/// whether the +1 neighbor along each axis carries weight.
struct BilinearFootprint {
  int u0 = 0;
  int v0 = 0;
  double au = 0.0;  // weight of u0 + 1
  double av = 0.0;  // weight of v0 + 1
  bool inside = false;
};
BilinearFootprint bilinear_footprint(double x, double y, int width, int height);

/// output(x) = bilinear(image, x + flow(x)); in_bounds false where the
/// footprint leaves the image or the flow is invalid at x. Out-of-bounds
/// pixels are 0.
WarpResult backward_warp(const ImageBuffer& image, const FlowField& flow);

}  // namespace xmflow
