#include "xmflow/renderer.hpp"

#include <limits>

namespace xmflow {

namespace {

struct Splat {
  double depth = std::numeric_limits<double>::infinity();
  std::size_t source = std::numeric_limits<std::size_t>::max();

  bool beats(const Splat& o) const {
    return depth < o.depth || (depth == o.depth && source < o.source);
  }
};

}  // namespace

RenderResult forward_render(const ImageBuffer& image, const FlowField& flow,
                            const Grid<double>& projected_depth) {
  const int w = image.width();
  const int h = image.height();
  if (!flow.same_shape(w, h) || !projected_depth.same_shape(w, h))
    fail(ErrorKind::InvalidInput, "forward_render: image, flow and depth sizes differ");

  Grid<Splat> best(w, h);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      if (!flow.valid.at(u, v)) continue;
      const double z = projected_depth(u, v);
      if (!(z > 0.0) || !std::isfinite(z)) continue;
      const FlowVector f = flow.flow(u, v);
      const double tu = std::nearbyint(u + f.u);
      const double tv = std::nearbyint(v + f.v);
      if (!(tu >= 0.0 && tv >= 0.0 && tu <= w - 1 && tv <= h - 1)) continue;
      const Splat s{z, best.index(u, v)};
      Splat& cell = best(static_cast<int>(tu), static_cast<int>(tv));
      if (s.beats(cell)) cell = s;
    }
  }

  RenderResult out{ImageBuffer(w, h, image.channels(), 0.0), Mask(w, h, true),
                   Grid<double>(w, h, 0.0)};
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const Splat& s = best(u, v);
      if (s.source == std::numeric_limits<std::size_t>::max()) continue;
      const int su = static_cast<int>(s.source % static_cast<std::size_t>(w));
      const int sv = static_cast<int>(s.source / static_cast<std::size_t>(w));
      for (int c = 0; c < image.channels(); ++c) out.image.at(u, v, c) = image.at(su, sv, c);
      out.hole_mask.set(u, v, false);
      out.zbuffer(u, v) = s.depth;
    }
  }
  return out;
}

RenderResult forward_render(const ImageBuffer& image, const FlowField& flow,
                            const DepthMap& depth) {
  if (!depth.depth.same_shape(image.width(), image.height()))
    fail(ErrorKind::InvalidInput, "forward_render: image and depth sizes differ");
  Grid<double> z(depth.width(), depth.height(), 0.0);
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = depth.valid[i] ? depth.depth[i] : 0.0;
  return forward_render(image, flow, z);
}

BilinearFootprint bilinear_footprint(double x, double y, int width, int height) {
  BilinearFootprint fp;
  if (!std::isfinite(x) || !std::isfinite(y)) return fp;
  const double fu = std::floor(x);
  const double fv = std::floor(y);
  if (fu < 0.0 || fv < 0.0 || fu > width - 1 || fv > height - 1) return fp;
  fp.u0 = static_cast<int>(fu);
  fp.v0 = static_cast<int>(fv);
  fp.au = x - fu;
  fp.av = y - fv;
  // A neighbor with zero weight does not need to exist.
  if (fp.au > 0.0 && fp.u0 + 1 > width - 1) return fp;
  if (fp.av > 0.0 && fp.v0 + 1 > height - 1) return fp;
  fp.inside = true;
  return fp;
}

bool bilinear_sample(const ImageBuffer& image, double x, double y, std::span<double> out) {
  const BilinearFootprint fp = bilinear_footprint(x, y, image.width(), image.height());
  if (!fp.inside) return false;
  const int u1 = fp.au > 0.0 ? fp.u0 + 1 : fp.u0;
  const int v1 = fp.av > 0.0 ? fp.v0 + 1 : fp.v0;
  for (int c = 0; c < image.channels(); ++c) {
    const double top = (1.0 - fp.au) * image.at(fp.u0, fp.v0, c) + fp.au * image.at(u1, fp.v0, c);
    const double bottom = (1.0 - fp.au) * image.at(fp.u0, v1, c) + fp.au * image.at(u1, v1, c);
    out[static_cast<std::size_t>(c)] = (1.0 - fp.av) * top + fp.av * bottom;
  }
  return true;
}

WarpResult backward_warp(const ImageBuffer& image, const FlowField& flow) {
  const int w = image.width();
  const int h = image.height();
  if (!flow.same_shape(w, h)) fail(ErrorKind::InvalidInput, "backward_warp: flow size differs");
  WarpResult out{ImageBuffer(w, h, image.channels(), 0.0), Mask(w, h, false)};
  double px[3];
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      if (!flow.valid.at(u, v)) continue;
      const FlowVector f = flow.flow(u, v);
      if (!bilinear_sample(image, u + f.u, v + f.v, std::span<double>(px, 3))) continue;
      for (int c = 0; c < image.channels(); ++c) out.image.at(u, v, c) = px[c];
      out.in_bounds.set(u, v, true);
    }
  }
  return out;
}

}  // namespace xmflow
