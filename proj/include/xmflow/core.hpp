#pragma once

// Shared value types: image, depth, flow and mask buffers, error kinds,
// the counter-based RNG stream and deterministic reductions.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace xmflow {

enum class ErrorKind {
  InvalidInput,   // contract violation on arguments
  EmptyInput,     // nothing to operate on (empty mask, no valid depth, ...)
  InvalidConfig,  // configuration out of range
  Io,             // unreadable / malformed / missing files
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

struct Pixel {
  double u = 0.0;
  double v = 0.0;
};

/// Row-major 2D grid of T. Base for every per-pixel buffer.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int width, int height, T fill = T{})
      : width_(width), height_(height),
        data_(static_cast<std::size_t>(checked(width, height)), fill) {}

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(int u, int v) { return data_[index(u, v)]; }
  const T& operator()(int u, int v) const { return data_[index(u, v)]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::size_t index(int u, int v) const noexcept {
    return static_cast<std::size_t>(v) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(u);
  }
  bool contains(int u, int v) const noexcept {
    return u >= 0 && v >= 0 && u < width_ && v < height_;
  }
  bool same_shape(int w, int h) const noexcept { return w == width_ && h == height_; }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  static long long checked(int w, int h) {
    if (w < 0 || h < 0) fail(ErrorKind::InvalidInput, "negative grid dimensions");
    return static_cast<long long>(w) * h;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

/// Per-pixel boolean map. Stored as uint8_t so spans work.
class Mask : public Grid<std::uint8_t> {
 public:
  Mask() = default;
  Mask(int width, int height, bool fill = false)
      : Grid(width, height, static_cast<std::uint8_t>(fill ? 1 : 0)) {}

  bool at(int u, int v) const { return (*this)(u, v) != 0; }
  void set(int u, int v, bool on) { (*this)(u, v) = on ? 1 : 0; }
  std::size_t count() const;
  bool any() const;
};

/// Intensities in [0,1], interleaved channels (1 or 3).
class ImageBuffer {
 public:
  ImageBuffer() = default;
  ImageBuffer(int width, int height, int channels, double fill = 0.0);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  }

  double& at(int u, int v, int c) { return data_[offset(u, v, c)]; }
  double at(int u, int v, int c) const { return data_[offset(u, v, c)]; }
  bool contains(int u, int v) const noexcept {
    return u >= 0 && v >= 0 && u < width_ && v < height_;
  }
  bool same_shape(const ImageBuffer& o) const noexcept {
    return width_ == o.width_ && height_ == o.height_ && channels_ == o.channels_;
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

 private:
  std::size_t offset(int u, int v, int c) const noexcept {
    return (static_cast<std::size_t>(v) * static_cast<std::size_t>(width_) +
            static_cast<std::size_t>(u)) * static_cast<std::size_t>(channels_) +
           static_cast<std::size_t>(c);
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 1;
  std::vector<double> data_;
};

/// Metric depth; a pixel is usable only where valid is set.
struct DepthMap {
  Grid<double> depth;
  Mask valid;

  DepthMap() = default;
  DepthMap(int width, int height, double fill = 0.0)
      : depth(width, height, fill), valid(width, height, fill > 0.0 && std::isfinite(fill)) {}

  int width() const noexcept { return depth.width(); }
  int height() const noexcept { return depth.height(); }
  bool usable(int u, int v) const { return valid.at(u, v); }

  /// Builds a depth map marking non-finite or non-positive entries invalid.
  static DepthMap from_values(int width, int height, std::span<const double> values);
  /// Median over valid pixels; throws EmptyInput when none are valid.
  double median_valid() const;
};

struct FlowVector {
  double u = 0.0;
  double v = 0.0;
  friend bool operator==(const FlowVector&, const FlowVector&) = default;
};

/// Dense displacement field (pixels) with per-pixel validity.
struct FlowField {
  Grid<FlowVector> flow;
  Mask valid;

  FlowField() = default;
  FlowField(int width, int height, FlowVector fill = {}, bool valid_fill = true)
      : flow(width, height, fill), valid(width, height, valid_fill) {}

  int width() const noexcept { return flow.width(); }
  int height() const noexcept { return flow.height(); }
  bool same_shape(int w, int h) const noexcept { return flow.same_shape(w, h); }

  friend bool operator==(const FlowField&, const FlowField&) = default;
};

/// Order-fixed pairwise summation; the result depends only on the sequence,
/// never on thread count.
double pairwise_sum(std::span<const double> values);

/// Counter-seeded stream: (seed, stream index) fully determines the draws.
/// Uniform variates are built from raw 64-bit words so the sequence does not
/// depend on the standard library's distribution implementations.
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform01();
  /// Uniform in [lo, hi]; returns lo when lo == hi.
  double uniform(double lo, double hi);

 private:
  std::uint64_t state_[4];
};

std::uint64_t splitmix64(std::uint64_t& state);
/// FNV-1a 64-bit, stable across platforms.
std::uint64_t stable_hash(std::string_view text);

}  // namespace xmflow
