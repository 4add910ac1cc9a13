#include "xmflow/core.hpp"

#include <algorithm>

namespace xmflow {

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(values().begin(), values().end(), std::uint8_t{1}));
}

bool Mask::any() const {
  return std::any_of(values().begin(), values().end(), [](std::uint8_t b) { return b != 0; });
}

ImageBuffer::ImageBuffer(int width, int height, int channels, double fill)
    : width_(width), height_(height), channels_(channels) {
  if (width < 0 || height < 0) fail(ErrorKind::InvalidInput, "negative image dimensions");
  if (channels != 1 && channels != 3)
    fail(ErrorKind::InvalidInput, "image must have 1 or 3 channels");
  data_.assign(pixel_count() * static_cast<std::size_t>(channels), fill);
}

DepthMap DepthMap::from_values(int width, int height, std::span<const double> values) {
  DepthMap d(width, height);
  if (values.size() != d.depth.size())
    fail(ErrorKind::InvalidInput, "depth value count does not match dimensions");
  for (std::size_t i = 0; i < values.size(); ++i) {
    d.depth[i] = values[i];
    d.valid[i] = (std::isfinite(values[i]) && values[i] > 0.0) ? 1 : 0;
  }
  return d;
}

double DepthMap::median_valid() const {
  std::vector<double> v;
  v.reserve(depth.size());
  for (std::size_t i = 0; i < depth.size(); ++i)
    if (valid[i]) v.push_back(depth[i]);
  if (v.empty()) fail(ErrorKind::EmptyInput, "depth map has no valid pixels");
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    m = 0.5 * (m + lower);
  }
  return m;
}

double pairwise_sum(std::span<const double> values) {
  constexpr std::size_t kLeaf = 32;
  if (values.size() <= kLeaf) {
    double s = 0.0;
    for (double x : values) s += x;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t stable_hash(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// xoshiro256** seeded through splitmix64 of (seed, stream).
Rng::Rng(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t s = seed ^ (0xd1b54a32d192ed03ULL * (stream + 1));
  for (auto& word : state_) word = splitmix64(s);
}

static inline std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double Rng::uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) {
  if (lo == hi) return lo;
  // Closed upper bound is irrelevant for continuous draws; keep the result inside [lo, hi].
  return std::min(hi, lo + (hi - lo) * uniform01());
}

}  // namespace xmflow
