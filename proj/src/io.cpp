#include "xmflow/io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

namespace xmflow {

namespace fs = std::filesystem;

std::vector<unsigned char> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

void write_file(const fs::path& path, std::span<const unsigned char> bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::Io, "short write to " + path.string());
}

// ---------------------------------------------------------------------------
// little-endian helpers

namespace {

template <typename T>
void put_le(std::vector<unsigned char>& out, T value) {
  static_assert(sizeof(T) == 4);
  std::uint32_t bits;
  std::memcpy(&bits, &value, 4);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(bits >> (8 * i)));
}

template <typename T>
T get_le(const unsigned char* p) {
  static_assert(sizeof(T) == 4);
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  T value;
  std::memcpy(&value, &bits, 4);
  return value;
}

float get_float(const unsigned char* p, bool little) {
  if (little) return get_le<float>(p);
  const unsigned char r[4] = {p[3], p[2], p[1], p[0]};
  return get_le<float>(r);
}

}  // namespace

// ---------------------------------------------------------------------------
// .flo

std::vector<unsigned char> encode_flo(const FlowField& flow) {
  std::vector<unsigned char> out;
  out.reserve(12 + flow.flow.size() * 8);
  put_le(out, kFloMagic);
  put_le(out, static_cast<std::int32_t>(flow.width()));
  put_le(out, static_cast<std::int32_t>(flow.height()));
  for (std::size_t i = 0; i < flow.flow.size(); ++i) {
    if (flow.valid[i]) {
      put_le(out, static_cast<float>(flow.flow[i].u));
      put_le(out, static_cast<float>(flow.flow[i].v));
    } else {
      put_le(out, kFloInvalid);
      put_le(out, kFloInvalid);
    }
  }
  return out;
}

FlowField decode_flo(std::span<const unsigned char> bytes) {
  if (bytes.size() < 12) fail(ErrorKind::Io, "flo: truncated header");
  if (get_le<float>(bytes.data()) != kFloMagic) fail(ErrorKind::Io, "flo: bad magic");
  const auto w = get_le<std::int32_t>(bytes.data() + 4);
  const auto h = get_le<std::int32_t>(bytes.data() + 8);
  if (w < 0 || h < 0 || w > (1 << 20) || h > (1 << 20)) fail(ErrorKind::Io, "flo: bad dimensions");
  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  if (bytes.size() != 12 + 8 * n) fail(ErrorKind::Io, "flo: payload size does not match dimensions");
  FlowField flow(w, h, {}, false);
  const unsigned char* p = bytes.data() + 12;
  for (std::size_t i = 0; i < n; ++i, p += 8) {
    const float u = get_le<float>(p);
    const float v = get_le<float>(p + 4);
    const bool invalid = !std::isfinite(u) || !std::isfinite(v) || std::abs(u) >= kFloInvalid ||
                         std::abs(v) >= kFloInvalid;
    if (invalid) continue;
    flow.flow[i] = {u, v};
    flow.valid[i] = 1;
  }
  return flow;
}

void write_flo(const fs::path& path, const FlowField& flow) { write_file(path, encode_flo(flow)); }

FlowField read_flo(const fs::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_flo(bytes);
  } catch (const Error& e) {
    fail(ErrorKind::Io, path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// .pfm

FeatureMap read_pfm(const fs::path& path) {
  const auto bytes = read_file(path);
  // Header: three whitespace-separated tokens, then a single whitespace byte.
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t.push_back(static_cast<char>(bytes[pos++]));
    return t;
  };
  const std::string magic = token();
  const std::string ws = token();
  const std::string hs = token();
  const std::string ss = token();
  if (pos >= bytes.size()) fail(ErrorKind::Io, path.string() + ": truncated PFM header");
  ++pos;  // single whitespace after the scale
  int channels = 0;
  if (magic == "Pf") channels = 1;
  else if (magic == "PF") channels = 3;
  else fail(ErrorKind::Io, path.string() + ": bad PFM magic");
  int w = 0, h = 0;
  double scale = 0.0;
  try {
    w = std::stoi(ws);
    h = std::stoi(hs);
    scale = std::stod(ss);
  } catch (const std::exception&) {
    fail(ErrorKind::Io, path.string() + ": malformed PFM header");
  }
  if (w <= 0 || h <= 0 || scale == 0.0) fail(ErrorKind::Io, path.string() + ": bad PFM header values");
  const bool little = scale < 0.0;
  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * static_cast<std::size_t>(channels);
  if (bytes.size() - pos < 4 * n) fail(ErrorKind::Io, path.string() + ": truncated PFM payload");

  FeatureMap out{w, h, channels, std::vector<double>(n)};
  const unsigned char* p = bytes.data() + pos;
  for (int row = 0; row < h; ++row) {
    const int v = h - 1 - row;  // bottom-to-top
    for (int u = 0; u < w; ++u)
      for (int c = 0; c < channels; ++c, p += 4)
        out.values[(static_cast<std::size_t>(v) * static_cast<std::size_t>(w) + static_cast<std::size_t>(u)) *
                       static_cast<std::size_t>(channels) + static_cast<std::size_t>(c)] = get_float(p, little);
  }
  return out;
}

void write_pfm(const fs::path& path, const FeatureMap& map) {
  if (map.channels != 1 && map.channels != 3)
    fail(ErrorKind::InvalidInput, "PFM supports 1 or 3 channels");
  const std::string header = std::string(map.channels == 1 ? "Pf" : "PF") + "\n" +
                             std::to_string(map.width) + " " + std::to_string(map.height) + "\n-1.0\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  for (int row = 0; row < map.height; ++row) {
    const int v = map.height - 1 - row;
    for (int u = 0; u < map.width; ++u)
      for (int c = 0; c < map.channels; ++c)
        put_le(out, static_cast<float>(
                        map.values[(static_cast<std::size_t>(v) * static_cast<std::size_t>(map.width) +
                                    static_cast<std::size_t>(u)) * static_cast<std::size_t>(map.channels) +
                                   static_cast<std::size_t>(c)]));
  }
  write_file(path, out);
}

DepthMap read_depth_pfm(const fs::path& path) {
  const FeatureMap m = read_pfm(path);
  if (m.channels != 1) fail(ErrorKind::Io, path.string() + ": depth PFM must have 1 channel");
  return DepthMap::from_values(m.width, m.height, m.values);
}

void write_depth_pfm(const fs::path& path, const DepthMap& depth) {
  FeatureMap m{depth.width(), depth.height(), 1, std::vector<double>(depth.depth.size())};
  for (std::size_t i = 0; i < m.values.size(); ++i)
    m.values[i] = depth.valid[i] ? depth.depth[i] : 0.0;
  write_pfm(path, m);
}

// ---------------------------------------------------------------------------
// PNG

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// libpng reports through these instead of stderr; the message ends up in the
// thrown Error.
void png_capture_error(png_structp png, png_const_charp msg) {
  if (auto* out = static_cast<std::string*>(png_get_error_ptr(png))) *out = msg;
  png_longjmp(png, 1);
}
void png_ignore_warning(png_structp, png_const_charp) {}

}  // namespace

PngImage read_png(const fs::path& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) fail(ErrorKind::Io, "cannot open " + path.string());
  std::string png_message;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &png_message, png_capture_error, png_ignore_warning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorKind::Io, "libpng initialisation failed");
  }
  std::vector<png_bytep> rows;
  std::vector<unsigned char> buffer;
  png_uint_32 w = 0, h = 0;
  int depth = 0, color = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorKind::Io, path.string() + ": not a readable PNG (" + png_message + ")");
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  png_get_IHDR(png, info, &w, &h, &depth, &color, nullptr, nullptr, nullptr);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
  if (depth == 16 && std::endian::native == std::endian::little) png_set_swap(png);
  png_read_update_info(png, info);
  const int out_depth = png_get_bit_depth(png, info);
  const int channels = png_get_channels(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  buffer.resize(rowbytes * h);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = buffer.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  if (channels != 1 && channels != 3) fail(ErrorKind::Io, path.string() + ": unsupported channel layout");
  PngImage out{ImageBuffer(static_cast<int>(w), static_cast<int>(h), channels), out_depth};
  const double maxv = out_depth == 16 ? 65535.0 : 255.0;
  for (png_uint_32 y = 0; y < h; ++y)
    for (png_uint_32 x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c) {
        const std::size_t k = x * static_cast<std::size_t>(channels) + static_cast<std::size_t>(c);
        double raw;
        if (out_depth == 16) {
          std::uint16_t s;
          std::memcpy(&s, rows[y] + 2 * k, 2);
          raw = s;
        } else {
          raw = rows[y][k];
        }
        out.image.at(static_cast<int>(x), static_cast<int>(y), c) = raw / maxv;
      }
  return out;
}

void write_png(const fs::path& path, const ImageBuffer& image, int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) fail(ErrorKind::InvalidInput, "PNG bit depth must be 8 or 16");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) fail(ErrorKind::Io, "cannot write " + path.string());
  std::string png_message;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &png_message, png_capture_error, png_ignore_warning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorKind::Io, "libpng initialisation failed");
  }
  const int nc = image.channels();
  const std::size_t bpc = bit_depth / 8;
  const std::size_t rowbytes = static_cast<std::size_t>(image.width()) * static_cast<std::size_t>(nc) * bpc;
  std::vector<unsigned char> buffer(rowbytes * static_cast<std::size_t>(image.height()));
  const double maxv = bit_depth == 16 ? 65535.0 : 255.0;
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x)
      for (int c = 0; c < nc; ++c) {
        const double q = std::nearbyint(std::clamp(image.at(x, y, c), 0.0, 1.0) * maxv);
        const std::size_t k = static_cast<std::size_t>(y) * rowbytes +
                              (static_cast<std::size_t>(x) * static_cast<std::size_t>(nc) + static_cast<std::size_t>(c)) * bpc;
        if (bit_depth == 16) {
          const auto s = static_cast<std::uint16_t>(q);
          buffer[k] = static_cast<unsigned char>(s >> 8);  // PNG is big-endian
          buffer[k + 1] = static_cast<unsigned char>(s & 0xff);
        } else {
          buffer[k] = static_cast<unsigned char>(q);
        }
      }
  std::vector<png_bytep> rows(static_cast<std::size_t>(image.height()));
  for (std::size_t y = 0; y < rows.size(); ++y) rows[y] = buffer.data() + y * rowbytes;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorKind::Io, "failed writing " + path.string() + " (" + png_message + ")");
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width()), static_cast<png_uint_32>(image.height()),
               bit_depth, nc == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void write_mask_png(const fs::path& path, const Mask& mask) {
  ImageBuffer im(mask.width(), mask.height(), 1, 0.0);
  for (std::size_t i = 0; i < mask.size(); ++i) im.values()[i] = mask[i] ? 1.0 : 0.0;
  write_png(path, im, 8);
}

Mask read_mask_png(const fs::path& path) {
  const PngImage p = read_png(path);
  Mask m(p.image.width(), p.image.height(), false);
  for (int v = 0; v < m.height(); ++v)
    for (int u = 0; u < m.width(); ++u) m.set(u, v, p.image.at(u, v, 0) >= 0.5);
  return m;
}

// ---------------------------------------------------------------------------
// LiDAR

std::vector<LidarPoint> read_lidar(const fs::path& path) {
  const auto bytes = read_file(path);
  std::vector<LidarPoint> pts;
  if (path.extension() == ".bin") {
    if (bytes.size() % 16 != 0) fail(ErrorKind::Io, path.string() + ": size is not a multiple of 16");
    pts.reserve(bytes.size() / 16);
    for (std::size_t off = 0; off < bytes.size(); off += 16) {
      const unsigned char* p = bytes.data() + off;
      pts.push_back({get_le<float>(p), get_le<float>(p + 4), get_le<float>(p + 8), get_le<float>(p + 12)});
    }
  } else {
    std::istringstream in(std::string(bytes.begin(), bytes.end()));
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
      std::istringstream ls(line);
      LidarPoint p;
      if (!(ls >> p.x >> p.y >> p.z))
        fail(ErrorKind::Io, path.string() + ": malformed point on line " + std::to_string(lineno));
      ls >> p.intensity;
      pts.push_back(p);
    }
  }
  for (const auto& p : pts)
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
      fail(ErrorKind::Io, path.string() + ": non-finite LiDAR coordinate");
  return pts;
}

void write_lidar_bin(const fs::path& path, std::span<const LidarPoint> points) {
  std::vector<unsigned char> out;
  out.reserve(points.size() * 16);
  for (const auto& p : points) {
    put_le(out, static_cast<float>(p.x));
    put_le(out, static_cast<float>(p.y));
    put_le(out, static_cast<float>(p.z));
    put_le(out, static_cast<float>(p.intensity));
  }
  write_file(path, out);
}

}  // namespace xmflow
