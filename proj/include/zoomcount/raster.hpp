#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "zoomcount/core.hpp"
#include "zoomcount/io.hpp"

namespace zoomcount {

/// Row-major 8-bit raster with 1 (gray) or 3 (RGB) interleaved channels.
class Raster {
 public:
  Raster() = default;
  Raster(int width, int height, int channels, std::vector<std::uint8_t> data)
      : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
    if (width < 1 || height < 1) throw RangeError("raster dimensions must be positive");
    if (channels != 1 && channels != 3) throw RangeError("raster channels must be 1 or 3");
    if (data_.size() != static_cast<std::size_t>(width) * height * channels)
      throw RangeError("raster data length does not match dimensions");
  }
  Raster(int width, int height, int channels, std::uint8_t fill = 0)
      : Raster(width, height, channels,
               std::vector<std::uint8_t>(static_cast<std::size_t>(std::max(width, 0)) *
                                             std::max(height, 0) * channels,
                                         fill)) {}

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  const std::vector<std::uint8_t>& data() const { return data_; }

  std::uint8_t at(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }
  std::uint8_t& at(int x, int y, int c = 0) { return data_[index(x, y, c)]; }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 1;
  std::vector<std::uint8_t> data_;
};

namespace detail {

// Reads one PNM header integer, skipping whitespace and '#' comments.
inline int read_pnm_field(const std::vector<std::uint8_t>& buf, std::size_t& pos,
                          const char* field) {
  for (;;) {
    while (pos < buf.size() && std::isspace(buf[pos])) ++pos;
    if (pos < buf.size() && buf[pos] == '#') {
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  if (pos >= buf.size() || !std::isdigit(buf[pos]))
    throw ParseError(std::string("pnm: malformed ") + field);
  std::int64_t v = 0;
  while (pos < buf.size() && std::isdigit(buf[pos])) {
    v = v * 10 + (buf[pos] - '0');
    if (v > (1 << 24)) throw ParseError(std::string("pnm: ") + field + " out of range");
    ++pos;
  }
  return static_cast<int>(v);
}

}  // namespace detail

/// Decodes a binary PGM (P5) or PPM (P6) with maxval 255.
inline Raster decode_pnm(const std::vector<std::uint8_t>& buf) {
  if (buf.size() < 2 || buf[0] != 'P' || (buf[1] != '5' && buf[1] != '6'))
    throw ParseError("pnm: malformed magic (expected P5 or P6)");
  const int channels = buf[1] == '5' ? 1 : 3;
  std::size_t pos = 2;
  const int w = detail::read_pnm_field(buf, pos, "width");
  const int h = detail::read_pnm_field(buf, pos, "height");
  const int maxval = detail::read_pnm_field(buf, pos, "maxval");
  if (w < 1) throw ParseError("pnm: malformed width");
  if (h < 1) throw ParseError("pnm: malformed height");
  if (maxval != 255) throw ParseError("pnm: unsupported maxval " + std::to_string(maxval));
  if (pos >= buf.size() || !std::isspace(buf[pos])) throw ParseError("pnm: malformed maxval");
  ++pos;
  const std::size_t need = static_cast<std::size_t>(w) * h * channels;
  if (buf.size() - pos < need)
    throw ParseError("pnm: truncated payload (expected " + std::to_string(need) + " bytes, got " +
                     std::to_string(buf.size() - pos) + ")");
  return Raster(w, h, channels,
                std::vector<std::uint8_t>(buf.begin() + static_cast<std::ptrdiff_t>(pos),
                                          buf.begin() + static_cast<std::ptrdiff_t>(pos + need)));
}

inline std::vector<std::uint8_t> encode_pnm(const Raster& r) {
  const std::string header = std::string(r.channels() == 1 ? "P5" : "P6") + "\n" +
                             std::to_string(r.width()) + " " + std::to_string(r.height()) +
                             "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), r.data().begin(), r.data().end());
  return out;
}

inline Raster read_raster(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open raster " + path.string());
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
  return decode_pnm(buf);
}

inline void write_raster(const std::filesystem::path& path, const Raster& r) {
  write_file_atomic(path, encode_pnm(r));
}

/// Copies `region` out of `r`; the region must lie inside the raster.
inline Raster crop(const Raster& r, const PatchRegion& region) {
  if (region.w < 1 || region.h < 1 || region.x0 < 0 || region.y0 < 0 ||
      region.x0 + region.w > r.width() || region.y0 + region.h > r.height())
    throw RangeError("crop region outside raster bounds");
  const auto row_bytes = static_cast<std::size_t>(region.w) * r.channels();
  std::vector<std::uint8_t> dst(row_bytes * region.h);
  for (int y = 0; y < region.h; ++y) {
    const auto src_off =
        (static_cast<std::size_t>(region.y0 + y) * r.width() + region.x0) * r.channels();
    std::copy_n(r.data().begin() + static_cast<std::ptrdiff_t>(src_off), row_bytes,
                dst.begin() + static_cast<std::ptrdiff_t>(y * row_bytes));
  }
  return Raster(region.w, region.h, r.channels(), std::move(dst));
}

/// Grows `r` to (width, height) by replicating the last row and column.
inline Raster pad_edge(const Raster& r, int width, int height) {
  if (width < r.width() || height < r.height()) throw RangeError("pad target smaller than raster");
  Raster out(width, height, r.channels());
  for (int y = 0; y < height; ++y) {
    const int sy = std::min(y, r.height() - 1);
    for (int x = 0; x < width; ++x) {
      const int sx = std::min(x, r.width() - 1);
      for (int c = 0; c < r.channels(); ++c) out.at(x, y, c) = r.at(sx, sy, c);
    }
  }
  return out;
}

/// 2x bilinear upscale (pixel-center aligned, edges clamped) or 1/2x 2x2 box
/// downscale. Results round half away from zero.
inline Raster rescale(const Raster& r, Scale factor) {
  switch (factor) {
    case Scale::One:
      return r;
    case Scale::Half: {
      if (r.width() % 2 != 0 || r.height() % 2 != 0)
        throw RangeError("downscale by 1/2 requires even dimensions");
      Raster out(r.width() / 2, r.height() / 2, r.channels());
      for (int y = 0; y < out.height(); ++y)
        for (int x = 0; x < out.width(); ++x)
          for (int c = 0; c < r.channels(); ++c) {
            const int sum = r.at(2 * x, 2 * y, c) + r.at(2 * x + 1, 2 * y, c) +
                            r.at(2 * x, 2 * y + 1, c) + r.at(2 * x + 1, 2 * y + 1, c);
            out.at(x, y, c) = static_cast<std::uint8_t>((sum + 2) / 4);
          }
      return out;
    }
    case Scale::Two: {
      Raster out(r.width() * 2, r.height() * 2, r.channels());
      // Output pixel X samples source coordinate (X + 0.5) / 2 - 0.5, so the
      // neighbours are floor(X/2 - 0.25) and the next one, with weights 1/4, 3/4.
      const auto taps = [](int X, int n, int& a, int& b, double& wb) {
        const int base = X / 2;
        if (X % 2 == 0) {
          a = base - 1;
          b = base;
          wb = 0.75;
        } else {
          a = base;
          b = base + 1;
          wb = 0.25;
        }
        a = std::clamp(a, 0, n - 1);
        b = std::clamp(b, 0, n - 1);
      };
      for (int Y = 0; Y < out.height(); ++Y) {
        int ya, yb;
        double wy;
        taps(Y, r.height(), ya, yb, wy);
        for (int X = 0; X < out.width(); ++X) {
          int xa, xb;
          double wx;
          taps(X, r.width(), xa, xb, wx);
          for (int c = 0; c < r.channels(); ++c) {
            const double top = (1 - wx) * r.at(xa, ya, c) + wx * r.at(xb, ya, c);
            const double bot = (1 - wx) * r.at(xa, yb, c) + wx * r.at(xb, yb, c);
            const double v = (1 - wy) * top + wy * bot;
            out.at(X, Y, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
          }
        }
      }
      return out;
    }
  }
  return r;
}

}  // namespace zoomcount
