#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <png.h>

#include "cfsl/error.hpp"

namespace cfsl {

/// 8-bit image, row-major, channel-interleaved (HWC).
struct Image {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint32_t channels = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(std::uint32_t h, std::uint32_t w, std::uint32_t c, std::uint8_t fill = 0)
      : height(h), width(w), channels(c), pixels(std::size_t{h} * w * c, fill) {}

  std::size_t size_bytes() const { return pixels.size(); }
  std::uint8_t& at(std::uint32_t y, std::uint32_t x, std::uint32_t ch) {
    return pixels[(std::size_t{y} * width + x) * channels + ch];
  }
  std::uint8_t at(std::uint32_t y, std::uint32_t x, std::uint32_t ch) const {
    return pixels[(std::size_t{y} * width + x) * channels + ch];
  }

  friend bool operator==(const Image&, const Image&) = default;
};

/// Non-owning view of HWC bytes.
struct ImageView {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint32_t channels = 0;
  std::span<const std::uint8_t> pixels;

  ImageView() = default;
  ImageView(std::uint32_t h, std::uint32_t w, std::uint32_t c, std::span<const std::uint8_t> px)
      : height(h), width(w), channels(c), pixels(px) {}
  ImageView(const Image& img)  // NOLINT(google-explicit-constructor)
      : height(img.height), width(img.width), channels(img.channels), pixels(img.pixels) {}

  std::uint8_t at(std::uint32_t y, std::uint32_t x, std::uint32_t ch) const {
    return pixels[(std::size_t{y} * width + x) * channels + ch];
  }
};

namespace detail {

/// One output cell of a box filter along one axis: the source indices it
/// touches and their overlap lengths in units of 1/out. Weights sum to `in`.
struct AxisCell {
  std::uint32_t first = 0;
  std::vector<std::uint64_t> weights;
};

inline std::vector<AxisCell> box_axis(std::uint32_t in, std::uint32_t out) {
  std::vector<AxisCell> cells(out);
  for (std::uint32_t i = 0; i < out; ++i) {
    // Output cell i spans [i*in, (i+1)*in) in source coordinates scaled by out;
    // source pixel r spans [r*out, (r+1)*out).
    const std::uint64_t lo = std::uint64_t{i} * in;
    const std::uint64_t hi = lo + in;
    const auto first = static_cast<std::uint32_t>(lo / out);
    const auto last = static_cast<std::uint32_t>((hi - 1) / out);
    cells[i].first = first;
    for (std::uint32_t r = first; r <= last; ++r) {
      const std::uint64_t a = std::max<std::uint64_t>(lo, std::uint64_t{r} * out);
      const std::uint64_t b = std::min<std::uint64_t>(hi, std::uint64_t{r + 1} * out);
      cells[i].weights.push_back(b - a);
    }
  }
  return cells;
}

}  // namespace detail

/// Exact area-weighted box filter to out_h x out_w. Sums are accumulated in
/// integers, so the only rounding is the final half-away-from-zero step.
inline Image box_resize(const ImageView& src, std::uint32_t out_h, std::uint32_t out_w) {
  if (out_h == 0 || out_w == 0 || out_h > src.height || out_w > src.width)
    throw Error(ErrorCode::UpsampleUnsupported,
                "cannot box-filter " + std::to_string(src.height) + "x" +
                    std::to_string(src.width) + " to " + std::to_string(out_h) + "x" +
                    std::to_string(out_w));
  const auto rows = detail::box_axis(src.height, out_h);
  const auto cols = detail::box_axis(src.width, out_w);
  const std::uint64_t denom = std::uint64_t{src.height} * src.width;

  Image out(out_h, out_w, src.channels);
  std::vector<std::uint64_t> acc(src.channels);
  for (std::uint32_t oy = 0; oy < out_h; ++oy) {
    const auto& row = rows[oy];
    for (std::uint32_t ox = 0; ox < out_w; ++ox) {
      const auto& col = cols[ox];
      std::fill(acc.begin(), acc.end(), 0);
      for (std::size_t dy = 0; dy < row.weights.size(); ++dy) {
        const auto y = static_cast<std::uint32_t>(row.first + dy);
        for (std::size_t dx = 0; dx < col.weights.size(); ++dx) {
          const auto x = static_cast<std::uint32_t>(col.first + dx);
          const std::uint64_t w = row.weights[dy] * col.weights[dx];
          for (std::uint32_t ch = 0; ch < src.channels; ++ch) acc[ch] += w * src.at(y, x, ch);
        }
      }
      for (std::uint32_t ch = 0; ch < src.channels; ++ch) {
        const std::uint64_t rounded = (2 * acc[ch] + denom) / (2 * denom);
        out.at(oy, ox, ch) = static_cast<std::uint8_t>(std::min<std::uint64_t>(rounded, 255));
      }
    }
  }
  return out;
}

inline Image box_downsample(const ImageView& src, std::uint32_t target) {
  return box_resize(src, target, target);
}

/// Real-valued area means over a grid_h x grid_w box partition, averaged over
/// channels and scaled to [0, 1]. Used for compact learner features.
inline std::vector<float> box_pool_gray(const ImageView& src, std::uint32_t grid_h,
                                        std::uint32_t grid_w) {
  grid_h = std::min(grid_h, src.height);
  grid_w = std::min(grid_w, src.width);
  const auto rows = detail::box_axis(src.height, grid_h);
  const auto cols = detail::box_axis(src.width, grid_w);
  const double denom = static_cast<double>(src.height) * src.width * src.channels * 255.0;
  std::vector<float> out(std::size_t{grid_h} * grid_w);
  for (std::uint32_t gy = 0; gy < grid_h; ++gy) {
    for (std::uint32_t gx = 0; gx < grid_w; ++gx) {
      std::uint64_t acc = 0;
      for (std::size_t dy = 0; dy < rows[gy].weights.size(); ++dy)
        for (std::size_t dx = 0; dx < cols[gx].weights.size(); ++dx) {
          const auto y = static_cast<std::uint32_t>(rows[gy].first + dy);
          const auto x = static_cast<std::uint32_t>(cols[gx].first + dx);
          std::uint64_t px = 0;
          for (std::uint32_t ch = 0; ch < src.channels; ++ch) px += src.at(y, x, ch);
          acc += rows[gy].weights[dy] * cols[gx].weights[dx] * px;
        }
      out[std::size_t{gy} * grid_w + gx] = static_cast<float>(static_cast<double>(acc) / denom);
    }
  }
  return out;
}

// -- file codecs --------------------------------------------------------------

namespace detail {

inline bool pnm_skip_space(std::istream& in) {
  for (;;) {
    const int c = in.peek();
    if (c == EOF) return false;
    if (c == '#') {
      std::string discard;
      std::getline(in, discard);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      return true;
    }
  }
}

inline bool pnm_read_uint(std::istream& in, std::uint32_t& value) {
  if (!pnm_skip_space(in)) return false;
  std::uint64_t v = 0;
  bool any = false;
  while (std::isdigit(in.peek())) {
    v = v * 10 + static_cast<std::uint64_t>(in.get() - '0');
    if (v > 1u << 24) return false;
    any = true;
  }
  value = static_cast<std::uint32_t>(v);
  return any;
}

}  // namespace detail

/// Binary PGM (P5) / PPM (P6), maxval <= 255.
inline Image read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Ingest, "cannot open " + path.string());
  char magic[2] = {};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6'))
    throw Error(ErrorCode::Ingest, "not a binary PGM/PPM: " + path.string());
  std::uint32_t w = 0, h = 0, maxval = 0;
  if (!detail::pnm_read_uint(in, w) || !detail::pnm_read_uint(in, h) ||
      !detail::pnm_read_uint(in, maxval) || w == 0 || h == 0 || maxval == 0 || maxval > 255)
    throw Error(ErrorCode::Ingest, "bad PNM header: " + path.string());
  in.get();  // single whitespace before raster
  Image img(h, w, magic[1] == '5' ? 1 : 3);
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size()))
    throw Error(ErrorCode::Ingest, "truncated PNM raster: " + path.string());
  if (maxval != 255)
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>((p * 255u + maxval / 2) / maxval);
  return img;
}

inline void write_pnm(const ImageView& img, const std::filesystem::path& path) {
  if (img.channels != 1 && img.channels != 3)
    throw Error(ErrorCode::Ingest, "PNM needs 1 or 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Ingest, "cannot write " + path.string());
  out << (img.channels == 1 ? "P5" : "P6") << '\n' << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
}

/// Decodes any PNG to 8-bit gray (if the source is gray) or RGB; alpha is
/// composited away by libpng's simplified API.
inline Image read_png(const std::filesystem::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str()))
    throw Error(ErrorCode::Ingest, path.string() + ": " + png.message);
  const bool gray = (png.format & PNG_FORMAT_FLAG_COLOR) == 0;
  png.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  Image img(png.height, png.width, gray ? 1 : 3);
  if (!png_image_finish_read(&png, nullptr, img.pixels.data(), 0, nullptr)) {
    std::string msg = png.message;
    png_image_free(&png);
    throw Error(ErrorCode::Ingest, path.string() + ": " + msg);
  }
  return img;
}

inline void write_png(const ImageView& img, const std::filesystem::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = img.width;
  png.height = img.height;
  png.format = img.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.c_str(), 0, img.pixels.data(), 0, nullptr))
    throw Error(ErrorCode::Ingest, path.string() + ": " + png.message);
}

inline bool is_image_file(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return ext == ".png" || ext == ".pgm" || ext == ".ppm" || ext == ".pnm";
}

inline Image read_image(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return ext == ".png" ? read_png(path) : read_pnm(path);
}

/// Gray to RGB by replication; RGB to gray is refused rather than guessed.
inline Image convert_channels(Image img, std::uint32_t channels) {
  if (img.channels == channels) return img;
  if (img.channels == 1 && channels == 3) {
    Image rgb(img.height, img.width, 3);
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
      rgb.pixels[3 * i] = rgb.pixels[3 * i + 1] = rgb.pixels[3 * i + 2] = img.pixels[i];
    return rgb;
  }
  throw Error(ErrorCode::Ingest, "cannot convert " + std::to_string(img.channels) +
                                     "-channel image to " + std::to_string(channels));
}

}  // namespace cfsl
