#pragma once

// Images are (3, H, W) tensors with values in [0, 1]. Binary PPM (P6,
// maxval 255) is the on-disk form; conversion is a plain /255.
//
// crop_patch extracts the square context region around a box the way Siamese
// trackers frame their template/search inputs. It samples bilinearly on a
// virtual canvas that extends the frame with its per-channel mean, so crops
// straddling the border degrade smoothly and fully-outside pixels equal the
// mean exactly. Crops are detached: they enter the graph as leaf inputs.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>

#include "clim/geometry.hpp"
#include "clim/tensor.hpp"
#include "clim/tensor_io.hpp"

namespace clim {

template <typename T>
void check_image(const char* opname, const Tensor<T>& img) {
  if (img.ndim() != 3 || img.extent(0) != 3)
    throw ShapeError(std::string(opname) + ": expected (3,H,W) image, got " + shape_str(img.shape()));
}

template <typename T>
void save_ppm(const std::filesystem::path& path, const Tensor<T>& img) {
  check_image("save_ppm", img);
  const int h = img.extent(1), w = img.extent(2);
  std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  out.reserve(out.size() + static_cast<std::size_t>(h) * w * 3);
  const T* p = img.raw();
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (std::size_t i = 0; i < plane; ++i)
    for (int c = 0; c < 3; ++c) {
      const double v = std::clamp(static_cast<double>(p[static_cast<std::size_t>(c) * plane + i]), 0.0, 1.0);
      out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
    }
  detail::write_file_bytes(path, out);
}

namespace detail {

inline int ppm_next_int(const std::string& bytes, std::size_t& pos, const std::string& origin) {
  while (pos < bytes.size()) {
    const char c = bytes[pos];
    if (c == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
      ++pos;
    } else {
      break;
    }
  }
  if (pos >= bytes.size() || bytes[pos] < '0' || bytes[pos] > '9')
    throw IoError(origin + ": malformed PPM header");
  long v = 0;
  while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
    v = v * 10 + (bytes[pos] - '0');
    if (v > 1 << 24) throw IoError(origin + ": PPM header value out of range");
    ++pos;
  }
  return static_cast<int>(v);
}

}  // namespace detail

template <typename T>
Tensor<T> load_ppm(const std::filesystem::path& path) {
  const std::string bytes = detail::read_file_bytes(path);
  const std::string origin = path.string();
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw IoError(origin + ": not a P6 PPM");
  std::size_t pos = 2;
  const int w = detail::ppm_next_int(bytes, pos, origin);
  const int h = detail::ppm_next_int(bytes, pos, origin);
  const int maxval = detail::ppm_next_int(bytes, pos, origin);
  if (w <= 0 || h <= 0) throw IoError(origin + ": bad PPM dimensions");
  if (maxval != 255) throw IoError(origin + ": only maxval 255 supported, got " + std::to_string(maxval));
  ++pos;  // single whitespace byte after maxval
  const std::size_t need = static_cast<std::size_t>(w) * h * 3;
  if (bytes.size() - pos < need) throw IoError(origin + ": truncated PPM payload");
  std::vector<T> data(need);
  const std::size_t plane = static_cast<std::size_t>(w) * h;
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
  for (std::size_t i = 0; i < plane; ++i)
    for (int c = 0; c < 3; ++c)
      data[static_cast<std::size_t>(c) * plane + i] = static_cast<T>(p[i * 3 + static_cast<std::size_t>(c)] / 255.0);
  return Tensor<T>::from_data({3, h, w}, std::move(data));
}

template <typename T>
std::array<T, 3> channel_means(const Tensor<T>& img) {
  check_image("channel_means", img);
  const std::size_t plane = static_cast<std::size_t>(img.extent(1)) * img.extent(2);
  std::array<T, 3> m{};
  const T* p = img.raw();
  for (int c = 0; c < 3; ++c) {
    double acc = 0;
    for (std::size_t i = 0; i < plane; ++i) acc += p[static_cast<std::size_t>(c) * plane + i];
    m[static_cast<std::size_t>(c)] = static_cast<T>(acc / static_cast<double>(plane));
  }
  return m;
}

// Extends an image to (out_h, out_w) by replicating the last row/column.
// Detached like all host-side image ops.
template <typename T>
Tensor<T> pad_edge_to(const Tensor<T>& img, int out_h, int out_w) {
  check_image("pad_edge_to", img);
  const int h = img.extent(1), w = img.extent(2);
  if (out_h < h || out_w < w) throw GeometryError("pad_edge_to: target smaller than image");
  if (out_h == h && out_w == w) return img;
  std::vector<T> out(3 * static_cast<std::size_t>(out_h) * out_w);
  const T* p = img.raw();
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < out_h; ++y) {
      const int sy = std::min(y, h - 1);
      const T* src = p + (static_cast<std::size_t>(c) * h + sy) * w;
      T* dst = out.data() + (static_cast<std::size_t>(c) * out_h + y) * out_w;
      std::copy_n(src, w, dst);
      for (int x = w; x < out_w; ++x) dst[x] = src[w - 1];
    }
  return Tensor<T>::from_data({3, out_h, out_w}, std::move(out));
}

// Side of the context square: s = sqrt((w + 2c)(h + 2c)), c = context*(w+h)/2.
inline double context_side(const Box& box, double context) {
  const double c = context * (box.w + box.h) / 2.0;
  return std::sqrt((box.w + 2 * c) * (box.h + 2 * c));
}

// Crops the square region of side context_side(box)*region_scale centered on
// the box and resamples it to out_size x out_size.
template <typename T>
Tensor<T> crop_patch(const Tensor<T>& frame, const Box& box, double context, int out_size,
                     double region_scale = 1.0) {
  check_image("crop_patch", frame);
  if (box.w <= 0 || box.h <= 0)
    throw GeometryError("crop_patch: degenerate box " + std::to_string(box.w) + "x" + std::to_string(box.h));
  if (out_size <= 0) throw GeometryError("crop_patch: out_size must be positive");
  if (region_scale <= 0) throw GeometryError("crop_patch: region_scale must be positive");
  const int h = frame.extent(1), w = frame.extent(2);
  const double side = context_side(box, context) * region_scale;
  const double step = side / static_cast<double>(out_size);
  const auto mean = channel_means(frame);
  const T* p = frame.raw();
  const std::size_t plane = static_cast<std::size_t>(h) * w;

  auto tap = [&](int c, int iy, int ix) -> double {
    if (ix < 0 || ix >= w || iy < 0 || iy >= h) return static_cast<double>(mean[static_cast<std::size_t>(c)]);
    return static_cast<double>(p[static_cast<std::size_t>(c) * plane + static_cast<std::size_t>(iy) * w + ix]);
  };

  std::vector<T> out(3 * static_cast<std::size_t>(out_size) * out_size);
  const std::size_t oplane = static_cast<std::size_t>(out_size) * out_size;
  for (int oy = 0; oy < out_size; ++oy) {
    const double sy = box.cy() + (oy + 0.5) * step - side / 2.0 - 0.5;
    const int iy0 = static_cast<int>(std::floor(sy));
    const double fy = sy - iy0;
    for (int ox = 0; ox < out_size; ++ox) {
      const double sx = box.cx() + (ox + 0.5) * step - side / 2.0 - 0.5;
      const int ix0 = static_cast<int>(std::floor(sx));
      const double fx = sx - ix0;
      for (int c = 0; c < 3; ++c) {
        const double v00 = tap(c, iy0, ix0), v01 = tap(c, iy0, ix0 + 1);
        const double v10 = tap(c, iy0 + 1, ix0), v11 = tap(c, iy0 + 1, ix0 + 1);
        const double v = (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11);
        out[static_cast<std::size_t>(c) * oplane + static_cast<std::size_t>(oy) * out_size +
            static_cast<std::size_t>(ox)] = static_cast<T>(v);
      }
    }
  }
  return Tensor<T>::from_data({3, out_size, out_size}, std::move(out));
}

}  // namespace clim
