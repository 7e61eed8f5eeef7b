#pragma once

// Binary tensor files and weight directories.
//
// Tensor file layout, little-endian throughout:
//   bytes 0..3   magic "CLMT"
//   byte  4      format version (1)
//   byte  5      ndim
//   then ndim * u32 extents, then numel * f32 payload in row-major order.
//
// A weight directory holds one tensor file per parameter plus manifest.txt
// ("<name> <file> <d0>x<d1>x..." per line, insertion order) and config.txt.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "clim/params.hpp"
#include "clim/tensor.hpp"

namespace clim {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void put_u32_le(std::string& buf, std::uint32_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
  buf.push_back(static_cast<char>((v >> 16) & 0xff));
  buf.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline std::uint32_t get_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file_bytes(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

}  // namespace detail

inline constexpr int kTensorFileVersion = 1;
inline constexpr int kTensorFileMaxRank = 8;

template <typename T>
std::string serialize_tensor(const Tensor<T>& t) {
  if (t.ndim() > kTensorFileMaxRank) throw IoError("serialize_tensor: rank exceeds " + std::to_string(kTensorFileMaxRank));
  std::string buf;
  buf.reserve(6 + 4 * static_cast<std::size_t>(t.ndim()) + 4 * t.numel());
  buf += "CLMT";
  buf.push_back(static_cast<char>(kTensorFileVersion));
  buf.push_back(static_cast<char>(t.ndim()));
  for (int d = 0; d < t.ndim(); ++d) detail::put_u32_le(buf, static_cast<std::uint32_t>(t.extent(d)));
  const T* p = t.raw();
  for (std::size_t i = 0; i < t.numel(); ++i) {
    const float f = static_cast<float>(p[i]);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    detail::put_u32_le(buf, bits);
  }
  return buf;
}

template <typename T>
Tensor<T> deserialize_tensor(const std::string& bytes, const std::string& origin = "<memory>") {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 6 || std::memcmp(p, "CLMT", 4) != 0) throw IoError(origin + ": not a tensor file (bad magic)");
  if (p[4] != kTensorFileVersion)
    throw IoError(origin + ": unsupported tensor file version " + std::to_string(static_cast<int>(p[4])));
  const int ndim = static_cast<int>(p[5]);
  if (ndim < 1 || ndim > kTensorFileMaxRank) throw IoError(origin + ": bad rank " + std::to_string(ndim));
  std::size_t off = 6;
  if (bytes.size() < off + 4 * static_cast<std::size_t>(ndim)) throw IoError(origin + ": truncated header");
  Shape shape(static_cast<std::size_t>(ndim));
  std::size_t n = 1;
  for (int d = 0; d < ndim; ++d) {
    const std::uint32_t e = detail::get_u32_le(p + off);
    off += 4;
    if (e == 0 || e > 0x7fffffffu) throw IoError(origin + ": bad extent");
    shape[static_cast<std::size_t>(d)] = static_cast<int>(e);
    n *= e;
  }
  if (bytes.size() != off + 4 * n)
    throw IoError(origin + ": payload size mismatch (" + std::to_string(bytes.size() - off) + " bytes for " +
                  std::to_string(n) + " elements)");
  std::vector<T> data(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t bits = detail::get_u32_le(p + off + 4 * i);
    float f;
    std::memcpy(&f, &bits, 4);
    data[i] = static_cast<T>(f);
  }
  return Tensor<T>::from_data(std::move(shape), std::move(data));
}

template <typename T>
void save_tensor(const std::filesystem::path& path, const Tensor<T>& t) {
  detail::write_file_bytes(path, serialize_tensor(t));
}

template <typename T>
Tensor<T> load_tensor(const std::filesystem::path& path) {
  return deserialize_tensor<T>(detail::read_file_bytes(path), path.string());
}

inline std::string shape_dims_str(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += 'x';
    out += std::to_string(s[i]);
  }
  return out;
}

// Writes manifest.txt, config.txt, and one tensor file per parameter
// (p0000.clmt, p0001.clmt, ... in insertion order).
template <typename T>
void save_weight_dir(const std::filesystem::path& dir, const ParamStore<T>& params, const std::string& config_text) {
  std::filesystem::create_directories(dir);
  std::string manifest;
  int idx = 0;
  for (const auto& [name, t] : params.items()) {
    char file[24];
    std::snprintf(file, sizeof file, "p%04d.clmt", idx++);
    save_tensor(dir / file, t);
    manifest += name;
    manifest += ' ';
    manifest += file;
    manifest += ' ';
    manifest += shape_dims_str(t.shape());
    manifest += '\n';
  }
  detail::write_file_bytes(dir / "manifest.txt", manifest);
  detail::write_file_bytes(dir / "config.txt", config_text);
}

// Loads every manifest entry into `params` by name. Extra names on either
// side, shape mismatches, and malformed lines all throw.
template <typename T>
void load_weight_dir(const std::filesystem::path& dir, ParamStore<T>& params) {
  const std::string manifest = detail::read_file_bytes(dir / "manifest.txt");
  std::istringstream lines(manifest);
  std::string line;
  std::size_t loaded = 0;
  int lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string name, file, dims;
    if (!(ls >> name >> file >> dims))
      throw IoError(dir.string() + "/manifest.txt:" + std::to_string(lineno) + ": malformed line");
    Tensor<T>* dst = params.find(name);
    if (!dst) throw IoError(dir.string() + ": manifest names unknown parameter '" + name + "'");
    Tensor<T> t = load_tensor<T>(dir / file);
    if (shape_dims_str(t.shape()) != dims)
      throw IoError(dir.string() + ": '" + name + "' dims " + dims + " disagree with tensor file " +
                    shape_dims_str(t.shape()));
    if (t.shape() != dst->shape())
      throw IoError(dir.string() + ": '" + name + "' has shape " + shape_str(t.shape()) + ", model expects " +
                    shape_str(dst->shape()));
    std::copy_n(t.raw(), t.numel(), dst->raw_mut());
    ++loaded;
  }
  if (loaded != params.size())
    throw IoError(dir.string() + ": manifest covers " + std::to_string(loaded) + " of " +
                  std::to_string(params.size()) + " parameters");
}

inline std::string load_weight_dir_config(const std::filesystem::path& dir) {
  return detail::read_file_bytes(dir / "config.txt");
}

}  // namespace clim
