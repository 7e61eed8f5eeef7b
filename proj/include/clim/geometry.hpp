#pragma once

// Axis-aligned boxes in top-left (x, y, w, h) form, plus the trajectory and
// annotation text formats: one comma-separated line per frame, boxes printed
// with four decimals, annotation lines carrying two extra 0/1 flag columns
// (occluded, aspect-change).

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "clim/tensor_io.hpp"

namespace clim {

struct Box {
  double x = 0, y = 0, w = 0, h = 0;

  double cx() const { return x + w / 2; }
  double cy() const { return y + h / 2; }
  double area() const { return w > 0 && h > 0 ? w * h : 0.0; }

  static Box from_center(double cx, double cy, double w, double h) { return {cx - w / 2, cy - h / 2, w, h}; }
};

inline double iou(const Box& a, const Box& b) {
  const double x0 = std::max(a.x, b.x);
  const double y0 = std::max(a.y, b.y);
  const double x1 = std::min(a.x + a.w, b.x + b.w);
  const double y1 = std::min(a.y + a.h, b.y + b.h);
  const double inter = std::max(0.0, x1 - x0) * std::max(0.0, y1 - y0);
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

inline double center_distance(const Box& a, const Box& b) {
  const double dx = a.cx() - b.cx();
  const double dy = a.cy() - b.cy();
  return std::sqrt(dx * dx + dy * dy);
}

struct FrameFlags {
  bool occluded = false;
  bool aspect_change = false;
};

namespace detail {

inline std::string format_box(const Box& b) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%.4f,%.4f,%.4f,%.4f", b.x, b.y, b.w, b.h);
  return buf;
}

inline std::vector<double> parse_csv_line(const std::string& line, const std::string& origin, int lineno) {
  std::vector<double> vals;
  std::size_t pos = 0;
  while (pos <= line.size()) {
    std::size_t comma = line.find(',', pos);
    if (comma == std::string::npos) comma = line.size();
    const std::string field = line.substr(pos, comma - pos);
    try {
      std::size_t used = 0;
      vals.push_back(std::stod(field, &used));
      if (used != field.size()) throw std::invalid_argument("trailing chars");
    } catch (const std::exception&) {
      throw IoError(origin + ":" + std::to_string(lineno) + ": bad numeric field '" + field + "'");
    }
    pos = comma + 1;
    if (comma == line.size()) break;
  }
  return vals;
}

}  // namespace detail

inline void save_trajectory(const std::filesystem::path& path, const std::vector<Box>& boxes) {
  std::string out;
  for (const Box& b : boxes) {
    out += detail::format_box(b);
    out += '\n';
  }
  detail::write_file_bytes(path, out);
}

inline std::vector<Box> load_trajectory(const std::filesystem::path& path) {
  const std::string text = detail::read_file_bytes(path);
  std::vector<Box> boxes;
  std::istringstream lines(text);
  std::string line;
  int lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto v = detail::parse_csv_line(line, path.string(), lineno);
    if (v.size() != 4) throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected 4 fields, got " +
                                     std::to_string(v.size()));
    boxes.push_back({v[0], v[1], v[2], v[3]});
  }
  return boxes;
}

inline void save_annotation(const std::filesystem::path& path, const std::vector<Box>& boxes,
                            const std::vector<FrameFlags>& flags) {
  if (boxes.size() != flags.size()) throw IoError("save_annotation: box/flag count mismatch");
  std::string out;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    out += detail::format_box(boxes[i]);
    out += flags[i].occluded ? ",1" : ",0";
    out += flags[i].aspect_change ? ",1" : ",0";
    out += '\n';
  }
  detail::write_file_bytes(path, out);
}

inline void load_annotation(const std::filesystem::path& path, std::vector<Box>& boxes,
                            std::vector<FrameFlags>& flags) {
  const std::string text = detail::read_file_bytes(path);
  boxes.clear();
  flags.clear();
  std::istringstream lines(text);
  std::string line;
  int lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto v = detail::parse_csv_line(line, path.string(), lineno);
    if (v.size() != 6) throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected 6 fields, got " +
                                     std::to_string(v.size()));
    boxes.push_back({v[0], v[1], v[2], v[3]});
    flags.push_back({v[4] != 0.0, v[5] != 0.0});
  }
}

}  // namespace clim
