#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "ifnet/core/error.hpp"
#include "ifnet/geometry/mesh.hpp"

namespace ifnet {

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;  // empty, or one per point

  std::size_t size() const { return points.size(); }
  bool has_normals() const { return !normals.empty(); }
};

/// XYZ text: one "x y z [nx ny nz]" line per point.
inline void save_xyz(const std::filesystem::path& path, const PointCloud& cloud) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const auto& p = cloud.points[i];
    out << p.x() << ' ' << p.y() << ' ' << p.z();
    if (cloud.has_normals()) {
      const auto& n = cloud.normals[i];
      out << ' ' << n.x() << ' ' << n.y() << ' ' << n.z();
    }
    out << '\n';
  }
  if (!out) throw Error("write failed: " + path.string());
}

inline PointCloud load_xyz(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open point cloud " + path.string());
  PointCloud cloud;
  std::string line;
  std::size_t line_no = 0;
  int columns = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[line.find_first_not_of(" \t")] == '#') continue;
    std::istringstream ls(line);
    std::vector<double> v;
    for (double x; ls >> x;) v.push_back(x);
    if (!ls.eof()) throw ParseError(path.string(), line_no, "non-numeric token");
    if (v.size() != 3 && v.size() != 6) throw ParseError(path.string(), line_no, "expected 3 or 6 values");
    if (columns == -1) columns = static_cast<int>(v.size());
    if (static_cast<int>(v.size()) != columns) throw ParseError(path.string(), line_no, "inconsistent column count");
    for (double x : v)
      if (!std::isfinite(x)) throw ParseError(path.string(), line_no, "non-finite coordinate");
    cloud.points.emplace_back(v[0], v[1], v[2]);
    if (columns == 6) cloud.normals.emplace_back(v[3], v[4], v[5]);
  }
  return cloud;
}

}  // namespace ifnet
