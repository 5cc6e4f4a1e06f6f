#pragma once

#include <charconv>
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

namespace detail {

inline std::string lowercase_extension(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return ext;
}

inline bool next_content_line(std::istream& in, std::string& line, std::size_t& line_no) {
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
  }
  return false;
}

inline TriMesh parse_off(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  if (!next_content_line(in, line, line_no)) throw ParseError(source, line_no, "empty file");
  std::istringstream header(line);
  std::string magic;
  header >> magic;
  if (magic != "OFF") throw ParseError(source, line_no, "expected OFF header");
  long nv = -1, nf = -1, ne = 0;
  if (!(header >> nv)) {
    if (!next_content_line(in, line, line_no)) throw ParseError(source, line_no, "missing counts line");
    header = std::istringstream(line);
    header >> nv;
  }
  if (!(header >> nf) || nv < 0 || nf < 0) throw ParseError(source, line_no, "bad vertex/face counts");
  header >> ne;

  TriMesh mesh;
  mesh.vertices.reserve(nv);
  for (long i = 0; i < nv; ++i) {
    if (!next_content_line(in, line, line_no)) throw ParseError(source, line_no, "unexpected end of file in vertices");
    std::istringstream ls(line);
    double x, y, z;
    if (!(ls >> x >> y >> z)) throw ParseError(source, line_no, "bad vertex");
    mesh.vertices.emplace_back(x, y, z);
  }
  mesh.faces.reserve(nf);
  for (long i = 0; i < nf; ++i) {
    if (!next_content_line(in, line, line_no)) throw ParseError(source, line_no, "unexpected end of file in faces");
    std::istringstream ls(line);
    long count;
    long a, b, c;
    if (!(ls >> count)) throw ParseError(source, line_no, "bad face");
    if (count != 3) throw ParseError(source, line_no, "only triangles are supported (face has " + std::to_string(count) + " vertices)");
    if (!(ls >> a >> b >> c)) throw ParseError(source, line_no, "bad face indices");
    for (long v : {a, b, c})
      if (v < 0 || v >= nv) throw ParseError(source, line_no, "face index " + std::to_string(v) + " out of range");
    mesh.faces.push_back({static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(c)});
  }
  return mesh;
}

// Accepts "i", "i/t", "i//n", "i/t/n"; indices are 1-based, negative ones count from the end.
inline std::uint32_t parse_obj_index(const std::string& token, std::size_t vertex_count, const std::string& source,
                                     std::size_t line_no) {
  const auto slash = token.find('/');
  const std::string head = token.substr(0, slash);
  long idx = 0;
  auto [ptr, ec] = std::from_chars(head.data(), head.data() + head.size(), idx);
  if (ec != std::errc{} || ptr != head.data() + head.size())
    throw ParseError(source, line_no, "bad face index \"" + token + "\"");
  if (idx == 0) throw ParseError(source, line_no, "face index 0 is invalid (OBJ indices are 1-based)");
  const long resolved = idx > 0 ? idx - 1 : static_cast<long>(vertex_count) + idx;
  if (resolved < 0 || resolved >= static_cast<long>(vertex_count))
    throw ParseError(source, line_no, "face index " + std::to_string(idx) + " out of range");
  return static_cast<std::uint32_t>(resolved);
}

inline TriMesh parse_obj(std::istream& in, const std::string& source) {
  TriMesh mesh;
  std::string line;
  std::size_t line_no = 0;
  while (next_content_line(in, line, line_no)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "v") {
      double x, y, z;
      if (!(ls >> x >> y >> z)) throw ParseError(source, line_no, "bad vertex");
      mesh.vertices.emplace_back(x, y, z);
    } else if (tag == "f") {
      std::vector<std::string> tokens;
      for (std::string t; ls >> t;) tokens.push_back(t);
      if (tokens.size() != 3)
        throw ParseError(source, line_no, "only triangles are supported (face has " + std::to_string(tokens.size()) + " vertices)");
      Face f;
      for (int k = 0; k < 3; ++k) f[k] = parse_obj_index(tokens[k], mesh.vertices.size(), source, line_no);
      mesh.faces.push_back(f);
    }
    // vn, vt, o, g, s, usemtl, mtllib: ignored
  }
  return mesh;
}

}  // namespace detail

/// Loads an ASCII OFF or OBJ triangle mesh and applies `cleanup`.
inline TriMesh load_mesh(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open mesh " + path.string());
  const auto ext = detail::lowercase_extension(path);
  TriMesh mesh;
  if (ext == ".off")
    mesh = detail::parse_off(in, path.string());
  else if (ext == ".obj")
    mesh = detail::parse_obj(in, path.string());
  else
    throw Error("unsupported mesh format: " + path.string());
  cleanup(mesh);
  if (mesh.faces.empty()) throw GeometryError("empty mesh: " + path.string());
  return mesh;
}

/// Writes OFF or OBJ by extension. OBJ output carries per-vertex normals when `with_normals`.
inline void save_mesh(const std::filesystem::path& path, const TriMesh& mesh, bool with_normals = false) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  const auto ext = detail::lowercase_extension(path);
  if (ext == ".off") {
    out << "OFF\n" << mesh.vertices.size() << ' ' << mesh.faces.size() << " 0\n";
    for (const auto& v : mesh.vertices) out << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
    for (const auto& f : mesh.faces) out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
  } else if (ext == ".obj") {
    for (const auto& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
    if (with_normals) {
      for (const auto& n : mesh.vertex_normals()) out << "vn " << n.x() << ' ' << n.y() << ' ' << n.z() << '\n';
      for (const auto& f : mesh.faces)
        out << "f " << f[0] + 1 << "//" << f[0] + 1 << ' ' << f[1] + 1 << "//" << f[1] + 1 << ' ' << f[2] + 1 << "//"
            << f[2] + 1 << '\n';
    } else {
      for (const auto& f : mesh.faces) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
    }
  } else {
    throw Error("unsupported mesh format: " + path.string());
  }
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace ifnet
