#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ifnet/core/binary_io.hpp"
#include "ifnet/core/error.hpp"
#include "ifnet/sampler/sampler.hpp"

namespace ifnet {

inline constexpr std::uint32_t kDatasetFormatVersion = 1;

/// "IFDS", u32 version, u32 record count, then per record:
///   string id, u8 split, string mesh path, string input path, string cloud path,
///   u32 N, N^3 voxel bytes, u64 S, S x (3 f64, u8 label).
inline BinaryWriter encode_dataset(const std::vector<ShapeRecord>& records) {
  BinaryWriter w;
  w.magic("IFDS");
  w.put<std::uint32_t>(kDatasetFormatVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(records.size()));
  for (const auto& r : records) {
    w.put_string(r.id);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(r.split));
    w.put_string(r.mesh_path);
    w.put_string(r.input_path);
    w.put_string(r.cloud_path);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(r.input.resolution));
    w.put_array<std::uint8_t>(r.input.data);
    w.put<std::uint64_t>(r.samples.size());
    for (const auto& s : r.samples) {
      w.put(s.p.x());
      w.put(s.p.y());
      w.put(s.p.z());
      w.put(s.o);
    }
  }
  return w;
}

inline void write_dataset(const std::filesystem::path& path, const std::vector<ShapeRecord>& records) {
  encode_dataset(records).write_file(path);
}

inline std::vector<ShapeRecord> read_dataset(BinaryReader& r) {
  r.expect_magic("IFDS");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kDatasetFormatVersion)
    r.fail("dataset format version " + std::to_string(version) + " is not supported (expected " +
           std::to_string(kDatasetFormatVersion) + ")");
  const auto count = r.get<std::uint32_t>("record count");
  std::vector<ShapeRecord> records;
  for (std::uint32_t i = 0; i < count; ++i) {
    ShapeRecord rec;
    rec.id = r.get_string("shape id");
    const auto split = r.get<std::uint8_t>("split");
    if (split > 2) r.fail("invalid split code " + std::to_string(split));
    rec.split = static_cast<Split>(split);
    rec.mesh_path = r.get_string("mesh path");
    rec.input_path = r.get_string("input path");
    rec.cloud_path = r.get_string("cloud path");
    const auto n = r.get<std::uint32_t>("input resolution");
    if (n < 2 || n > 2048) r.fail("invalid input resolution " + std::to_string(n));
    rec.input = VoxelGrid(static_cast<int>(n));
    r.get_array<std::uint8_t>(rec.input.data, "input voxels");
    for (auto v : rec.input.data)
      if (v > 1) r.fail("voxel value outside {0,1}");
    const auto s = r.get<std::uint64_t>("sample count");
    r.need(s * 25, "training samples");
    rec.samples.resize(s);
    for (auto& t : rec.samples) {
      t.p.x() = r.get<double>();
      t.p.y() = r.get<double>();
      t.p.z() = r.get<double>();
      t.o = r.get<std::uint8_t>();
      if (t.o > 1) r.fail("label outside {0,1}");
    }
    records.push_back(std::move(rec));
  }
  if (!r.at_end()) r.fail("trailing bytes after dataset");
  return records;
}

inline std::vector<ShapeRecord> read_dataset(const std::filesystem::path& path) {
  auto r = BinaryReader::from_file(path);
  return read_dataset(r);
}

/// Tab-separated text: a header line, then "id split mesh input cloud" per shape ("-" for no cloud).
inline std::string manifest_text(const std::vector<ShapeRecord>& records) {
  std::ostringstream out;
  out << "id\tsplit\tmesh\tinput\tcloud\n";
  for (const auto& r : records)
    out << r.id << '\t' << to_string(r.split) << '\t' << r.mesh_path << '\t' << r.input_path << '\t'
        << (r.cloud_path.empty() ? "-" : r.cloud_path) << '\n';
  return out.str();
}

inline void write_manifest(const std::filesystem::path& path, const std::vector<ShapeRecord>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << manifest_text(records);
}

/// Records with paths and splits only (no voxels or samples).
inline std::vector<ShapeRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest " + path.string());
  std::vector<ShapeRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    if (++line_no == 1) {
      if (line != "id\tsplit\tmesh\tinput\tcloud") throw ParseError(path.string(), 1, "bad manifest header");
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::istringstream ls(line);
    for (std::string c; std::getline(ls, c, '\t');) cols.push_back(c);
    if (cols.size() != 5) throw ParseError(path.string(), line_no, "expected 5 tab-separated columns");
    ShapeRecord r;
    r.id = cols[0];
    try {
      r.split = parse_split(cols[1]);
    } catch (const ConfigError& e) {
      throw ParseError(path.string(), line_no, e.what());
    }
    r.mesh_path = cols[2];
    r.input_path = cols[3];
    r.cloud_path = cols[4] == "-" ? "" : cols[4];
    records.push_back(std::move(r));
  }
  if (line_no == 0) throw ParseError(path.string(), 1, "empty manifest");
  return records;
}

}  // namespace ifnet
