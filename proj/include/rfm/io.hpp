#pragma once

#include <array>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "rfm/error.hpp"
#include "rfm/pointcloud.hpp"

namespace rfm {

enum class CloudFormat { xyz, ply, ply_binary };

inline CloudFormat format_from_path(const std::string& path) {
  auto ends_with = [&](std::string_view s) {
    return path.size() >= s.size() && path.compare(path.size() - s.size(), s.size(), s) == 0;
  };
  if (ends_with(".ply") || ends_with(".PLY")) return CloudFormat::ply;
  return CloudFormat::xyz;
}

// Shortest decimal representation that parses back to the same double.
inline std::string format_double(double v) {
  std::array<char, 32> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline bool parse_double(std::string_view tok, double& out) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return res.ec == std::errc{} && res.ptr == tok.data() + tok.size();
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline PointCloud read_xyz(const std::string& text, const std::string& id) {
  std::vector<Vec3> pts;
  std::size_t line_no = 0, pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok.size() != 3)
      throw ParseError("expected 3 coordinates, found " + std::to_string(tok.size()), line_no);
    Vec3 p;
    for (int k = 0; k < 3; ++k)
      if (!parse_double(tok[k], p[k])) throw ParseError("malformed number '" + std::string(tok[k]) + "'", line_no);
    pts.push_back(p);
  }
  return PointCloud(std::move(pts), id);
}

struct PlyProperty {
  std::string name;
  std::string type;
  bool is_list = false;
  std::string count_type;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> props;
};

inline std::size_t ply_type_size(const std::string& t, std::size_t line) {
  if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
  if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
  if (t == "int" || t == "uint" || t == "float" || t == "int32" || t == "uint32" || t == "float32") return 4;
  if (t == "double" || t == "float64") return 8;
  throw ParseError("unknown PLY type '" + t + "'", line);
}

inline double ply_read_binary(const char* p, const std::string& t) {
  auto get = [&](auto v) {
    std::memcpy(&v, p, sizeof(v));
    return static_cast<double>(v);
  };
  if (t == "char" || t == "int8") return get(std::int8_t{});
  if (t == "uchar" || t == "uint8") return get(std::uint8_t{});
  if (t == "short" || t == "int16") return get(std::int16_t{});
  if (t == "ushort" || t == "uint16") return get(std::uint16_t{});
  if (t == "int" || t == "int32") return get(std::int32_t{});
  if (t == "uint" || t == "uint32") return get(std::uint32_t{});
  if (t == "float" || t == "float32") return get(float{});
  return get(double{});
}

inline PointCloud read_ply(const std::string& text, const std::string& id) {
  std::size_t pos = 0, line_no = 0;
  auto next_line = [&]() -> std::string_view {
    if (pos >= text.size()) throw ParseError("unexpected end of PLY file", line_no + 1);
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = end + 1;
    ++line_no;
    return line;
  };

  if (split_ws(next_line()) != std::vector<std::string_view>{"ply"}) throw ParseError("missing 'ply' magic", 1);
  bool binary = false;
  std::vector<PlyElement> elements;
  for (;;) {
    auto tok = split_ws(next_line());
    if (tok.empty() || tok[0] == "comment" || tok[0] == "obj_info") continue;
    if (tok[0] == "end_header") break;
    if (tok[0] == "format") {
      if (tok.size() < 2) throw ParseError("malformed format line", line_no);
      if (tok[1] == "ascii") binary = false;
      else if (tok[1] == "binary_little_endian") binary = true;
      else throw ParseError("unsupported PLY format '" + std::string(tok[1]) + "'", line_no);
    } else if (tok[0] == "element") {
      if (tok.size() != 3) throw ParseError("malformed element line", line_no);
      PlyElement e;
      e.name = tok[1];
      double c = 0;
      if (!parse_double(tok[2], c) || c < 0) throw ParseError("bad element count", line_no);
      e.count = static_cast<std::size_t>(c);
      elements.push_back(e);
    } else if (tok[0] == "property") {
      if (elements.empty()) throw ParseError("property before element", line_no);
      PlyProperty p;
      if (tok.size() == 5 && tok[1] == "list") {
        p.is_list = true;
        p.count_type = tok[2];
        p.type = tok[3];
        p.name = tok[4];
        ply_type_size(p.count_type, line_no);
      } else if (tok.size() == 3) {
        p.type = tok[1];
        p.name = tok[2];
      } else {
        throw ParseError("malformed property line", line_no);
      }
      ply_type_size(p.type, line_no);
      elements.back().props.push_back(p);
    } else {
      throw ParseError("unexpected header keyword '" + std::string(tok[0]) + "'", line_no);
    }
  }

  std::vector<Vec3> pts;
  for (const auto& e : elements) {
    const bool is_vertex = e.name == "vertex";
    std::array<int, 3> slot = {-1, -1, -1};
    if (is_vertex) {
      for (std::size_t k = 0; k < e.props.size(); ++k) {
        if (e.props[k].is_list) continue;
        if (e.props[k].name == "x") slot[0] = static_cast<int>(k);
        if (e.props[k].name == "y") slot[1] = static_cast<int>(k);
        if (e.props[k].name == "z") slot[2] = static_cast<int>(k);
      }
      if (slot[0] < 0 || slot[1] < 0 || slot[2] < 0) throw ParseError("vertex element lacks x/y/z", line_no);
      pts.reserve(e.count);
    }
    for (std::size_t r = 0; r < e.count; ++r) {
      Vec3 p = Vec3::Zero();
      if (!binary) {
        auto line = next_line();
        auto tok = split_ws(line);
        std::size_t t = 0;
        for (std::size_t k = 0; k < e.props.size(); ++k) {
          const auto& prop = e.props[k];
          if (prop.is_list) {
            double cnt = 0;
            if (t >= tok.size() || !parse_double(tok[t], cnt)) throw ParseError("malformed list count", line_no);
            t += 1 + static_cast<std::size_t>(cnt);
            continue;
          }
          double v = 0;
          if (t >= tok.size() || !parse_double(tok[t], v)) throw ParseError("malformed " + e.name + " row", line_no);
          ++t;
          for (int c = 0; c < 3; ++c)
            if (is_vertex && slot[c] == static_cast<int>(k)) p[c] = v;
        }
        if (t > tok.size()) throw ParseError("short " + e.name + " row", line_no);
      } else {
        for (std::size_t k = 0; k < e.props.size(); ++k) {
          const auto& prop = e.props[k];
          if (prop.is_list) {
            const std::size_t cs = ply_type_size(prop.count_type, line_no);
            if (pos + cs > text.size()) throw ParseError("truncated binary body", line_no);
            const auto cnt = static_cast<std::size_t>(ply_read_binary(text.data() + pos, prop.count_type));
            pos += cs + cnt * ply_type_size(prop.type, line_no);
            continue;
          }
          const std::size_t sz = ply_type_size(prop.type, line_no);
          if (pos + sz > text.size()) throw ParseError("truncated binary body", line_no);
          const double v = ply_read_binary(text.data() + pos, prop.type);
          pos += sz;
          for (int c = 0; c < 3; ++c)
            if (is_vertex && slot[c] == static_cast<int>(k)) p[c] = v;
        }
      }
      if (is_vertex) pts.push_back(p);
    }
    if (is_vertex) break;  // later elements (faces, edges) are not needed
  }
  return PointCloud(std::move(pts), id);
}

}  // namespace detail

using detail::read_file;

inline PointCloud read_point_cloud(const std::string& path, CloudFormat format) {
  const std::string text = detail::read_file(path);
  if (format == CloudFormat::xyz) return detail::read_xyz(text, path);
  return detail::read_ply(text, path);
}

inline PointCloud read_point_cloud(const std::string& path) { return read_point_cloud(path, format_from_path(path)); }

inline void write_point_cloud(const PointCloud& pc, const std::string& path, CloudFormat format) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  if (format == CloudFormat::xyz) {
    for (const auto& p : pc.points())
      out << format_double(p.x()) << ' ' << format_double(p.y()) << ' ' << format_double(p.z()) << '\n';
  } else {
    out << "ply\nformat " << (format == CloudFormat::ply ? "ascii" : "binary_little_endian") << " 1.0\n"
        << "element vertex " << pc.size() << "\nproperty double x\nproperty double y\nproperty double z\n"
        << "end_header\n";
    for (const auto& p : pc.points()) {
      if (format == CloudFormat::ply) {
        out << format_double(p.x()) << ' ' << format_double(p.y()) << ' ' << format_double(p.z()) << '\n';
      } else {
        for (int c = 0; c < 3; ++c) {
          const double v = p[c];
          out.write(reinterpret_cast<const char*>(&v), sizeof(double));
        }
      }
    }
  }
  out.flush();
  if (!out) throw IoError("write to '" + path + "' failed");
}

inline void write_point_cloud(const PointCloud& pc, const std::string& path) {
  write_point_cloud(pc, path, format_from_path(path));
}

}  // namespace rfm
