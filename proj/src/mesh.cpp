// SPDX-License-Identifier: Apache-2.0
#include "organ/mesh.hpp"

#include <algorithm>
#include <cctype>
#include <cstring>
#include <fstream>
#include <sstream>

namespace organ {

namespace {

void validate(const Mesh& m, const std::string& what) {
  if (!m.triangles.empty() && m.vertices.size() < 3)
    throw ParseError(what + ": fewer than 3 vertices with faces present");
  const int nv = static_cast<int>(m.vertices.size());
  for (const auto& t : m.triangles)
    for (int i : t)
      if (i < 0 || i >= nv)
        throw ParseError(what + ": triangle index " + std::to_string(i) +
                         " out of range [0, " + std::to_string(nv) + ")");
}

// Strips comments (# to end of line) and returns a whitespace token stream.
std::istringstream tokenize_off(std::string_view text) {
  std::string cleaned;
  cleaned.reserve(text.size());
  bool comment = false;
  for (char c : text) {
    if (c == '#') comment = true;
    if (c == '\n') comment = false;
    cleaned.push_back(comment ? ' ' : c);
  }
  return std::istringstream(cleaned);
}

std::string lower_ext(const std::string& path) {
  auto dot = path.rfind('.');
  if (dot == std::string::npos) return "";
  std::string ext = path.substr(dot + 1);
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return ext;
}

float read_f32le(const char* p) {
  float f;
  std::memcpy(&f, p, 4);
  return f;
}

Mesh parse_stl_binary(std::string_view bytes) {
  if (bytes.size() < 84) throw ParseError("stl: binary file shorter than header");
  std::uint32_t n;
  std::memcpy(&n, bytes.data() + 80, 4);
  if (bytes.size() != 84 + static_cast<std::size_t>(n) * 50)
    throw ParseError("stl: binary size does not match triangle count");
  Mesh m;
  m.vertices.reserve(static_cast<std::size_t>(n) * 3);
  m.triangles.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const char* rec = bytes.data() + 84 + static_cast<std::size_t>(i) * 50;
    // skip the 12-byte normal; 3 vertices of 3 floats follow
    const int base = static_cast<int>(m.vertices.size());
    for (int v = 0; v < 3; ++v) {
      const char* p = rec + 12 + v * 12;
      m.vertices.emplace_back(read_f32le(p), read_f32le(p + 4), read_f32le(p + 8));
    }
    m.triangles.push_back({base, base + 1, base + 2});
  }
  validate(m, "stl");
  return m;
}

Mesh parse_stl_ascii(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string tok;
  Mesh m;
  std::vector<Eigen::Vector3d> facet;
  while (in >> tok) {
    if (tok == "vertex") {
      double x, y, z;
      if (!(in >> x >> y >> z)) throw ParseError("stl: malformed vertex");
      facet.emplace_back(x, y, z);
    } else if (tok == "endfacet") {
      if (facet.size() != 3)
        throw ParseError("stl: facet with " + std::to_string(facet.size()) +
                         " vertices");
      const int base = static_cast<int>(m.vertices.size());
      for (const auto& v : facet) m.vertices.push_back(v);
      m.triangles.push_back({base, base + 1, base + 2});
      facet.clear();
    }
  }
  validate(m, "stl");
  return m;
}

}  // namespace

Mesh parse_off(std::string_view text) {
  auto in = tokenize_off(text);
  std::string magic;
  if (!(in >> magic) || magic != "OFF") throw ParseError("off: missing OFF magic");
  long nv = 0, nf = 0, ne = 0;
  if (!(in >> nv >> nf >> ne) || nv < 0 || nf < 0)
    throw ParseError("off: malformed counts line");
  Mesh m;
  m.vertices.reserve(static_cast<std::size_t>(nv));
  for (long i = 0; i < nv; ++i) {
    double x, y, z;
    if (!(in >> x >> y >> z)) throw ParseError("off: truncated vertex list");
    m.vertices.emplace_back(x, y, z);
  }
  for (long f = 0; f < nf; ++f) {
    long k;
    if (!(in >> k) || k < 3) throw ParseError("off: malformed face record");
    std::vector<int> idx(static_cast<std::size_t>(k));
    for (long j = 0; j < k; ++j)
      if (!(in >> idx[static_cast<std::size_t>(j)]))
        throw ParseError("off: truncated face record");
    // fan triangulation of n-gons
    for (std::size_t j = 1; j + 1 < idx.size(); ++j)
      m.triangles.push_back({idx[0], idx[j], idx[j + 1]});
  }
  validate(m, "off");
  return m;
}

Mesh parse_stl(std::string_view bytes) {
  // Binary files may begin with "solid": trust the size arithmetic first.
  if (bytes.size() >= 84) {
    std::uint32_t n;
    std::memcpy(&n, bytes.data() + 80, 4);
    if (bytes.size() == 84 + static_cast<std::size_t>(n) * 50 && n > 0)
      return parse_stl_binary(bytes);
  }
  const auto head = bytes.substr(0, std::min<std::size_t>(bytes.size(), 16));
  if (head.find("solid") != std::string_view::npos) return parse_stl_ascii(bytes);
  return parse_stl_binary(bytes);
}

Mesh load_mesh(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open mesh file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();
  const std::string ext = lower_ext(path);
  if (ext == "off") return parse_off(bytes);
  if (ext == "stl") return parse_stl(bytes);
  throw ParseError("unsupported mesh extension '" + ext + "' for " + path);
}

}  // namespace organ
