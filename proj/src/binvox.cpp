// SPDX-License-Identifier: Apache-2.0
#include "organ/binvox.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace organ {

namespace {

// Shortest round-trip decimal formatting; keeps header fields byte-stable
// across a parse/serialize cycle.
std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

struct LineReader {
  std::string_view data;
  std::size_t pos = 0;

  bool next(std::string& out) {
    if (pos >= data.size()) return false;
    std::size_t nl = data.find('\n', pos);
    if (nl == std::string_view::npos) {
      out.assign(data.substr(pos));
      pos = data.size();
    } else {
      out.assign(data.substr(pos, nl - pos));
      pos = nl + 1;
    }
    if (!out.empty() && out.back() == '\r') out.pop_back();
    return true;
  }
};

}  // namespace

VoxelGrid parse_binvox(std::string_view bytes) {
  LineReader reader{bytes};
  std::string line;
  if (!reader.next(line) || line != "#binvox 1")
    throw ParseError("binvox: missing '#binvox 1' header line");

  VoxelGrid grid;
  bool have_dim = false, have_data = false;
  while (reader.next(line)) {
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "dim") {
      long a = -1, b = -1, c = -1;
      ls >> a >> b >> c;
      if (ls.fail() || a <= 0 || b <= 0 || c <= 0)
        throw ParseError("binvox: malformed dim line '" + line + "'");
      if (a != b || b != c)
        throw ParseError("binvox: non-cubic dim " + std::to_string(a) + " " +
                         std::to_string(b) + " " + std::to_string(c));
      grid = VoxelGrid(static_cast<int>(a));
      have_dim = true;
    } else if (tok == "translate") {
      ls >> grid.translate[0] >> grid.translate[1] >> grid.translate[2];
      if (ls.fail()) throw ParseError("binvox: malformed translate line");
    } else if (tok == "scale") {
      ls >> grid.scale;
      if (ls.fail() || !(grid.scale > 0))
        throw ParseError("binvox: malformed scale line");
    } else if (tok == "data") {
      have_data = true;
      break;
    } else if (tok.empty()) {
      continue;
    }
    // unknown header tokens are skipped, matching the reference reader
  }
  if (!have_dim) throw ParseError("binvox: header has no dim line");
  if (!have_data) throw ParseError("binvox: header has no data line");

  const std::size_t total = grid.size();
  const int dim = grid.dim;
  std::size_t wire = 0;  // linear index in y-fastest order
  std::size_t pos = reader.pos;
  while (pos < bytes.size()) {
    if (pos + 1 >= bytes.size())
      throw ParseError("binvox: truncated RLE payload (odd byte count)");
    const std::uint8_t value = static_cast<std::uint8_t>(bytes[pos]);
    const std::uint8_t count = static_cast<std::uint8_t>(bytes[pos + 1]);
    pos += 2;
    if (count == 0) throw ParseError("binvox: RLE count byte of 0");
    if (wire + count > total)
      throw ParseError("binvox: RLE payload decodes to more than dim^3 voxels");
    if (value) {
      for (std::uint8_t i = 0; i < count; ++i) {
        const std::size_t w = wire + i;
        const int y = static_cast<int>(w % dim);
        const int z = static_cast<int>((w / dim) % dim);
        const int x = static_cast<int>(w / (static_cast<std::size_t>(dim) * dim));
        grid.occupancy[grid.index(x, y, z)] = 1;
      }
    }
    wire += count;
  }
  if (wire != total)
    throw ParseError("binvox: RLE payload decodes to " + std::to_string(wire) +
                     " voxels, expected " + std::to_string(total));
  return grid;
}

std::string write_binvox(const VoxelGrid& grid) {
  if (grid.dim <= 0 || grid.occupancy.size() != grid.size())
    throw ShapeError("write_binvox: invalid grid");
  std::string out;
  out += "#binvox 1\n";
  out += "dim " + std::to_string(grid.dim) + " " + std::to_string(grid.dim) +
         " " + std::to_string(grid.dim) + "\n";
  out += "translate " + format_double(grid.translate[0]) + " " +
         format_double(grid.translate[1]) + " " +
         format_double(grid.translate[2]) + "\n";
  out += "scale " + format_double(grid.scale) + "\n";
  out += "data\n";

  const int dim = grid.dim;
  int current = -1;
  int count = 0;
  auto flush = [&out](int value, int n) {
    out.push_back(static_cast<char>(value));
    out.push_back(static_cast<char>(n));
  };
  for (int x = 0; x < dim; ++x)
    for (int z = 0; z < dim; ++z)
      for (int y = 0; y < dim; ++y) {
        const int v = grid.occupancy[grid.index(x, y, z)] ? 1 : 0;
        if (count == 0) {
          current = v;
          count = 1;
        } else if (v == current && count < 255) {
          ++count;
        } else {
          flush(current, count);
          current = v;
          count = 1;
        }
      }
  if (count > 0) flush(current, count);
  return out;
}

VoxelGrid read_binvox_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open binvox file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_binvox(ss.str());
}

void write_binvox_file(const std::string& path, const VoxelGrid& grid) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write binvox file: " + path);
  const std::string bytes = write_binvox(grid);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace organ
