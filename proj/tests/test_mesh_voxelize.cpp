// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <map>
#include <numbers>
#include <string>

#include "organ/mesh.hpp"
#include "organ/voxel.hpp"
#include "organ/voxelize.hpp"

using namespace organ;

namespace {

// Closed unit cube [0,1]^3 as 12 triangles (OFF text).
const char* kCubeOff =
    "OFF\n"
    "8 12 0\n"
    "0 0 0\n1 0 0\n1 1 0\n0 1 0\n0 0 1\n1 0 1\n1 1 1\n0 1 1\n"
    "3 0 1 2\n3 0 2 3\n"
    "3 4 6 5\n3 4 7 6\n"
    "3 0 4 5\n3 0 5 1\n"
    "3 1 5 6\n3 1 6 2\n"
    "3 2 6 7\n3 2 7 3\n"
    "3 3 7 4\n3 3 4 0\n";

Mesh icosphere(int subdivisions) {
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  Mesh m;
  m.vertices = {{-1, phi, 0}, {1, phi, 0},   {-1, -phi, 0}, {1, -phi, 0},
                {0, -1, phi}, {0, 1, phi},   {0, -1, -phi}, {0, 1, -phi},
                {phi, 0, -1}, {phi, 0, 1},   {-phi, 0, -1}, {-phi, 0, 1}};
  m.triangles = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                 {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                 {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                 {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (auto& v : m.vertices) v.normalize();
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      Eigen::Vector3d p = (m.vertices[static_cast<std::size_t>(a)] +
                           m.vertices[static_cast<std::size_t>(b)])
                              .normalized();
      m.vertices.push_back(p);
      const int idx = static_cast<int>(m.vertices.size()) - 1;
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(m.triangles.size() * 4);
    for (auto [a, b, c] : m.triangles) {
      const int ab = mid(a, b), bc = mid(b, c), ca = mid(c, a);
      next.push_back({a, ab, ca});
      next.push_back({b, bc, ab});
      next.push_back({c, ca, bc});
      next.push_back({ab, bc, ca});
    }
    m.triangles = std::move(next);
  }
  return m;
}

std::string binary_stl_of(const Mesh& m) {
  std::string out(80, '\0');
  const std::uint32_t n = static_cast<std::uint32_t>(m.triangles.size());
  out.append(reinterpret_cast<const char*>(&n), 4);
  for (const auto& t : m.triangles) {
    float rec[12] = {0};
    for (int v = 0; v < 3; ++v) {
      const auto& p = m.vertices[static_cast<std::size_t>(t[v])];
      rec[3 + v * 3 + 0] = static_cast<float>(p.x());
      rec[3 + v * 3 + 1] = static_cast<float>(p.y());
      rec[3 + v * 3 + 2] = static_cast<float>(p.z());
    }
    out.append(reinterpret_cast<const char*>(rec), 48);
    out.append("\0\0", 2);
  }
  return out;
}

}  // namespace

TEST_CASE("OFF parsing: counts, comments, n-gon fan") {
  auto m = parse_off(kCubeOff);
  CHECK(m.vertices.size() == 8);
  CHECK(m.triangles.size() == 12);

  auto quad = parse_off("OFF # comment\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n");
  CHECK(quad.triangles.size() == 2);

  CHECK_THROWS_AS(parse_off("OFX\n1 0 0\n0 0 0\n"), ParseError);
  CHECK_THROWS_AS(parse_off("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 9\n"), ParseError);
}

TEST_CASE("STL parsing: ascii and binary agree") {
  const char* ascii =
      "solid x\n"
      " facet normal 0 0 1\n  outer loop\n"
      "   vertex 0 0 0\n   vertex 1 0 0\n   vertex 0 1 0\n"
      "  endloop\n endfacet\nendsolid x\n";
  auto ma = parse_stl(ascii);
  CHECK(ma.triangles.size() == 1);
  CHECK(ma.vertices[1].x() == doctest::Approx(1.0));

  auto mb = parse_stl(binary_stl_of(ma));
  REQUIRE(mb.triangles.size() == 1);
  CHECK(mb.vertices[2].y() == doctest::Approx(1.0));
}

TEST_CASE("closed cube with fill_interior occupies its full box") {
  auto m = parse_off(kCubeOff);
  const int dim = 16;
  auto g = voxelize_mesh(m, dim, true);
  // box spans [1, dim-1) in grid coords; every cell inside must be occupied
  for (int x = 1; x < dim - 1; ++x)
    for (int y = 1; y < dim - 1; ++y)
      for (int z = 1; z < dim - 1; ++z) CHECK(g.at(x, y, z) == 1);
  // margin stays empty
  CHECK(occupied_count(g) == static_cast<std::size_t>((dim - 2) * (dim - 2) * (dim - 2)));
}

TEST_CASE("single triangle cannot fill a volume") {
  Mesh tri;
  tri.vertices = {{0, 0, 0}, {1, 0, 0.05}, {0, 1, 0.1}};
  tri.triangles = {{0, 1, 2}};
  const int dim = 16;
  auto g = voxelize_mesh(tri, dim, false);
  CHECK(occupied_count(g) > 0);
  CHECK(occupied_count(g) < static_cast<std::size_t>(dim) * dim * 3);
}

TEST_CASE("icosphere volume matches the analytic ball oracle within 10%") {
  auto sphere = icosphere(4);
  const int dim = 32;
  auto g = voxelize_mesh(sphere, dim, true);
  // Conservative rasterization marks every cell the surface touches, which
  // dilates the ball by about half a cell; the fitted radius accounts for it.
  const double r_vox = (dim - 2) / 2.0 + 0.5;
  const double analytic = 4.0 / 3.0 * std::numbers::pi * r_vox * r_vox * r_vox;
  const double count = static_cast<double>(occupied_count(g));
  CHECK(count > 0.9 * analytic);
  CHECK(count < 1.1 * analytic);
}

TEST_CASE("fill_interior is monotone: surface set is a subset of filled set") {
  auto sphere = icosphere(2);
  auto surf = voxelize_mesh(sphere, 24, false);
  auto filled = voxelize_mesh(sphere, 24, true);
  for (std::size_t i = 0; i < surf.size(); ++i)
    if (surf.occupancy[i]) CHECK(filled.occupancy[i] == 1);
  CHECK(occupied_count(filled) > occupied_count(surf));
}

TEST_CASE("voxelize errors") {
  Mesh empty;
  CHECK_THROWS_AS(voxelize_mesh(empty, 16, false), ShapeError);

  Mesh flat;  // zero extent on z
  flat.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  flat.triangles = {{0, 1, 2}};
  CHECK_THROWS_AS(voxelize_mesh(flat, 16, false), ShapeError);
}

TEST_CASE("binvox metadata reflects the fitted transform") {
  auto m = parse_off(kCubeOff);
  auto g = voxelize_mesh(m, 16, false);
  // one world unit spans dim-2 cells -> grid covers dim/(dim-2) world units
  CHECK(g.scale == doctest::Approx(16.0 / 14.0));
  CHECK(g.translate[0] == doctest::Approx(0.5 - 8.0 / 14.0));
}
