// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>

#include "organ/binvox.hpp"
#include "organ/rng.hpp"
#include "organ/voxel.hpp"

using namespace organ;

namespace {

std::string header(int dim) {
  return "#binvox 1\ndim " + std::to_string(dim) + " " + std::to_string(dim) +
         " " + std::to_string(dim) + "\ntranslate 0 0 0\nscale 1\ndata\n";
}

std::string rle(std::initializer_list<std::pair<int, int>> pairs) {
  std::string s;
  for (auto [v, c] : pairs) {
    s.push_back(static_cast<char>(v));
    s.push_back(static_cast<char>(c));
  }
  return s;
}

VoxelGrid random_grid(int dim, Rng& rng, double density) {
  VoxelGrid g(dim);
  for (auto& v : g.occupancy) v = rng.bernoulli(density) ? 1 : 0;
  g.translate = {rng.uniform_symmetric(2.0), rng.uniform_symmetric(2.0),
                 rng.uniform_symmetric(2.0)};
  g.scale = 0.25 + rng.uniform_real();
  return g;
}

}  // namespace

TEST_CASE("hand-decoded pair (1,8) fills a 2^3 grid") {
  auto g = parse_binvox(header(2) + rle({{1, 8}}));
  CHECK(g.dim == 2);
  CHECK(occupied_count(g) == 8);
}

TEST_CASE("empty 32^3 grid decodes from 128x(0,255) + (0,128)") {
  // 32768 = 128*255 + 128
  std::string payload;
  for (int i = 0; i < 128; ++i) payload += rle({{0, 255}});
  payload += rle({{0, 128}});
  auto g = parse_binvox(header(32) + payload);
  CHECK(g.dim == 32);
  CHECK(occupied_count(g) == 0);
}

TEST_CASE("empty 32^3 grid encodes to exactly 129 RLE pairs") {
  VoxelGrid g(32);
  const std::string bytes = write_binvox(g);
  const std::size_t data_pos = bytes.find("data\n") + 5;
  CHECK((bytes.size() - data_pos) == 2 * 129);
}

TEST_CASE("full 2^3 grid encodes to the single maximal pair (1,8)") {
  VoxelGrid g(2);
  for (auto& v : g.occupancy) v = 1;
  const std::string bytes = write_binvox(g);
  const std::size_t data_pos = bytes.find("data\n") + 5;
  REQUIRE(bytes.size() - data_pos == 2);
  CHECK(static_cast<unsigned char>(bytes[data_pos]) == 1);
  CHECK(static_cast<unsigned char>(bytes[data_pos + 1]) == 8);
}

TEST_CASE("wire order is y fastest, then z, then x") {
  // One run of a single occupied voxel at wire index 1 -> (x,y,z) = (0,1,0).
  auto g = parse_binvox(header(2) + rle({{0, 1}, {1, 1}, {0, 6}}));
  CHECK(g.at(0, 1, 0) == 1);
  CHECK(occupied_count(g) == 1);
  // wire index 2 -> (0,0,1)
  auto g2 = parse_binvox(header(2) + rle({{0, 2}, {1, 1}, {0, 5}}));
  CHECK(g2.at(0, 0, 1) == 1);
  // wire index 4 -> (1,0,0)
  auto g3 = parse_binvox(header(2) + rle({{0, 4}, {1, 1}, {0, 3}}));
  CHECK(g3.at(1, 0, 0) == 1);
}

TEST_CASE("malformed inputs are rejected") {
  CHECK_THROWS_AS(parse_binvox("#binvox 2\ndim 2 2 2\ndata\n" + rle({{1, 8}})),
                  ParseError);
  CHECK_THROWS_AS(parse_binvox("#binvox 1\ndim 32 32 16\ndata\n"), ParseError);
  CHECK_THROWS_AS(parse_binvox(header(2) + rle({{1, 7}})), ParseError);   // short
  CHECK_THROWS_AS(parse_binvox(header(2) + rle({{1, 9}})), ParseError);   // long
  CHECK_THROWS_AS(parse_binvox(header(2) + rle({{1, 8}, {0, 0}})), ParseError);
  CHECK_THROWS_AS(parse_binvox("#binvox 1\ndata\n"), ParseError);         // no dim
  CHECK_THROWS_AS(parse_binvox("#binvox 1\ndim 2 2 2\n"), ParseError);    // no data
  std::string odd = header(2) + rle({{1, 8}});
  odd.push_back(1);
  CHECK_THROWS_AS(parse_binvox(odd), ParseError);  // odd payload byte
}

TEST_CASE("parse(write(g)) == g for random grids, and re-serialize is byte-identical") {
  Rng rng(20240521);
  for (int trial = 0; trial < 200; ++trial) {
    const int dim = 1 + rng.uniform_int(1, 16);
    auto g = random_grid(dim, rng, rng.uniform_real());
    const std::string bytes = write_binvox(g);
    auto back = parse_binvox(bytes);
    CHECK(back == g);
    CHECK(write_binvox(back) == bytes);
  }
}

TEST_CASE("runs longer than 255 split correctly") {
  VoxelGrid g(8);  // 512 voxels, all empty -> (0,255)(0,255)(0,2)
  const std::string bytes = write_binvox(g);
  const std::size_t p = bytes.find("data\n") + 5;
  REQUIRE(bytes.size() - p == 6);
  CHECK(static_cast<unsigned char>(bytes[p + 1]) == 255);
  CHECK(static_cast<unsigned char>(bytes[p + 3]) == 255);
  CHECK(static_cast<unsigned char>(bytes[p + 5]) == 2);
}
