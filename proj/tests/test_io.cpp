#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <string>

#include "mf4d/domain.hpp"
#include "mf4d/io.hpp"

using namespace mf4d;

TEST_CASE("binary field round-trip is bitwise exact") {
  const std::string path = "roundtrip_radial.mf4b";
  auto shell = make_radial_mesh(DomainSpec::shell(1.0, 2.0), 80);
  Field u = random_field(shell, 77);
  write_field(u, path);
  Field back = read_field(shell, path);
  REQUIRE(back.v == u.v);
  std::remove(path.c_str());

  const std::string gpath = "roundtrip_grid.mf4b";
  auto box = make_grid_mesh(DomainSpec::box(Vec4{1, 1, 1, 1}), 6);
  Field g = random_field(box, 78);
  write_field(g, gpath);
  Field gback = read_field(box, gpath);
  REQUIRE(gback.v == g.v);
  std::remove(gpath.c_str());
}

TEST_CASE("reader rejects mismatched meshes and garbage") {
  const std::string path = "mismatch.mf4b";
  auto shell = make_radial_mesh(DomainSpec::shell(1.0, 2.0), 80);
  write_field(random_field(shell, 1), path);
  auto other = make_radial_mesh(DomainSpec::shell(1.0, 2.0), 81);
  REQUIRE_THROWS_AS(read_field(other, path), std::invalid_argument);
  auto box = make_grid_mesh(DomainSpec::box(Vec4{1, 1, 1, 1}), 6);
  REQUIRE_THROWS_AS(read_field(box, path), std::invalid_argument);
  {
    std::ofstream os(path, std::ios::binary);
    os << "not a field file at all";
  }
  REQUIRE_THROWS_AS(read_field(shell, path), std::invalid_argument);
  REQUIRE_THROWS_AS(read_field(shell, "no_such_file.mf4b"), std::invalid_argument);
  std::remove(path.c_str());
}

TEST_CASE("csv export has coordinates and values") {
  const std::string path = "field.csv";
  auto ball = make_radial_mesh(DomainSpec::ball(1.0), 16);
  Field u = make_field(ball, 2.0);
  write_field_csv(u, path);
  std::ifstream is(path);
  std::string header;
  std::getline(is, header);
  REQUIRE(header == "r,value");
  int rows = 0;
  for (std::string line; std::getline(is, line);) ++rows;
  REQUIRE(rows == 16);
  std::remove(path.c_str());

  auto box = make_grid_mesh(DomainSpec::box(Vec4{1, 1, 1, 1}), 4);
  write_field_csv(make_field(box, 1.0), path);
  std::ifstream is2(path);
  std::getline(is2, header);
  REQUIRE(header == "x0,x1,x2,x3,value");
  std::remove(path.c_str());
}
