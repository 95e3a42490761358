#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <random>

#include "lamecgo/io.hpp"

using namespace lamecgo;
namespace fs = std::filesystem;

TEST_CASE("field files roundtrip bit-exactly with sidecar metadata") {
  Grid g = Grid::padded_inplane(1.0, 8);
  Field f(g, 3);
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(-1, 1);
  for (auto& z : f.v) z = cplx(u(rng), u(rng));
  Region reg = Region::box(g, "core", Vec3(-0.5, -0.5, -0.5),
                           Vec3(0.5, 0.5, 0.5));

  const fs::path base = fs::temp_directory_path() / "lamecgo_io_test";
  write_field(base, f, {reg});
  LoadedField back = read_field(base);
  REQUIRE(back.field.g.same_shape(g));
  REQUIRE(back.field.ncomp == 3);
  bool same = back.field.v == f.v;  // bitwise
  CHECK(same);
  REQUIRE(back.regions.size() == 1);
  CHECK(back.regions[0].name == "core");
  for (int a = 0; a < 3; ++a) {
    CHECK(back.regions[0].r[a].lo == reg.r[a].lo);
    CHECK(back.regions[0].r[a].hi == reg.r[a].hi);
    CHECK(back.regions[0].r[a].full == reg.r[a].full);
  }
  std::remove((base.string() + ".gfb").c_str());
  std::remove((base.string() + ".gfz").c_str());
}

TEST_CASE("doubles format losslessly") {
  for (double x : {1.0 / 3.0, 1e-300, -2.5, 0.0, 574700.31729496518}) {
    const std::string s = format_double(x);
    CHECK(std::stod(s) == x);
  }
}
