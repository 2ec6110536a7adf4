#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "msgmrf/errors.hpp"
#include "msgmrf/io.hpp"
#include "msgmrf/rng.hpp"

using namespace msgmrf;

namespace {

void write_file(const std::string& path, const std::string& body) {
  std::ofstream out(path);
  out << body;
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("points csv parsing") {
  write_file("pts_empty.csv", "x,y,value\n");
  const PointData empty = read_points_csv("pts_empty.csv");
  CHECK(empty.size() == 0);
  CHECK(empty.dimension() == 2);
  std::remove("pts_empty.csv");

  write_file("pts_one.csv", "x,y,value\n0.5,0.5,1.2\n");
  const PointData one = read_points_csv("pts_one.csv");
  CHECK(one.size() == 1);
  CHECK(one.values[0] == doctest::Approx(1.2));
  std::remove("pts_one.csv");

  write_file("pts_nan.csv", "x,value\n0.5,nan\n0.25,2.0\n");
  const PointData dropped = read_points_csv("pts_nan.csv");
  CHECK(dropped.size() == 1);
  CHECK(dropped.dropped_rows == 1);
  std::remove("pts_nan.csv");

  write_file("pts_bad.csv", "x,value\n0.5,abc\n");
  CHECK_THROWS_AS(read_points_csv("pts_bad.csv"), MalformedRow);
  std::remove("pts_bad.csv");

  write_file("pts_head.csv", "lon,lat,value\n");
  CHECK_THROWS_AS(read_points_csv("pts_head.csv"), MissingColumn);
  std::remove("pts_head.csv");
}

TEST_CASE("detrend on exact polynomials") {
  PointData flat;
  flat.locations.resize(5, 2);
  flat.values.resize(5);
  for (int i = 0; i < 5; ++i) {
    flat.locations(i, 0) = 0.1 * i;
    flat.locations(i, 1) = 0.2 * i;
    flat.values[i] = 7.0;
  }
  const DetrendResult r1 = detrend(flat);
  CHECK(r1.residuals.values.cwiseAbs().maxCoeff() < 1e-10);
  CHECK(r1.coefficients[0] == doctest::Approx(7.0));

  PointData quad = flat;
  for (int i = 0; i < 5; ++i) {
    const double y = quad.locations(i, 1);
    quad.values[i] = 2.0 + 3.0 * y - y * y;
  }
  const DetrendResult r2 = detrend(quad);
  CHECK(r2.coefficients[0] == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(r2.coefficients[1] == doctest::Approx(3.0).epsilon(1e-9));
  CHECK(r2.coefficients[2] == doctest::Approx(-1.0).epsilon(1e-9));
  CHECK(r2.residuals.values.cwiseAbs().maxCoeff() < 1e-10);

  // residual orthogonality to the covariate columns
  Rng rng(12);
  PointData noisy = flat;
  for (int i = 0; i < 5; ++i) noisy.values[i] = rng.normal();
  const DetrendResult r3 = detrend(noisy);
  Eigen::MatrixXd design(5, 3);
  for (int i = 0; i < 5; ++i) {
    const double y = noisy.locations(i, 1);
    design.row(i) << 1.0, y, y * y;
  }
  const Eigen::Vector3d dots = design.transpose() * r3.residuals.values;
  for (int c = 0; c < 3; ++c)
    CHECK(std::abs(dots[c]) <=
          1e-8 * design.col(c).norm() * r3.residuals.values.norm() + 1e-12);

  // collinear covariates are rejected
  PointData degenerate = flat;
  degenerate.locations.col(1).setConstant(1.0);
  CHECK_THROWS_AS(detrend(degenerate), RankDeficient);
}

TEST_CASE("flat config parsing and echo") {
  const Config cfg = Config::from_string(
      "alpha = 1.5\n# comment line\nname = tiling  # trailing\nflag = "
      "true\nlist = 1, 2.5, 3\n");
  CHECK(cfg.get_double("alpha") == doctest::Approx(1.5));
  CHECK(cfg.get("name") == "tiling");
  CHECK(cfg.get_bool_or("flag", false));
  CHECK(cfg.get_int_or("missing", 42) == 42);
  const auto list = cfg.get_list_or("list", {});
  REQUIRE(list.size() == 3);
  CHECK(list[1] == doctest::Approx(2.5));

  CHECK_THROWS_AS(cfg.get("absent"), ConfigError);
  CHECK_THROWS_AS(Config::from_string("no_equals_here\n"), ConfigError);

  // echo contains every resolved key and reparses to the same values
  cfg.write_echo("echo_test.txt");
  const Config echoed = Config::from_file("echo_test.txt");
  CHECK(echoed.get_double("alpha") == doctest::Approx(1.5));
  CHECK(echoed.get_int_or("missing", -1) == 42);
  CHECK(echoed.get("name") == "tiling");
  std::remove("echo_test.txt");
}

}  // TEST_SUITE
