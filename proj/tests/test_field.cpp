#include <doctest.h>

#include "fixtures.hpp"
#include "glioma/errors.hpp"

using namespace glioma;
using namespace glioma::testing;

TEST_CASE("grid validation") {
  CHECK_THROWS_AS(Grid({5, 8}, {1.0, 1.0}), ConfigError);
  CHECK_THROWS_AS(Grid({2, 8}, {1.0, 1.0}), ConfigError);
  CHECK_THROWS_AS(Grid({8, 8}, {1.0, -1.0}), ConfigError);
  CHECK_THROWS_AS(Grid({8}, {1.0}), ConfigError);
  const Grid g({8, 6, 4}, {0.5, 1.0, 2.0}, {1.0, 0.0, -1.0});
  CHECK(g.size() == 192);
  CHECK(g.extent(0) == doctest::Approx(4.0));
  CHECK(g.cell_volume() == doctest::Approx(1.0));
  CHECK(g.index(1, 2, 3) == 1 + 8 * (2 + 6 * 3));
  const auto s = g.subscripts(g.index(7, 5, 2));
  CHECK(s[0] == 7);
  CHECK(s[1] == 5);
  CHECK(s[2] == 2);
  const Eigen::Vector3d x = g.position(g.index(2, 1, 1));
  CHECK(x[0] == doctest::Approx(2.0));
  CHECK(x[2] == doctest::Approx(1.0));
}

TEST_CASE("tensor component layout is the upper triangle") {
  CHECK(tensor_components(2) == 3);
  CHECK(tensor_components(3) == 6);
  CHECK(tensor_component(3, 0, 2) == 2);
  CHECK(tensor_component(3, 2, 0) == 2);
  CHECK(tensor_component(3, 1, 1) == 3);
  CHECK(tensor_component(2, 1, 1) == 2);
  const Grid g = Grid::cube(3, 4, 1.0);
  TensorField t(g);
  Eigen::Matrix3d m;
  m << 1, 2, 3, 2, 4, 5, 3, 5, 6;
  t.set(3, m);
  CHECK((t.at(3) - m).norm() == 0.0);
  CHECK(t.isotropic_part()[3] == doctest::Approx(11.0 / 3.0));
}

TEST_CASE("non-finite values are reported with the voxel") {
  const Grid g = Grid::cube(2, 4, 1.0);
  Vector v = Vector::Zero(16);
  v[g.index(2, 3)] = std::nan("");
  try {
    require_finite(g, v, "probe");
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("(2,3)") != std::string::npos);
  }
}

TEST_CASE("weighted inner product uses the cell volume") {
  const Grid g = Grid::cube(2, 4, 2.0);
  const Vector a = Vector::Ones(16);
  CHECK(weighted_dot(g, a, a) == doctest::Approx(4.0));
  CHECK(weighted_norm(g, a) == doctest::Approx(2.0));
}

TEST_CASE("time grid") {
  TimeGrid t;
  CHECK(t.dt() == doctest::Approx(0.1));
  t.n_steps = 0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
}
