#include <random>

#include "doctest.h"
#include "crowd/errors.hpp"
#include "crowd/grid.hpp"

using namespace crowd;

namespace {
GridSpec grid(int nx = 8, int ny = 6, double h = 0.5) { return {nx, ny, h, {0.0, 0.0}}; }
}  // namespace

TEST_CASE("grid spec validation") {
  CHECK_NOTHROW(grid().validate());
  CHECK_THROWS_AS((GridSpec{2, 5, 1.0}.validate()), ConfigurationError);
  CHECK_THROWS_AS((GridSpec{5, 5, 0.0}.validate()), ConfigurationError);
  CHECK_THROWS_AS((GridSpec{5, 5, -1.0}.validate()), ConfigurationError);
  const GridSpec g = grid();
  CHECK(g.extent().x == doctest::Approx(4.0));
  CHECK(g.extent().y == doctest::Approx(3.0));
  CHECK(ScalarField(g).values.size() == 48);
  CHECK(VectorField(g).values.size() == 48);
}

TEST_CASE("bilinear sampling reproduces constants, linear fields and nodes") {
  const GridSpec g = grid();
  ScalarField c(g, 3.25);
  CHECK(bilinear_sample(c, {1.3, 2.1}) == doctest::Approx(3.25));

  ScalarField lin(g);
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      const Vec2 p = g.cell_center(i, j);
      lin(i, j) = 2.0 * p.x + 3.0 * p.y;
    }
  }
  // Between the first four nodes.
  const Vec2 q = g.cell_center(0, 0) + Vec2{0.5 * g.h, 0.5 * g.h};
  CHECK(bilinear_sample(lin, q) == doctest::Approx(2.0 * q.x + 3.0 * q.y).epsilon(1e-14));
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> ux(g.cell_center(0, 0).x, g.cell_center(g.nx - 1, 0).x);
  std::uniform_real_distribution<double> uy(g.cell_center(0, 0).y, g.cell_center(0, g.ny - 1).y);
  for (int t = 0; t < 100; ++t) {
    const Vec2 p{ux(rng), uy(rng)};
    CHECK(bilinear_sample(lin, p) == doctest::Approx(2.0 * p.x + 3.0 * p.y).epsilon(1e-12));
  }

  ScalarField r(g);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (auto& v : r.values) v = u01(rng);
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) CHECK(bilinear_sample(r, g.cell_center(i, j)) == r(i, j));
  }
}

TEST_CASE("bilinear sampling clamps near the boundary and rejects outside points") {
  const GridSpec g = grid();
  ScalarField f(g);
  for (int k = 0; k < g.size(); ++k) f[k] = k;
  CHECK(bilinear_sample(f, {0.01, 0.01}) == doctest::Approx(f(0, 0)));
  CHECK_THROWS_AS(bilinear_sample(f, {-0.1, 1.0}), DomainError);
  CHECK_THROWS_AS(bilinear_sample(f, {1.0, 3.5}), DomainError);
  VectorField v(g, Vec2{1.0, -2.0});
  const Vec2 s = bilinear_sample(v, {2.2, 1.7});
  CHECK(s.x == doctest::Approx(1.0));
  CHECK(s.y == doctest::Approx(-2.0));
}

TEST_CASE("gradient of linear and quadratic fields") {
  const GridSpec g = grid(10, 10, 0.1);
  ScalarField lin(g);
  ScalarField quad(g);
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      const Vec2 p = g.cell_center(i, j);
      lin(i, j) = -1.5 * p.x + 0.25 * p.y;
      quad(i, j) = p.x * p.x;
    }
  }
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      const Gradient gr = gradient(lin, i, j);
      CHECK_FALSE(gr.degenerate);
      CHECK(gr.value.x == doctest::Approx(-1.5).epsilon(1e-12));
      CHECK(gr.value.y == doctest::Approx(0.25).epsilon(1e-12));
    }
  }
  const Gradient gq = gradient(quad, 4, 4);
  CHECK(gq.value.x == doctest::Approx(2.0 * g.cell_center(4, 4).x).epsilon(1e-12));
  CHECK(gq.value.y == doctest::Approx(0.0));
}

TEST_CASE("gradient next to an obstacle is one-sided") {
  const GridSpec g = grid(3, 3, 1.0);
  ScalarField f(g);
  // Hand-built 3x3 values.
  const double vals[9] = {1.0, 2.0, 9.0, 4.0, 5.0, 7.5, 6.0, 8.0, 3.0};
  for (int k = 0; k < 9; ++k) f[k] = vals[k];
  std::vector<std::uint8_t> blocked(9, 0);
  blocked[static_cast<std::size_t>(g.index(2, 1))] = 1;  // east of the center
  const Gradient gr = gradient(f, 1, 1, blocked);
  CHECK(gr.value.x == doctest::Approx(5.0 - 4.0));          // west one-sided
  CHECK(gr.value.y == doctest::Approx((8.0 - 2.0) / 2.0));  // central

  // Infinite neighbors count as unusable; all blocked gives a degenerate gradient.
  std::vector<std::uint8_t> all(9, 1);
  all[static_cast<std::size_t>(g.index(1, 1))] = 0;
  CHECK(gradient(f, 1, 1, all).degenerate);
  ScalarField inf_f = f;
  inf_f(0, 1) = 100.0;
  const Gradient gi = gradient(inf_f, 1, 1, blocked, 50.0);
  CHECK(gi.value.x == doctest::Approx(0.0));
}

TEST_CASE("domain roles") {
  const GridSpec g = grid(5, 5, 1.0);
  Domain d(g, 2);
  d.set_exit(4, 2, 0);
  d.set_inflow(0, 2, 0, 0.8);
  d.set_obstacle(2, 2);
  CHECK(d.is_exit(4, 2, 0));
  CHECK_FALSE(d.is_exit(4, 2, 1));
  CHECK(d.role(0, 2, 0).kind == CellKind::Inflow);
  CHECK(d.role(0, 2, 0).inflow_rate == doctest::Approx(0.8));
  CHECK(d.role(0, 2, 1).kind == CellKind::Free);
  CHECK(d.role(2, 2, 1).kind == CellKind::Obstacle);
  CHECK(d.has_exit(0));
  CHECK_FALSE(d.has_exit(1));
  CHECK_THROWS_AS(d.set_exit(2, 2, 1), ConfigurationError);
  CHECK_THROWS_AS(d.set_inflow(1, 1, 1, -1.0), ConfigurationError);
  CHECK_THROWS_AS(d.set_inflow(4, 2, 0, 1.0), ConfigurationError);
}

TEST_CASE("total mass") {
  const GridSpec g = grid(4, 4, 0.5);
  CHECK(total_mass(ScalarField(g, 2.0)) == doctest::Approx(2.0 * 16 * 0.25));
}
