#include <cmath>
#include <random>

#include "doctest.h"
#include "crowd/errors.hpp"
#include "crowd/hjb.hpp"

using namespace crowd;
using doctest::Approx;

namespace {

Domain point_exit_domain(int n, double h, int ei, int ej) {
  Domain d(GridSpec{n, n, h, {0.0, 0.0}}, 1);
  d.set_exit(ei, ej, 0);
  return d;
}

double max_distance_error(int n) {
  const double h = 1.0 / n;
  const Domain d = point_exit_domain(n, h, n / 2, n / 2);
  const GridSpec& g = d.grid();
  const HJBSolution s = solve_eikonal(d, 0, ScalarField(g, 1.0));
  const Vec2 c = g.cell_center(n / 2, n / 2);
  double err = 0.0;
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) err = std::max(err, std::abs(s.phi(i, j) - norm(g.cell_center(i, j) - c)));
  }
  return err;
}

}  // namespace

TEST_CASE("eikonal approximates the distance to a point exit") {
  const double e40 = max_distance_error(40);
  const double e80 = max_distance_error(80);
  const double e160 = max_distance_error(160);
  for (auto [n, e] : {std::pair{40, e40}, {80, e80}, {160, e160}}) {
    const double h = 1.0 / n;
    CHECK(e <= 2.0 * h * std::log(1.0 / h));
  }
  CHECK(e80 < e40);
  CHECK(e160 < e80);
}

TEST_CASE("eikonal basic properties") {
  const Domain d = point_exit_domain(30, 0.1, 3, 20);
  const GridSpec& g = d.grid();
  const HJBSolution unit = solve_eikonal(d, 0, ScalarField(g, 1.0));
  const HJBSolution fast = solve_eikonal(d, 0, ScalarField(g, 2.5));
  for (int k = 0; k < g.size(); ++k) {
    CHECK(fast.phi[k] == Approx(unit.phi[k] / 2.5).epsilon(1e-9));
    CHECK(unit.phi[k] >= 0.0);
  }
  CHECK(unit.phi(3, 20) == 0.0);
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      if (i == 3 && j == 20) continue;
      CHECK(norm(unit.u_star(i, j)) == Approx(1.0));
    }
  }
  // Direction points roughly at the exit.
  const Vec2 to_exit = g.cell_center(3, 20) - g.cell_center(25, 5);
  CHECK(angle_between(unit.u_star(25, 5), to_exit) < 0.05);

  CHECK_THROWS_AS(solve_eikonal(d, 0, ScalarField(g, 0.0)), DomainError);
  Domain no_exit(g, 1);
  CHECK_THROWS_AS(solve_eikonal(no_exit, 0, ScalarField(g, 1.0)), ConfigurationError);
}

TEST_CASE("planar front from an exit edge") {
  Domain d(GridSpec{20, 12, 0.5, {0.0, 0.0}}, 1);
  for (int j = 0; j < 12; ++j) d.set_exit(19, j, 0);
  const HJBSolution s = solve_eikonal(d, 0, ScalarField(d.grid(), 1.0));
  for (int j = 0; j < 12; ++j) {
    for (int i = 0; i < 20; ++i) {
      CHECK(s.phi(i, j) == Approx((19 - i) * 0.5).epsilon(1e-9));
      if (i < 19) CHECK(s.u_star(i, j).x == Approx(1.0));
    }
  }
}

TEST_CASE("obstacles and unreachable cells") {
  Domain d(GridSpec{10, 10, 1.0, {0.0, 0.0}}, 1);
  d.set_exit(9, 9, 0);
  // Wall around the lower-left 3x3 box.
  for (int t = 0; t < 4; ++t) {
    d.set_obstacle(3, t);
    d.set_obstacle(t, 3);
  }
  const HJBSolution s = solve_eikonal(d, 0, ScalarField(d.grid(), 1.0));
  CHECK_FALSE(s.is_reachable(d.grid().index(0, 0)));
  CHECK(s.phi(0, 0) == s.sentinel);
  CHECK(s.phi(3, 3) == s.sentinel);
  CHECK(s.is_reachable(d.grid().index(5, 5)));
  CHECK(s.phi(5, 5) < s.sentinel);
  CHECK(s.sentinel == Approx(10.0 * s.time_scale));
}

TEST_CASE("anisotropic solver reduces to the eikonal solver on circles") {
  const Domain d = point_exit_domain(40, 0.05, 30, 8);
  const GridSpec& g = d.grid();
  ScalarField speed(g);
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) speed(i, j) = 0.5 + 0.5 * std::exp(-norm(g.cell_center(i, j) - Vec2{1.0, 1.0}));
  }
  const HJBSolution e = solve_eikonal(d, 0, speed);
  const HJBSolution a =
      solve_anisotropic(d, 0, [&](int i, int j) { return VelocityProfile::circle(speed(i, j)); });
  for (int k = 0; k < g.size(); ++k) CHECK(std::abs(e.phi[k] - a.phi[k]) <= 1e-6 * e.time_scale);
}

TEST_CASE("drift toward the exit lowers the value everywhere") {
  Domain d(GridSpec{30, 30, 0.1, {0.0, 0.0}}, 1);
  for (int i = 0; i < 30; ++i) d.set_exit(i, 29, 0);
  const auto ellipse = [](double drift) {
    return VelocityProfile::from_function(256, [drift](double th) { return unit_vector(th) + Vec2{0.0, drift}; });
  };
  const VelocityProfile plain = ellipse(0.0);
  const VelocityProfile drifted = ellipse(0.3);
  const HJBSolution a = solve_anisotropic(d, 0, [&](int, int) { return plain; });
  const HJBSolution b = solve_anisotropic(d, 0, [&](int, int) { return drifted; });
  for (int j = 0; j < 29; ++j) {
    for (int i = 0; i < 30; ++i) CHECK(b.phi(i, j) < a.phi(i, j));
  }
  // 1D oracle: time to the exit row at speed 1.3.
  CHECK(b.phi(15, 0) == Approx(29 * 0.1 / 1.3).epsilon(1e-3));
}

TEST_CASE("anisotropic solver rejects profiles that do not contain the origin") {
  const Domain d = point_exit_domain(10, 0.1, 5, 5);
  const VelocityProfile shifted =
      VelocityProfile::from_function(128, [](double th) { return unit_vector(th) + Vec2{1.5, 0.0}; });
  CHECK_THROWS_AS(solve_anisotropic(d, 0, [&](int, int) { return shifted; }), ConsistencyError);
}

TEST_CASE("first-order convergence on a smooth anisotropic field") {
  // Elliptic profiles with a smoothly rotating axis; reference on a fine grid.
  auto profile_at = [](Vec2 p) {
    const double rot = 0.6 * std::sin(2.0 * p.x) + 0.4 * p.y;
    return VelocityProfile::from_function(128, [rot](double th) {
      const Vec2 e{std::cos(th - rot), 0.6 * std::sin(th - rot)};
      return rotate(e, rot);
    });
  };
  auto solve = [&](int n) {
    const GridSpec g{n, n, 1.0 / n, {0.0, 0.0}};
    Domain d(g, 1);
    for (int i = 0; i < n; ++i) d.set_exit(i, n - 1, 0);
    return solve_anisotropic(d, 0, [&](int i, int j) { return profile_at(g.cell_center(i, j)); });
  };
  const HJBSolution ref = solve(160);
  std::vector<double> errs;
  for (int n : {20, 40, 80}) {
    const HJBSolution s = solve(n);
    double e = 0.0;
    for (int j = 0; j < n - 1; ++j) {
      for (int i = 0; i < n; ++i) {
        // The exit row sits half a cell below the top edge, itself an O(h) offset.
        const Vec2 p = s.phi.grid.cell_center(i, j);
        e = std::max(e, std::abs(s.phi(i, j) - bilinear_sample(ref.phi, p)));
      }
    }
    errs.push_back(e);
  }
  CHECK(errs[1] < 0.75 * errs[0]);
  CHECK(errs[2] < 0.75 * errs[1]);
}

TEST_CASE("optimal direction") {
  const VelocityProfile circle = VelocityProfile::circle(1.3);
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> ang(0.0, kTwoPi);
  for (int t = 0; t < 50; ++t) {
    const Vec2 g = 2.0 * unit_vector(ang(rng));
    const DirectionChoice c = optimal_direction(g, circle);
    CHECK(angle_between(c.u, -g) < 1e-6);
    CHECK_FALSE(c.multiple);
    const DirectionChoice scaled = optimal_direction(7.5 * g, circle);
    CHECK(norm(scaled.u - c.u) < 1e-7);
  }
  CHECK_THROWS(optimal_direction({0.0, 0.0}, circle));

  // Non-convex head-on profile: two symmetric maximizers.
  const VelocityProfile dense = intercrowd_profile({1.0, 0.0}, PenaltyModel::squared(0.347), 0.0, 2.4, {1.0, 0.0});
  CHECK(optimal_direction({1.0, 0.0}, dense).multiple);
}

TEST_CASE("no multiplicity on strictly convex profiles") {
  std::mt19937 rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  // 100 profiles with beta rho^2 <= 0.9, 100 gradients each.
  int flagged = 0;
  for (int t = 0; t < 100; ++t) {
    const double beta = 0.05 + 0.5 * u(rng);
    const double rho = std::sqrt(0.9 * u(rng) / beta);
    const VelocityProfile p =
        intercrowd_profile({1.0, 0.0}, PenaltyModel::squared(beta), 0.0, rho, unit_vector(kTwoPi * u(rng)));
    for (int k = 0; k < 100; ++k) flagged += optimal_direction(unit_vector(kTwoPi * u(rng)), p).multiple ? 1 : 0;
  }
  CHECK(flagged == 0);
}

TEST_CASE("trajectory tracing") {
  Domain d(GridSpec{40, 40, 0.05, {0.0, 0.0}}, 1);
  for (int i = 0; i < 40; ++i) d.set_exit(i, 39, 0);
  const HJBSolution s = solve_eikonal(d, 0, ScalarField(d.grid(), 1.0));
  const VelocityLaw law = [](Vec2, Vec2 u) { return u; };
  const TargetLevel target = [](Vec2 p) { return p.y - 1.9; };
  const Trajectory t = trace_trajectory(gradient_policy(s, d), law, target, {1.0, 0.2}, 0.001);
  CHECK(t.exit_time == Approx(1.7).epsilon(1e-3));
  const Trajectory st = trace_trajectory(stored_policy(s), law, target, {1.0, 0.2}, 0.001);
  CHECK(st.exit_time == Approx(1.7).epsilon(1e-3));
  // The value decreases along the path.
  for (std::size_t k = 1; k < t.path.size(); k += 50) {
    CHECK(bilinear_sample(s.phi, t.path[k]) <= bilinear_sample(s.phi, t.path[k - 1]) + 1e-12);
  }
  const VelocityLaw stuck = [](Vec2, Vec2) { return Vec2{}; };
  CHECK_THROWS_AS(trace_trajectory(gradient_policy(s, d), stuck, target, {1.0, 0.2}, 0.001), NonTerminationError);
  CHECK_THROWS_AS(trace_trajectory(gradient_policy(s, d), law, target, {1.0, 0.2}, 0.001, 10), NonTerminationError);
}
