#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "crowd/errors.hpp"
#include "crowd/nash.hpp"

using namespace crowd;
using doctest::Approx;

namespace {

PointGame example1() { return PointGame::make({1.0, 0.0}, {-1.0, 0.0}, PenaltyModel::squared(0.347), 1.68, 0.72); }

double foc_a(const PointGame& g, double a, double b) {
  const PenaltyDerivatives d = penalty_derivatives(g.pen_a, g.rho_b, g.psi(a, b));
  return -std::sin(a) * d.f + std::cos(a) * d.df;
}

PointGame random_certified(std::mt19937& rng) {
  std::uniform_real_distribution<double> ang(0.0, kTwoPi);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double beta = 0.05 + 0.5 * u(rng);
  const double load = 0.98 * u(rng);
  const double share = u(rng);
  const double ra = std::sqrt(load * share / beta);
  const double rb = std::sqrt(load * (1.0 - share) / beta);
  return PointGame::make(unit_vector(ang(rng)), unit_vector(ang(rng)), PenaltyModel::squared(beta), ra, rb);
}

}  // namespace

TEST_CASE("game construction") {
  const PointGame g = PointGame::make({0.0, 2.0}, {3.0, 0.0}, PenaltyModel::squared(0.2), 1.0, 0.5);
  CHECK(g.delta == Approx(kPi / 2));
  CHECK_THROWS_AS(PointGame::make({0.0, 0.0}, {1.0, 0.0}, PenaltyModel::squared(0.2), 1.0, 1.0), DomainError);
  CHECK(g.payoff_a(0.0, 0.0) == Approx(penalty_factor(g.pen_a, 0.5, kPi / 2)));
}

TEST_CASE("angle conventions") {
  const PointGame g = example1();
  CHECK(to_relative_a(g, kPi) == Approx(0.0).scale(1.0));
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> ang(0.0, kTwoPi);
  for (int t = 0; t < 100; ++t) {
    const double a = ang(rng);
    CHECK(std::abs(wrap_signed(to_absolute_a(g, to_relative_a(g, a)) - a)) < 1e-12);
    CHECK(std::abs(wrap_signed(to_absolute_b(g, to_relative_b(g, a)) - a)) < 1e-12);
  }
  const PointGame g2 = PointGame::make(unit_vector(kPi / 20), unit_vector(39 * kPi / 40), PenaltyModel::squared(0.347),
                                       1.68, 1.68);
  const double a_rel = to_relative_a(g2, 2.5470);
  CHECK(std::abs(wrap_signed(a_rel - (2.5470 - (kPi + kPi / 20)))) < 1e-12);
  const double b_rel = to_relative_b(g2, 0.6732);
  CHECK(g2.payoff_a(a_rel, b_rel) == Approx(0.205).epsilon(2e-3));
}

TEST_CASE("best replies") {
  const PointGame iso = PointGame::make({1.0, 0.0}, {0.0, 1.0}, PenaltyModel::squared(0.3), 0.0, 0.0);
  CHECK(std::abs(wrap_signed(best_reply_a(iso, 1.0))) < 1e-9);
  CHECK(std::abs(wrap_signed(best_reply_b(iso, 2.0))) < 1e-9);

  // Against B's first Example 1 equilibrium direction, A goes straight along -p.
  const PointGame g = example1();
  const double a = best_reply_a(g, to_relative_b(g, 0.0));
  CHECK(std::abs(wrap_signed(to_absolute_a(g, a) - kPi)) < 1e-6);

  std::mt19937 rng(8);
  std::uniform_real_distribution<double> ang(0.0, kTwoPi);
  for (int t = 0; t < 1000; ++t) {
    const PointGame r = random_certified(rng);
    const double b = ang(rng);
    const double br = best_reply_a(r, b);
    CHECK(std::abs(foc_a(r, br, b)) < 1e-8);
  }
}

TEST_CASE("best reply multiplicity") {
  // Head-on against a dense crowd: two symmetric replies tie.
  const PointGame g = PointGame::make({1.0, 0.0}, {-1.0, 0.0}, PenaltyModel::squared(0.347), 0.0, 2.4);
  CHECK_THROWS_AS(best_reply_a(g, 0.0), MultiplicityError);
}

TEST_CASE("best reply derivative") {
  const PointGame g = PointGame::make({1.0, 0.0}, {-1.0, 0.0}, PenaltyModel::squared(0.347), 1.0, 1.0);
  // delta = pi here, so psi = a - b + pi.
  CHECK(best_reply_derivative(g, kPi / 2, 0.0) == Approx(0.0).scale(1.0));
  CHECK(std::abs(best_reply_derivative(g, 0.0, 0.0)) == Approx(0.347 / 0.653).epsilon(1e-12));
  // Closed form for the squared model.
  for (double psi : {0.3, 1.1, 2.5, 4.0}) {
    const double L = 0.347;
    const double expect = L * std::cos(psi) / (L * std::cos(psi) + L * L * std::sin(psi) * std::sin(psi) + 1.0);
    CHECK(std::abs(best_reply_derivative(g, psi - kPi, 0.0)) == Approx(std::abs(expect)).epsilon(1e-12));
  }
  std::mt19937 rng(12);
  std::uniform_real_distribution<double> ang(0.0, kTwoPi);
  for (int t = 0; t < 100; ++t) {
    const PointGame r = random_certified(rng);
    const double b = ang(rng);
    const double step = 1e-5;
    const double fd = wrap_signed(best_reply_a(r, b + step) - best_reply_a(r, b - step)) / (2.0 * step);
    const double a = best_reply_a(r, b);
    CHECK(best_reply_derivative(r, a, b) == Approx(fd).scale(1.0).epsilon(1e-5));
  }
  CHECK_THROWS_AS(best_reply_derivative(PointGame::make({1.0, 0.0}, {-1.0, 0.0}, PenaltyModel::teardrop(0.1), 1.0, 1.0),
                                        0.0, 0.0),
                  UnsupportedModelError);
}

TEST_CASE("composed best-reply map contracts on certified games") {
  std::mt19937 rng(13);
  std::uniform_real_distribution<double> ang(0.0, kTwoPi);
  for (int t = 0; t < 200; ++t) {
    const PointGame r = random_certified(rng);
    for (int k = 0; k < 1000; ++k) {
      const double a = ang(rng);
      const double b = ang(rng);
      const double da = best_reply_derivative(r, a, b, Player::A);
      const double db = best_reply_derivative(r, a, b, Player::B);
      REQUIRE(std::abs(da * db) < 1.0);
    }
  }
}

TEST_CASE("uniqueness certificate") {
  const PenaltyModel weak = PenaltyModel::squared(0.019);
  CHECK(uniqueness_certificate(weak, 5.0, 5.2).certified);            // 52.04 < 52.632
  CHECK_FALSE(uniqueness_certificate(weak, 5.0, 5.3).certified);      // 53.09
  const PenaltyModel strong = PenaltyModel::squared(0.347);
  CHECK(uniqueness_certificate(strong, 1.2, 1.19).certified);         // 2.8561 < 2.881
  CHECK_FALSE(uniqueness_certificate(strong, 1.2, 1.21).certified);   // 2.8841
  const Certificate zero = uniqueness_certificate(strong, 0.0, 0.0);
  CHECK(zero.certified);
  CHECK(zero.margin == 1.0);
  const Certificate lin = uniqueness_certificate(PenaltyModel::linear(0.25), 1.0, 2.0);
  CHECK(lin.margin == Approx(0.25));
  CHECK_THROWS_AS(uniqueness_certificate(PenaltyModel::teardrop(0.1), 1.0, 1.0), UnsupportedModelError);
}

TEST_CASE("example 1 equilibria and payoff table") {
  const PointGame g = example1();
  const NEResult r = ne_enumerate(g);
  REQUIRE(r.points.size() == 3);
  CHECK_FALSE(r.continuum);
  std::vector<NEPoint> pts = r.points;
  // Order as in the published table: a = pi, 3.0366, 3.2466.
  auto key = [](const NEPoint& n) {
    const double a = n.a_abs;
    return std::abs(a - kPi) < 1e-3 ? 0 : (a < kPi ? 1 : 2);
  };
  std::sort(pts.begin(), pts.end(), [&](const NEPoint& x, const NEPoint& y) { return key(x) < key(y); });
  const double want[3][2] = {{3.1416, 0.0}, {3.0366, 0.5208}, {3.2466, 5.7623}};
  for (int k = 0; k < 3; ++k) {
    CHECK(std::abs(wrap_signed(pts[k].a_abs - want[k][0])) < 1e-3);
    CHECK(std::abs(wrap_signed(pts[k].b_abs - want[k][1])) < 1e-3);
    CHECK(pts[k].deviation_gain <= 1e-9);
  }
  const double table[3][3][2] = {{{0.698, 0.141}, {0.715, 0.139}, {0.715, 0.139}},
                                 {{0.695, 0.142}, {0.718, 0.147}, {0.705, 0.133}},
                                 {{0.695, 0.142}, {0.705, 0.133}, {0.718, 0.147}}};
  const auto t = payoff_table(g, pts);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      CHECK(std::abs(t[i][j].a - table[i][j][0]) < 1e-3);
      CHECK(std::abs(t[i][j].b - table[i][j][1]) < 1e-3);
    }
  }
  // The straight-ahead equilibrium is dominated by the two symmetric ones.
  CHECK(pts[0].pareto_dominated);
  CHECK_FALSE(pts[1].pareto_dominated);
}

TEST_CASE("enumeration is invariant under joint rotation") {
  const PointGame base = PointGame::make(unit_vector(0.3), unit_vector(2.9), PenaltyModel::squared(0.45), 1.2, 1.2);
  const NEResult r0 = ne_enumerate(base);
  for (double rot : {0.7, 2.2, 4.9}) {
    const PointGame g = PointGame::make(unit_vector(0.3 + rot), unit_vector(2.9 + rot), PenaltyModel::squared(0.45),
                                        1.2, 1.2);
    const NEResult r = ne_enumerate(g);
    REQUIRE(r.points.size() == r0.points.size());
    for (const auto& p : r0.points) {
      const bool found = std::any_of(r.points.begin(), r.points.end(), [&](const NEPoint& q) {
        return std::abs(wrap_signed(q.a - p.a)) < 1e-6 && std::abs(wrap_signed(q.b - p.b)) < 1e-6;
      });
      CHECK(found);
    }
  }
}

TEST_CASE("exhaustive mode finds the unstable equilibrium of example 2") {
  const PointGame g = PointGame::make(unit_vector(kPi / 20), unit_vector(39 * kPi / 40), PenaltyModel::squared(0.347),
                                      1.68, 1.68);
  NEOptions opt;
  opt.exhaustive = true;
  const NEResult r = ne_enumerate(g, opt);
  CHECK(r.points.size() == 3);
}

TEST_CASE("teardrop critical angle") {
  CHECK(teardrop_critical_angle(0.1, 1.0) == Approx(0.5 * kPi - std::atan(1.0 / (0.2 * kPi))));
  CHECK(teardrop_critical_angle(0.1, 1.0) == Approx(0.5610).epsilon(1e-4));
  CHECK(teardrop_critical_angle(1e6, 1.0) == Approx(kPi / 2).epsilon(1e-6));
  CHECK(teardrop_critical_angle(1e-8, 1.0) < 1e-6);
  CHECK(teardrop_critical_angle(1e-8, 1.0) > 0.0);
}

TEST_CASE("teardrop continuum is flagged") {
  const double half = 20.0 * kPi / 180.0;
  // -p and -q make +-20 degrees with the bisector along +y.
  const Vec2 p = -unit_vector(kPi / 2 + half);
  const Vec2 q = -unit_vector(kPi / 2 - half);
  NEOptions opt;
  opt.n_dirs = 1024;
  const NEResult r = ne_enumerate(PointGame::make(p, q, PenaltyModel::teardrop(0.1), 1.0, 1.0), opt);
  CHECK(r.continuum);
  CHECK(r.points.size() >= 2);
}
