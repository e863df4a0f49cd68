#pragma once

#include <optional>
#include <vector>

#include "crowd/profiles.hpp"
#include "crowd/vec2.hpp"

namespace crowd {

enum class AngleConvention { Relative, Absolute };

// Pointwise direction game between two crowds. Relative angles a, b are
// measured from -p and -q; crowd A maximizes cos(a) fA(psi), crowd B
// maximizes cos(b) fB(psi), psi = a - b + delta. fA sees the density of B and
// fB the density of A.
struct PointGame {
  Vec2 p{1.0, 0.0};
  Vec2 q{-1.0, 0.0};
  double delta = 0.0;  // angle(p) - angle(q)
  PenaltyModel pen_a;
  PenaltyModel pen_b;
  double rho_a = 0.0;
  double rho_b = 0.0;

  static PointGame make(Vec2 p, Vec2 q, const PenaltyModel& pen_a, const PenaltyModel& pen_b,
                        double rho_a, double rho_b);
  static PointGame make(Vec2 p, Vec2 q, const PenaltyModel& pen, double rho_a, double rho_b) {
    return make(p, q, pen, pen, rho_a, rho_b);
  }

  void validate() const;

  double psi(double a, double b) const { return a - b + delta; }
  double f_a(double psi) const { return penalty_factor(pen_a, rho_b, psi); }
  double f_b(double psi) const { return penalty_factor(pen_b, rho_a, psi); }
  double payoff_a(double a, double b) const;
  double payoff_b(double a, double b) const;

  // Plane angles of -p and -q.
  double origin_a() const { return angle_of(-p); }
  double origin_b() const { return angle_of(-q); }
};

// a_rel = a_abs - angle(-p) (and likewise for b), wrapped to [0, 2 pi).
double to_relative_a(const PointGame& game, double a_abs);
double to_relative_b(const PointGame& game, double b_abs);
double to_absolute_a(const PointGame& game, double a_rel);
double to_absolute_b(const PointGame& game, double b_rel);

inline constexpr int kBestReplySamples = 1024;

// Global maximizer over [0, 2 pi) of A's payoff with b fixed (relative
// angles). Throws MultiplicityError when two separated maximizers tie
// within 1e-9.
double best_reply_a(const PointGame& game, double b);
double best_reply_b(const PointGame& game, double a);

enum class Player { A, B };

// d(best reply)/d(other angle) at psi = a - b + delta, from the implicit
// first-order condition: (-f'^2 + f f'') / (-f^2 - 2 f'^2 + f f'').
double best_reply_derivative(const PointGame& game, double a, double b, Player player = Player::A);

struct Certificate {
  bool certified = false;
  double margin = 0.0;  // 1 - load, positive when certified
};

// Contraction test for the composed best-reply map: load_a(rho_b) +
// load_b(rho_a) < 1, i.e. beta rho_a^2 + beta rho_b^2 < 1 (squared) or
// beta (rho_a + rho_b) < 1 (linear).
Certificate uniqueness_certificate(const PenaltyModel& pen_a, const PenaltyModel& pen_b, double rho_a,
                                   double rho_b);
inline Certificate uniqueness_certificate(const PenaltyModel& pen, double rho_a, double rho_b) {
  return uniqueness_certificate(pen, pen, rho_a, rho_b);
}

enum class NEClass { Strict, Boundary };

struct NEPoint {
  double a = 0.0;  // relative
  double b = 0.0;
  double a_abs = 0.0;
  double b_abs = 0.0;
  double payoff_a = 0.0;
  double payoff_b = 0.0;
  NEClass classification = NEClass::Strict;
  double deviation_gain = 0.0;  // largest unilateral gain found by verification
  bool pareto_dominated = false;
  int cluster = 0;
};

struct NEOptions {
  int n_dirs = 1024;
  double eps_ne = 1e-9;
  int max_samples_per_cluster = 16;
  // Seed Newton from every local minimum of the grid gain instead of from
  // grid equilibria. Also finds equilibria that leave no trace in the
  // discretized game (where the composed best-reply map expands).
  bool exhaustive = false;
};

struct NEResult {
  std::vector<NEPoint> points;
  // Some cluster of grid equilibria spans more than 3 grid spacings: the
  // points are samples of a continuum, not an exhaustive list.
  bool continuum = false;
  int n_clusters = 0;
  int n_unpolished = 0;  // clusters whose polished point failed verification
};

// Equilibria of the discretized game on an n_dirs x n_dirs grid of plane
// angles, clustered within 3 spacings. Each isolated cluster is polished
// (Newton on both first-order conditions for smooth penalties, alternating
// best replies otherwise) and kept when a 4x finer deviation check passes at
// eps_ne. Clusters spanning more than 3 spacings are reported as samples.
NEResult ne_enumerate(const PointGame& game, const NEOptions& options = {});

// payoff_a / payoff_b of A playing points[i].a against B playing points[j].b.
struct PayoffCell {
  double a = 0.0;
  double b = 0.0;
};
std::vector<std::vector<PayoffCell>> payoff_table(const PointGame& game, const std::vector<NEPoint>& points);

// Largest angle each of -p, -q may make with their bisector for the
// teardrop game to keep a continuum of equilibria.
double teardrop_critical_angle(double c_tear, double rho_bar);

}  // namespace crowd
