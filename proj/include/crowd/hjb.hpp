#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "crowd/grid.hpp"
#include "crowd/profiles.hpp"

namespace crowd {

struct DirectionSet {
  int n_dirs = 128;

  void validate() const;
  double theta(int k) const { return kTwoPi * k / n_dirs; }
  Vec2 u(int k) const { return unit_vector(theta(k)); }
};

struct HJBSolution {
  ScalarField phi;          // seconds to exit
  VectorField u_star;       // unit direction, zero where undefined
  VectorField velocity;     // v(x, u_star), zero where undefined
  std::vector<std::uint8_t> reachable;
  int iterations = 0;       // sweeps performed
  double residual = 0.0;    // last max update
  double time_scale = 0.0;  // domain diameter / min speed
  double sentinel = 0.0;    // value held by obstacles and unreachable cells
  int crowd = 0;

  bool is_reachable(int k) const { return reachable[static_cast<std::size_t>(k)] != 0; }
};

struct SolverOptions {
  double tol_factor = 1e-9;  // stop when max update < tol_factor * time_scale
  int max_sweeps = 10000;
  const ScalarField* warm_start = nullptr;
};

// Godunov upwind Eikonal |grad phi| speed = 1 by fast sweeping.
HJBSolution solve_eikonal(const Domain& domain, int crowd, const ScalarField& speed,
                          const SolverOptions& options = {});

using ProfileAt = std::function<VelocityProfile(int i, int j)>;

// Semi-Lagrangian fixed point phi(x) = min_u { tau + phi(x + tau v(x, u)) },
// tau = h / |v|. Cells whose profile is a circle use the Godunov update, so
// an all-circle input reproduces solve_eikonal.
HJBSolution solve_anisotropic(const Domain& domain, int crowd, const ProfileAt& profile_at,
                              const DirectionSet& dirs = {}, const SolverOptions& options = {});

// Same, but cells where `isotropic_at` returns a speed skip profile_at.
using IsotropicAt = std::function<std::optional<double>(int i, int j)>;
HJBSolution solve_anisotropic(const Domain& domain, int crowd, const ProfileAt& profile_at,
                              const IsotropicAt& isotropic_at, const DirectionSet& dirs = {},
                              const SolverOptions& options = {});

struct DirectionChoice {
  Vec2 u{};
  double value = 0.0;  // -grad . v(u)
  bool multiple = false;
};

// argmax over u of -grad . v(u): best sample, then golden-section refinement
// between its neighbors.
DirectionChoice optimal_direction(Vec2 grad_phi, const VelocityProfile& profile);

// Cell gradients of phi, zero on cells where it is degenerate or undefined.
VectorField gradient_field(const HJBSolution& solution, const Domain& domain);

using DirectionPolicy = std::function<Vec2(Vec2)>;
using VelocityLaw = std::function<Vec2(Vec2 position, Vec2 u)>;
// Non-negative inside the target set, negative outside.
using TargetLevel = std::function<double(Vec2)>;
using PointProfile = std::function<VelocityProfile(Vec2)>;

// u = argmax of -grad phi . v(x, u) with grad phi interpolated at x.
DirectionPolicy optimal_policy(const HJBSolution& solution, const Domain& domain,
                               PointProfile profile_at);
// u = -grad phi / |grad phi|, grad phi interpolated at x.
DirectionPolicy gradient_policy(const HJBSolution& solution, const Domain& domain);
// Interpolated stored u_star, renormalized.
DirectionPolicy stored_policy(const HJBSolution& solution);

struct Trajectory {
  std::vector<Vec2> path;
  double exit_time = 0.0;
};

Trajectory trace_trajectory(const DirectionPolicy& policy, const VelocityLaw& velocity,
                            const TargetLevel& target, Vec2 start, double dt,
                            int max_steps = 1000000);

}  // namespace crowd
