#include "crowd/hjb.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include "crowd/errors.hpp"

namespace crowd {

void DirectionSet::validate() const {
  if (n_dirs < 32) throw ConfigurationError("direction set needs at least 32 directions");
}

namespace {

constexpr double kInvPhi = 0.6180339887498949;

// Maximize a unimodal-near-the-bracket function on [lo, hi].
template <typename F>
double golden_max(F&& f, double lo, double hi) {
  double a = lo;
  double b = hi;
  double c = b - kInvPhi * (b - a);
  double d = a + kInvPhi * (b - a);
  double fc = f(c);
  double fd = f(d);
  for (int it = 0; it < 80 && b - a > 1e-13; ++it) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kInvPhi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kInvPhi * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

// Bilinear weights of the foot x + h (fx, fy), |(fx, fy)| = 1, over the 3x3
// block around the cell; slot (dj + 1) * 3 + (di + 1), centre slot 4.
struct Stencil {
  int n = 0;
  int slot[4] = {0, 0, 0, 0};
  double w[4] = {0, 0, 0, 0};
  double self = 0.0;
};

Stencil make_stencil(double fx, double fy) {
  auto split = [](double f, int& o, double& t) {
    o = static_cast<int>(std::floor(f));
    t = f - o;
    if (o >= 1) {  // f == 1 exactly
      o = 0;
      t = 1.0;
    }
  };
  int ox, oy;
  double tx, ty;
  split(fx, ox, tx);
  split(fy, oy, ty);
  const double w[4] = {(1.0 - tx) * (1.0 - ty), tx * (1.0 - ty), (1.0 - tx) * ty, tx * ty};
  const int di[4] = {0, 1, 0, 1};
  const int dj[4] = {0, 0, 1, 1};
  Stencil st;
  for (int q = 0; q < 4; ++q) {
    if (w[q] == 0.0) continue;
    const int slot = (oy + dj[q] + 1) * 3 + (ox + di[q] + 1);
    if (slot == 4) {
      st.self += w[q];
    } else {
      st.slot[st.n] = slot;
      st.w[st.n] = w[q];
      ++st.n;
    }
  }
  return st;
}

std::string cell_name(int i, int j) {
  return "(" + std::to_string(i) + ", " + std::to_string(j) + ")";
}

class SweepEngine {
 public:
  SweepEngine(const Domain& domain, int crowd) : dom_(domain), g_(domain.grid()), crowd_(crowd) {
    if (crowd < 0 || crowd >= domain.n_crowds()) throw ConfigurationError("crowd index out of range");
    if (!domain.has_exit(crowd)) {
      throw ConfigurationError("crowd " + std::to_string(crowd) + " has no exit cell");
    }
    const auto n = static_cast<std::size_t>(g_.size());
    iso_.assign(n, 0.0);
    slot_.assign(n, -1);
  }

  bool active(int k) const { return !dom_.is_obstacle(k) && !dom_.is_exit(k, crowd_); }

  void set_isotropic(int k, double speed) { iso_[static_cast<std::size_t>(k)] = speed; }

  void set_anisotropic(int k, VelocityProfile profile, const DirectionSet& dirs) {
    if (stencils_.empty()) {
      for (int d = 0; d < dirs.n_dirs; ++d) {
        const Vec2 u = dirs.u(d);
        stencils_.push_back(make_stencil(u.x, u.y));
      }
    }
    slot_[static_cast<std::size_t>(k)] = static_cast<int>(profiles_.size());
    std::vector<Vec2> v(static_cast<std::size_t>(dirs.n_dirs));
    const auto& units = unit_directions(dirs.n_dirs);
    // Direction nodes that coincide with profile samples are read directly.
    const int stride = profile.size() % dirs.n_dirs == 0 ? profile.size() / dirs.n_dirs : 0;
    bool radial = true;
    for (int d = 0; d < dirs.n_dirs; ++d) {
      const auto ud = static_cast<std::size_t>(d);
      const Vec2 vd = stride > 0 ? profile.velocity(d * stride) : profile.velocity_at(dirs.theta(d));
      v[ud] = vd;
      radial = radial && std::abs(cross(vd, units[ud])) <= 1e-12 * norm(vd) && dot(vd, units[ud]) > 0.0;
    }
    // Profiles with v(theta) parallel to u(theta) share one stencil per
    // direction; only the step length differs between cells.
    std::vector<double> tau;
    if (radial) {
      tau.resize(v.size());
      for (std::size_t d = 0; d < v.size(); ++d) tau[d] = g_.h / norm(v[d]);
    }
    taus_.push_back(std::move(tau));
    velocities_.push_back(std::move(v));
    profiles_.push_back(std::move(profile));
    best_dir_.push_back(0);
  }

  void finish_setup(double min_speed) {
    time_scale_ = g_.diameter() / min_speed;
    sentinel_ = 10.0 * time_scale_;
  }

  HJBSolution run(const SolverOptions& options, const DirectionSet& dirs) {
    HJBSolution sol;
    sol.crowd = crowd_;
    sol.time_scale = time_scale_;
    sol.sentinel = sentinel_;
    sol.phi = ScalarField(g_, sentinel_);
    if (options.warm_start && options.warm_start->grid == g_) {
      for (int k = 0; k < g_.size(); ++k) {
        if (active(k)) sol.phi[k] = std::clamp(options.warm_start->values[static_cast<std::size_t>(k)], 0.0, sentinel_);
      }
    }
    for (int k = 0; k < g_.size(); ++k) {
      if (dom_.is_exit(k, crowd_) && !dom_.is_obstacle(k)) sol.phi[k] = 0.0;
    }
    phi_ = &sol.phi.values;

    const double tol = options.tol_factor * time_scale_;
    std::vector<double> trace;
    bool converged = false;
    int sweep = 0;
    double last = 0.0;
    // Anisotropic cells search a window around their last minimizing
    // direction; convergence is only accepted after a full-scan sweep.
    bool full = true;
    while (sweep < options.max_sweeps) {
      last = sweep_once(sweep % 4, full);
      ++sweep;
      trace.push_back(last);
      if (last < tol) {
        if (full) {
          converged = true;
          break;
        }
        full = true;
      } else {
        full = false;
      }
    }
    if (!converged) {
      throw ConvergenceError("HJB sweeps did not converge after " + std::to_string(sweep) + " sweeps",
                             std::move(trace));
    }
    sol.iterations = sweep;
    sol.residual = last;
    extract_directions(sol, dirs);
    phi_ = nullptr;
    return sol;
  }

 private:
  double value(int i, int j) const {
    if (!g_.contains(i, j)) return sentinel_;
    const int k = g_.index(i, j);
    if (dom_.is_obstacle(k)) return sentinel_;
    return (*phi_)[static_cast<std::size_t>(k)];
  }

  double godunov(int i, int j, double speed) const {
    const double a = std::min(value(i - 1, j), value(i + 1, j));
    const double b = std::min(value(i, j - 1), value(i, j + 1));
    const double hf = g_.h / speed;
    double out;
    if (std::abs(a - b) >= hf) {
      out = std::min(a, b) + hf;
    } else {
      out = 0.5 * (a + b + std::sqrt(2.0 * hf * hf - (a - b) * (a - b)));
    }
    return std::min(out, sentinel_);
  }

  void gather(int i, int j, double* nb) const {
    for (int dj = -1; dj <= 1; ++dj) {
      for (int di = -1; di <= 1; ++di) nb[(dj + 1) * 3 + (di + 1)] = value(i + di, j + dj);
    }
  }

  // tau + phi at the foot of x + tau v, with the cell's own weight eliminated.
  static double sl_eval(const Stencil& st, const double* nb, double tau) {
    double others = 0.0;
    for (int q = 0; q < st.n; ++q) others += st.w[q] * nb[st.slot[q]];
    return (tau + others) / (1.0 - st.self);
  }

  double sl_candidate(const double* nb, Vec2 v) const {
    const double speed = norm(v);
    return sl_eval(make_stencil(v.x / speed, v.y / speed), nb, g_.h / speed);
  }

  double sl_candidate(int i, int j, Vec2 v) const {
    double nb[9];
    gather(i, j, nb);
    return sl_candidate(nb, v);
  }

  double anisotropic_update(int i, int j, int slot, bool full) {
    double nb[9];
    gather(i, j, nb);
    const auto us = static_cast<std::size_t>(slot);
    const auto& tau = taus_[us];
    const auto& vel = velocities_[us];
    const int n = static_cast<int>(vel.size());
    auto candidate = [&](int d) {
      const auto ud = static_cast<std::size_t>(d);
      return tau.empty() ? sl_candidate(nb, vel[ud]) : sl_eval(stencils_[ud], nb, tau[ud]);
    };
    double best = std::numeric_limits<double>::infinity();
    int arg = best_dir_[us];
    if (full || n <= 2 * kSearchWindow + 1) {
      for (int d = 0; d < n; ++d) {
        const double c = candidate(d);
        if (c < best) {
          best = c;
          arg = d;
        }
      }
    } else {
      const int centre = best_dir_[us];
      for (int off = -kSearchWindow; off <= kSearchWindow; ++off) {
        const int d = (centre + off + n) % n;
        const double c = candidate(d);
        if (c < best) {
          best = c;
          arg = d;
        }
      }
    }
    best_dir_[us] = arg;
    return std::min(best, sentinel_);
  }

  double sweep_once(int ordering, bool full) {
    const bool rev_i = (ordering & 1) != 0;
    const bool rev_j = (ordering & 2) != 0;
    double max_update = 0.0;
    for (int jj = 0; jj < g_.ny; ++jj) {
      const int j = rev_j ? g_.ny - 1 - jj : jj;
      for (int ii = 0; ii < g_.nx; ++ii) {
        const int i = rev_i ? g_.nx - 1 - ii : ii;
        const int k = g_.index(i, j);
        if (!active(k)) continue;
        const auto uk = static_cast<std::size_t>(k);
        const int slot = slot_[uk];
        const double next = slot >= 0 ? anisotropic_update(i, j, slot, full) : godunov(i, j, iso_[uk]);
        const double diff = std::abs(next - (*phi_)[uk]);
        if (diff > max_update) max_update = diff;
        (*phi_)[uk] = next;
      }
    }
    return max_update;
  }

  // Refined argmin of the semi-Lagrangian candidate over directions.
  double sl_argmin_theta(int i, int j, const VelocityProfile& profile, const DirectionSet& dirs) const {
    int best_k = 0;
    double best = std::numeric_limits<double>::infinity();
    for (int d = 0; d < dirs.n_dirs; ++d) {
      const double c = sl_candidate(i, j, profile.velocity_at(dirs.theta(d)));
      if (c < best) {
        best = c;
        best_k = d;
      }
    }
    const double step = kTwoPi / dirs.n_dirs;
    const double t0 = dirs.theta(best_k);
    return golden_max([&](double t) { return -sl_candidate(i, j, profile.velocity_at(t)); },
                      t0 - step, t0 + step);
  }

  void extract_directions(HJBSolution& sol, const DirectionSet& dirs) const {
    sol.u_star = VectorField(g_, Vec2{});
    sol.velocity = VectorField(g_, Vec2{});
    sol.reachable.assign(static_cast<std::size_t>(g_.size()), 0);
    const auto blocked = dom_.obstacle_mask();
    for (int j = 0; j < g_.ny; ++j) {
      for (int i = 0; i < g_.nx; ++i) {
        const int k = g_.index(i, j);
        const auto uk = static_cast<std::size_t>(k);
        if (dom_.is_obstacle(k)) continue;
        if (dom_.is_exit(k, crowd_)) {
          sol.reachable[uk] = 1;
          continue;
        }
        if (!(sol.phi[k] < sentinel_)) continue;
        sol.reachable[uk] = 1;
        const Gradient grad = gradient(sol.phi, i, j, blocked, sentinel_);
        const int slot = slot_[uk];
        if (slot < 0) {
          const double speed = iso_[uk];
          Vec2 u;
          if (!grad.degenerate) {
            u = -grad.value / norm(grad.value);
          } else {
            const VelocityProfile circle = VelocityProfile::circle(speed, std::max(dirs.n_dirs, 64));
            u = unit_vector(sl_argmin_theta(i, j, circle, dirs));
          }
          sol.u_star[k] = u;
          sol.velocity[k] = speed * u;
        } else {
          const VelocityProfile& profile = profiles_[static_cast<std::size_t>(slot)];
          Vec2 u;
          if (!grad.degenerate) {
            u = optimal_direction(grad.value, profile).u;
          } else {
            u = unit_vector(sl_argmin_theta(i, j, profile, dirs));
          }
          sol.u_star[k] = u;
          sol.velocity[k] = profile.velocity_at(angle_of(u));
        }
      }
    }
  }

  const Domain& dom_;
  const GridSpec& g_;
  int crowd_;
  std::vector<double> iso_;
  std::vector<int> slot_;
  std::vector<int> best_dir_;  // per anisotropic slot
  static constexpr int kSearchWindow = 8;
  std::vector<VelocityProfile> profiles_;
  std::vector<std::vector<Vec2>> velocities_;
  std::vector<std::vector<double>> taus_;
  std::vector<Stencil> stencils_;
  double time_scale_ = 1.0;
  double sentinel_ = 10.0;
  std::vector<double>* phi_ = nullptr;
};

}  // namespace

HJBSolution solve_eikonal(const Domain& domain, int crowd, const ScalarField& speed,
                          const SolverOptions& options) {
  const GridSpec& g = domain.grid();
  if (!(speed.grid == g)) throw ConfigurationError("speed field grid does not match the domain");
  SweepEngine engine(domain, crowd);
  double min_speed = std::numeric_limits<double>::infinity();
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      const int k = g.index(i, j);
      if (!engine.active(k)) continue;
      const double s = speed[k];
      if (!(s > 0.0) || !std::isfinite(s)) {
        throw DomainError("eikonal speed must be positive and finite at cell " + cell_name(i, j));
      }
      engine.set_isotropic(k, s);
      min_speed = std::min(min_speed, s);
    }
  }
  if (!std::isfinite(min_speed)) min_speed = 1.0;
  engine.finish_setup(min_speed);
  return engine.run(options, DirectionSet{});
}

HJBSolution solve_anisotropic(const Domain& domain, int crowd, const ProfileAt& profile_at,
                              const DirectionSet& dirs, const SolverOptions& options) {
  return solve_anisotropic(domain, crowd, profile_at, IsotropicAt{}, dirs, options);
}

HJBSolution solve_anisotropic(const Domain& domain, int crowd, const ProfileAt& profile_at,
                              const IsotropicAt& isotropic_at, const DirectionSet& dirs,
                              const SolverOptions& options) {
  dirs.validate();
  const GridSpec& g = domain.grid();
  SweepEngine engine(domain, crowd);
  double min_speed = std::numeric_limits<double>::infinity();
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      const int k = g.index(i, j);
      if (!engine.active(k)) continue;
      if (isotropic_at) {
        if (const auto s = isotropic_at(i, j)) {
          if (!(*s > 0.0) || !std::isfinite(*s)) {
            throw ConsistencyError("velocity profile does not contain the origin at cell " + cell_name(i, j), i, j);
          }
          min_speed = std::min(min_speed, *s);
          engine.set_isotropic(k, *s);
          continue;
        }
      }
      VelocityProfile profile = profile_at(i, j);
      const double vmin = profile.min_speed();
      if (!(vmin > 0.0) || !std::isfinite(profile.max_speed())) {
        throw ConsistencyError("velocity profile does not contain the origin at cell " + cell_name(i, j), i, j);
      }
      // Speed along the own direction must be positive too.
      if (!(profile.min_radial_speed() > 0.0)) {
        throw ConsistencyError("velocity profile does not contain the origin at cell " + cell_name(i, j), i, j);
      }
      min_speed = std::min(min_speed, vmin);
      if (auto s = profile.isotropic_speed()) {
        engine.set_isotropic(k, *s);
      } else {
        engine.set_anisotropic(k, std::move(profile), dirs);
      }
    }
  }
  if (!std::isfinite(min_speed)) min_speed = 1.0;
  engine.finish_setup(min_speed);
  return engine.run(options, dirs);
}

DirectionChoice optimal_direction(Vec2 grad_phi, const VelocityProfile& profile) {
  const double gn = norm(grad_phi);
  if (!(gn > 0.0) || !std::isfinite(gn)) throw DomainError("optimal_direction: degenerate gradient");
  const Vec2 g = grad_phi / gn;
  const int n = profile.size();
  std::vector<double> vals(static_cast<std::size_t>(n));
  int best = 0;
  for (int k = 0; k < n; ++k) {
    vals[static_cast<std::size_t>(k)] = -dot(g, profile.velocity(k));
    if (vals[static_cast<std::size_t>(k)] > vals[static_cast<std::size_t>(best)]) best = k;
  }
  const double step = profile.spacing();
  auto objective = [&](double t) { return -dot(g, profile.velocity_at(t)); };
  auto refine = [&](int k) {
    const double t = golden_max(objective, profile.theta(k) - step, profile.theta(k) + step);
    return std::pair<double, double>{t, objective(t)};
  };
  auto [theta, value] = refine(best);
  if (vals[static_cast<std::size_t>(best)] > value) {
    theta = profile.theta(best);
    value = vals[static_cast<std::size_t>(best)];
  }

  DirectionChoice out;
  const double scale = std::max(profile.max_speed(), 1e-300);
  for (int k = 0; k < n; ++k) {
    const double v = vals[static_cast<std::size_t>(k)];
    const double prev = vals[static_cast<std::size_t>((k + n - 1) % n)];
    const double next = vals[static_cast<std::size_t>((k + 1) % n)];
    if (v < prev || v < next) continue;
    const int sep = std::min(std::abs(k - best), n - std::abs(k - best));
    if (sep <= 2) continue;
    const double refined = std::max(v, refine(k).second);
    if (refined >= value - 1e-6 * scale) {
      out.multiple = true;
      break;
    }
  }
  out.u = unit_vector(theta);
  out.value = value * gn;
  return out;
}

VectorField gradient_field(const HJBSolution& solution, const Domain& domain) {
  const GridSpec& g = domain.grid();
  VectorField out(g, Vec2{});
  const auto blocked = domain.obstacle_mask();
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      const int k = g.index(i, j);
      if (domain.is_obstacle(k) || !solution.is_reachable(k)) continue;
      const Gradient grad = gradient(solution.phi, i, j, blocked, solution.sentinel);
      if (!grad.degenerate) out[k] = grad.value;
    }
  }
  return out;
}

DirectionPolicy optimal_policy(const HJBSolution& solution, const Domain& domain,
                               PointProfile profile_at) {
  auto grad = std::make_shared<VectorField>(gradient_field(solution, domain));
  return [grad, profile_at = std::move(profile_at)](Vec2 p) {
    const Vec2 gp = bilinear_sample(*grad, p);
    if (!(norm(gp) > 0.0)) return Vec2{};
    return optimal_direction(gp, profile_at(p)).u;
  };
}

DirectionPolicy gradient_policy(const HJBSolution& solution, const Domain& domain) {
  auto grad = std::make_shared<VectorField>(gradient_field(solution, domain));
  return [grad](Vec2 p) {
    const Vec2 gp = bilinear_sample(*grad, p);
    const double n = norm(gp);
    if (!(n > 0.0)) return Vec2{};
    return -gp / n;
  };
}

DirectionPolicy stored_policy(const HJBSolution& solution) {
  auto field = std::make_shared<VectorField>(solution.u_star);
  return [field](Vec2 p) {
    const Vec2 u = bilinear_sample(*field, p);
    const double n = norm(u);
    if (!(n > 0.0)) return Vec2{};
    return u / n;
  };
}

Trajectory trace_trajectory(const DirectionPolicy& policy, const VelocityLaw& velocity,
                            const TargetLevel& target, Vec2 start, double dt, int max_steps) {
  if (!(dt > 0.0)) throw ConfigurationError("trace_trajectory: dt must be positive");
  Trajectory out;
  out.path.push_back(start);
  Vec2 y = start;
  double level = target(y);
  if (level >= 0.0) return out;
  for (int step = 0; step < max_steps; ++step) {
    const Vec2 v = velocity(y, policy(y));
    if (!(norm(v) >= 1e-9)) {
      throw NonTerminationError("trajectory stalled at t = " + std::to_string(step * dt));
    }
    const Vec2 next = y + dt * v;
    const double next_level = target(next);
    out.path.push_back(next);
    if (next_level >= 0.0) {
      const double frac = level / (level - next_level);
      out.exit_time = (step + frac) * dt;
      return out;
    }
    y = next;
    level = next_level;
  }
  throw NonTerminationError("trajectory did not reach the target within " + std::to_string(max_steps) +
                            " steps");
}

}  // namespace crowd
