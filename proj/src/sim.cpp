#include "crowd/sim.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "crowd/errors.hpp"
#include "crowd/nash.hpp"

namespace crowd {

int SolverConfig::n_steps() const { return static_cast<int>(std::llround(t_end / dt)); }

void SolverConfig::validate() const {
  if (!(dt > 0.0)) throw ValidationError("solver.dt must be positive");
  if (!(t_end >= 0.0)) throw ValidationError("solver.t_end must be non-negative");
  if (n_dirs < 32) throw ValidationError("solver.n_dirs must be at least 32");
  if (!(hjb_tol > 0.0)) throw ValidationError("solver.hjb_tol must be positive");
  if (max_sweeps < 1) throw ValidationError("solver.max_sweeps must be at least 1");
  if (!(tol_br > 0.0)) throw ValidationError("solver.tol_br must be positive");
  if (max_br < 1) throw ValidationError("solver.max_br must be at least 1");
}

void Scenario::validate() const {
  domain.grid().validate();
  solver.validate();
  if (crowds.empty() || crowds.size() > 2) throw ValidationError("a scenario has one or two crowds");
  if (static_cast<int>(crowds.size()) != domain.n_crowds()) {
    throw ValidationError("domain roles reference a different number of crowds");
  }
  for (std::size_t c = 0; c < crowds.size(); ++c) {
    crowds[c].iso.validate();
    crowds[c].pen.validate();
    if (!(crowds[c].rho0.grid == domain.grid())) {
      throw ValidationError("initial density of crowd " + std::to_string(c) + " does not match the grid");
    }
    for (double r : crowds[c].rho0.values) {
      if (!(r >= 0.0) || !std::isfinite(r)) throw ValidationError("initial densities must be non-negative");
    }
    if (!domain.has_exit(static_cast<int>(c))) {
      throw ValidationError("crowd " + std::to_string(c) + " has no exit cell");
    }
  }
}

Region region_at(const PenaltyModel& pen_a, const PenaltyModel& pen_b, double rho_a, double rho_b) {
  if (!pen_a.smooth() || !pen_b.smooth()) {
    // No convexity threshold or certificate for the teardrop penalty.
    return (rho_a > 0.0 && rho_b > 0.0) ? Region::Two : Region::One;
  }
  const bool a_convex = pen_a.strength == 0.0 || rho_b < critical_density(pen_a);
  const bool b_convex = pen_b.strength == 0.0 || rho_a < critical_density(pen_b);
  if (!a_convex || !b_convex) return Region::Three;
  if (pen_a.kind == pen_b.kind) {
    if (!uniqueness_certificate(pen_a, pen_b, rho_a, rho_b).certified) return Region::Two;
  } else if (pen_a.load(rho_b) + pen_b.load(rho_a) >= 1.0) {
    return Region::Two;
  }
  return Region::One;
}

ConsistencyReport consistency_monitor(const PenaltyModel& pen_a, const PenaltyModel& pen_b,
                                      const ScalarField& rho_a, const ScalarField& rho_b,
                                      std::span<const std::uint8_t> blocked) {
  if (!(rho_a.grid == rho_b.grid)) throw ConfigurationError("density grids differ");
  ConsistencyReport report;
  for (int k = 0; k < rho_a.grid.size(); ++k) {
    if (!blocked.empty() && blocked[static_cast<std::size_t>(k)]) continue;
    const Region r = region_at(pen_a, pen_b, rho_a[k], rho_b[k]);
    if (r == Region::Two) report.region2_cells.push_back(k);
    if (r == Region::Three) report.region3_cells.push_back(k);
    if (static_cast<int>(r) > static_cast<int>(report.region)) report.region = r;
  }
  return report;
}

double ovl(const ScalarField& rho_a, const ScalarField& rho_b) {
  if (!(rho_a.grid == rho_b.grid)) throw ConfigurationError("density grids differ");
  const double ma = total_mass(rho_a);
  const double mb = total_mass(rho_b);
  if (!(ma > 0.0) || !(mb > 0.0)) throw DomainError("ovl: both densities need positive mass");
  double sum = 0.0;
  for (std::size_t k = 0; k < rho_a.values.size(); ++k) {
    sum += std::min(rho_a.values[k] / ma, rho_b.values[k] / mb);
  }
  return sum * rho_a.grid.cell_area();
}

SimState initial_state(const Scenario& scenario) {
  const Domain& d = scenario.domain;
  const GridSpec& g = d.grid();
  SimState s;
  for (std::size_t c = 0; c < scenario.crowds.size(); ++c) {
    TransportState t;
    t.rho = scenario.crowds[c].rho0;
    for (int k = 0; k < g.size(); ++k) {
      if (d.is_obstacle(k) || d.is_sink(k, static_cast<int>(c))) t.rho[k] = 0.0;
    }
    s.crowds.push_back(std::move(t));
  }
  return s;
}

namespace {

StepDiagnostics base_diagnostics(const SimState& s) {
  StepDiagnostics diag;
  diag.step = s.step;
  diag.time = s.time;
  for (const auto& c : s.crowds) {
    diag.mass.push_back(total_mass(c.rho));
    diag.max_rho.push_back(*std::max_element(c.rho.values.begin(), c.rho.values.end()));
    diag.inflow.push_back(c.cumulative_inflow);
    diag.outflow.push_back(c.cumulative_outflow);
    diag.clamped.push_back(c.cumulative_clamped);
  }
  if (s.crowds.size() == 2 && diag.mass[0] > 0.0 && diag.mass[1] > 0.0) {
    diag.ovl = ovl(s.crowds[0].rho, s.crowds[1].rho);
  }
  return diag;
}

SolverOptions solver_options(const Scenario& sc, const SimState& s, std::size_t crowd) {
  SolverOptions o;
  o.tol_factor = sc.solver.hjb_tol;
  o.max_sweeps = sc.solver.max_sweeps;
  if (crowd < s.phi.size()) o.warm_start = &s.phi[crowd];
  return o;
}

TransportState advance(const Domain& d, int crowd, const TransportState& t, const VectorField& v, double dt) {
  return apply_inflow(d, crowd, lax_friedrichs_step(d, crowd, t, v, dt), dt);
}

double angular_change(const VectorField& before, const VectorField& after, const std::vector<std::uint8_t>& mask) {
  double worst = 0.0;
  for (std::size_t k = 0; k < mask.size(); ++k) {
    if (!mask[k]) continue;
    const Vec2 a = before.values[k];
    const Vec2 b = after.values[k];
    if (norm(a) == 0.0 || norm(b) == 0.0) continue;
    worst = std::max(worst, std::abs(std::atan2(cross(a, b), dot(a, b))));
  }
  return worst;
}

// Velocity of one crowd given both direction fields.
VectorField coupled_velocity(const CrowdConfig& self, const ScalarField& rho_self, const ScalarField& rho_other,
                             const VectorField& u_self, const VectorField& u_other) {
  VectorField v(rho_self.grid, Vec2{});
  for (int k = 0; k < rho_self.grid.size(); ++k) {
    const Vec2 u = u_self[k];
    if (norm(u) == 0.0) continue;
    const double base = self.iso.speed(rho_self[k] + rho_other[k]);
    double f = 1.0;
    const Vec2 w = u_other[k];
    if (norm(w) > 0.0) f = penalty_factor(self.pen, rho_other[k], std::atan2(cross(w, u), dot(w, u)));
    v[k] = base * f * u;
  }
  return v;
}

}  // namespace

std::pair<SimState, StepDiagnostics> step_single(const Scenario& sc, const SimState& state) {
  if (sc.crowds.size() != 1) throw ConfigurationError("step_single needs exactly one crowd");
  const Domain& d = sc.domain;
  const GridSpec& g = d.grid();
  const CrowdConfig& crowd = sc.crowds[0];
  const TransportState& t = state.crowds[0];

  ScalarField speed(g, 0.0);
  for (int k = 0; k < g.size(); ++k) speed[k] = crowd.iso.speed(t.rho[k]);
  HJBSolution sol = solve_eikonal(d, 0, speed, solver_options(sc, state, 0));

  SimState next;
  next.step = state.step + 1;
  next.time = state.time + sc.solver.dt;
  next.crowds.push_back(advance(d, 0, t, sol.velocity, sc.solver.dt));
  next.directions.push_back(sol.u_star);
  next.velocity.push_back(sol.velocity);
  next.phi.push_back(std::move(sol.phi));
  StepDiagnostics diag = base_diagnostics(next);
  diag.sweeps = sol.iterations;
  return {std::move(next), std::move(diag)};
}

std::pair<SimState, StepDiagnostics> step_two_crowds(const Scenario& sc, const SimState& state) {
  if (sc.crowds.size() != 2) throw ConfigurationError("step_two_crowds needs exactly two crowds");
  const Domain& d = sc.domain;
  const GridSpec& g = d.grid();
  const SolverConfig& cfg = sc.solver;
  const CrowdConfig& ca = sc.crowds[0];
  const CrowdConfig& cb = sc.crowds[1];
  const ScalarField& ra = state.crowds[0].rho;
  const ScalarField& rb = state.crowds[1].rho;

  const ConsistencyReport report = consistency_monitor(ca.pen, cb.pen, ra, rb, d.obstacle_mask());
  if (cfg.policy == ConsistencyPolicy::Strict && report.region != Region::One) {
    const int k = report.region3_cells.empty() ? report.region2_cells.front() : report.region3_cells.front();
    throw ConsistencyError("densities leave Region 1 (region " + std::to_string(static_cast<int>(report.region)) +
                               ") at cell (" + std::to_string(k % g.nx) + ", " + std::to_string(k / g.nx) + ")",
                           k % g.nx, k / g.nx);
  }

  const DirectionSet dirs{cfg.n_dirs};
  int sweeps = 0;
  std::vector<ScalarField> phi = state.phi;
  phi.resize(2);

  auto options_for = [&](int c) {
    SolverOptions o;
    o.tol_factor = cfg.hjb_tol;
    o.max_sweeps = cfg.max_sweeps;
    if (phi[static_cast<std::size_t>(c)].grid == g) o.warm_start = &phi[static_cast<std::size_t>(c)];
    return o;
  };

  // Previous directions, or the isotropic solution on the first step.
  VectorField ua, ub;
  if (state.directions.size() == 2) {
    ua = state.directions[0];
    ub = state.directions[1];
  } else {
    ScalarField speed_a(g, 0.0), speed_b(g, 0.0);
    for (int k = 0; k < g.size(); ++k) {
      speed_a[k] = ca.iso.speed(ra[k] + rb[k]);
      speed_b[k] = cb.iso.speed(ra[k] + rb[k]);
    }
    HJBSolution sa = solve_eikonal(d, 0, speed_a, options_for(0));
    HJBSolution sb = solve_eikonal(d, 1, speed_b, options_for(1));
    sweeps += sa.iterations + sb.iterations;
    ua = std::move(sa.u_star);
    ub = std::move(sb.u_star);
    phi[0] = std::move(sa.phi);
    phi[1] = std::move(sb.phi);
  }

  // Cells the other crowd cannot penalize skip building a profile.
  auto solve_for = [&](int c, const CrowdConfig& self, const ScalarField& rs, const ScalarField& ro,
                       const VectorField& u_other) {
    HJBSolution s = solve_anisotropic(
        d, c,
        [&](int i, int j) {
          const int k = g.index(i, j);
          return intercrowd_profile(self.iso, self.pen, rs[k], ro[k], u_other[k]);
        },
        [&](int i, int j) -> std::optional<double> {
          const int k = g.index(i, j);
          if (self.pen.load(ro[k]) < kNegligibleLoad || norm(u_other[k]) == 0.0) return self.iso.speed(rs[k] + ro[k]);
          return std::nullopt;
        },
        dirs, options_for(c));
    sweeps += s.iterations;
    return s;
  };
  auto solve_a = [&](const VectorField& u_other) { return solve_for(0, ca, ra, rb, u_other); };
  auto solve_b = [&](const VectorField& u_other) { return solve_for(1, cb, rb, ra, u_other); };

  // A's direction matters to B only where A is present and B is penalized,
  // and vice versa; changes elsewhere cannot feed back.
  std::vector<std::uint8_t> matters_a(static_cast<std::size_t>(g.size()), 0);
  std::vector<std::uint8_t> matters_b(static_cast<std::size_t>(g.size()), 0);
  for (int k = 0; k < g.size(); ++k) {
    matters_a[static_cast<std::size_t>(k)] = ra[k] > 0.0 && cb.pen.load(ra[k]) > 0.0;
    matters_b[static_cast<std::size_t>(k)] = rb[k] > 0.0 && ca.pen.load(rb[k]) > 0.0;
  }

  StepDiagnostics diag;
  if (cfg.mode == BestReplyMode::FastDecoupled) {
    HJBSolution sa = solve_a(ub);
    HJBSolution sb = solve_b(ua);
    ua = std::move(sa.u_star);
    ub = std::move(sb.u_star);
    phi[0] = std::move(sa.phi);
    phi[1] = std::move(sb.phi);
    diag.br_rounds = 1;
  } else {
    bool converged = false;
    for (int round = 1; round <= cfg.max_br; ++round) {
      HJBSolution sa = solve_a(ub);
      const double change_a = round > 1 ? angular_change(ua, sa.u_star, matters_a) : 0.0;
      ua = std::move(sa.u_star);
      phi[0] = std::move(sa.phi);
      HJBSolution sb = solve_b(ua);
      const double change_b = angular_change(ub, sb.u_star, matters_b);
      ub = std::move(sb.u_star);
      phi[1] = std::move(sb.phi);
      const double change = std::max(change_a, change_b);
      diag.br_trace.push_back(change);
      diag.br_rounds = round;
      if (change < cfg.tol_br) {
        converged = true;
        break;
      }
    }
    if (!converged) {
      throw ConvergenceError("best-reply iteration did not converge in " + std::to_string(cfg.max_br) + " rounds",
                             diag.br_trace);
    }
  }

  const VectorField va = coupled_velocity(ca, ra, rb, ua, ub);
  const VectorField vb = coupled_velocity(cb, rb, ra, ub, ua);

  SimState next;
  next.step = state.step + 1;
  next.time = state.time + cfg.dt;
  next.crowds.push_back(advance(d, 0, state.crowds[0], va, cfg.dt));
  next.crowds.push_back(advance(d, 1, state.crowds[1], vb, cfg.dt));
  next.directions = {std::move(ua), std::move(ub)};
  next.velocity = {va, vb};
  next.phi = std::move(phi);

  StepDiagnostics full = base_diagnostics(next);
  full.region = report.region;
  full.n_region2 = static_cast<int>(report.region2_cells.size());
  full.n_region3 = static_cast<int>(report.region3_cells.size());
  full.br_rounds = diag.br_rounds;
  full.br_trace = std::move(diag.br_trace);
  full.sweeps = sweeps;
  return {std::move(next), std::move(full)};
}

std::pair<SimState, StepDiagnostics> step(const Scenario& scenario, const SimState& state) {
  return scenario.crowds.size() == 1 ? step_single(scenario, state) : step_two_crowds(scenario, state);
}

RunResult run(const Scenario& scenario, const StepObserver& observer) {
  scenario.validate();
  RunResult result;
  SimState state = initial_state(scenario);
  const int n = scenario.solver.n_steps();
  for (int s = 0; s < n; ++s) {
    auto [next, diag] = step(scenario, state);
    state = std::move(next);
    if (observer) observer(state, diag);
    result.diagnostics.push_back(std::move(diag));
  }
  result.final_state = std::move(state);
  return result;
}

TraceResult trace_in_scenario(const Scenario& sc, int crowd, Vec2 start, double dt, TracePolicy policy,
                              const TargetLevel& target) {
  sc.validate();
  const Domain& d = sc.domain;
  const GridSpec& g = d.grid();
  if (crowd < 0 || crowd >= static_cast<int>(sc.crowds.size())) throw ConfigurationError("trace: crowd out of range");
  const auto start_cell = g.locate(start);
  if (!start_cell || d.is_obstacle(start_cell->first, start_cell->second)) {
    throw DomainError("trace: start point must lie in a free cell");
  }
  const CrowdConfig& self = sc.crowds[static_cast<std::size_t>(crowd)];
  const ScalarField& rho_self = self.rho0;
  const bool two = sc.crowds.size() == 2;
  const int other = 1 - crowd;
  ScalarField rho_other(g, 0.0);
  VectorField u_other(g, Vec2{});
  if (two) {
    const CrowdConfig& oc = sc.crowds[static_cast<std::size_t>(other)];
    rho_other = oc.rho0;
    if (oc.frozen_direction) {
      const Vec2 w = *oc.frozen_direction / norm(*oc.frozen_direction);
      for (auto& u : u_other.values) u = w;
    } else {
      ScalarField speed(g, 0.0);
      for (int k = 0; k < g.size(); ++k) speed[k] = oc.iso.speed(rho_self[k] + rho_other[k]);
      u_other = solve_eikonal(d, other, speed).u_star;
    }
  }
  auto cell_of = [&](Vec2 p) {
    const auto c = g.locate(p);
    if (!c) throw DomainError("trace: trajectory left the grid");
    return g.index(c->first, c->second);
  };
  auto profile_cell = [&](int k) {
    return intercrowd_profile(self.iso, self.pen, rho_self[k], rho_other[k], u_other[k]);
  };
  HJBSolution sol = solve_anisotropic(
      d, crowd, [&](int i, int j) { return profile_cell(g.index(i, j)); }, DirectionSet{sc.solver.n_dirs});

  const VelocityLaw law = [&](Vec2 p, Vec2 u) {
    const int k = cell_of(p);
    if (norm(u) == 0.0) return Vec2{};
    double f = 1.0;
    const Vec2 w = u_other[k];
    if (norm(w) > 0.0) f = penalty_factor(self.pen, rho_other[k], std::atan2(cross(w, u), dot(w, u)));
    return self.iso.speed(rho_self[k] + rho_other[k]) * f * u;
  };
  DirectionPolicy pol;
  switch (policy) {
    case TracePolicy::Optimal:
      pol = optimal_policy(sol, d, [&](Vec2 p) { return profile_cell(cell_of(p)); });
      break;
    case TracePolicy::Gradient:
      pol = gradient_policy(sol, d);
      break;
    case TracePolicy::Stored:
      pol = stored_policy(sol);
      break;
  }
  TraceResult out;
  out.trajectory = trace_trajectory(pol, law, target, start, dt);
  out.solution = std::move(sol);
  return out;
}

}  // namespace crowd
