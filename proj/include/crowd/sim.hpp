#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "crowd/grid.hpp"
#include "crowd/hjb.hpp"
#include "crowd/profiles.hpp"
#include "crowd/transport.hpp"

namespace crowd {

struct CrowdConfig {
  std::string name;
  IsotropicSpeedModel iso;
  PenaltyModel pen;  // penalty this crowd suffers from the other one
  ScalarField rho0;
  // Used by trace_in_scenario as this crowd's fixed direction field.
  std::optional<Vec2> frozen_direction;
};

enum class BestReplyMode { Coupled, FastDecoupled };
enum class ConsistencyPolicy { Warn, Strict };

struct SolverConfig {
  double dt = 0.5;
  double t_end = 10.0;
  int n_dirs = 128;
  double hjb_tol = 1e-9;
  int max_sweeps = 10000;
  double tol_br = 1e-4;
  int max_br = 50;
  BestReplyMode mode = BestReplyMode::Coupled;
  ConsistencyPolicy policy = ConsistencyPolicy::Warn;

  int n_steps() const;
  void validate() const;

  friend bool operator==(const SolverConfig&, const SolverConfig&) = default;
};

struct Scenario {
  Domain domain;
  std::vector<CrowdConfig> crowds;
  SolverConfig solver;

  void validate() const;
};

enum class Region { One = 1, Two = 2, Three = 3 };

struct ConsistencyReport {
  Region region = Region::One;
  std::vector<int> region2_cells;
  std::vector<int> region3_cells;
};

// Region 3: some profile is not strictly convex (a density reaches the other
// crowd's critical density). Region 2: convex, but the contraction
// certificate fails. Region 1 otherwise.
Region region_at(const PenaltyModel& pen_a, const PenaltyModel& pen_b, double rho_a, double rho_b);
ConsistencyReport consistency_monitor(const PenaltyModel& pen_a, const PenaltyModel& pen_b,
                                      const ScalarField& rho_a, const ScalarField& rho_b,
                                      std::span<const std::uint8_t> blocked = {});

// Overlapping coefficient of the two normalized densities, midpoint rule.
double ovl(const ScalarField& rho_a, const ScalarField& rho_b);

struct SimState {
  int step = 0;
  double time = 0.0;
  std::vector<TransportState> crowds;
  std::vector<VectorField> directions;  // u* per crowd from the last solve
  std::vector<VectorField> velocity;    // V per crowd used by the last transport
  std::vector<ScalarField> phi;         // last value functions (warm starts)
};

struct StepDiagnostics {
  int step = 0;
  double time = 0.0;
  std::vector<double> mass;
  std::vector<double> max_rho;
  std::vector<double> inflow;   // cumulative
  std::vector<double> outflow;  // cumulative
  std::vector<double> clamped;  // cumulative
  Region region = Region::One;
  int n_region2 = 0;
  int n_region3 = 0;
  int br_rounds = 0;
  std::vector<double> br_trace;  // angular change per round
  int sweeps = 0;
  std::optional<double> ovl;
};

SimState initial_state(const Scenario& scenario);

// One step of a single isotropic crowd: eikonal solve on the current
// density, V = v(rho) u*, transport, inflow.
std::pair<SimState, StepDiagnostics> step_single(const Scenario& scenario, const SimState& state);

// One step of two coupled crowds with best-reply iteration between their
// anisotropic solves.
std::pair<SimState, StepDiagnostics> step_two_crowds(const Scenario& scenario, const SimState& state);

std::pair<SimState, StepDiagnostics> step(const Scenario& scenario, const SimState& state);

using StepObserver = std::function<void(const SimState&, const StepDiagnostics&)>;

struct RunResult {
  SimState final_state;
  std::vector<StepDiagnostics> diagnostics;
};

RunResult run(const Scenario& scenario, const StepObserver& observer = {});

enum class TracePolicy { Optimal, Gradient, Stored };

struct TraceResult {
  Trajectory trajectory;
  HJBSolution solution;
};

// Single pedestrian of `crowd` moving through the initial densities. The
// other crowd (if any) walks along its frozen direction, or along its
// isotropic optimal direction when none is given. Densities are read
// piecewise constant per cell.
TraceResult trace_in_scenario(const Scenario& scenario, int crowd, Vec2 start, double dt, TracePolicy policy,
                              const TargetLevel& target);

}  // namespace crowd
