#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "crowd/grid.hpp"
#include "crowd/profiles.hpp"
#include "crowd/sim.hpp"

namespace crowd {

// A set of cells: an inclusive index rectangle, or a run of cells along one
// grid edge ("north", "south", "east", "west") with an optional inclusive
// range along it.
struct RegionSpec {
  std::optional<std::array<int, 4>> rect;  // i0, j0, i1, j1
  std::string edge;
  std::optional<std::array<int, 2>> range;

  std::vector<std::pair<int, int>> cells(const GridSpec& grid) const;
  friend bool operator==(const RegionSpec&, const RegionSpec&) = default;
};

struct RoleSpec {
  std::string role;  // obstacle | exit | inflow
  int crowd = -1;
  double rate = 0.0;
  bool absorbing = true;  // exit only
  RegionSpec where;
  friend bool operator==(const RoleSpec&, const RoleSpec&) = default;
};

struct DensityPatch {
  RegionSpec where;
  double density = 0.0;
  friend bool operator==(const DensityPatch&, const DensityPatch&) = default;
};

struct GaussianPatch {
  Vec2 center{};
  double sigma = 1.0;
  double peak = 0.0;
  friend bool operator==(const GaussianPatch&, const GaussianPatch&) = default;
};

struct CrowdSpec {
  std::string name;
  double v_bar = 1.0;
  double alpha = 0.075;
  PenaltyModel penalty;
  std::vector<DensityPatch> initial;
  std::vector<GaussianPatch> blobs;
  std::optional<Vec2> frozen_direction;
  friend bool operator==(const CrowdSpec&, const CrowdSpec&) = default;
};

struct OutputSpec {
  std::vector<std::string> fields;  // rho, phi, u, v
  int every = 0;                    // steps between dumps; 0 = none
  std::vector<double> times;        // extra dump times
  friend bool operator==(const OutputSpec&, const OutputSpec&) = default;
};

struct TraceSpec {
  Vec2 start{};
  double dt = 0.001;
  int crowd = 0;
  std::string policy = "optimal";  // optimal | gradient | stored
  std::string axis = "y";          // target half-plane coordinate >= target_min
  double target_min = 0.0;
  friend bool operator==(const TraceSpec&, const TraceSpec&) = default;
};

struct ScenarioSpec {
  std::string name;
  GridSpec grid;
  std::vector<RoleSpec> roles;
  std::vector<CrowdSpec> crowds;
  SolverConfig solver;
  OutputSpec outputs;
  std::optional<TraceSpec> trace;
  friend bool operator==(const ScenarioSpec&, const ScenarioSpec&) = default;
};

// Schema-checked parse. Unknown keys, missing required keys, wrong types and
// undefined crowd ids raise ValidationError naming the JSON path.
ScenarioSpec parse_scenario(const nlohmann::json& doc);
// As above from text; syntax errors report the line.
ScenarioSpec parse_scenario_text(const std::string& text);
ScenarioSpec load_scenario(const std::string& path);
nlohmann::json to_json(const ScenarioSpec& spec);

Scenario build_scenario(const ScenarioSpec& spec);

std::string to_string(BestReplyMode mode);
std::string to_string(ConsistencyPolicy policy);
std::string to_string(Region region);

// Row-major, j outer: i,j,x,y,value (or vx,vy), 9 significant digits.
void write_scalar_csv(const std::string& path, const ScalarField& field);
void write_vector_csv(const std::string& path, const VectorField& field);
void write_diagnostics_csv(const std::string& path, const std::vector<StepDiagnostics>& diags);
nlohmann::json summary_json(const ScenarioSpec& spec, const RunResult& result);

}  // namespace crowd
