#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "crowd/errors.hpp"
#include "crowd/scenario.hpp"

using namespace crowd;
using nlohmann::json;

#ifndef CROWD_SCENARIO_DIR
#error "CROWD_SCENARIO_DIR must point at the shipped scenarios"
#endif

namespace {

const char* kMinimal = R"({
  "name": "mini",
  "grid": {"nx": 10, "ny": 8, "h": 0.5},
  "roles": [
    {"role": "exit", "crowd": 0, "edge": "east", "range": [2, 5]},
    {"role": "exit", "crowd": 1, "edge": "west"},
    {"role": "inflow", "crowd": 0, "rate": 0.8, "edge": "west", "range": [3, 4]},
    {"role": "obstacle", "rect": [4, 0, 5, 2]}
  ],
  "crowds": [
    {"name": "A", "penalty": {"model": "squared", "strength": 0.178},
     "initial": [{"rect": [1, 1, 3, 6], "density": 1.0}]},
    {"name": "B", "v_bar": 1.2, "alpha": 0.05, "penalty": {"model": "linear", "strength": 0.2},
     "blobs": [{"center": [3.5, 2.0], "sigma": 0.7, "peak": 0.9}], "frozen_direction": [-1, 0]}
  ],
  "solver": {"dt": 0.25, "t_end": 1.0, "n_dirs": 64, "mode": "fast-decoupled", "consistency": "strict"},
  "outputs": {"fields": ["rho", "u"], "every": 2, "times": [0.5]},
  "trace": {"start": [1.0, 1.0], "crowd": 0, "policy": "gradient", "target": {"axis": "x", "min": 4.5}}
})";

json minimal() { return json::parse(kMinimal); }

std::string error_of(const json& doc) {
  try {
    (void)parse_scenario(doc);
  } catch (const ValidationError& e) {
    return e.what();
  } catch (const Error& e) {
    return std::string("other: ") + e.what();
  }
  return "";
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("parse a full scenario") {
  const ScenarioSpec s = parse_scenario(minimal());
  CHECK(s.name == "mini");
  CHECK(s.grid.nx == 10);
  CHECK(s.roles.size() == 4);
  CHECK(s.crowds[1].penalty == PenaltyModel::linear(0.2));
  CHECK(s.crowds[1].frozen_direction.has_value());
  CHECK(s.solver.mode == BestReplyMode::FastDecoupled);
  CHECK(s.solver.policy == ConsistencyPolicy::Strict);
  CHECK(s.outputs.every == 2);
  REQUIRE(s.trace.has_value());
  CHECK(s.trace->axis == "x");

  const Scenario sc = build_scenario(s);
  const Domain& d = sc.domain;
  CHECK(d.is_exit(9, 2, 0));
  CHECK_FALSE(d.is_exit(9, 1, 0));
  CHECK(d.is_exit(0, 7, 1));
  CHECK(d.role(0, 3, 0).kind == CellKind::Inflow);
  CHECK(d.is_obstacle(5, 2));
  CHECK(sc.crowds[0].rho0(2, 4) == 1.0);
  CHECK(sc.crowds[0].rho0(0, 0) == 0.0);
  CHECK(sc.crowds[1].rho0(6, 3) > 0.75);
  CHECK(sc.crowds[1].iso.v_bar == 1.2);
}

TEST_CASE("round trip parse -> serialize -> parse") {
  const ScenarioSpec a = parse_scenario(minimal());
  const ScenarioSpec b = parse_scenario(to_json(a));
  CHECK(a == b);
  const ScenarioSpec c = parse_scenario_text(to_json(b).dump(1));
  CHECK(b == c);
  for (const char* f : {"fig1_doorway", "fig12_direction_fields", "fig13_lane_formation", "fig14_intersection",
                        "swimmer_river"}) {
    const ScenarioSpec s = load_scenario(std::string(CROWD_SCENARIO_DIR) + "/" + f + ".json");
    CHECK(parse_scenario(to_json(s)) == s);
  }
}

TEST_CASE("schema violations name the offending path") {
  json j = minimal();
  j["grid"]["h"] = -1.0;
  CHECK(error_of(j).find("$.grid.h") != std::string::npos);

  j = minimal();
  j["crowds"][0]["colour"] = "red";
  CHECK(error_of(j).find("$.crowds[0].colour") != std::string::npos);

  j = minimal();
  j["roles"][0]["crowd"] = 2;
  CHECK(error_of(j).find("$.roles[0].crowd") != std::string::npos);

  j = minimal();
  j["solver"]["mode"] = "sometimes";
  CHECK(error_of(j).find("$.solver.mode") != std::string::npos);

  j = minimal();
  j["crowds"][1]["penalty"]["model"] = "cubic";
  CHECK(error_of(j).find("$.crowds[1].penalty.model") != std::string::npos);

  j = minimal();
  j["grid"].erase("nx");
  CHECK(error_of(j).find("$.grid.nx") != std::string::npos);

  j = minimal();
  j["grid"]["nx"] = 2.5;
  CHECK(error_of(j).find("$.grid.nx") != std::string::npos);

  j = minimal();
  j["roles"][3]["rect"] = {4, 0, 12, 2};
  CHECK(error_of(j).find("outside") != std::string::npos);

  j = minimal();
  j["solver"]["dt"] = 0.0;
  CHECK(error_of(j).find("$.solver") != std::string::npos);

  j = minimal();
  j["trace"]["crowd"] = 5;
  CHECK(error_of(j).find("$.trace.crowd") != std::string::npos);

  j = minimal();
  j["extra"] = 1;
  CHECK(error_of(j).find("$.extra") != std::string::npos);
}

TEST_CASE("syntax errors report the line") {
  const std::string bad = "{\n  \"name\": \"x\",\n  \"grid\": {\"nx\": 3,,}\n}";
  try {
    (void)parse_scenario_text(bad);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  CHECK_THROWS_AS(load_scenario("/nonexistent/file.json"), ValidationError);
}

TEST_CASE("field dumps are ordered, formatted and deterministic") {
  const GridSpec g{3, 2, 0.5, {1.0, 0.0}};
  ScalarField f(g);
  for (int k = 0; k < g.size(); ++k) f[k] = 1.0 / (k + 3.0);
  const auto dir = std::filesystem::temp_directory_path() / "crowd_dump_test";
  std::filesystem::create_directories(dir);
  const std::string p1 = (dir / "a.csv").string();
  const std::string p2 = (dir / "b.csv").string();
  write_scalar_csv(p1, f);
  write_scalar_csv(p2, f);
  const std::string text = slurp(p1);
  CHECK(text == slurp(p2));
  std::istringstream lines(text);
  std::string line;
  std::getline(lines, line);
  CHECK(line == "i,j,x,y,value");
  std::getline(lines, line);
  CHECK(line == "0,0,1.25,0.25,0.333333333");
  std::getline(lines, line);
  CHECK(line.rfind("1,0,", 0) == 0);
  for (int k = 0; k < 4; ++k) std::getline(lines, line);
  CHECK(line.rfind("2,1,", 0) == 0);

  VectorField v(g, Vec2{0.5, -2.0});
  write_vector_csv(p1, v);
  std::istringstream vl(slurp(p1));
  std::getline(vl, line);
  CHECK(line == "i,j,x,y,vx,vy");
  std::getline(vl, line);
  CHECK(line == "0,0,1.25,0.25,0.5,-2");
  std::filesystem::remove_all(dir);
}

TEST_CASE("run summary") {
  ScenarioSpec s = parse_scenario(minimal());
  s.solver.policy = ConsistencyPolicy::Warn;
  s.solver.t_end = 0.5;
  const RunResult r = run(build_scenario(s));
  const json sum = summary_json(s, r);
  CHECK(sum["steps"] == 2);
  CHECK(sum["crowds"].size() == 2);
  CHECK(sum["crowds"][0]["cumulative_inflow"].get<double>() > 0.0);
  CHECK(sum.contains("worst_region"));
}
