#include "crowd/scenario.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "crowd/errors.hpp"

namespace crowd {

using nlohmann::json;

namespace {

// Object reader that rejects keys outside `allowed` and reports JSON paths.
class Reader {
 public:
  Reader(const json& j, std::string path, std::initializer_list<const char*> allowed) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) fail(path_, "expected an object");
    std::set<std::string> keys(allowed.begin(), allowed.end());
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (!keys.count(it.key())) fail(path_ + "." + it.key(), "unknown key");
    }
  }

  [[noreturn]] static void fail(const std::string& path, const std::string& msg) {
    throw ValidationError(path + ": " + msg);
  }

  bool has(const char* key) const { return j_.contains(key); }
  std::string path(const char* key) const { return path_ + "." + key; }

  const json& req(const char* key) const {
    if (!has(key)) fail(path(key), "required key missing");
    return j_.at(key);
  }

  double number(const char* key) const { return as_number(req(key), path(key)); }
  double number(const char* key, double def) const { return has(key) ? number(key) : def; }
  int integer(const char* key) const { return as_int(req(key), path(key)); }
  int integer(const char* key, int def) const { return has(key) ? integer(key) : def; }
  std::string string(const char* key) const { return as_string(req(key), path(key)); }
  std::string string(const char* key, const std::string& def) const { return has(key) ? string(key) : def; }

  static double as_number(const json& v, const std::string& p) {
    if (!v.is_number()) fail(p, "expected a number");
    return v.get<double>();
  }
  static int as_int(const json& v, const std::string& p) {
    if (!v.is_number_integer()) fail(p, "expected an integer");
    return v.get<int>();
  }
  static std::string as_string(const json& v, const std::string& p) {
    if (!v.is_string()) fail(p, "expected a string");
    return v.get<std::string>();
  }
  static const json& as_array(const json& v, const std::string& p, std::size_t n = 0) {
    if (!v.is_array()) fail(p, "expected an array");
    if (n && v.size() != n) fail(p, "expected " + std::to_string(n) + " elements");
    return v;
  }
  static Vec2 as_vec2(const json& v, const std::string& p) {
    as_array(v, p, 2);
    return {as_number(v[0], p + "[0]"), as_number(v[1], p + "[1]")};
  }

 private:
  const json& j_;
  std::string path_;
};

RegionSpec parse_region(const Reader& r) {
  RegionSpec out;
  if (r.has("rect")) {
    const json& a = Reader::as_array(r.req("rect"), r.path("rect"), 4);
    std::array<int, 4> rect{};
    for (std::size_t k = 0; k < 4; ++k) rect[k] = Reader::as_int(a[k], r.path("rect") + "[" + std::to_string(k) + "]");
    out.rect = rect;
  }
  if (r.has("edge")) {
    out.edge = r.string("edge");
    if (out.edge != "north" && out.edge != "south" && out.edge != "east" && out.edge != "west") {
      Reader::fail(r.path("edge"), "expected north, south, east or west");
    }
    if (r.has("range")) {
      const json& a = Reader::as_array(r.req("range"), r.path("range"), 2);
      out.range = std::array<int, 2>{Reader::as_int(a[0], r.path("range") + "[0]"),
                                     Reader::as_int(a[1], r.path("range") + "[1]")};
    }
  } else if (r.has("range")) {
    Reader::fail(r.path("range"), "range needs an edge");
  }
  if (out.rect.has_value() == !out.edge.empty()) Reader::fail(r.path("rect"), "give exactly one of rect or edge");
  return out;
}

void region_to_json(const RegionSpec& r, json& j) {
  if (r.rect) j["rect"] = *r.rect;
  if (!r.edge.empty()) {
    j["edge"] = r.edge;
    if (r.range) j["range"] = *r.range;
  }
}

json vec_json(Vec2 v) { return json::array({v.x, v.y}); }

BestReplyMode mode_from(const std::string& s, const std::string& path) {
  if (s == "coupled") return BestReplyMode::Coupled;
  if (s == "fast-decoupled") return BestReplyMode::FastDecoupled;
  Reader::fail(path, "expected coupled or fast-decoupled");
}

ConsistencyPolicy policy_from(const std::string& s, const std::string& path) {
  if (s == "warn") return ConsistencyPolicy::Warn;
  if (s == "strict") return ConsistencyPolicy::Strict;
  Reader::fail(path, "expected warn or strict");
}

std::string fmt9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  return out;
}

}  // namespace

std::vector<std::pair<int, int>> RegionSpec::cells(const GridSpec& g) const {
  std::vector<std::pair<int, int>> out;
  if (rect) {
    const auto [i0, j0, i1, j1] = *rect;
    if (i0 > i1 || j0 > j1 || !g.contains(i0, j0) || !g.contains(i1, j1)) {
      throw ValidationError("rect [" + std::to_string(i0) + ", " + std::to_string(j0) + ", " + std::to_string(i1) +
                            ", " + std::to_string(j1) + "] is empty or outside the grid");
    }
    for (int j = j0; j <= j1; ++j) {
      for (int i = i0; i <= i1; ++i) out.emplace_back(i, j);
    }
    return out;
  }
  const bool vertical = edge == "east" || edge == "west";
  const int len = vertical ? g.ny : g.nx;
  int a = 0;
  int b = len - 1;
  if (range) {
    a = (*range)[0];
    b = (*range)[1];
    if (a > b || a < 0 || b >= len) throw ValidationError("edge range is empty or outside the grid");
  }
  for (int t = a; t <= b; ++t) {
    if (edge == "east") out.emplace_back(g.nx - 1, t);
    if (edge == "west") out.emplace_back(0, t);
    if (edge == "north") out.emplace_back(t, g.ny - 1);
    if (edge == "south") out.emplace_back(t, 0);
  }
  return out;
}

ScenarioSpec parse_scenario(const json& doc) {
  const Reader root(doc, "$", {"name", "grid", "roles", "crowds", "solver", "outputs", "trace"});
  ScenarioSpec spec;
  spec.name = root.string("name", "");

  const Reader grid(root.req("grid"), "$.grid", {"nx", "ny", "h", "origin"});
  spec.grid.nx = grid.integer("nx");
  spec.grid.ny = grid.integer("ny");
  spec.grid.h = grid.number("h");
  if (grid.has("origin")) spec.grid.origin = Reader::as_vec2(grid.req("origin"), grid.path("origin"));
  if (spec.grid.nx < 3 || spec.grid.ny < 3) Reader::fail("$.grid", "nx and ny must be at least 3");
  if (!(spec.grid.h > 0.0)) Reader::fail("$.grid.h", "must be positive");

  const json& crowds = Reader::as_array(root.req("crowds"), "$.crowds");
  if (crowds.empty() || crowds.size() > 2) Reader::fail("$.crowds", "one or two crowds expected");
  for (std::size_t c = 0; c < crowds.size(); ++c) {
    const std::string p = "$.crowds[" + std::to_string(c) + "]";
    const Reader cr(crowds[c], p, {"name", "v_bar", "alpha", "penalty", "initial", "blobs", "frozen_direction"});
    CrowdSpec cs;
    cs.name = cr.string("name", c == 0 ? "A" : "B");
    cs.v_bar = cr.number("v_bar", 1.0);
    cs.alpha = cr.number("alpha", 0.075);
    if (cr.has("penalty")) {
      const Reader pen(cr.req("penalty"), p + ".penalty", {"model", "strength"});
      try {
        cs.penalty.kind = penalty_kind_from_string(pen.string("model"));
      } catch (const ValidationError& e) {
        Reader::fail(p + ".penalty.model", e.what());
      }
      cs.penalty.strength = pen.number("strength");
      if (!(cs.penalty.strength >= 0.0)) Reader::fail(p + ".penalty.strength", "must be non-negative");
    }
    if (!(cs.v_bar > 0.0)) Reader::fail(p + ".v_bar", "must be positive");
    if (!(cs.alpha >= 0.0)) Reader::fail(p + ".alpha", "must be non-negative");
    if (cr.has("initial")) {
      const json& arr = Reader::as_array(cr.req("initial"), p + ".initial");
      for (std::size_t k = 0; k < arr.size(); ++k) {
        const std::string pp = p + ".initial[" + std::to_string(k) + "]";
        const Reader patch(arr[k], pp, {"rect", "edge", "range", "density"});
        DensityPatch d{parse_region(patch), patch.number("density")};
        if (!(d.density >= 0.0)) Reader::fail(pp + ".density", "must be non-negative");
        cs.initial.push_back(d);
      }
    }
    if (cr.has("blobs")) {
      const json& arr = Reader::as_array(cr.req("blobs"), p + ".blobs");
      for (std::size_t k = 0; k < arr.size(); ++k) {
        const std::string pp = p + ".blobs[" + std::to_string(k) + "]";
        const Reader blob(arr[k], pp, {"center", "sigma", "peak"});
        GaussianPatch gp{Reader::as_vec2(blob.req("center"), pp + ".center"), blob.number("sigma"), blob.number("peak")};
        if (!(gp.sigma > 0.0)) Reader::fail(pp + ".sigma", "must be positive");
        if (!(gp.peak >= 0.0)) Reader::fail(pp + ".peak", "must be non-negative");
        cs.blobs.push_back(gp);
      }
    }
    if (cr.has("frozen_direction")) {
      const Vec2 v = Reader::as_vec2(cr.req("frozen_direction"), p + ".frozen_direction");
      if (!(norm(v) > 0.0)) Reader::fail(p + ".frozen_direction", "must be nonzero");
      cs.frozen_direction = v;
    }
    spec.crowds.push_back(cs);
  }

  const int n_crowds = static_cast<int>(spec.crowds.size());
  if (root.has("roles")) {
    const json& arr = Reader::as_array(root.req("roles"), "$.roles");
    for (std::size_t k = 0; k < arr.size(); ++k) {
      const std::string p = "$.roles[" + std::to_string(k) + "]";
      const Reader r(arr[k], p, {"role", "crowd", "rate", "absorbing", "rect", "edge", "range"});
      RoleSpec role;
      role.role = r.string("role");
      if (role.role != "obstacle" && role.role != "exit" && role.role != "inflow") {
        Reader::fail(p + ".role", "expected obstacle, exit or inflow");
      }
      if (role.role == "obstacle") {
        if (r.has("crowd") || r.has("rate")) Reader::fail(p, "obstacles take no crowd or rate");
      } else {
        role.crowd = r.integer("crowd");
        if (role.crowd < 0 || role.crowd >= n_crowds) Reader::fail(p + ".crowd", "undefined crowd id");
      }
      if (role.role == "inflow") {
        role.rate = r.number("rate");
        if (!(role.rate >= 0.0)) Reader::fail(p + ".rate", "must be non-negative");
      } else if (r.has("rate")) {
        Reader::fail(p + ".rate", "only inflow roles take a rate");
      }
      if (r.has("absorbing")) {
        if (role.role != "exit") Reader::fail(p + ".absorbing", "only exit roles take absorbing");
        if (!r.req("absorbing").is_boolean()) Reader::fail(p + ".absorbing", "expected a boolean");
        role.absorbing = r.req("absorbing").get<bool>();
      }
      role.where = parse_region(r);
      spec.roles.push_back(role);
    }
  }

  if (root.has("solver")) {
    const Reader s(root.req("solver"), "$.solver",
                   {"dt", "t_end", "n_dirs", "hjb_tol", "max_sweeps", "tol_br", "max_br", "mode", "consistency"});
    SolverConfig& c = spec.solver;
    c.dt = s.number("dt", c.dt);
    c.t_end = s.number("t_end", c.t_end);
    c.n_dirs = s.integer("n_dirs", c.n_dirs);
    c.hjb_tol = s.number("hjb_tol", c.hjb_tol);
    c.max_sweeps = s.integer("max_sweeps", c.max_sweeps);
    c.tol_br = s.number("tol_br", c.tol_br);
    c.max_br = s.integer("max_br", c.max_br);
    if (s.has("mode")) c.mode = mode_from(s.string("mode"), "$.solver.mode");
    if (s.has("consistency")) c.policy = policy_from(s.string("consistency"), "$.solver.consistency");
    try {
      c.validate();
    } catch (const ValidationError& e) {
      Reader::fail("$.solver", e.what());
    }
  }

  if (root.has("outputs")) {
    const Reader o(root.req("outputs"), "$.outputs", {"fields", "every", "times"});
    if (o.has("fields")) {
      const json& arr = Reader::as_array(o.req("fields"), "$.outputs.fields");
      for (std::size_t k = 0; k < arr.size(); ++k) {
        const std::string f = Reader::as_string(arr[k], "$.outputs.fields[" + std::to_string(k) + "]");
        if (f != "rho" && f != "phi" && f != "u" && f != "v") {
          Reader::fail("$.outputs.fields[" + std::to_string(k) + "]", "expected rho, phi, u or v");
        }
        spec.outputs.fields.push_back(f);
      }
    }
    spec.outputs.every = o.integer("every", 0);
    if (spec.outputs.every < 0) Reader::fail("$.outputs.every", "must be non-negative");
    if (o.has("times")) {
      const json& arr = Reader::as_array(o.req("times"), "$.outputs.times");
      for (std::size_t k = 0; k < arr.size(); ++k) {
        spec.outputs.times.push_back(Reader::as_number(arr[k], "$.outputs.times[" + std::to_string(k) + "]"));
      }
    }
  }

  if (root.has("trace")) {
    const Reader t(root.req("trace"), "$.trace", {"start", "dt", "crowd", "policy", "target"});
    TraceSpec ts;
    ts.start = Reader::as_vec2(t.req("start"), "$.trace.start");
    ts.dt = t.number("dt", ts.dt);
    ts.crowd = t.integer("crowd", 0);
    ts.policy = t.string("policy", ts.policy);
    if (ts.policy != "optimal" && ts.policy != "gradient" && ts.policy != "stored") {
      Reader::fail("$.trace.policy", "expected optimal, gradient or stored");
    }
    if (ts.crowd < 0 || ts.crowd >= n_crowds) Reader::fail("$.trace.crowd", "undefined crowd id");
    if (!(ts.dt > 0.0)) Reader::fail("$.trace.dt", "must be positive");
    const Reader tg(t.req("target"), "$.trace.target", {"axis", "min"});
    ts.axis = tg.string("axis");
    if (ts.axis != "x" && ts.axis != "y") Reader::fail("$.trace.target.axis", "expected x or y");
    ts.target_min = tg.number("min");
    spec.trace = ts;
  }

  // Resolve geometry now so bad rectangles surface as validation errors.
  (void)build_scenario(spec);
  return spec;
}

ScenarioSpec parse_scenario_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t pos = std::min<std::size_t>(e.byte, text.size());
    const long line = 1 + std::count(text.begin(), text.begin() + static_cast<long>(pos), '\n');
    throw ValidationError("line " + std::to_string(line) + ": " + e.what());
  }
  return parse_scenario(doc);
}

ScenarioSpec load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open scenario file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario_text(buf.str());
}

json to_json(const ScenarioSpec& spec) {
  json doc;
  doc["name"] = spec.name;
  doc["grid"] = {{"nx", spec.grid.nx}, {"ny", spec.grid.ny}, {"h", spec.grid.h}, {"origin", vec_json(spec.grid.origin)}};
  doc["roles"] = json::array();
  for (const auto& r : spec.roles) {
    json j{{"role", r.role}};
    if (r.role != "obstacle") j["crowd"] = r.crowd;
    if (r.role == "inflow") j["rate"] = r.rate;
    if (r.role == "exit" && !r.absorbing) j["absorbing"] = false;
    region_to_json(r.where, j);
    doc["roles"].push_back(j);
  }
  doc["crowds"] = json::array();
  for (const auto& c : spec.crowds) {
    json j{{"name", c.name},
           {"v_bar", c.v_bar},
           {"alpha", c.alpha},
           {"penalty", {{"model", to_string(c.penalty.kind)}, {"strength", c.penalty.strength}}}};
    j["initial"] = json::array();
    for (const auto& p : c.initial) {
      json pj{{"density", p.density}};
      region_to_json(p.where, pj);
      j["initial"].push_back(pj);
    }
    j["blobs"] = json::array();
    for (const auto& b : c.blobs) j["blobs"].push_back({{"center", vec_json(b.center)}, {"sigma", b.sigma}, {"peak", b.peak}});
    if (c.frozen_direction) j["frozen_direction"] = vec_json(*c.frozen_direction);
    doc["crowds"].push_back(j);
  }
  const SolverConfig& s = spec.solver;
  doc["solver"] = {{"dt", s.dt},           {"t_end", s.t_end},   {"n_dirs", s.n_dirs},
                   {"hjb_tol", s.hjb_tol}, {"max_sweeps", s.max_sweeps}, {"tol_br", s.tol_br},
                   {"max_br", s.max_br},   {"mode", to_string(s.mode)},  {"consistency", to_string(s.policy)}};
  doc["outputs"] = {{"fields", spec.outputs.fields}, {"every", spec.outputs.every}, {"times", spec.outputs.times}};
  if (spec.trace) {
    const TraceSpec& t = *spec.trace;
    doc["trace"] = {{"start", vec_json(t.start)},
                    {"dt", t.dt},
                    {"crowd", t.crowd},
                    {"policy", t.policy},
                    {"target", {{"axis", t.axis}, {"min", t.target_min}}}};
  }
  return doc;
}

Scenario build_scenario(const ScenarioSpec& spec) {
  spec.grid.validate();
  const GridSpec& g = spec.grid;
  Scenario sc;
  sc.domain = Domain(g, static_cast<int>(spec.crowds.size()));
  sc.solver = spec.solver;
  // Obstacles first so exit and inflow overlap checks see them.
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& r : spec.roles) {
      if ((r.role == "obstacle") != (pass == 0)) continue;
      for (const auto& [i, j] : r.where.cells(g)) {
        if (r.role == "obstacle") sc.domain.set_obstacle(i, j);
        if (r.role == "exit") sc.domain.set_exit(i, j, r.crowd, r.absorbing);
        if (r.role == "inflow") sc.domain.set_inflow(i, j, r.crowd, r.rate);
      }
    }
  }
  for (const auto& c : spec.crowds) {
    CrowdConfig cc;
    cc.name = c.name;
    cc.iso = {c.v_bar, c.alpha};
    cc.pen = c.penalty;
    cc.rho0 = ScalarField(g, 0.0);
    for (const auto& p : c.initial) {
      for (const auto& [i, j] : p.where.cells(g)) cc.rho0(i, j) = p.density;
    }
    for (const auto& b : c.blobs) {
      for (int j = 0; j < g.ny; ++j) {
        for (int i = 0; i < g.nx; ++i) {
          const Vec2 d = g.cell_center(i, j) - b.center;
          cc.rho0(i, j) += b.peak * std::exp(-dot(d, d) / (2.0 * b.sigma * b.sigma));
        }
      }
    }
    cc.frozen_direction = c.frozen_direction;
    sc.crowds.push_back(std::move(cc));
  }
  return sc;
}

std::string to_string(BestReplyMode mode) { return mode == BestReplyMode::Coupled ? "coupled" : "fast-decoupled"; }
std::string to_string(ConsistencyPolicy p) { return p == ConsistencyPolicy::Warn ? "warn" : "strict"; }
std::string to_string(Region r) { return "region" + std::to_string(static_cast<int>(r)); }

void write_scalar_csv(const std::string& path, const ScalarField& f) {
  std::ofstream out = open_out(path);
  out << "i,j,x,y,value\n";
  const GridSpec& g = f.grid;
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      const Vec2 c = g.cell_center(i, j);
      out << i << ',' << j << ',' << fmt9(c.x) << ',' << fmt9(c.y) << ',' << fmt9(f(i, j)) << '\n';
    }
  }
}

void write_vector_csv(const std::string& path, const VectorField& f) {
  std::ofstream out = open_out(path);
  out << "i,j,x,y,vx,vy\n";
  const GridSpec& g = f.grid;
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      const Vec2 c = g.cell_center(i, j);
      out << i << ',' << j << ',' << fmt9(c.x) << ',' << fmt9(c.y) << ',' << fmt9(f(i, j).x) << ','
          << fmt9(f(i, j).y) << '\n';
    }
  }
}

void write_diagnostics_csv(const std::string& path, const std::vector<StepDiagnostics>& diags) {
  std::ofstream out = open_out(path);
  const std::size_t n = diags.empty() ? 1 : diags.front().mass.size();
  out << "step,time";
  for (std::size_t c = 0; c < n; ++c) {
    out << ",mass_" << c << ",max_rho_" << c << ",inflow_" << c << ",outflow_" << c << ",clamped_" << c;
  }
  out << ",region,n_region2,n_region3,br_rounds,sweeps,ovl\n";
  for (const auto& d : diags) {
    out << d.step << ',' << fmt9(d.time);
    for (std::size_t c = 0; c < d.mass.size(); ++c) {
      out << ',' << fmt9(d.mass[c]) << ',' << fmt9(d.max_rho[c]) << ',' << fmt9(d.inflow[c]) << ','
          << fmt9(d.outflow[c]) << ',' << fmt9(d.clamped[c]);
    }
    out << ',' << static_cast<int>(d.region) << ',' << d.n_region2 << ',' << d.n_region3 << ',' << d.br_rounds << ','
        << d.sweeps << ',' << (d.ovl ? fmt9(*d.ovl) : std::string()) << '\n';
  }
}

json summary_json(const ScenarioSpec& spec, const RunResult& result) {
  json s;
  s["scenario"] = spec.name;
  s["steps"] = result.diagnostics.size();
  s["time"] = result.final_state.time;
  int worst = 1;
  int max_rounds = 0;
  for (const auto& d : result.diagnostics) {
    worst = std::max(worst, static_cast<int>(d.region));
    max_rounds = std::max(max_rounds, d.br_rounds);
  }
  s["worst_region"] = worst;
  s["max_best_reply_rounds"] = max_rounds;
  json crowds = json::array();
  for (std::size_t c = 0; c < result.final_state.crowds.size(); ++c) {
    const TransportState& t = result.final_state.crowds[c];
    crowds.push_back({{"name", spec.crowds[c].name},
                      {"final_mass", total_mass(t.rho)},
                      {"cumulative_inflow", t.cumulative_inflow},
                      {"cumulative_outflow", t.cumulative_outflow},
                      {"cumulative_clamped", t.cumulative_clamped}});
  }
  s["crowds"] = crowds;
  if (!result.diagnostics.empty() && result.diagnostics.back().ovl) s["final_ovl"] = *result.diagnostics.back().ovl;
  json ovl_series = json::object();
  for (const auto& d : result.diagnostics) {
    if (d.ovl && std::abs(d.time - std::round(d.time)) < 1e-9 && static_cast<long>(std::round(d.time)) % 10 == 0) {
      ovl_series[std::to_string(static_cast<long>(std::round(d.time)))] = *d.ovl;
    }
  }
  if (!ovl_series.empty()) s["ovl_by_time"] = ovl_series;
  return s;
}

}  // namespace crowd
