// Command-line driver: simulate, analyze-profile, find-ne, trace.
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "crowd/errors.hpp"
#include "crowd/nash.hpp"
#include "crowd/profiles.hpp"
#include "crowd/scenario.hpp"
#include "crowd/sim.hpp"

namespace fs = std::filesystem;
using namespace crowd;

namespace {

std::string fmt(double v, int digits = 6) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

Vec2 parse_vec(const std::vector<double>& v) { return {v.at(0), v.at(1)}; }

PenaltyModel make_penalty(const std::string& model, double strength) {
  PenaltyModel p{penalty_kind_from_string(model), strength};
  p.validate();
  return p;
}

void write_profile_csv(const std::string& path, const VelocityProfile& profile) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << "theta,vx,vy\n";
  for (int k = 0; k < profile.size(); ++k) {
    out << fmt(profile.theta(k), 9) << ',' << fmt(profile.velocity(k).x, 9) << ',' << fmt(profile.velocity(k).y, 9)
        << '\n';
  }
}

// --- simulate -------------------------------------------------------------

struct SimulateArgs {
  std::string scenario;
  std::string outdir;
  bool strict = false;
  bool fast = false;
  int n_dirs = 0;
  double dt = 0.0;
  double t_end = 0.0;
  int dump_every = -1;
  bool quiet = false;
};

int simulate(const SimulateArgs& args) {
  ScenarioSpec spec = load_scenario(args.scenario);
  if (args.strict) spec.solver.policy = ConsistencyPolicy::Strict;
  if (args.fast) spec.solver.mode = BestReplyMode::FastDecoupled;
  if (args.n_dirs > 0) spec.solver.n_dirs = args.n_dirs;
  if (args.dt > 0.0) spec.solver.dt = args.dt;
  if (args.t_end > 0.0) spec.solver.t_end = args.t_end;
  if (args.dump_every >= 0) spec.outputs.every = args.dump_every;
  spec.solver.validate();

  const Scenario scenario = build_scenario(spec);
  fs::create_directories(args.outdir);
  const fs::path out(args.outdir);
  std::vector<std::string> fields = spec.outputs.fields;
  if (fields.empty()) fields = {"rho"};

  nlohmann::json manifest;
  manifest["scenario"] = spec.name;
  manifest["dumps"] = nlohmann::json::array();

  auto dump = [&](const SimState& s) {
    nlohmann::json entry{{"step", s.step}, {"time", s.time}, {"files", nlohmann::json::array()}};
    char stamp[16];
    std::snprintf(stamp, sizeof stamp, "%06d", s.step);
    for (std::size_t c = 0; c < s.crowds.size(); ++c) {
      for (const auto& f : fields) {
        const std::string name = f + "_" + spec.crowds[c].name + "_" + stamp + ".csv";
        const std::string path = (out / name).string();
        if (f == "rho") write_scalar_csv(path, s.crowds[c].rho);
        else if (f == "phi" && c < s.phi.size()) write_scalar_csv(path, s.phi[c]);
        else if (f == "u" && c < s.directions.size()) write_vector_csv(path, s.directions[c]);
        else if (f == "v" && c < s.velocity.size()) write_vector_csv(path, s.velocity[c]);
        else continue;
        entry["files"].push_back(name);
      }
    }
    manifest["dumps"].push_back(entry);
  };

  auto wanted = [&](const SimState& s) {
    if (spec.outputs.every > 0 && s.step % spec.outputs.every == 0) return true;
    for (double t : spec.outputs.times) {
      if (std::abs(s.time - t) <= 0.5 * spec.solver.dt) return true;
    }
    return false;
  };

  const SimState start = initial_state(scenario);
  if (!spec.outputs.times.empty() || spec.outputs.every > 0) {
    if (wanted(start)) dump(start);
  }
  RunResult result = run(scenario, [&](const SimState& s, const StepDiagnostics& d) {
    if (wanted(s)) dump(s);
    if (!args.quiet) {
      std::cerr << "step " << d.step << " t=" << fmt(d.time) << " region=" << static_cast<int>(d.region)
                << " br=" << d.br_rounds;
      if (d.ovl) std::cerr << " ovl=" << fmt(*d.ovl, 4);
      std::cerr << '\n';
    }
  });

  write_diagnostics_csv((out / "diagnostics.csv").string(), result.diagnostics);
  manifest["diagnostics"] = "diagnostics.csv";
  std::ofstream((out / "manifest.json").string()) << manifest.dump(2) << '\n';
  const nlohmann::json summary = summary_json(spec, result);
  std::ofstream((out / "summary.json").string()) << summary.dump(2) << '\n';
  std::cout << summary.dump(2) << '\n';
  return 0;
}

// --- analyze-profile ------------------------------------------------------

struct ProfileArgs {
  std::string kind = "intercrowd";
  std::string model = "squared";
  double strength = 0.0;
  double rho_self = 0.0;
  double rho_other = 1.0;
  double v_bar = 1.0;
  double alpha = 0.0;
  double other_angle_deg = 0.0;
  double force = 0.0;
  double radius = 1.0;
  double sector_deg = 180.0;
  double rho0 = 0.0;
  double rho_x = 0.0;
  int samples = kDefaultProfileSamples;
  std::string csv;
};

int analyze_profile(const ProfileArgs& a) {
  VelocityProfile profile;
  if (a.kind == "intercrowd") {
    const PenaltyModel pen = make_penalty(a.model, a.strength);
    std::cout << "model: " << to_string(pen.kind) << " strength " << fmt(pen.strength) << '\n';
    if (pen.smooth()) {
      std::cout << "critical density: " << fmt(critical_density(pen), 3) << '\n';
      std::cout << "head-on slowdown: " << fmt(head_on_slowdown(pen), 3) << '\n';
    }
    const double th = a.other_angle_deg * kPi / 180.0;
    profile = intercrowd_profile({a.v_bar, a.alpha}, pen, a.rho_self, a.rho_other, {std::cos(th), std::sin(th)},
                                 a.samples);
  } else if (a.kind == "nonlocal") {
    SectorSensing s{a.force, a.radius, a.sector_deg * kPi / 180.0, std::nullopt};
    s.validate();
    const LinearDensityCoeffs c = linear_density_coeffs(s, a.rho0, a.rho_x);
    std::cout << "coefficients: c1 " << fmt(c.c1) << " c2 " << fmt(c.c2) << " c3 " << fmt(c.c3) << '\n';
    std::cout << "origin contained: " << (origin_containment(c) ? "yes" : "no") << '\n';
    std::cout << "safe sector angle: " << fmt(safe_sector_angle_threshold() * 180.0 / kPi, 7) << " deg\n";
    profile = closed_form_linear_profile(c, a.samples);
  } else {
    throw ValidationError("--kind must be intercrowd or nonlocal");
  }
  const ConvexityReport conv = profile_is_strictly_convex(profile);
  if (profile.isotropic_speed()) std::cout << "shape: circle of radius " << fmt(*profile.isotropic_speed()) << '\n';
  std::cout << "speed range: " << fmt(profile.min_speed()) << " .. " << fmt(profile.max_speed()) << '\n';
  if (conv.strictly_convex) {
    std::cout << "convexity: strictly convex\n";
  } else {
    std::cout << "convexity: non-convex (first violation at " << fmt(conv.first_violation_theta * 180.0 / kPi)
              << " deg)\n";
  }
  if (!a.csv.empty()) write_profile_csv(a.csv, profile);
  return 0;
}

// --- find-ne --------------------------------------------------------------

struct NEArgs {
  std::vector<double> p{1.0, 0.0};
  std::vector<double> q{-1.0, 0.0};
  std::string model = "squared";
  double strength = 0.0;
  double strength_b = -1.0;
  double rho_a = 1.0;
  double rho_b = 1.0;
  int n_dirs = 1024;
  bool exhaustive = false;
  std::string csv;
};

int find_ne(const NEArgs& a) {
  const PenaltyModel pen_a = make_penalty(a.model, a.strength);
  const PenaltyModel pen_b = make_penalty(a.model, a.strength_b >= 0.0 ? a.strength_b : a.strength);
  const PointGame game = PointGame::make(parse_vec(a.p), parse_vec(a.q), pen_a, pen_b, a.rho_a, a.rho_b);
  NEOptions opt;
  opt.n_dirs = a.n_dirs;
  opt.exhaustive = a.exhaustive;
  const NEResult res = ne_enumerate(game, opt);

  std::cout << "equilibria: " << res.points.size() << (res.continuum ? " (continuum: samples only)" : "") << '\n';
  std::printf("%-4s %-10s %-10s %-10s %-10s %-10s %-10s %-9s\n", "#", "a", "b", "a_abs", "b_abs", "payoff_a",
              "payoff_b", "dominated");
  for (std::size_t k = 0; k < res.points.size(); ++k) {
    const NEPoint& n = res.points[k];
    std::printf("%-4zu %-10.4f %-10.4f %-10.4f %-10.4f %-10.4f %-10.4f %-9s\n", k, n.a, n.b, n.a_abs, n.b_abs,
                n.payoff_a, n.payoff_b, n.pareto_dominated ? "yes" : "no");
  }
  if (pen_a.smooth()) {
    const Certificate cert = uniqueness_certificate(pen_a, pen_b, a.rho_a, a.rho_b);
    std::cout << "certificate: " << (cert.certified ? "unique" : "not certified") << " margin " << fmt(cert.margin)
              << '\n';
  } else {
    std::cout << "teardrop critical half-angle: "
              << fmt(teardrop_critical_angle(pen_a.strength, a.rho_b) * 180.0 / kPi) << " deg\n";
  }
  if (!res.continuum && res.points.size() <= 8) {
    const auto table = payoff_table(game, res.points);
    std::cout << "payoff table (row: A plays NE i, column: B plays NE j)\n";
    for (const auto& row : table) {
      for (const auto& cell : row) std::printf("  %.4f/%.4f", cell.a, cell.b);
      std::printf("\n");
    }
  }
  if (!a.csv.empty()) {
    std::ofstream out(a.csv);
    if (!out) throw Error("cannot write " + a.csv);
    out << "a,b,a_abs,b_abs,payoff_a,payoff_b,pareto_dominated,continuum\n";
    for (const auto& n : res.points) {
      out << fmt(n.a, 9) << ',' << fmt(n.b, 9) << ',' << fmt(n.a_abs, 9) << ',' << fmt(n.b_abs, 9) << ','
          << fmt(n.payoff_a, 9) << ',' << fmt(n.payoff_b, 9) << ',' << n.pareto_dominated << ',' << res.continuum
          << '\n';
    }
  }
  return 0;
}

// --- trace ----------------------------------------------------------------

struct TraceArgs {
  std::string scenario;
  std::vector<double> start;
  std::string policy;
  double dt = 0.0;
  std::string csv;
};

int trace(const TraceArgs& a) {
  const ScenarioSpec spec = load_scenario(a.scenario);
  if (!spec.trace && a.start.empty()) throw ValidationError("scenario has no trace section; pass --start");
  TraceSpec ts = spec.trace.value_or(TraceSpec{});
  if (!a.start.empty()) ts.start = parse_vec(a.start);
  if (!a.policy.empty()) ts.policy = a.policy;
  if (a.dt > 0.0) ts.dt = a.dt;
  const TracePolicy policy = ts.policy == "optimal"    ? TracePolicy::Optimal
                             : ts.policy == "gradient" ? TracePolicy::Gradient
                             : ts.policy == "stored"   ? TracePolicy::Stored
                                                       : throw ValidationError("unknown policy " + ts.policy);
  const Scenario scenario = build_scenario(spec);
  TargetLevel target;
  if (spec.trace) {
    const bool y = ts.axis == "y";
    const double m = ts.target_min;
    target = [y, m](Vec2 p) { return (y ? p.y : p.x) - m; };
  } else {
    // Default target: the crowd's exit cells.
    const Domain& d = scenario.domain;
    const int c = ts.crowd;
    target = [&d, c](Vec2 p) {
      const auto cell = d.grid().locate(p);
      return cell && d.is_exit(cell->first, cell->second, c) ? 0.0 : -1.0;
    };
  }
  const TraceResult r = trace_in_scenario(scenario, ts.crowd, ts.start, ts.dt, policy, target);
  std::cout << "policy: " << ts.policy << '\n';
  std::cout << "exit time: " << fmt(r.trajectory.exit_time, 7) << '\n';
  std::cout << "value at start: " << fmt(bilinear_sample(r.solution.phi, ts.start), 7) << '\n';
  if (!a.csv.empty()) {
    std::ofstream out(a.csv);
    if (!out) throw Error("cannot write " + a.csv);
    out << "step,x,y\n";
    for (std::size_t k = 0; k < r.trajectory.path.size(); ++k) {
      out << k << ',' << fmt(r.trajectory.path[k].x, 9) << ',' << fmt(r.trajectory.path[k].y, 9) << '\n';
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-crowd pedestrian flow with anisotropic path planning"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Run a scenario and write field dumps, diagnostics and a summary");
  c_sim->add_option("scenario", sim.scenario, "Scenario JSON file")->required()->check(CLI::ExistingFile);
  c_sim->add_option("outdir", sim.outdir, "Output directory")->required();
  c_sim->add_flag("--strict-consistency", sim.strict, "Abort when the densities leave Region 1");
  c_sim->add_flag("--fast-decoupled", sim.fast, "Single best-reply pass per step");
  c_sim->add_option("--n-dirs", sim.n_dirs, "Profile directions per cell")->check(CLI::PositiveNumber);
  c_sim->add_option("--dt", sim.dt, "Time step")->check(CLI::PositiveNumber);
  c_sim->add_option("--t-end", sim.t_end, "Final time")->check(CLI::PositiveNumber);
  c_sim->add_option("--dump-every", sim.dump_every, "Steps between field dumps (0 = only requested times)")
      ->check(CLI::NonNegativeNumber);
  c_sim->add_flag("--quiet", sim.quiet, "No per-step progress on stderr");

  ProfileArgs prof;
  auto* c_prof = app.add_subcommand("analyze-profile", "Velocity profile analysis");
  c_prof->add_option("--kind", prof.kind, "intercrowd or nonlocal")->check(CLI::IsMember({"intercrowd", "nonlocal"}));
  c_prof->add_option("--model", prof.model, "squared, linear or teardrop");
  c_prof->add_option("--strength", prof.strength, "Penalty strength (beta, or C for teardrop)");
  c_prof->add_option("--rho-self", prof.rho_self, "Own density");
  c_prof->add_option("--rho-other", prof.rho_other, "Other crowd density");
  c_prof->add_option("--v-bar", prof.v_bar, "Free speed");
  c_prof->add_option("--alpha", prof.alpha, "Fundamental diagram coefficient");
  c_prof->add_option("--other-angle", prof.other_angle_deg, "Other crowd direction, degrees");
  c_prof->add_option("--force", prof.force, "Non-local interaction strength F");
  c_prof->add_option("--radius", prof.radius, "Sensing radius R");
  c_prof->add_option("--sector", prof.sector_deg, "Sensing sector angle, degrees");
  c_prof->add_option("--rho0", prof.rho0, "Density at the pedestrian");
  c_prof->add_option("--rho-x", prof.rho_x, "Density slope along x");
  c_prof->add_option("--samples", prof.samples, "Profile samples")->check(CLI::PositiveNumber);
  c_prof->add_option("--csv", prof.csv, "Write the sampled profile here");

  NEArgs ne;
  auto* c_ne = app.add_subcommand("find-ne", "Enumerate Nash equilibria of the pointwise direction game");
  c_ne->add_option("--p", ne.p, "Value gradient of crowd A (x y)")->expected(2);
  c_ne->add_option("--q", ne.q, "Value gradient of crowd B (x y)")->expected(2);
  c_ne->add_option("--model", ne.model, "squared, linear or teardrop");
  c_ne->add_option("--strength", ne.strength, "Penalty strength")->required();
  c_ne->add_option("--strength-b", ne.strength_b, "Penalty strength for crowd B (default: same)");
  c_ne->add_option("--rho-a", ne.rho_a, "Density of crowd A");
  c_ne->add_option("--rho-b", ne.rho_b, "Density of crowd B");
  c_ne->add_option("--n-dirs", ne.n_dirs, "Angles per player")->check(CLI::PositiveNumber);
  c_ne->add_flag("--exhaustive", ne.exhaustive, "Also search for equilibria invisible to the grid");
  c_ne->add_option("--csv", ne.csv, "Write the table here");

  TraceArgs tr;
  auto* c_tr = app.add_subcommand("trace", "Trajectory of a single pedestrian through a scenario");
  c_tr->add_option("scenario", tr.scenario, "Scenario JSON file")->required()->check(CLI::ExistingFile);
  c_tr->add_option("--start", tr.start, "Start point (x y)")->expected(2);
  c_tr->add_option("--policy", tr.policy, "optimal, gradient or stored")
      ->check(CLI::IsMember({"optimal", "gradient", "stored"}));
  c_tr->add_option("--dt", tr.dt, "Integration step")->check(CLI::PositiveNumber);
  c_tr->add_option("--csv", tr.csv, "Write the path here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*c_sim) return simulate(sim);
    if (*c_prof) return analyze_profile(prof);
    if (*c_ne) return find_ne(ne);
    if (*c_tr) return trace(tr);
  } catch (const ValidationError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return 2;
  } catch (const ConsistencyError& e) {
    std::cerr << "consistency error: " << e.what() << '\n';
    return 3;
  } catch (const ConvergenceError& e) {
    std::cerr << "convergence error: " << e.what() << '\n';
    return 4;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
