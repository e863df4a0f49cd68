#include "crowd/transport.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "crowd/errors.hpp"
#include "crowd/parallel.hpp"

namespace crowd {

namespace {

bool active(const Domain& d, int crowd, int k) { return !d.is_obstacle(k) && !d.is_sink(k, crowd); }

}  // namespace

double cfl_number(const Domain& domain, int crowd, const VectorField& velocity, double dt) {
  const GridSpec& g = domain.grid();
  double vmax = 0.0;
  for (int k = 0; k < g.size(); ++k) {
    if (active(domain, crowd, k)) vmax = std::max(vmax, norm(velocity[k]));
  }
  return dt * vmax / g.h;
}

TransportState lax_friedrichs_step(const Domain& domain, int crowd, const TransportState& state,
                                   const VectorField& velocity, double dt) {
  const GridSpec& g = domain.grid();
  if (!(state.rho.grid == g) || !(velocity.grid == g)) {
    throw ConfigurationError("transport fields do not match the domain grid");
  }
  if (!(dt > 0.0)) throw ConfigurationError("transport dt must be positive");
  const double cfl = cfl_number(domain, crowd, velocity, dt);
  if (!(cfl <= 1.0)) {
    throw NumericError("CFL violated: dt * max|V| / h = " + std::to_string(cfl));
  }

  const double h = g.h;
  const double diff = h / (4.0 * dt);
  const auto& rho = state.rho.values;
  std::vector<double> next(rho.size(), 0.0);
  std::vector<double> row_outflow(static_cast<std::size_t>(g.ny), 0.0);

  // Net outgoing flux per unit length through the face from k toward nb,
  // with unit normal n.
  auto face_flux = [&](int k, int i2, int j2, Vec2 n, double& outflow) -> double {
    if (!g.contains(i2, j2)) return 0.0;
    const int nb = g.index(i2, j2);
    if (domain.is_obstacle(nb)) return 0.0;
    const double vk = dot(velocity[k], n);
    if (domain.is_sink(nb, crowd)) {
      const double f = rho[static_cast<std::size_t>(k)] * std::max(vk, 0.0);
      outflow += f;
      return f;
    }
    const double vn = dot(velocity[nb], n);
    return 0.5 * (rho[static_cast<std::size_t>(k)] * vk + rho[static_cast<std::size_t>(nb)] * vn) -
           diff * (rho[static_cast<std::size_t>(nb)] - rho[static_cast<std::size_t>(k)]);
  };

  parallel_for(0, g.ny, [&](int j) {
    double out = 0.0;
    for (int i = 0; i < g.nx; ++i) {
      const int k = g.index(i, j);
      if (!active(domain, crowd, k)) continue;
      const double net = face_flux(k, i + 1, j, {1, 0}, out) + face_flux(k, i - 1, j, {-1, 0}, out) +
                         face_flux(k, i, j + 1, {0, 1}, out) + face_flux(k, i, j - 1, {0, -1}, out);
      next[static_cast<std::size_t>(k)] = rho[static_cast<std::size_t>(k)] - (dt / h) * net;
    }
    row_outflow[static_cast<std::size_t>(j)] = out;
  });

  TransportState out;
  out.rho = ScalarField(g, 0.0);
  out.time = state.time + dt;
  out.cumulative_inflow = state.cumulative_inflow;
  double outflow = 0.0;
  for (double r : row_outflow) outflow += r;
  out.cumulative_outflow = state.cumulative_outflow + outflow * dt * h;
  double clamped = 0.0;
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      const int k = g.index(i, j);
      double v = next[static_cast<std::size_t>(k)];
      if (!std::isfinite(v)) {
        throw NumericError("non-finite density at cell (" + std::to_string(i) + ", " + std::to_string(j) + ")",
                           i, j);
      }
      if (v < 0.0) {
        clamped -= v;
        v = 0.0;
      }
      out.rho[k] = v;
    }
  }
  out.cumulative_clamped = state.cumulative_clamped + clamped * g.cell_area();
  return out;
}

TransportState apply_inflow(const Domain& domain, int crowd, const TransportState& state, double dt) {
  const GridSpec& g = domain.grid();
  TransportState out = state;
  double added = 0.0;
  for (int k = 0; k < g.size(); ++k) {
    const double rate = domain.inflow_rate(k, crowd);
    if (rate < 0.0) throw DomainError("inflow rate must be non-negative");
    if (rate == 0.0 || !active(domain, crowd, k)) continue;
    out.rho[k] += rate * dt / g.h;
    added += rate * dt * g.h;
  }
  out.cumulative_inflow += added;
  return out;
}

}  // namespace crowd
