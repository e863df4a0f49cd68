#pragma once

#include "crowd/grid.hpp"

namespace crowd {

struct TransportState {
  ScalarField rho;  // ped / m^2
  double time = 0.0;
  double cumulative_inflow = 0.0;   // pedestrians
  double cumulative_outflow = 0.0;  // pedestrians
  double cumulative_clamped = 0.0;  // pedestrians added by clamping negatives
};

// One Lax-Friedrichs step of rho_t + div(rho V) = 0 for `crowd`. Obstacle
// faces and the grid edge carry no flux; a face into one of the crowd's exit
// cells carries rho max(V.n, 0) from the interior side, i.e. a zero-gradient
// ghost that only lets mass leave. Absorbing exit and obstacle cells hold
// rho = 0; non-absorbing exits are ordinary cells here.
TransportState lax_friedrichs_step(const Domain& domain, int crowd, const TransportState& state,
                                   const VectorField& velocity, double dt);

// Adds rate * dt / h to every inflow cell of the crowd.
TransportState apply_inflow(const Domain& domain, int crowd, const TransportState& state, double dt);

// Largest dt * |V| / h over the crowd's active cells.
double cfl_number(const Domain& domain, int crowd, const VectorField& velocity, double dt);

}  // namespace crowd
