#include "crowd/grid.hpp"

#include <algorithm>
#include <string>

#include "crowd/errors.hpp"

namespace crowd {

void GridSpec::validate() const {
  if (nx < 3 || ny < 3) {
    throw ConfigurationError("grid needs at least 3x3 cells, got " + std::to_string(nx) + "x" +
                             std::to_string(ny));
  }
  if (!(h > 0.0) || !std::isfinite(h)) {
    throw ConfigurationError("grid spacing h must be positive");
  }
}

bool GridSpec::inside(Vec2 p) const {
  const Vec2 e = extent();
  return p.x >= origin.x && p.y >= origin.y && p.x <= origin.x + e.x && p.y <= origin.y + e.y;
}

std::optional<std::pair<int, int>> GridSpec::locate(Vec2 p) const {
  if (!inside(p)) return std::nullopt;
  const int i = std::clamp(static_cast<int>(std::floor((p.x - origin.x) / h)), 0, nx - 1);
  const int j = std::clamp(static_cast<int>(std::floor((p.y - origin.y) / h)), 0, ny - 1);
  return std::pair{i, j};
}

Domain::Domain(const GridSpec& grid, int n_crowds) : grid_(grid) {
  grid_.validate();
  if (n_crowds < 1) throw ConfigurationError("domain needs at least one crowd");
  const auto n = static_cast<std::size_t>(grid_.size());
  obstacle_.assign(n, 0);
  exits_.assign(static_cast<std::size_t>(n_crowds), std::vector<std::uint8_t>(n, 0));
  inflow_.assign(static_cast<std::size_t>(n_crowds), std::vector<double>(n, 0.0));
}

void Domain::set_obstacle(int i, int j) {
  const int k = grid_.index(i, j);
  obstacle_[k] = 1;
  for (auto& e : exits_) e[k] = 0;
  for (auto& r : inflow_) r[k] = 0.0;
}

void Domain::set_exit(int i, int j, int crowd, bool absorbing) {
  const int k = grid_.index(i, j);
  if (obstacle_[k]) throw ConfigurationError("exit cell overlaps an obstacle");
  exits_.at(crowd)[k] = absorbing ? 1 : 2;
  inflow_.at(crowd)[k] = 0.0;
}

void Domain::set_inflow(int i, int j, int crowd, double rate) {
  if (!(rate >= 0.0)) throw ConfigurationError("inflow rate must be non-negative");
  const int k = grid_.index(i, j);
  if (obstacle_[k]) throw ConfigurationError("inflow cell overlaps an obstacle");
  if (exits_.at(crowd)[k]) throw ConfigurationError("inflow cell overlaps an exit of the same crowd");
  inflow_.at(crowd)[k] = rate;
}

bool Domain::has_exit(int crowd) const {
  const auto& e = exits_.at(crowd);
  return std::any_of(e.begin(), e.end(), [](std::uint8_t v) { return v != 0; });
}

CellRole Domain::role(int i, int j, int crowd) const {
  const int k = grid_.index(i, j);
  if (obstacle_[k]) return {CellKind::Obstacle, 0.0};
  if (exits_.at(crowd)[k]) return {CellKind::Exit, 0.0};
  if (inflow_.at(crowd)[k] > 0.0) return {CellKind::Inflow, inflow_[crowd][k]};
  return {CellKind::Free, 0.0};
}

namespace {

struct Stencil {
  int i0, j0, i1, j1;
  double fx, fy;
};

Stencil bilinear_stencil(const GridSpec& g, Vec2 p) {
  if (!g.inside(p)) {
    throw DomainError("bilinear_sample: point (" + std::to_string(p.x) + ", " +
                      std::to_string(p.y) + ") outside the grid extent");
  }
  const double sx = std::clamp((p.x - g.origin.x) / g.h - 0.5, 0.0, g.nx - 1.0);
  const double sy = std::clamp((p.y - g.origin.y) / g.h - 0.5, 0.0, g.ny - 1.0);
  const int i0 = std::min(static_cast<int>(sx), g.nx - 2);
  const int j0 = std::min(static_cast<int>(sy), g.ny - 2);
  return {i0, j0, i0 + 1, j0 + 1, sx - i0, sy - j0};
}

template <typename T>
T sample(const Field<T>& f, Vec2 p) {
  const Stencil s = bilinear_stencil(f.grid, p);
  const T a = f(s.i0, s.j0) * (1.0 - s.fx) + f(s.i1, s.j0) * s.fx;
  const T b = f(s.i0, s.j1) * (1.0 - s.fx) + f(s.i1, s.j1) * s.fx;
  return a * (1.0 - s.fy) + b * s.fy;
}

}  // namespace

double bilinear_sample(const ScalarField& field, Vec2 p) { return sample(field, p); }
Vec2 bilinear_sample(const VectorField& field, Vec2 p) { return sample(field, p); }

Gradient gradient(const ScalarField& field, int i, int j, std::span<const std::uint8_t> blocked,
                  double infinity) {
  const GridSpec& g = field.grid;
  auto usable = [&](int a, int b) {
    if (!g.contains(a, b)) return false;
    const int k = g.index(a, b);
    if (!blocked.empty() && blocked[k]) return false;
    return std::isfinite(field[k]) && field[k] < infinity;
  };
  const double center = field(i, j);
  bool any_axis = false;

  auto axis = [&](bool lo_ok, bool hi_ok, double lo, double hi) -> double {
    if (lo_ok && hi_ok) {
      any_axis = true;
      return (hi - lo) / (2.0 * g.h);
    }
    if (hi_ok) {
      any_axis = true;
      return (hi - center) / g.h;
    }
    if (lo_ok) {
      any_axis = true;
      return (center - lo) / g.h;
    }
    return 0.0;
  };

  const bool w = usable(i - 1, j), e = usable(i + 1, j);
  const bool s = usable(i, j - 1), n = usable(i, j + 1);
  const double gx = axis(w, e, w ? field(i - 1, j) : 0.0, e ? field(i + 1, j) : 0.0);
  const double gy = axis(s, n, s ? field(i, j - 1) : 0.0, n ? field(i, j + 1) : 0.0);
  Gradient out{{gx, gy}, false};
  if (!any_axis || (gx == 0.0 && gy == 0.0) || !std::isfinite(center)) out.degenerate = true;
  return out;
}

double total_mass(const ScalarField& rho) {
  double sum = 0.0;
  for (double v : rho.values) sum += v;
  return sum * rho.grid.cell_area();
}

}  // namespace crowd
