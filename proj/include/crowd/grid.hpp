#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "crowd/vec2.hpp"

namespace crowd {

// Uniform cell-centered grid. Cell (i, j) has its center at
// origin + ((i + 0.5) h, (j + 0.5) h); storage is row-major with j outer.
struct GridSpec {
  int nx = 0;
  int ny = 0;
  double h = 1.0;
  Vec2 origin{};

  void validate() const;

  int size() const { return nx * ny; }
  int index(int i, int j) const { return j * nx + i; }
  bool contains(int i, int j) const { return i >= 0 && j >= 0 && i < nx && j < ny; }
  Vec2 cell_center(int i, int j) const {
    return {origin.x + (i + 0.5) * h, origin.y + (j + 0.5) * h};
  }
  Vec2 extent() const { return {nx * h, ny * h}; }
  double diameter() const { return std::hypot(nx * h, ny * h); }
  double cell_area() const { return h * h; }
  bool inside(Vec2 p) const;
  // Index of the cell containing p, or nullopt outside the extent.
  std::optional<std::pair<int, int>> locate(Vec2 p) const;

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

template <typename T>
struct Field {
  GridSpec grid;
  std::vector<T> values;

  Field() = default;
  explicit Field(const GridSpec& g, T fill = T{})
      : grid(g), values(static_cast<std::size_t>(g.size()), fill) {}

  T& operator()(int i, int j) { return values[grid.index(i, j)]; }
  const T& operator()(int i, int j) const { return values[grid.index(i, j)]; }
  T& operator[](int k) { return values[k]; }
  const T& operator[](int k) const { return values[k]; }
};

using ScalarField = Field<double>;
using VectorField = Field<Vec2>;

enum class CellKind : std::uint8_t { Free, Obstacle, Exit, Inflow };

struct CellRole {
  CellKind kind = CellKind::Free;
  double inflow_rate = 0.0;  // pedestrians / m / s, Inflow only
};

// Grid plus the geometry shared by all crowds: a global obstacle mask and,
// per crowd, an exit (target) mask and inflow rates.
class Domain {
 public:
  Domain() = default;
  Domain(const GridSpec& grid, int n_crowds);

  const GridSpec& grid() const { return grid_; }
  int n_crowds() const { return static_cast<int>(exits_.size()); }

  void set_obstacle(int i, int j);
  // A non-absorbing exit is a target for path planning that mass cannot
  // leave through.
  void set_exit(int i, int j, int crowd, bool absorbing = true);
  void set_inflow(int i, int j, int crowd, double rate);

  bool is_obstacle(int i, int j) const { return obstacle_[grid_.index(i, j)] != 0; }
  bool is_obstacle(int k) const { return obstacle_[k] != 0; }
  bool is_exit(int i, int j, int crowd) const { return exits_[crowd][grid_.index(i, j)] != 0; }
  bool is_exit(int k, int crowd) const { return exits_[crowd][k] != 0; }
  bool is_sink(int k, int crowd) const { return exits_[crowd][k] == 1; }
  double inflow_rate(int k, int crowd) const { return inflow_[crowd][k]; }
  bool has_exit(int crowd) const;

  CellRole role(int i, int j, int crowd) const;

  std::span<const std::uint8_t> obstacle_mask() const { return obstacle_; }
  std::span<const std::uint8_t> exit_mask(int crowd) const { return exits_[crowd]; }

 private:
  GridSpec grid_;
  std::vector<std::uint8_t> obstacle_;
  std::vector<std::vector<std::uint8_t>> exits_;
  std::vector<std::vector<double>> inflow_;
};

// Bilinear interpolation of node (cell-center) values. Queries within half a
// cell of the boundary are clamped to the boundary nodes; queries outside the
// physical extent throw DomainError.
double bilinear_sample(const ScalarField& field, Vec2 p);
Vec2 bilinear_sample(const VectorField& field, Vec2 p);

struct Gradient {
  Vec2 value{};
  bool degenerate = false;
};

// Finite-difference gradient at cell (i, j). Central differences when both
// neighbors along an axis are usable, one-sided toward the single usable
// neighbor otherwise. A neighbor is unusable when it lies outside the grid,
// is blocked, or holds a value >= infinity. `degenerate` is set when no axis
// has a usable neighbor or the result is exactly zero.
Gradient gradient(const ScalarField& field, int i, int j,
                  std::span<const std::uint8_t> blocked = {},
                  double infinity = std::numeric_limits<double>::infinity());

double total_mass(const ScalarField& rho);

}  // namespace crowd
