#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "crowd/grid.hpp"
#include "crowd/vec2.hpp"

namespace crowd {

// Drake-type fundamental diagram v(rho) = v_bar * exp(-alpha rho^2).
struct IsotropicSpeedModel {
  double v_bar = 1.0;
  double drake_alpha = 0.075;  // m^4

  void validate() const;
  double speed(double rho) const;
};

enum class PenaltyKind { SquaredDensity, LinearDensity, Teardrop };

// Multiplicative "disagreement penalty" f(rho_bar, psi) applied to a crowd's
// speed, where rho_bar is the density of the other crowd and psi the angle
// between the two crowds' directions.
struct PenaltyModel {
  PenaltyKind kind = PenaltyKind::SquaredDensity;
  double strength = 0.0;  // beta for the exponential-cosine variants, C for Teardrop

  static PenaltyModel squared(double beta) { return {PenaltyKind::SquaredDensity, beta}; }
  static PenaltyModel linear(double beta) { return {PenaltyKind::LinearDensity, beta}; }
  static PenaltyModel teardrop(double c) { return {PenaltyKind::Teardrop, c}; }

  bool smooth() const { return kind != PenaltyKind::Teardrop; }
  // beta * rho^2 or beta * rho; the single number every smooth analysis uses.
  double load(double rho_bar) const;
  void validate() const;

  friend bool operator==(const PenaltyModel&, const PenaltyModel&) = default;
};

std::string to_string(PenaltyKind kind);
PenaltyKind penalty_kind_from_string(const std::string& name);

double isotropic_speed(const IsotropicSpeedModel& model, double rho);

double penalty_factor(const PenaltyModel& model, double rho_bar, double psi);

struct PenaltyDerivatives {
  double f = 1.0;
  double df = 0.0;   // d f / d psi
  double d2f = 0.0;  // d^2 f / d psi^2
};

PenaltyDerivatives penalty_derivatives(const PenaltyModel& model, double rho_bar, double psi);

// f^2 + 2 f'^2 - f f''. Positive iff the polar curve psi -> f(psi) is
// locally strictly convex at psi.
double convexity_condition(const PenaltyModel& model, double rho_bar, double psi);

// Density of the other crowd above which the profile stops being strictly
// convex: sqrt(1/beta) for the squared model, 1/beta for the linear one.
double critical_density(const PenaltyModel& model);

// Head-on slowdown f(1, 0) - f(1, pi).
double head_on_slowdown(const PenaltyModel& model);

enum class ProfileSource { InterCrowd, NonLocal, ClosedForm, Custom };

// Closed polar curve theta -> v(theta) sampled at n uniform angles
// theta_k = 2 pi k / n.
class VelocityProfile {
 public:
  VelocityProfile() = default;
  VelocityProfile(std::vector<Vec2> velocities, ProfileSource source);

  static VelocityProfile from_function(int n_samples, const std::function<Vec2(double)>& fn,
                                       ProfileSource source = ProfileSource::Custom);
  static VelocityProfile circle(double radius, int n_samples = 256, ProfileSource source = ProfileSource::Custom);

  int size() const { return static_cast<int>(velocities_.size()); }
  double spacing() const { return kTwoPi / size(); }
  double theta(int k) const { return k * spacing(); }
  const Vec2& velocity(int k) const { return velocities_[static_cast<std::size_t>(k)]; }
  const std::vector<Vec2>& velocities() const { return velocities_; }
  ProfileSource source() const { return source_; }

  // Periodic cubic interpolation between samples; exact at the nodes.
  Vec2 velocity_at(double theta) const;

  // Set when every sample satisfies v(theta) = r (cos theta, sin theta) with
  // a common r (relative tolerance 1e-12).
  std::optional<double> isotropic_speed() const { return isotropic_speed_; }
  double min_speed() const { return min_speed_; }
  double max_speed() const { return max_speed_; }
  // Smallest component of a sample along its own direction theta_k.
  double min_radial_speed() const { return min_radial_; }

  VelocityProfile rotated(double angle) const;

 private:
  void classify();

  std::vector<Vec2> velocities_;
  ProfileSource source_ = ProfileSource::Custom;
  std::optional<double> isotropic_speed_;
  double min_speed_ = 0.0;
  double max_speed_ = 0.0;
  double min_radial_ = 0.0;
};

inline constexpr int kDefaultProfileSamples = 256;

// Penalty loads below this leave every factor within a few ulps of 1;
// intercrowd_profile returns an exact circle there.
inline constexpr double kNegligibleLoad = 1e-15;

// Unit vectors at theta_k = 2 pi k / n, cached per n and thread.
const std::vector<Vec2>& unit_directions(int n);

// Velocity profile of one crowd under the penalty model:
// v(theta) = iso.speed(rho_self + rho_other) * f(rho_other, psi(theta)) * u(theta),
// psi(theta) the angle between u(theta) and u_other. A zero u_other means no
// directional interaction (f = 1).
VelocityProfile intercrowd_profile(const IsotropicSpeedModel& iso, const PenaltyModel& pen,
                                   double rho_self, double rho_other, Vec2 u_other,
                                   int n_samples = kDefaultProfileSamples);

struct ConvexityReport {
  bool strictly_convex = true;
  double first_violation_theta = 0.0;
  double min_cross = 0.0;
};

inline constexpr double kConvexityTolerance = 1e-9;

// Signs of v' x v'' from periodic central differences at every sample. A
// sample with v' x v'' <= -1e-9 is a violation.
ConvexityReport profile_is_strictly_convex(const VelocityProfile& profile);

// Sector-shaped sensing region of a pedestrian for non-local interaction.
struct SectorSensing {
  double strength = 1.0;       // F
  double radius = 1.0;         // R
  double sector_angle = kPi;   // radians, (0, 2 pi]
  std::optional<double> cutoff;  // C; nullopt = unbounded

  void validate() const;
};

using DensityFunction = std::function<double(Vec2)>;
using RegionPredicate = std::function<bool(Vec2)>;

struct QuadratureOptions {
  int radial_nodes = 32;
  int angular_nodes = 64;
  int max_doublings = 3;
  double rel_tol = 1e-4;
};

struct InteractionResult {
  Vec2 interaction{};  // w_i
  Vec2 velocity{};     // u + w_i
  double rel_change = 0.0;
  int doublings = 0;
  bool accuracy_warning = false;
};

// w_i = integral over S(x, u) ∩ Omega of F(y - x) rho(y) dy with
// F(r) = -F r / |r|^2 beyond 1/C and -F C r / |r| inside it, by radial
// Gauss-Legendre times uniform angular quadrature. `inside` restricts the
// integration domain; empty means the whole plane.
InteractionResult interaction_velocity(const SectorSensing& sensing, const DensityFunction& rho,
                                       Vec2 x, Vec2 u, const QuadratureOptions& options = {},
                                       const RegionPredicate& inside = {});

// Density given on a grid: sampled bilinearly, with points outside the grid
// extent or in obstacle cells treated as outside Omega.
InteractionResult interaction_velocity(const SectorSensing& sensing, const ScalarField& rho,
                                       Vec2 x, Vec2 u, const QuadratureOptions& options = {},
                                       std::span<const std::uint8_t> blocked = {});

VelocityProfile nonlocal_profile(const SectorSensing& sensing, const DensityFunction& rho, Vec2 x,
                                 int n_samples = kDefaultProfileSamples,
                                 const QuadratureOptions& options = {},
                                 const RegionPredicate& inside = {});

struct LinearDensityCoeffs {
  double c1 = 1.0;
  double c2 = 0.0;
  double c3 = 0.0;
};

// Coefficients of the closed-form profile for rho = rho0 + rho_x * x seen
// from the pedestrian's position, unbounded cutoff:
// c1 = 1 - 2 F rho0 R sin(a/2), c2 = F rho_x R^2 sin a, c3 = F rho_x R^2 a.
LinearDensityCoeffs linear_density_coeffs(const SectorSensing& sensing, double rho0, double rho_x);

// v(theta) = (-c3/4, 0) + c1 (cos t, sin t) - (c2/4) (cos 2t, sin 2t).
Vec2 closed_form_linear_velocity(const LinearDensityCoeffs& c, double theta);
VelocityProfile closed_form_linear_profile(const LinearDensityCoeffs& c,
                                           int n_samples = kDefaultProfileSamples);

// The component of v(theta) along u(theta), c1 - (c2 + c3) cos(theta) / 4,
// is positive for every theta.
bool origin_containment(const LinearDensityCoeffs& c);

// c1^2 + c2^2 / 2 + (3/2) c1 c2 cos(theta) > 0 for every theta.
bool linear_profile_convex(const LinearDensityCoeffs& c);

// Positive root of a = 3 sin a. Above it, origin containment implies strict
// convexity for every linear density.
double safe_sector_angle_threshold();

}  // namespace crowd
