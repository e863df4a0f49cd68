#include "crowd/profiles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "crowd/errors.hpp"
#include "crowd/quadrature.hpp"

namespace crowd {

void IsotropicSpeedModel::validate() const {
  if (!(v_bar > 0.0)) throw ConfigurationError("free-flow speed v_bar must be positive");
  if (!(drake_alpha >= 0.0)) throw ConfigurationError("drake alpha must be non-negative");
}

double IsotropicSpeedModel::speed(double rho) const { return isotropic_speed(*this, rho); }

double isotropic_speed(const IsotropicSpeedModel& model, double rho) {
  if (!(rho >= 0.0)) throw DomainError("isotropic_speed: density must be non-negative");
  return model.v_bar * std::exp(-model.drake_alpha * rho * rho);
}

double PenaltyModel::load(double rho_bar) const {
  switch (kind) {
    case PenaltyKind::SquaredDensity: return strength * rho_bar * rho_bar;
    case PenaltyKind::LinearDensity: return strength * rho_bar;
    case PenaltyKind::Teardrop: return strength * rho_bar;
  }
  return 0.0;
}

void PenaltyModel::validate() const {
  // Zero strength is accepted: it is the isotropic limit used in comparisons.
  if (!(strength >= 0.0) || !std::isfinite(strength)) {
    throw ConfigurationError("penalty strength must be a non-negative number");
  }
}

std::string to_string(PenaltyKind kind) {
  switch (kind) {
    case PenaltyKind::SquaredDensity: return "squared";
    case PenaltyKind::LinearDensity: return "linear";
    case PenaltyKind::Teardrop: return "teardrop";
  }
  return "?";
}

PenaltyKind penalty_kind_from_string(const std::string& name) {
  if (name == "squared") return PenaltyKind::SquaredDensity;
  if (name == "linear") return PenaltyKind::LinearDensity;
  if (name == "teardrop") return PenaltyKind::Teardrop;
  throw ValidationError("unknown penalty model '" + name + "'");
}

double penalty_factor(const PenaltyModel& model, double rho_bar, double psi) {
  if (!(rho_bar >= 0.0)) throw DomainError("penalty_factor: density must be non-negative");
  const double load = model.load(rho_bar);
  if (model.kind == PenaltyKind::Teardrop) {
    const double m = wrap_angle(psi) - kPi;
    return std::exp(-load * (kPi * kPi - m * m));
  }
  return std::exp(-load * (1.0 - std::cos(psi)));
}

namespace {

void require_smooth(const PenaltyModel& model, const char* op) {
  if (!model.smooth()) {
    throw UnsupportedModelError(std::string(op) + ": the teardrop penalty is not smooth");
  }
}

}  // namespace

PenaltyDerivatives penalty_derivatives(const PenaltyModel& model, double rho_bar, double psi) {
  require_smooth(model, "penalty_derivatives");
  const double f = penalty_factor(model, rho_bar, psi);
  const double load = model.load(rho_bar);
  const double s = std::sin(psi);
  const double c = std::cos(psi);
  return {f, -load * s * f, (load * load * s * s - load * c) * f};
}

double convexity_condition(const PenaltyModel& model, double rho_bar, double psi) {
  const PenaltyDerivatives d = penalty_derivatives(model, rho_bar, psi);
  return d.f * d.f + 2.0 * d.df * d.df - d.f * d.d2f;
}

double critical_density(const PenaltyModel& model) {
  require_smooth(model, "critical_density");
  if (!(model.strength > 0.0)) return std::numeric_limits<double>::infinity();
  if (model.kind == PenaltyKind::SquaredDensity) return std::sqrt(1.0 / model.strength);
  return 1.0 / model.strength;
}

double head_on_slowdown(const PenaltyModel& model) {
  return penalty_factor(model, 1.0, 0.0) - penalty_factor(model, 1.0, kPi);
}

// ---------------------------------------------------------------------------
// VelocityProfile

VelocityProfile::VelocityProfile(std::vector<Vec2> velocities, ProfileSource source)
    : velocities_(std::move(velocities)), source_(source) {
  if (velocities_.size() < 3) throw GeometryError("velocity profile needs at least 3 samples");
  classify();
}

const std::vector<Vec2>& unit_directions(int n) {
  thread_local std::vector<std::pair<int, std::vector<Vec2>>> cache;
  for (const auto& entry : cache) {
    if (entry.first == n) return entry.second;
  }
  std::vector<Vec2> dirs(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) dirs[static_cast<std::size_t>(k)] = unit_vector(kTwoPi * k / n);
  cache.emplace_back(n, std::move(dirs));
  return cache.back().second;
}


VelocityProfile VelocityProfile::from_function(int n_samples,
                                               const std::function<Vec2(double)>& fn,
                                               ProfileSource source) {
  if (n_samples < 3) throw GeometryError("velocity profile needs at least 3 samples");
  std::vector<Vec2> v(static_cast<std::size_t>(n_samples));
  const double d = kTwoPi / n_samples;
  for (int k = 0; k < n_samples; ++k) v[static_cast<std::size_t>(k)] = fn(k * d);
  return VelocityProfile(std::move(v), source);
}

VelocityProfile VelocityProfile::circle(double radius, int n_samples, ProfileSource source) {
  if (n_samples < 3) throw GeometryError("velocity profile needs at least 3 samples");
  const auto& dirs = unit_directions(n_samples);
  std::vector<Vec2> v(dirs.size());
  for (std::size_t k = 0; k < dirs.size(); ++k) v[k] = radius * dirs[k];
  if (!(radius > 0.0)) return VelocityProfile(std::move(v), source);
  // Known shape: skip the classification scan.
  VelocityProfile p;
  p.velocities_ = std::move(v);
  p.source_ = source;
  p.isotropic_speed_ = radius;
  p.min_speed_ = p.max_speed_ = p.min_radial_ = radius;
  return p;
}

void VelocityProfile::classify() {
  isotropic_speed_.reset();
  const auto& dirs = unit_directions(size());
  double min2 = std::numeric_limits<double>::infinity();
  double max2 = 0.0;
  min_radial_ = std::numeric_limits<double>::infinity();
  const double r0 = norm(velocities_[0]);
  const double tol = 1e-12 * r0;
  bool round = r0 > 0.0;
  for (std::size_t k = 0; k < velocities_.size(); ++k) {
    const Vec2 v = velocities_[k];
    const double r2 = v.x * v.x + v.y * v.y;
    min2 = std::min(min2, r2);
    max2 = std::max(max2, r2);
    min_radial_ = std::min(min_radial_, dot(v, dirs[k]));
    if (round) {
      const Vec2 diff = v - r0 * dirs[k];
      round = std::abs(diff.x) <= tol && std::abs(diff.y) <= tol;
    }
  }
  min_speed_ = std::sqrt(min2);
  max_speed_ = std::sqrt(max2);
  if (round) isotropic_speed_ = r0;
}

Vec2 VelocityProfile::velocity_at(double theta) const {
  // Periodic Catmull-Rom: exact at the nodes and C1, so a golden-section
  // search between samples sees a smooth objective.
  const double s = wrap_angle(theta) / spacing();
  const int n = size();
  int k = static_cast<int>(s);
  if (k >= n) k = n - 1;
  const double t = s - k;
  auto at = [&](int m) -> const Vec2& { return velocities_[static_cast<std::size_t>((m + n) % n)]; };
  const Vec2& p0 = at(k - 1);
  const Vec2& p1 = at(k);
  const Vec2& p2 = at(k + 1);
  const Vec2& p3 = at(k + 2);
  const double t2 = t * t;
  const double t3 = t2 * t;
  return 0.5 * ((2.0 * p1) + (p2 - p0) * t + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t2 +
                (3.0 * p1 - p0 - 3.0 * p2 + p3) * t3);
}

VelocityProfile VelocityProfile::rotated(double angle) const {
  // Sample k of the result is the rotated velocity for direction theta_k,
  // which came from direction theta_k - angle of this profile.
  const int n = size();
  std::vector<Vec2> out(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) out[static_cast<std::size_t>(k)] = rotate(velocity_at(theta(k) - angle), angle);
  return VelocityProfile(std::move(out), source_);
}

VelocityProfile intercrowd_profile(const IsotropicSpeedModel& iso, const PenaltyModel& pen,
                                   double rho_self, double rho_other, Vec2 u_other,
                                   int n_samples) {
  if (n_samples < 64) throw GeometryError("inter-crowd profile needs at least 64 samples");
  const double base = iso.speed(rho_self + rho_other);
  const double un = norm(u_other);
  if (un == 0.0 || pen.load(rho_other) < kNegligibleLoad) {
    return VelocityProfile::circle(base, n_samples, ProfileSource::InterCrowd);
  }
  const auto& dirs = unit_directions(n_samples);
  std::vector<Vec2> v(dirs.size());
  const Vec2 w = u_other / un;
  const double load = pen.load(rho_other);
  for (std::size_t k = 0; k < dirs.size(); ++k) {
    const double c = dot(w, dirs[k]);
    const double f = pen.smooth() ? std::exp(-load * (1.0 - c))
                                  : penalty_factor(pen, rho_other, std::atan2(cross(w, dirs[k]), c));
    v[k] = (base * f) * dirs[k];
  }
  return VelocityProfile(std::move(v), ProfileSource::InterCrowd);
}

ConvexityReport profile_is_strictly_convex(const VelocityProfile& profile) {
  const int n = profile.size();
  if (n < 64) throw GeometryError("convexity check needs at least 64 samples");
  const double scale = profile.max_speed();
  for (int k = 0; k < n; ++k) {
    if (norm(profile.velocity((k + 1) % n) - profile.velocity(k)) <= 1e-14 * scale) {
      throw GeometryError("degenerate velocity profile: repeated sample at theta = " +
                          std::to_string(profile.theta(k)));
    }
  }
  const double d = profile.spacing();
  ConvexityReport report;
  report.min_cross = std::numeric_limits<double>::infinity();
  for (int k = 0; k < n; ++k) {
    const Vec2& prev = profile.velocity((k + n - 1) % n);
    const Vec2& cur = profile.velocity(k);
    const Vec2& next = profile.velocity((k + 1) % n);
    const Vec2 d1 = (next - prev) / (2.0 * d);
    const Vec2 d2 = (next - 2.0 * cur + prev) / (d * d);
    const double c = cross(d1, d2);
    if (c < report.min_cross) report.min_cross = c;
    if (report.strictly_convex && c <= -kConvexityTolerance) {
      report.strictly_convex = false;
      report.first_violation_theta = profile.theta(k);
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Non-local sector sensing

void SectorSensing::validate() const {
  if (!(strength >= 0.0)) throw ConfigurationError("sensing strength F must be non-negative");
  if (!(radius > 0.0)) throw ConfigurationError("sensing radius R must be positive");
  if (!(sector_angle > 0.0 && sector_angle <= kTwoPi)) {
    throw ConfigurationError("sensing sector angle must lie in (0, 2 pi]");
  }
  if (cutoff && !(*cutoff > 0.0)) throw ConfigurationError("sensing cutoff C must be positive");
}

namespace {

struct Panel {
  double r0, r1;
  bool inner;  // |r| <= 1/C branch
};

// One quadrature pass at the given resolution.
Vec2 integrate_sector(const SectorSensing& s, const DensityFunction& rho, Vec2 x, double theta,
                      int n_radial, int n_angular, const RegionPredicate& inside) {
  std::vector<Panel> panels;
  if (s.cutoff && 1.0 / *s.cutoff < s.radius) {
    panels.push_back({0.0, 1.0 / *s.cutoff, true});
    panels.push_back({1.0 / *s.cutoff, s.radius, false});
  } else {
    panels.push_back({0.0, s.radius, s.cutoff.has_value()});
  }
  const GaussLegendreRule& gl = gauss_legendre(n_radial);
  const double dgamma = s.sector_angle / n_angular;
  const double gamma0 = theta - 0.5 * s.sector_angle;
  Vec2 total{};
  for (int a = 0; a < n_angular; ++a) {
    const double gamma = gamma0 + (a + 0.5) * dgamma;
    const Vec2 e = unit_vector(gamma);
    double radial = 0.0;
    for (const Panel& p : panels) {
      const double half = 0.5 * (p.r1 - p.r0);
      const double mid = 0.5 * (p.r1 + p.r0);
      for (std::size_t q = 0; q < gl.nodes.size(); ++q) {
        const double r = mid + half * gl.nodes[q];
        const Vec2 y = x + r * e;
        if (inside && !inside(y)) continue;
        // Kernel magnitude times the polar Jacobian r:
        // F outside the cutoff, F C r inside.
        const double kernel = p.inner ? s.strength * *s.cutoff * r : s.strength;
        radial += gl.weights[q] * half * kernel * rho(y);
      }
    }
    total -= (radial * dgamma) * e;
  }
  return total;
}

}  // namespace

InteractionResult interaction_velocity(const SectorSensing& sensing, const DensityFunction& rho,
                                       Vec2 x, Vec2 u, const QuadratureOptions& options,
                                       const RegionPredicate& inside) {
  sensing.validate();
  const double un = norm(u);
  if (!(un > 0.0)) throw DomainError("interaction_velocity: direction must be nonzero");
  const double theta = angle_of(u);
  const Vec2 u_hat = u / un;
  int n_r = options.radial_nodes;
  int n_a = options.angular_nodes;
  Vec2 w = integrate_sector(sensing, rho, x, theta, n_r, n_a, inside);
  InteractionResult result;
  for (int d = 0; d < options.max_doublings; ++d) {
    n_r *= 2;
    n_a *= 2;
    const Vec2 w2 = integrate_sector(sensing, rho, x, theta, n_r, n_a, inside);
    const double change = norm(w2 - w);
    // Relative to the returned velocity: near-cancelling u + w needs the tighter bound.
    const double scale = std::max(std::min(norm(w2), norm(u_hat + w2)), 1e-300);
    result.rel_change = (change == 0.0) ? 0.0 : change / scale;
    result.doublings = d + 1;
    w = w2;
    if (result.rel_change < options.rel_tol) break;
  }
  result.accuracy_warning = result.rel_change >= options.rel_tol;
  result.interaction = w;
  result.velocity = u_hat + w;
  return result;
}

InteractionResult interaction_velocity(const SectorSensing& sensing, const ScalarField& rho,
                                       Vec2 x, Vec2 u, const QuadratureOptions& options,
                                       std::span<const std::uint8_t> blocked) {
  const GridSpec& g = rho.grid;
  auto density = [&](Vec2 y) { return bilinear_sample(rho, y); };
  auto inside = [&](Vec2 y) {
    const auto cell = g.locate(y);
    if (!cell) return false;
    return blocked.empty() || blocked[g.index(cell->first, cell->second)] == 0;
  };
  return interaction_velocity(sensing, density, x, u, options, inside);
}

VelocityProfile nonlocal_profile(const SectorSensing& sensing, const DensityFunction& rho, Vec2 x,
                                 int n_samples, const QuadratureOptions& options,
                                 const RegionPredicate& inside) {
  return VelocityProfile::from_function(
      n_samples,
      [&](double t) { return interaction_velocity(sensing, rho, x, unit_vector(t), options, inside).velocity; },
      ProfileSource::NonLocal);
}

LinearDensityCoeffs linear_density_coeffs(const SectorSensing& sensing, double rho0, double rho_x) {
  if (sensing.cutoff) {
    throw UnsupportedModelError("closed-form linear profile requires an unbounded cutoff");
  }
  const double F = sensing.strength;
  const double R = sensing.radius;
  const double a = sensing.sector_angle;
  return {1.0 - 2.0 * F * rho0 * R * std::sin(0.5 * a), F * rho_x * R * R * std::sin(a),
          F * rho_x * R * R * a};
}

Vec2 closed_form_linear_velocity(const LinearDensityCoeffs& c, double theta) {
  return Vec2{-0.25 * c.c3, 0.0} + c.c1 * unit_vector(theta) - (0.25 * c.c2) * unit_vector(2.0 * theta);
}

VelocityProfile closed_form_linear_profile(const LinearDensityCoeffs& c, int n_samples) {
  return VelocityProfile::from_function(
      n_samples, [&](double t) { return closed_form_linear_velocity(c, t); },
      ProfileSource::ClosedForm);
}

bool origin_containment(const LinearDensityCoeffs& c) {
  // min over theta of c1 - (c2 + c3) cos(theta) / 4; reduces to
  // c1 - (c2 + c3) / 4 when rho_x >= 0.
  return c.c1 - 0.25 * std::abs(c.c2 + c.c3) > 0.0;
}

bool linear_profile_convex(const LinearDensityCoeffs& c) {
  // Minimum over theta of c1^2 + c2^2/2 + 1.5 c1 c2 cos(theta); equals
  // (c1 - c2)(2 c1 - c2) / 2 when c1 c2 >= 0.
  const double a = std::abs(c.c1);
  const double b = std::abs(c.c2);
  return 0.5 * (a - b) * (2.0 * a - b) > 0.0;
}

double safe_sector_angle_threshold() {
  // g(a) = 3 sin a - a: g(pi/2) > 0, g(pi) < 0, single root between.
  double lo = 0.5 * kPi;
  double hi = kPi;
  while (hi - lo > 1e-13) {
    const double mid = 0.5 * (lo + hi);
    if (3.0 * std::sin(mid) - mid > 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace crowd
