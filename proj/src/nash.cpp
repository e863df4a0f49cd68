#include "crowd/nash.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "crowd/errors.hpp"

namespace crowd {

namespace {

constexpr double kInvPhi = 0.6180339887498949;

template <typename F>
double golden_max(F&& f, double lo, double hi) {
  double a = lo;
  double b = hi;
  double c = b - kInvPhi * (b - a);
  double d = a + kInvPhi * (b - a);
  double fc = f(c);
  double fd = f(d);
  for (int it = 0; it < 100 && b - a > 1e-14; ++it) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kInvPhi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kInvPhi * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

struct Refined {
  double x = 0.0;
  double value = 0.0;
};

// Global max of a 2 pi periodic function: n samples, golden polish of the
// best one. `tie` receives true when another local maximizer more than two
// spacings away comes within tie_tol.
template <typename F>
Refined periodic_max(F&& fn, int n, double tie_tol, bool* tie) {
  const double step = kTwoPi / n;
  std::vector<double> vals(static_cast<std::size_t>(n));
  int best = 0;
  for (int k = 0; k < n; ++k) {
    vals[static_cast<std::size_t>(k)] = fn(k * step);
    if (vals[static_cast<std::size_t>(k)] > vals[static_cast<std::size_t>(best)]) best = k;
  }
  auto refine = [&](int k) {
    const double x = golden_max(fn, (k - 1) * step, (k + 1) * step);
    Refined r{x, fn(x)};
    if (vals[static_cast<std::size_t>(k)] > r.value) r = {k * step, vals[static_cast<std::size_t>(k)]};
    return r;
  };
  Refined out = refine(best);
  if (tie) {
    *tie = false;
    for (int k = 0; k < n; ++k) {
      const double v = vals[static_cast<std::size_t>(k)];
      if (v < vals[static_cast<std::size_t>((k + n - 1) % n)] || v < vals[static_cast<std::size_t>((k + 1) % n)]) {
        continue;
      }
      const int sep = std::min(std::abs(k - best), n - std::abs(k - best));
      if (sep <= 2) continue;
      if (v < out.value - 1e-3) continue;
      if (refine(k).value >= out.value - tie_tol) {
        *tie = true;
        break;
      }
    }
  }
  out.x = wrap_angle(out.x);
  return out;
}

double circ_dist(double x, double y) { return std::abs(wrap_signed(x - y)); }

// Payoff and derivatives of one player in its own angle (s) and the
// other's (o).
struct Local {
  double j = 0.0;
  double js = 0.0;
  double jss = 0.0;
  double jso = 0.0;
};

Local local_a(const PointGame& g, double a, double b) {
  const PenaltyDerivatives d = penalty_derivatives(g.pen_a, g.rho_b, g.psi(a, b));
  const double s = std::sin(a);
  const double c = std::cos(a);
  return {c * d.f, -s * d.f + c * d.df, -c * d.f - 2.0 * s * d.df + c * d.d2f, s * d.df - c * d.d2f};
}

Local local_b(const PointGame& g, double a, double b) {
  const PenaltyDerivatives d = penalty_derivatives(g.pen_b, g.rho_a, g.psi(a, b));
  const double s = std::sin(b);
  const double c = std::cos(b);
  return {c * d.f, -s * d.f - c * d.df, -c * d.f + 2.0 * s * d.df + c * d.d2f, -s * d.df - c * d.d2f};
}

// Newton on both first-order conditions. Returns nullopt when it wanders or
// the Jacobian degenerates.
std::optional<std::pair<double, double>> newton_polish(const PointGame& g, double a, double b) {
  for (int it = 0; it < 60; ++it) {
    const Local la = local_a(g, a, b);
    const Local lb = local_b(g, a, b);
    const double det = la.jss * lb.jss - la.jso * lb.jso;
    if (!(std::abs(det) > 1e-300)) return std::nullopt;
    double da = (la.js * lb.jss - la.jso * lb.js) / det;
    double db = (la.jss * lb.js - lb.jso * la.js) / det;
    const double len = std::hypot(da, db);
    if (len > 0.1) {
      da *= 0.1 / len;
      db *= 0.1 / len;
    }
    a -= da;
    b -= db;
    if (std::hypot(la.js, lb.js) < 1e-14 || len < 1e-15) {
      return std::pair{wrap_angle(a), wrap_angle(b)};
    }
  }
  const Local la = local_a(g, a, b);
  const Local lb = local_b(g, a, b);
  if (std::hypot(la.js, lb.js) < 1e-11) return std::pair{wrap_angle(a), wrap_angle(b)};
  return std::nullopt;
}

// Largest gain either player gets by deviating from (a, b), on a grid of
// n samples plus golden refinement.
double deviation_gain(const PointGame& g, double a, double b, int n) {
  const Refined ra = periodic_max([&](double x) { return g.payoff_a(x, b); }, n, 0.0, nullptr);
  const Refined rb = periodic_max([&](double y) { return g.payoff_b(a, y); }, n, 0.0, nullptr);
  return std::max({0.0, ra.value - g.payoff_a(a, b), rb.value - g.payoff_b(a, b)});
}

// Grid quantities over plane angles theta_k = 2 pi k / n.
class GameGrid {
 public:
  GameGrid(const PointGame& g, int n) : n_(n) {
    const double step = kTwoPi / n;
    const double oa = g.origin_a();
    const double ob = g.origin_b();
    cos_a_.resize(static_cast<std::size_t>(n));
    cos_b_.resize(static_cast<std::size_t>(n));
    f_a_.resize(static_cast<std::size_t>(n));
    f_b_.resize(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
      const double t = k * step;
      cos_a_[static_cast<std::size_t>(k)] = std::cos(t - oa);
      cos_b_[static_cast<std::size_t>(k)] = std::cos(t - ob);
      // psi = a_rel - b_rel + delta equals the plane angle difference.
      f_a_[static_cast<std::size_t>(k)] = g.f_a(t);
      f_b_[static_cast<std::size_t>(k)] = g.f_b(t);
    }
    col_max_a_.assign(static_cast<std::size_t>(n), -std::numeric_limits<double>::infinity());
    row_max_b_.assign(static_cast<std::size_t>(n), -std::numeric_limits<double>::infinity());
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        col_max_a_[static_cast<std::size_t>(j)] = std::max(col_max_a_[static_cast<std::size_t>(j)], ja(i, j));
        row_max_b_[static_cast<std::size_t>(i)] = std::max(row_max_b_[static_cast<std::size_t>(i)], jb(i, j));
      }
    }
  }

  int n() const { return n_; }
  double ja(int i, int j) const {
    return cos_a_[static_cast<std::size_t>(i)] * f_a_[static_cast<std::size_t>(((i - j) % n_ + n_) % n_)];
  }
  double jb(int i, int j) const {
    return cos_b_[static_cast<std::size_t>(j)] * f_b_[static_cast<std::size_t>(((i - j) % n_ + n_) % n_)];
  }
  double gain(int i, int j) const {
    return std::max(col_max_a_[static_cast<std::size_t>(j)] - ja(i, j), row_max_b_[static_cast<std::size_t>(i)] - jb(i, j));
  }
  void gain_row(int i, std::vector<double>& out) const {
    out.resize(static_cast<std::size_t>(n_));
    const int ii = ((i % n_) + n_) % n_;
    for (int j = 0; j < n_; ++j) out[static_cast<std::size_t>(j)] = gain(ii, j);
  }

 private:
  int n_;
  std::vector<double> cos_a_, cos_b_, f_a_, f_b_, col_max_a_, row_max_b_;
};

struct GridHit {
  int i = 0;
  int j = 0;
  double gain = 0.0;
};

// Cells of the gain surface that are <= all 8 periodic neighbors.
std::vector<GridHit> gain_local_minima(const GameGrid& grid, double bound) {
  const int n = grid.n();
  std::vector<double> prev, cur, next;
  grid.gain_row(n - 1, prev);
  grid.gain_row(0, cur);
  std::vector<GridHit> out;
  for (int i = 0; i < n; ++i) {
    grid.gain_row(i + 1, next);
    for (int j = 0; j < n; ++j) {
      const double v = cur[static_cast<std::size_t>(j)];
      if (v > bound) continue;
      bool is_min = true;
      for (int dj = -1; dj <= 1 && is_min; ++dj) {
        const auto jj = static_cast<std::size_t>(((j + dj) % n + n) % n);
        if (prev[jj] < v || next[jj] < v || (dj != 0 && cur[jj] < v)) is_min = false;
      }
      if (is_min) out.push_back({i, j, v});
    }
    std::swap(prev, cur);
    std::swap(cur, next);
  }
  return out;
}

std::vector<GridHit> grid_equilibria(const GameGrid& grid, double eps) {
  const int n = grid.n();
  std::vector<GridHit> out;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double gn = grid.gain(i, j);
      if (gn <= eps) out.push_back({i, j, gn});
    }
  }
  return out;
}

// Single-linkage clusters of grid hits within `radius` cells in both
// coordinates (periodic).
std::vector<std::vector<int>> cluster_hits(const std::vector<GridHit>& hits, int n, int radius) {
  std::vector<int> parent(hits.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  };
  std::unordered_map<long long, int> where;
  for (std::size_t h = 0; h < hits.size(); ++h) {
    where[static_cast<long long>(hits[h].i) * n + hits[h].j] = static_cast<int>(h);
  }
  for (std::size_t h = 0; h < hits.size(); ++h) {
    for (int di = -radius; di <= radius; ++di) {
      for (int dj = -radius; dj <= radius; ++dj) {
        const int ii = ((hits[h].i + di) % n + n) % n;
        const int jj = ((hits[h].j + dj) % n + n) % n;
        auto it = where.find(static_cast<long long>(ii) * n + jj);
        if (it == where.end()) continue;
        const int ra = find(static_cast<int>(h));
        const int rb = find(it->second);
        if (ra != rb) parent[static_cast<std::size_t>(ra)] = rb;
      }
    }
  }
  std::unordered_map<int, std::size_t> slot;
  std::vector<std::vector<int>> clusters;
  for (std::size_t h = 0; h < hits.size(); ++h) {
    const int r = find(static_cast<int>(h));
    auto [it, inserted] = slot.try_emplace(r, clusters.size());
    if (inserted) clusters.emplace_back();
    clusters[it->second].push_back(static_cast<int>(h));
  }
  return clusters;
}

int cluster_span(const std::vector<GridHit>& hits, const std::vector<int>& members, int n) {
  int span = 0;
  for (std::size_t x = 0; x < members.size(); ++x) {
    for (std::size_t y = x + 1; y < members.size(); ++y) {
      const GridHit& p = hits[static_cast<std::size_t>(members[x])];
      const GridHit& q = hits[static_cast<std::size_t>(members[y])];
      const int di = std::min(std::abs(p.i - q.i), n - std::abs(p.i - q.i));
      const int dj = std::min(std::abs(p.j - q.j), n - std::abs(p.j - q.j));
      span = std::max({span, di, dj});
    }
  }
  return span;
}

NEPoint make_point(const PointGame& g, double a, double b, double gain, double eps) {
  NEPoint pt;
  pt.a = wrap_angle(a);
  pt.b = wrap_angle(b);
  pt.a_abs = to_absolute_a(g, pt.a);
  pt.b_abs = to_absolute_b(g, pt.b);
  pt.payoff_a = g.payoff_a(pt.a, pt.b);
  pt.payoff_b = g.payoff_b(pt.a, pt.b);
  pt.deviation_gain = gain;
  pt.classification = gain <= eps ? NEClass::Strict : NEClass::Boundary;
  return pt;
}

bool same_point(const NEPoint& x, double a, double b) {
  return circ_dist(x.a, a) < 1e-6 && circ_dist(x.b, b) < 1e-6;
}

void annotate_pareto(std::vector<NEPoint>& pts) {
  for (auto& x : pts) {
    x.pareto_dominated = false;
    for (const auto& y : pts) {
      if (y.payoff_a >= x.payoff_a && y.payoff_b >= x.payoff_b &&
          (y.payoff_a > x.payoff_a + 1e-12 || y.payoff_b > x.payoff_b + 1e-12)) {
        x.pareto_dominated = true;
        break;
      }
    }
  }
}

}  // namespace

PointGame PointGame::make(Vec2 p, Vec2 q, const PenaltyModel& pen_a, const PenaltyModel& pen_b,
                          double rho_a, double rho_b) {
  PointGame g;
  g.p = p;
  g.q = q;
  g.pen_a = pen_a;
  g.pen_b = pen_b;
  g.rho_a = rho_a;
  g.rho_b = rho_b;
  g.delta = angle_of(p) - angle_of(q);
  g.validate();
  return g;
}

void PointGame::validate() const {
  if (!(norm(p) > 0.0) || !(norm(q) > 0.0)) throw DomainError("point game: p and q must be nonzero");
  if (!(rho_a >= 0.0) || !(rho_b >= 0.0)) throw DomainError("point game: densities must be non-negative");
  pen_a.validate();
  pen_b.validate();
  if (std::abs(wrap_signed(delta - (angle_of(p) - angle_of(q)))) > 1e-12) {
    throw ValidationError("point game: stored delta does not match p and q");
  }
}

double PointGame::payoff_a(double a, double b) const { return std::cos(a) * f_a(psi(a, b)); }
double PointGame::payoff_b(double a, double b) const { return std::cos(b) * f_b(psi(a, b)); }

double to_relative_a(const PointGame& g, double a_abs) { return wrap_angle(a_abs - g.origin_a()); }
double to_relative_b(const PointGame& g, double b_abs) { return wrap_angle(b_abs - g.origin_b()); }
double to_absolute_a(const PointGame& g, double a_rel) { return wrap_angle(a_rel + g.origin_a()); }
double to_absolute_b(const PointGame& g, double b_rel) { return wrap_angle(b_rel + g.origin_b()); }

double best_reply_a(const PointGame& game, double b) {
  bool tie = false;
  Refined r = periodic_max([&](double a) { return game.payoff_a(a, b); }, kBestReplySamples, 1e-9, &tie);
  if (tie) throw MultiplicityError("best reply of crowd A is not unique");
  if (game.pen_a.smooth()) {
    for (int it = 0; it < 8; ++it) {
      const Local l = local_a(game, r.x, b);
      if (!(l.jss < 0.0)) break;
      const double step = l.js / l.jss;
      if (std::abs(step) > 1e-3) break;
      r.x -= step;
      if (std::abs(step) < 1e-15) break;
    }
  }
  return wrap_angle(r.x);
}

double best_reply_b(const PointGame& game, double a) {
  bool tie = false;
  Refined r = periodic_max([&](double b) { return game.payoff_b(a, b); }, kBestReplySamples, 1e-9, &tie);
  if (tie) throw MultiplicityError("best reply of crowd B is not unique");
  if (game.pen_b.smooth()) {
    for (int it = 0; it < 8; ++it) {
      const Local l = local_b(game, a, r.x);
      if (!(l.jss < 0.0)) break;
      const double step = l.js / l.jss;
      if (std::abs(step) > 1e-3) break;
      r.x -= step;
      if (std::abs(step) < 1e-15) break;
    }
  }
  return wrap_angle(r.x);
}

double best_reply_derivative(const PointGame& game, double a, double b, Player player) {
  const PenaltyModel& pen = player == Player::A ? game.pen_a : game.pen_b;
  const double rho = player == Player::A ? game.rho_b : game.rho_a;
  if (!pen.smooth()) throw UnsupportedModelError("best_reply_derivative: teardrop penalty is not smooth");
  const PenaltyDerivatives d = penalty_derivatives(pen, rho, game.psi(a, b));
  const double num = -d.df * d.df + d.f * d.d2f;
  const double den = -d.f * d.f - 2.0 * d.df * d.df + d.f * d.d2f;
  return num / den;
}

Certificate uniqueness_certificate(const PenaltyModel& pen_a, const PenaltyModel& pen_b, double rho_a,
                                   double rho_b) {
  if (!pen_a.smooth() || !pen_b.smooth()) {
    throw UnsupportedModelError("uniqueness certificate is not available for the teardrop penalty");
  }
  if (pen_a.kind != pen_b.kind) {
    throw UnsupportedModelError("uniqueness certificate needs both crowds on the same penalty variant");
  }
  if (!(rho_a >= 0.0) || !(rho_b >= 0.0)) throw DomainError("densities must be non-negative");
  const double load = pen_a.load(rho_b) + pen_b.load(rho_a);
  return {load < 1.0, 1.0 - load};
}

NEResult ne_enumerate(const PointGame& game, const NEOptions& options) {
  game.validate();
  if (options.n_dirs < 256) throw ConfigurationError("ne_enumerate needs n_dirs >= 256");
  const int n = options.n_dirs;
  const double step = kTwoPi / n;
  const double oa = game.origin_a();
  const double ob = game.origin_b();
  const bool smooth = game.pen_a.smooth() && game.pen_b.smooth();
  const GameGrid grid(game, n);
  const int verify_n = 4 * n;
  NEResult result;

  auto add_unique = [&](double a, double b, int cluster) {
    for (const auto& p : result.points) {
      if (same_point(p, a, b)) return;
    }
    const double gain = deviation_gain(game, a, b, verify_n);
    if (gain > options.eps_ne) {
      ++result.n_unpolished;
      return;
    }
    NEPoint pt = make_point(game, a, b, gain, options.eps_ne);
    pt.cluster = cluster;
    result.points.push_back(pt);
  };

  if (options.exhaustive && smooth) {
    std::vector<GridHit> seeds = gain_local_minima(grid, 0.1);
    std::sort(seeds.begin(), seeds.end(), [](const GridHit& x, const GridHit& y) { return x.gain < y.gain; });
    if (seeds.size() > 4000) seeds.resize(4000);
    int c = 0;
    for (const GridHit& sd : seeds) {
      auto root = newton_polish(game, sd.i * step - oa, sd.j * step - ob);
      if (root) add_unique(root->first, root->second, c++);
    }
    result.n_unpolished = 0;
    result.n_clusters = static_cast<int>(result.points.size());
    annotate_pareto(result.points);
    return result;
  }

  // The discretized game need not have a pure equilibrium at eps_ne; widen
  // the screen up to the O(spacing^2) discretization error before giving up.
  std::vector<GridHit> hits = grid_equilibria(grid, options.eps_ne);
  for (double tol = options.eps_ne * 10.0; hits.empty() && tol <= 4.0 * step * step; tol *= 10.0) {
    hits = grid_equilibria(grid, tol);
  }
  const auto clusters = cluster_hits(hits, n, 3);
  result.n_clusters = static_cast<int>(clusters.size());
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    const auto& members = clusters[c];
    const bool continuum = members.size() > 1 && (members.size() > 2000 || cluster_span(hits, members, n) > 3);
    if (continuum) {
      result.continuum = true;
      const std::size_t take =
          std::min<std::size_t>(members.size(), static_cast<std::size_t>(options.max_samples_per_cluster));
      for (std::size_t k = 0; k < take; ++k) {
        const GridHit& h = hits[static_cast<std::size_t>(members[k * members.size() / take])];
        const double a = wrap_angle(h.i * step - oa);
        const double b = wrap_angle(h.j * step - ob);
        NEPoint pt = make_point(game, a, b, deviation_gain(game, a, b, verify_n), options.eps_ne);
        pt.cluster = static_cast<int>(c);
        result.points.push_back(pt);
      }
      continue;
    }
    const int best_idx = *std::min_element(members.begin(), members.end(), [&](int x, int y) {
      return hits[static_cast<std::size_t>(x)].gain < hits[static_cast<std::size_t>(y)].gain;
    });
    const GridHit& best = hits[static_cast<std::size_t>(best_idx)];
    const double a0 = wrap_angle(best.i * step - oa);
    const double b0 = wrap_angle(best.j * step - ob);
    if (smooth) {
      // Newton rather than alternating best replies: the latter walks away
      // from equilibria where the composed best-reply map expands.
      if (auto root = newton_polish(game, a0, b0);
          root && circ_dist(root->first, a0) < 4.0 * step && circ_dist(root->second, b0) < 4.0 * step) {
        add_unique(root->first, root->second, static_cast<int>(c));
        continue;
      }
    }
    double a = a0;
    double b = b0;
    try {
      for (int it = 0; it < 200; ++it) {
        const double a2 = best_reply_a(game, b);
        const double b2 = best_reply_b(game, a2);
        const double change = std::max(circ_dist(a2, a), circ_dist(b2, b));
        a = a2;
        b = b2;
        if (change < 1e-10) break;
      }
    } catch (const MultiplicityError&) {
      a = a0;
      b = b0;
    }
    if (deviation_gain(game, a, b, verify_n) > options.eps_ne) {
      a = a0;
      b = b0;
    }
    add_unique(a, b, static_cast<int>(c));
  }
  annotate_pareto(result.points);
  return result;
}

std::vector<std::vector<PayoffCell>> payoff_table(const PointGame& game, const std::vector<NEPoint>& points) {
  std::vector<std::vector<PayoffCell>> table(points.size(), std::vector<PayoffCell>(points.size()));
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = 0; j < points.size(); ++j) {
      table[i][j] = {game.payoff_a(points[i].a, points[j].b), game.payoff_b(points[i].a, points[j].b)};
    }
  }
  return table;
}

double teardrop_critical_angle(double c_tear, double rho_bar) {
  if (!(c_tear > 0.0) || !(rho_bar > 0.0)) throw DomainError("teardrop_critical_angle: C and rho must be positive");
  return 0.5 * kPi - std::atan(1.0 / (2.0 * kPi * c_tear * rho_bar));
}

}  // namespace crowd
