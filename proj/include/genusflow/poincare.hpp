#pragma once

// Period-T return maps, (a,b)-periodic orbits, monodromy and multipliers.

#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "genusflow/error.hpp"
#include "genusflow/field.hpp"
#include "genusflow/geometry.hpp"
#include "genusflow/integrate.hpp"

namespace genusflow {

struct PoincareMap {
  VectorField field;
  double period = 1.0;
  std::optional<RectDomain> domain;
  IntegratorConfig config;

  PoincareMap(VectorField w, double T, std::optional<RectDomain> dom, IntegratorConfig cfg = {})
      : field(std::move(w)), period(T), domain(std::move(dom)), config(cfg) {
    if (!(period > 0.0)) throw Error(ErrorKind::input, "Poincare period must be positive");
    config.record_samples = false;
  }

  const RectDomain* dom() const { return domain ? &*domain : nullptr; }
};

struct PoincareResult {
  Vec2 point;
  Word word;
  AffineMap deck = AffineMap::identity();  // point == deck(lifted endpoint)
  Termination termination = Termination::completed;
};

/// n periods of the flow from a point of the domain, with wrapping.
inline PoincareResult poincare_apply(const PoincareMap& P, Vec2 q, int n = 1) {
  if (n < 1) throw Error(ErrorKind::input, "poincare_apply needs n >= 1");
  if (P.field.identically_zero()) return {q, {}, AffineMap::identity(), Termination::completed};
  const Trajectory tr = integrate(P.field, State{q.x, q.y, 0.0}, n * P.period, P.dom(), P.config);
  return {tr.final_state.pos(), tr.word, tr.deck, tr.termination};
}

/// Flow map of n periods on the universal cover: q is reduced into the
/// domain, mapped, and the result lifted back next to q.
inline Vec2 lifted_apply(const PoincareMap& P, Vec2 q, int n = 1) {
  if (P.dom() == nullptr) return poincare_apply(P, q, n).point;
  const Reduction r = reduce_to_domain(q, *P.dom());
  const PoincareResult pr = poincare_apply(P, r.point, n);
  if (pr.termination == Termination::cusp_hit) {
    throw Error(ErrorKind::cusp_hit, "trajectory reached a cusp equilibrium");
  }
  return compose(pr.deck, r.map).inverse()(pr.point);
}

namespace detail {

/// Parameter interval [lo, hi] of segment s whose image under tr stays in dom.
inline std::pair<double, double> mapped_span(const Segment& s, const AffineMap& tr, const RectDomain& dom) {
  const Vec2 a = tr(s.start);
  const Vec2 d = tr(s.end) - a;
  const Box& b = dom.bounds();
  const double tol = 1e-12 * std::max(b.width(), b.height());
  double lo = 0.0, hi = 1.0;
  auto clip = [&](double p0, double dp, double mn, double mx) {
    if (std::abs(dp) < 1e-300) {
      if (p0 < mn - tol || p0 > mx + tol) hi = -1.0;
      return;
    }
    double u0 = (mn - tol - p0) / dp, u1 = (mx + tol - p0) / dp;
    if (u0 > u1) std::swap(u0, u1);
    lo = std::max(lo, u0);
    hi = std::min(hi, u1);
  };
  clip(a.x, d.x, b.x_min, b.x_max);
  clip(a.y, d.y, b.y_min, b.y_max);
  return {lo, hi};
}

}  // namespace detail

/// Max over boundary samples q of |lift(P(T_i q)) - T_i(lift(P(q)))|,
/// spread over `segments` (all segments when empty). Samples are restricted
/// to the part of each segment whose image under T_i lies in the domain.
inline double check_equivariance(const PoincareMap& P, int n_samples, const std::vector<int>& segments = {}) {
  const RectDomain* dom = P.dom();
  if (dom == nullptr || P.field.identically_zero()) return 0.0;
  std::vector<int> ids = segments;
  if (ids.empty()) {
    for (int i = 1; i <= dom->segment_count(); ++i) ids.push_back(i);
  }
  const int nseg = static_cast<int>(ids.size());
  const int per = std::max(1, (n_samples + nseg - 1) / nseg);
  double worst = 0.0;
  for (int i : ids) {
    const Segment& s = dom->segment(i);
    const AffineMap& tr = dom->transition(i);
    const auto [lo, hi] = detail::mapped_span(s, tr, *dom);
    if (hi <= lo) continue;
    for (int k = 0; k < per; ++k) {
      const Vec2 q = s.start + (lo + (hi - lo) * (k + 0.5) / per) * s.direction();
      const Vec2 lhs = lifted_apply(P, tr(q));
      const Vec2 rhs = tr(lifted_apply(P, q));
      worst = std::max(worst, distance(lhs, rhs));
    }
  }
  return worst;
}

struct PeriodicOrbit {
  State point;  // t = 0 section point inside the domain
  int a = 0;
  int b = 1;
  int generator = 0;  // segment id i, Gamma_i = T_i^{-1}; 0 on the plane
  double residual = 0.0;
  int iterations = 0;
  bool jacobian_singular = false;
};

struct FindPeriodicOptions {
  double tolerance = 1e-10;
  int max_iterations = 50;
  double fd_step = 1e-6;
  double singular_det = 1e-14;
};

namespace detail {

// Gamma_i^{-a} = T_i^{a}.
inline AffineMap deck_power(const RectDomain* dom, int generator, int a) {
  if (dom == nullptr || a == 0) return AffineMap::identity();
  if (generator < 1 || generator > dom->segment_count()) {
    throw Error(ErrorKind::input, "generator index out of range");
  }
  const AffineMap& base = a > 0 ? dom->transition(generator) : dom->transition(generator).inverse();
  AffineMap m = AffineMap::identity();
  for (int k = 0; k < std::abs(a); ++k) m = compose(base, m);
  return m;
}

inline Mat2 fd_jacobian(const auto& F, Vec2 q, double step) {
  const double hx = step * std::max(1.0, std::abs(q.x));
  const double hy = step * std::max(1.0, std::abs(q.y));
  const Vec2 dx = (F(Vec2{q.x + hx, q.y}) - F(Vec2{q.x - hx, q.y})) * (0.5 / hx);
  const Vec2 dy = (F(Vec2{q.x, q.y + hy}) - F(Vec2{q.x, q.y - hy})) * (0.5 / hy);
  return {dx.x, dy.x, dx.y, dy.y};
}

}  // namespace detail

/// Deck-adjusted return map Gamma_i^{-a} o P^b on the cover.
inline Vec2 deck_adjusted_return(const PoincareMap& P, int a, int b, int generator, Vec2 q) {
  return detail::deck_power(P.dom(), generator, a)(lifted_apply(P, q, b));
}

/// Damped Newton on G(q) = Gamma_i^{-a}(P^b(q)) - q.
inline PeriodicOrbit find_periodic(const PoincareMap& P, int a, int b, int generator, Vec2 guess,
                                   const FindPeriodicOptions& opt = {}) {
  if (b < 1) throw Error(ErrorKind::input, "b must be a positive integer");
  if (P.dom() != nullptr && !P.dom()->contains(guess, 1e-9)) {
    throw Error(ErrorKind::domain, "orbit guess lies outside the domain");
  }
  const AffineMap adj = detail::deck_power(P.dom(), generator, a);
  auto G = [&](Vec2 q) { return adj(lifted_apply(P, q, b)) - q; };
  auto safe_norm = [&](Vec2 q) {
    try {
      const double n = norm(G(q));
      return std::isfinite(n) ? n : std::numeric_limits<double>::infinity();
    } catch (const Error&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  PeriodicOrbit orb;
  orb.a = a;
  orb.b = b;
  orb.generator = generator;
  Vec2 q = guess;
  Vec2 g = G(q);
  double r = norm(g);
  int it = 0;
  while (!(r < opt.tolerance)) {
    if (it >= opt.max_iterations) {
      throw Error(ErrorKind::no_convergence,
                  "Newton did not converge in " + std::to_string(opt.max_iterations) +
                      " iterations (residual " + format_double(r) + ")");
    }
    ++it;
    const Mat2 J = detail::fd_jacobian(G, q, opt.fd_step);
    if (std::abs(J.det()) < opt.singular_det) {
      throw Error(ErrorKind::singular_jacobian, "Newton Jacobian is singular");
    }
    const Vec2 delta = -(J.inverse() * g);
    double lambda = 1.0;
    Vec2 qn = q + delta;
    double rn = safe_norm(qn);
    int halvings = 0;
    while (!(rn < r)) {
      if (++halvings > 30) {
        throw Error(ErrorKind::no_convergence,
                    "Newton line search failed (residual " + format_double(r) + ")");
      }
      lambda *= 0.5;
      qn = q + lambda * delta;
      rn = safe_norm(qn);
    }
    q = qn;
    g = G(q);
    r = norm(g);
  }
  const Mat2 J = detail::fd_jacobian(G, q, opt.fd_step);
  orb.jacobian_singular = std::abs(J.det()) < opt.singular_det;
  orb.iterations = it;
  orb.residual = r;
  Vec2 p = q;
  if (P.dom() != nullptr) p = reduce_to_domain(q, *P.dom()).point;
  orb.point = {p.x, p.y, 0.0};
  return orb;
}

using Multipliers = std::pair<std::complex<double>, std::complex<double>>;

/// Roots of (a - l)(d - l) - bc = 0, ordered by modulus, then real part,
/// then imaginary part.
inline Multipliers multipliers(const Mat2& m) {
  const double tr = m.trace(), det = m.det();
  const double disc = tr * tr - 4.0 * det;
  std::complex<double> l1, l2;
  if (disc >= 0.0) {
    const double qv = 0.5 * (tr + std::copysign(std::sqrt(disc), tr));
    if (qv == 0.0) {
      l1 = l2 = 0.0;
    } else {
      l1 = qv;
      l2 = det / qv;
    }
  } else {
    const double im = 0.5 * std::sqrt(-disc);
    l1 = {0.5 * tr, -im};
    l2 = {0.5 * tr, im};
  }
  auto less = [](std::complex<double> u, std::complex<double> v) {
    if (std::abs(u) != std::abs(v)) return std::abs(u) < std::abs(v);
    if (u.real() != v.real()) return u.real() < v.real();
    return u.imag() < v.imag();
  };
  if (less(l2, l1)) std::swap(l1, l2);
  return {l1, l2};
}

enum class OrbitClass { stable, inversely_unstable, directly_unstable, elliptic, degenerate };

inline const char* to_string(OrbitClass c) {
  switch (c) {
    case OrbitClass::stable: return "stable";
    case OrbitClass::inversely_unstable: return "inversely-unstable";
    case OrbitClass::directly_unstable: return "directly-unstable";
    case OrbitClass::elliptic: return "elliptic";
    case OrbitClass::degenerate: return "degenerate";
  }
  return "degenerate";
}

/// Multipliers are expected in the order produced by `multipliers`.
inline OrbitClass classify(std::complex<double> l1, std::complex<double> l2, double tol = 1e-9) {
  const bool real = l1.imag() == 0.0 && l2.imag() == 0.0;
  if (real) {
    double a = l1.real(), b = l2.real();
    if (std::abs(a) > std::abs(b)) std::swap(a, b);
    if (b < -1.0 - tol && a > -1.0 + tol && a < -tol) return OrbitClass::inversely_unstable;
    if (a > tol && a < 1.0 - tol && b > 1.0 + tol) return OrbitClass::directly_unstable;
  }
  if (std::max(std::abs(l1), std::abs(l2)) < 1.0 - tol) return OrbitClass::stable;
  if (!real && std::abs(std::abs(l1) - 1.0) < tol && std::abs(std::abs(l2) - 1.0) < tol) {
    return OrbitClass::elliptic;
  }
  return OrbitClass::degenerate;
}

inline OrbitClass classify(const Multipliers& m, double tol = 1e-9) { return classify(m.first, m.second, tol); }

struct Monodromy {
  Mat2 matrix;      // variational
  Mat2 fd_matrix;   // central differences
  std::complex<double> lambda1, lambda2;
  double disagreement = 0.0;
  bool methods_disagree = false;

  double a() const { return matrix.a; }
  double b() const { return matrix.b; }
  double c() const { return matrix.c; }
  double d() const { return matrix.d; }
};

/// Variational monodromy of the deck-adjusted return map, with a
/// finite-difference second opinion. methods_disagree is set when the two
/// differ entrywise by more than 1e-4.
inline Monodromy monodromy(const PoincareMap& P, const PeriodicOrbit& orb, double fd_step = 1e-6) {
  const VectorField& w = P.field;
  const Vec2 q0 = orb.point.pos();
  Mat2 phi = Mat2::identity();
  AffineMap deck = AffineMap::identity();
  if (!w.identically_zero()) {
    auto rhs = [&w](double t, const detail::VecN<6>& s, detail::VecN<6>& ds) {
      const Vec2 v = w(s[0], s[1], t);
      const Mat2 A = w.jacobian({s[0], s[1]}, t);
      ds[0] = v.x;
      ds[1] = v.y;
      ds[2] = A.a * s[2] + A.b * s[4];
      ds[3] = A.a * s[3] + A.b * s[5];
      ds[4] = A.c * s[2] + A.d * s[4];
      ds[5] = A.c * s[3] + A.d * s[5];
    };
    auto on_cross = [](detail::VecN<6>& s, const AffineMap& T) {
      const Mat2 J{s[2], s[3], s[4], s[5]};
      const Mat2 K = T.linear * J;
      s[2] = K.a; s[3] = K.b; s[4] = K.c; s[5] = K.d;
    };
    Trajectory traj;
    IntegratorConfig cfg = P.config;
    cfg.record_samples = false;
    const auto r = detail::integrate_core<6>(rhs, {q0.x, q0.y, 1.0, 0.0, 0.0, 1.0}, 0.0, orb.b * P.period,
                                             P.dom(), cfg, &traj, on_cross);
    if (r.termination == Termination::cusp_hit) {
      throw Error(ErrorKind::cusp_hit, "orbit reached a cusp equilibrium");
    }
    phi = {r.y[2], r.y[3], r.y[4], r.y[5]};
    deck = traj.deck;
  }
  const AffineMap adj = detail::deck_power(P.dom(), orb.generator, orb.a);
  Monodromy m;
  m.matrix = adj.linear * deck.linear.inverse() * phi;
  m.fd_matrix = detail::fd_jacobian(
      [&](Vec2 q) { return deck_adjusted_return(P, orb.a, orb.b, orb.generator, q); }, q0, fd_step);
  m.disagreement = (m.matrix - m.fd_matrix).max_abs();
  m.methods_disagree = m.disagreement > 1e-4;
  const Multipliers mu = multipliers(m.matrix);
  m.lambda1 = mu.first;
  m.lambda2 = mu.second;
  return m;
}

}  // namespace genusflow
