#pragma once

// Runge-Kutta integration on the plane or on a RectDomain, with boundary
// crossing location and deck-transition wrapping.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

#include "genusflow/error.hpp"
#include "genusflow/field.hpp"
#include "genusflow/geometry.hpp"

namespace genusflow {

enum class Scheme { rk4, rk45 };

struct IntegratorConfig {
  Scheme scheme = Scheme::rk45;
  double rel_tol = 1e-9;
  double abs_tol = 1e-12;
  double max_step = 0.25;  // fixed step for rk4, step cap for rk45
  long max_steps = 2'000'000;
  bool record_samples = true;
};

struct State {
  double x = 0.0;
  double y = 0.0;
  double t = 0.0;

  Vec2 pos() const { return {x, y}; }
};

struct CrossingEvent {
  double t = 0.0;
  int segment = 0;     // segment left through
  int letter = 0;      // deck word letter, +segment
  int direction = 1;   // +1: outward through `segment`
  std::size_t word_length = 0;  // length of the accumulated word after this event
  Vec2 exit_point;
  Vec2 entry_point;
};

enum class Termination { completed, cusp_hit };

struct Trajectory {
  std::vector<State> samples;
  std::vector<CrossingEvent> events;
  Termination termination = Termination::completed;
  State final_state;
  Word word;                               // letters in order of application
  AffineMap deck = AffineMap::identity();  // reduced = deck(lifted)

  /// Word accumulated up to and including event k.
  Word word_at(std::size_t k) const {
    return Word(word.begin(), word.begin() + static_cast<std::ptrdiff_t>(events.at(k).word_length));
  }
};

namespace detail {

template <std::size_t N>
using VecN = std::array<double, N>;

template <std::size_t N>
inline VecN<N> axpy(const VecN<N>& y, double h, const VecN<N>& k) {
  VecN<N> r;
  for (std::size_t i = 0; i < N; ++i) r[i] = y[i] + h * k[i];
  return r;
}

template <std::size_t N>
inline bool all_finite(const VecN<N>& y) {
  return std::all_of(y.begin(), y.end(), [](double v) { return std::isfinite(v); });
}

template <std::size_t N, class F>
VecN<N> rk4_step(const F& f, double t, const VecN<N>& y, double h) {
  VecN<N> k1, k2, k3, k4;
  f(t, y, k1);
  f(t + 0.5 * h, axpy<N>(y, 0.5 * h, k1), k2);
  f(t + 0.5 * h, axpy<N>(y, 0.5 * h, k2), k3);
  f(t + h, axpy<N>(y, h, k3), k4);
  VecN<N> r;
  for (std::size_t i = 0; i < N; ++i) r[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  return r;
}

// Dormand-Prince 5(4). k1 = f(t, y) on entry; on return k7 = f(t + h, y5).
template <std::size_t N, class F>
VecN<N> dp_step(const F& f, double t, const VecN<N>& y, const VecN<N>& k1, double h, double rel,
                double abs, double& err, VecN<N>& k7) {
  constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  constexpr double a21 = 1.0 / 5;
  constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                   a54 = -212.0 / 729;
  constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                   a65 = -5103.0 / 18656;
  constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                   b6 = 11.0 / 84;
  constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                   e6 = 22.0 / 525, e7 = -1.0 / 40;
  VecN<N> k2, k3, k4, k5, k6, tmp;
  for (std::size_t i = 0; i < N; ++i) tmp[i] = y[i] + h * a21 * k1[i];
  f(t + c2 * h, tmp, k2);
  for (std::size_t i = 0; i < N; ++i) tmp[i] = y[i] + h * (a31 * k1[i] + a32 * k2[i]);
  f(t + c3 * h, tmp, k3);
  for (std::size_t i = 0; i < N; ++i) tmp[i] = y[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
  f(t + c4 * h, tmp, k4);
  for (std::size_t i = 0; i < N; ++i) {
    tmp[i] = y[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
  }
  f(t + c5 * h, tmp, k5);
  for (std::size_t i = 0; i < N; ++i) {
    tmp[i] = y[i] + h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
  }
  f(t + h, tmp, k6);
  VecN<N> y5;
  for (std::size_t i = 0; i < N; ++i) {
    y5[i] = y[i] + h * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
  }
  f(t + h, y5, k7);
  double acc = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    const double e = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
    const double sc = abs + rel * std::max(std::abs(y[i]), std::abs(y5[i]));
    acc += (e / sc) * (e / sc);
  }
  err = std::sqrt(acc / static_cast<double>(N));
  return y5;
}

template <std::size_t N>
struct CoreResult {
  VecN<N> y;
  double t = 0.0;
  Termination termination = Termination::completed;
};

// No-op hooks.
struct NoCross {
  template <class Y>
  void operator()(Y&, const AffineMap&) const {}
};
struct NoSample {
  template <class Y>
  void operator()(double, const Y&) const {}
};

// Integrates y' = f(t, y) from t0 to t1. Components 0 and 1 are the position;
// on_cross(y, T) adjusts the remaining components when T is applied.
template <std::size_t N, class F, class OnCross = NoCross, class OnSample = NoSample>
CoreResult<N> integrate_core(const F& f, VecN<N> y, double t0, double t1, const RectDomain* dom,
                             const IntegratorConfig& cfg, Trajectory* traj, OnCross on_cross = {},
                             OnSample on_sample = {}) {
  if (!(cfg.rel_tol > 0.0) || !(cfg.abs_tol > 0.0) || !(cfg.max_step > 0.0) || cfg.max_steps <= 0) {
    throw Error(ErrorKind::input, "integrator tolerances, max_step and max_steps must be positive");
  }
  const double max_disp = dom != nullptr ? 0.5 * dom->min_segment_length()
                                         : std::numeric_limits<double>::infinity();
  const double span = t1 - t0;
  double t = t0;
  double h = cfg.scheme == Scheme::rk4 ? cfg.max_step : std::min(cfg.max_step, std::max(1e-4, 1e-3 * span));
  VecN<N> k1;
  f(t, y, k1);
  bool k1_valid = true;
  long steps = 0;
  auto pos = [](const VecN<N>& v) { return Vec2{v[0], v[1]}; };

  // Single step from (t, y) of size dt using the active scheme.
  auto trial = [&](double dt, double& err, VecN<N>& k7) {
    if (cfg.scheme == Scheme::rk4) {
      err = 0.0;
      return rk4_step<N>(f, t, y, dt);
    }
    return dp_step<N>(f, t, y, k1, dt, cfg.rel_tol, cfg.abs_tol, err, k7);
  };

  while (t < t1) {
    if (++steps > cfg.max_steps) throw Error(ErrorKind::step_limit, "integration step limit exceeded");
    if (!k1_valid) {
      f(t, y, k1);
      k1_valid = true;
    }
    const double remaining = t1 - t;
    double dt = std::min(h, remaining);
    const bool last = dt >= remaining;
    double err = 0.0;
    VecN<N> k7;
    VecN<N> yn = trial(dt, err, k7);
    if (!all_finite<N>(yn)) {
      if (cfg.scheme == Scheme::rk45 && dt > 1e-14 * std::max(1.0, std::abs(t))) {
        h = 0.25 * dt;
        continue;
      }
      throw Error(ErrorKind::non_finite, "non-finite state during integration");
    }
    if (cfg.scheme == Scheme::rk45 && err > 1.0) {
      h = dt * std::max(0.2, 0.9 * std::pow(err, -0.2));
      if (h < 1e-15 * std::max(1.0, std::abs(t))) {
        throw Error(ErrorKind::step_limit, "step size underflow");
      }
      continue;
    }
    if (norm(pos(yn) - pos(y)) > max_disp) {
      if (cfg.scheme == Scheme::rk4) {
        throw Error(ErrorKind::step_limit, "fixed step moves farther than half a segment");
      }
      h = 0.5 * dt;
      continue;
    }
    const double tn = last ? t1 : t + dt;

    if (dom != nullptr && dom->signed_distance(pos(yn)) < 0.0) {
      // Locate the exit by Illinois regula falsi on the step fraction.
      double a = 0.0, b = 1.0;
      double ga = dom->signed_distance(pos(y)), gb = dom->signed_distance(pos(yn));
      VecN<N> yb = yn;
      int side = 0;
      for (int it = 0; it < 200 && -gb > 1e-12; ++it) {
        double m = (ga * b - gb * a) / (ga - gb);
        if (!(m > a && m < b)) m = 0.5 * (a + b);
        double e2;
        VecN<N> k72;
        const VecN<N> ym = trial(m * dt, e2, k72);
        const double gm = dom->signed_distance(pos(ym));
        if (gm < 0.0) {
          b = m; gb = gm; yb = ym;
          if (side == -1) ga *= 0.5;
          side = -1;
        } else {
          a = m; ga = gm;
          if (side == 1) gb *= 0.5;
          side = 1;
        }
        if (b - a < 1e-15) break;
      }
      const double tc = b >= 1.0 ? tn : t + b * dt;
      const Vec2 exit = pos(yb);
      if (dom->cusps_are_equilibria() && dom->cusp_distance(exit) < 1e-9) {
        y = yb;
        t = tc;
        if (traj != nullptr) traj->termination = Termination::cusp_hit;
        on_sample(t, y);
        return {y, t, Termination::cusp_hit};
      }
      const int seg = dom->exit_segment(exit);
      const AffineMap& tr = dom->transition(seg);
      VecN<N> ym = yb;
      Vec2 q = tr(exit);
      on_cross(ym, tr);
      AffineMap applied = tr;
      Word extra;
      if (!dom->contains(q)) {
        const Vec2 cq = dom->bounds().clamp(q);
        if (distance(cq, q) < 1e-9) {
          q = cq;
        } else {
          const Reduction r = reduce_to_domain(q, *dom);
          q = r.point;
          extra = r.word;
          for (int l : r.word) on_cross(ym, dom->letter_map(l));
          applied = compose(r.map, applied);
        }
      }
      ym[0] = q.x;
      ym[1] = q.y;
      if (traj != nullptr) {
        traj->word.push_back(seg);
        traj->word.insert(traj->word.end(), extra.begin(), extra.end());
        traj->deck = compose(applied, traj->deck);
        CrossingEvent ev;
        ev.t = tc;
        ev.segment = seg;
        ev.letter = seg;
        ev.word_length = traj->word.size();
        ev.exit_point = exit;
        ev.entry_point = q;
        traj->events.push_back(ev);
      }
      y = ym;
      t = tc;
      k1_valid = false;
      on_sample(t, y);
      if (b >= 1.0 && last) break;
      continue;
    }

    y = yn;
    t = tn;
    if (cfg.scheme == Scheme::rk45) {
      k1 = k7;
      const double fac = err > 0.0 ? std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0) : 5.0;
      if (!last) h = std::min(cfg.max_step, dt * fac);
    } else {
      f(t, y, k1);
    }
    on_sample(t, y);
    if (last) break;
  }
  return {y, t, Termination::completed};
}

}  // namespace detail

/// Integrates the field from s0 to t_end. With a domain, exits are located
/// to within 1e-12 outside the rectangle, mapped through the segment
/// transition, and integration continues from the mapped point with the
/// field re-evaluated there.
inline Trajectory integrate(const VectorField& w, const State& s0, double t_end, const RectDomain* dom,
                            const IntegratorConfig& cfg = {}) {
  if (!(t_end > s0.t)) throw Error(ErrorKind::input, "t_end must exceed the start time");
  if (dom != nullptr && !dom->contains(s0.pos(), 1e-12)) {
    throw Error(ErrorKind::domain, "initial state lies outside the domain rectangle");
  }
  Trajectory traj;
  auto rhs = [&w](double t, const detail::VecN<2>& y, detail::VecN<2>& dy) {
    const Vec2 v = w(y[0], y[1], t);
    dy[0] = v.x;
    dy[1] = v.y;
  };
  Vec2 start = s0.pos();
  if (dom != nullptr) start = dom->bounds().clamp(start);
  if (cfg.record_samples) traj.samples.push_back({start.x, start.y, s0.t});
  auto sample = [&](double t, const detail::VecN<2>& y) {
    if (!cfg.record_samples) return;
    Vec2 q{y[0], y[1]};
    if (dom != nullptr) q = dom->bounds().clamp(q);
    if (!traj.samples.empty() && traj.samples.back().t >= t) traj.samples.pop_back();
    traj.samples.push_back({q.x, q.y, t});
  };
  if (w.identically_zero()) {
    sample(t_end, {start.x, start.y});
    traj.final_state = {start.x, start.y, t_end};
    return traj;
  }
  const auto r = detail::integrate_core<2>(rhs, {start.x, start.y}, s0.t, t_end, dom, cfg, &traj,
                                           detail::NoCross{}, sample);
  Vec2 q{r.y[0], r.y[1]};
  if (dom != nullptr) q = dom->bounds().clamp(q);
  traj.final_state = {q.x, q.y, r.t};
  traj.termination = r.termination;
  return traj;
}

inline Trajectory integrate(const VectorField& w, const State& s0, double t_end,
                            const std::optional<RectDomain>& dom, const IntegratorConfig& cfg = {}) {
  return integrate(w, s0, t_end, dom ? &*dom : nullptr, cfg);
}

/// One step of the configured scheme with no domain logic.
inline State step_dense(const VectorField& w, const State& s, double dt, const IntegratorConfig& cfg = {}) {
  if (!(dt > 0.0)) throw Error(ErrorKind::input, "step_dense needs dt > 0");
  auto rhs = [&w](double t, const detail::VecN<2>& y, detail::VecN<2>& dy) {
    const Vec2 v = w(y[0], y[1], t);
    dy[0] = v.x;
    dy[1] = v.y;
  };
  const detail::VecN<2> y{s.x, s.y};
  detail::VecN<2> out;
  if (cfg.scheme == Scheme::rk4) {
    out = detail::rk4_step<2>(rhs, s.t, y, dt);
  } else {
    detail::VecN<2> k1, k7;
    rhs(s.t, y, k1);
    double err;
    out = detail::dp_step<2>(rhs, s.t, y, k1, dt, cfg.rel_tol, cfg.abs_tol, err, k7);
  }
  if (!detail::all_finite<2>(out)) throw Error(ErrorKind::non_finite, "non-finite state in step");
  return {out[0], out[1], s.t + dt};
}

}  // namespace genusflow
