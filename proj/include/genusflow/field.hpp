#pragma once

// Planar vector fields built from expressions: invariant-curve synthesis,
// cusp vanishing, the forced oscillator and the boundary matching audit.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "genusflow/error.hpp"
#include "genusflow/expr.hpp"
#include "genusflow/geometry.hpp"

namespace genusflow {

/// Closed curve psi = 0 together with its damping terms.
struct CurveSpec {
  Expr psi;
  Expr f = expr::constant(0.0);
  Expr g = expr::constant(0.0);
  std::string label;
};

/// (fx, fy) as expressions in x, y, t, with compiled values and Jacobian.
class VectorField {
 public:
  VectorField() : VectorField(expr::constant(0.0), expr::constant(0.0)) {}

  VectorField(Expr fx, Expr fy) : fx_(std::move(fx)), fy_(std::move(fy)) {
    val_ = ExprProgram({fx_, fy_});
    jac_ = ExprProgram({diff(fx_, 'x'), diff(fx_, 'y'), diff(fy_, 'x'), diff(fy_, 'y')});
    autonomous_ = !depends_on(fx_, 't') && !depends_on(fy_, 't');
    zero_ = structurally_equal(fx_, expr::constant(0.0)) &&
            structurally_equal(fy_, expr::constant(0.0));
  }

  const Expr& fx() const { return fx_; }
  const Expr& fy() const { return fy_; }
  bool autonomous() const { return autonomous_; }
  /// True only when both components are the literal constant 0.
  bool identically_zero() const { return zero_; }

  Vec2 operator()(double x, double y, double t) const {
    double v[2];
    val_(x, y, t, v);
    return {v[0], v[1]};
  }
  Vec2 operator()(Vec2 q, double t) const { return (*this)(q.x, q.y, t); }

  /// Spatial Jacobian [[dfx/dx, dfx/dy], [dfy/dx, dfy/dy]].
  Mat2 jacobian(Vec2 q, double t) const {
    double j[4];
    jac_(q.x, q.y, t, j);
    return {j[0], j[1], j[2], j[3]};
  }

  /// Evaluation with the finiteness check of eval_expr.
  Vec2 checked(Vec2 q, double t) const {
    const Vec2 v = (*this)(q, t);
    if (!std::isfinite(v.x) || !std::isfinite(v.y)) {
      throw Error(ErrorKind::evaluation, "non-finite field value");
    }
    return v;
  }

  std::vector<CurveSpec> curves;
  std::vector<Vec2> cusp_points;
  double cusp_epsilon = 0.0;

 private:
  Expr fx_, fy_;
  ExprProgram val_, jac_;
  bool autonomous_ = true;
  bool zero_ = false;
};

using SynthesizedField = VectorField;

/// x' = sum_i (dpsi_i/dy + psi_i f_i) prod_{j!=i} psi_j,
/// y' = sum_i (-dpsi_i/dx + psi_i g_i) prod_{j!=i} psi_j.
inline SynthesizedField synthesize(const std::vector<CurveSpec>& curves) {
  using namespace expr;
  if (curves.empty()) throw Error(ErrorKind::input, "synthesize needs at least one curve");
  for (const CurveSpec& c : curves) {
    if (depends_on(c.psi, 't')) {
      throw Error(ErrorKind::input, "curve '" + c.label + "' depends on t; curves must be stationary");
    }
  }
  Expr fx = constant(0.0), fy = constant(0.0);
  for (std::size_t i = 0; i < curves.size(); ++i) {
    const CurveSpec& c = curves[i];
    Expr tx = s_add(diff(c.psi, 'y'), s_mul(c.psi, c.f));
    Expr ty = s_add(s_neg(diff(c.psi, 'x')), s_mul(c.psi, c.g));
    for (std::size_t j = 0; j < curves.size(); ++j) {
      if (j == i) continue;
      tx = s_mul(tx, curves[j].psi);
      ty = s_mul(ty, curves[j].psi);
    }
    fx = s_add(fx, tx);
    fy = s_add(fy, ty);
  }
  SynthesizedField w(fx, fy);
  w.curves = curves;
  return w;
}

/// s(u) = 1 - exp(-u^2) with u = |q - m| / epsilon.
inline Expr cusp_factor(Vec2 m, double epsilon) {
  using namespace expr;
  const Expr dx = sub(x(), constant(m.x));
  const Expr dy = sub(y(), constant(m.y));
  const Expr r2 = add(power(dx, 2), power(dy, 2));
  return sub(constant(1.0), exp(neg(div(r2, constant(epsilon * epsilon)))));
}

/// Multiplies both components by prod_i s(|q - m_i| / epsilon).
inline SynthesizedField apply_cusp_vanishing(const SynthesizedField& w, const std::vector<Vec2>& points,
                                             double epsilon) {
  if (!(epsilon > 0.0)) throw Error(ErrorKind::input, "cusp epsilon must be positive");
  if (points.empty()) return w;
  Expr factor = cusp_factor(points.front(), epsilon);
  for (std::size_t i = 1; i < points.size(); ++i) {
    factor = expr::mul(factor, cusp_factor(points[i], epsilon));
  }
  SynthesizedField out(expr::mul(w.fx(), factor), expr::mul(w.fy(), factor));
  out.curves = w.curves;
  out.cusp_points = w.cusp_points;
  out.cusp_points.insert(out.cusp_points.end(), points.begin(), points.end());
  out.cusp_epsilon = epsilon;
  return out;
}

/// Distinct cusp locations of a domain (duplicates within 1e-12 dropped).
inline std::vector<Vec2> distinct_cusps(const RectDomain& dom) {
  std::vector<Vec2> out;
  for (const Vec2& m : dom.cusps()) {
    const bool seen = std::any_of(out.begin(), out.end(), [&](Vec2 o) { return distance(o, m) < 1e-12; });
    if (!seen) out.push_back(m);
  }
  return out;
}

/// y1' = y2 - H(y1), y2' = -g(t, y1) with y1 = x, y2 = y.
inline VectorField builtin_forced_oscillator(const Expr& H, const Expr& g) {
  if (depends_on(H, 'y') || depends_on(H, 't')) {
    throw Error(ErrorKind::input, "H must depend on x only");
  }
  if (depends_on(g, 'y')) throw Error(ErrorKind::input, "g must depend on x and t only");
  return VectorField(expr::sub(expr::y(), H), expr::neg(g));
}

/// Field at an arbitrary plane point: reduce into the rectangle and pull the
/// value back through the linear part of the reducing map.
inline Vec2 eval_extended(const VectorField& w, const RectDomain& dom, Vec2 q, double t) {
  if (dom.contains(q)) return w(q, t);
  const Reduction r = reduce_to_domain(q, dom);
  return r.map.linear.inverse() * w(r.point, t);
}

/// max over segments i and samples q on D_i of |w(T_i q) - A_i w(q)|,
/// evaluated at each of `times`. An empty `segments` list audits all.
inline double check_matching(const VectorField& w, const RectDomain& dom, int n_samples,
                             const std::vector<double>& times = {0.0}, const std::vector<int>& segments = {}) {
  if (n_samples < 1) throw Error(ErrorKind::input, "check_matching needs n_samples >= 1");
  std::vector<int> ids = segments;
  if (ids.empty()) {
    for (int i = 1; i <= dom.segment_count(); ++i) ids.push_back(i);
  }
  double worst = 0.0;
  for (int i : ids) {
    const Segment& s = dom.segment(i);
    const AffineMap& tr = dom.transition(i);
    for (int k = 0; k < n_samples; ++k) {
      const double u = n_samples == 1 ? 0.5 : static_cast<double>(k) / (n_samples - 1);
      const Vec2 q = s.start + u * s.direction();
      for (double t : times) {
        const Vec2 lhs = w.checked(tr(q), t);
        const Vec2 rhs = tr.push(w.checked(q, t));
        worst = std::max(worst, distance(lhs, rhs));
      }
    }
  }
  return worst;
}

}  // namespace genusflow
