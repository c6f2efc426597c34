#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "genusflow/field.hpp"

using namespace genusflow;
constexpr double pi = std::numbers::pi;

namespace {

CurveSpec curve(const char* psi, const char* f = "0", const char* g = "0") {
  return {parse_expr(psi), parse_expr(f), parse_expr(g), psi};
}

// d psi / dt along the field, from analytic partials.
double psi_rate(const VectorField& w, const Expr& psi, Vec2 q, double t) {
  const Vec2 v = w(q, t);
  return eval_expr(diff(psi, 'x'), q.x, q.y, t) * v.x + eval_expr(diff(psi, 'y'), q.x, q.y, t) * v.y;
}

}  // namespace

TEST(Synthesize, SingleCircleIsRotation) {
  const VectorField w = synthesize({curve("x^2 + y^2 - 1")});
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int k = 0; k < 20; ++k) {
    const double x = u(rng), y = u(rng);
    const Vec2 v = w(x, y, 0);
    EXPECT_NEAR(v.x, 2 * y, 1e-14);
    EXPECT_NEAR(v.y, -2 * x, 1e-14);
  }
}

TEST(Synthesize, CircleTangencyAtOneZero) {
  const CurveSpec c = curve("x^2 + y^2 - 1");
  const VectorField w = synthesize({c});
  EXPECT_EQ(psi_rate(w, c.psi, {1, 0}, 0), 0.0);
}

TEST(Synthesize, OtherSummandsSwitchOff) {
  const CurveSpec c1 = curve("x^2 + y^2 - 1"), c2 = curve("x^2 + y^2 - 4");
  const VectorField w = synthesize({c1, c2});
  for (int k = 0; k < 12; ++k) {
    const double th = 2 * pi * k / 12;
    const Vec2 q{std::cos(th), std::sin(th)};
    EXPECT_NEAR(psi_rate(w, c1.psi, q, 0), 0.0, 1e-13);
    // only the i = 1 summand survives: (dpsi1/dy, -dpsi1/dx) * psi2
    const Vec2 v = w(q, 0);
    EXPECT_NEAR(v.x, 2 * q.y * -3.0, 1e-13);
    EXPECT_NEAR(v.y, -2 * q.x * -3.0, 1e-13);
  }
}

TEST(Synthesize, RejectsTimeDependentCurves) {
  EXPECT_THROW(synthesize({curve("x^2 + y^2 - t")}), Error);
  EXPECT_THROW(synthesize({}), Error);
}

TEST(SynthesizeProperty, CurvesAreInvariantForAnyDamping) {
  const std::vector<CurveSpec> curves{
      curve("x^2 + y^2 - 1", "sin(3*x*y) + cos(t)", "x^3 - 2*t*y"),
      curve("(x - 3)^2 + 2*y^2 - 0.5", "exp(x*y)", "-y"),
      curve("sin(2*x) - sin(2*y) - 0.5*sin(2*x)*sin(2*y) - 1.2", "4*x", "cos(t*y)"),
  };
  const VectorField w = synthesize(curves);
  // Points on curve 1, curve 2 and a level point of curve 3 found by bisection in y.
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ang(0, 2 * pi), tt(0, 3);
  for (int k = 0; k < 50; ++k) {
    const double th = ang(rng), t = tt(rng);
    const Vec2 q1{std::cos(th), std::sin(th)};
    const Vec2 q2{3 + std::sqrt(0.5) * std::cos(th), 0.5 * std::sin(th)};
    const Vec2 v1 = w(q1, t), v2 = w(q2, t);
    const double s1 = std::max(1.0, norm(v1)), s2 = std::max(1.0, norm(v2));
    EXPECT_NEAR(psi_rate(w, curves[0].psi, q1, t) / s1, 0.0, 1e-13);
    EXPECT_NEAR(psi_rate(w, curves[1].psi, q2, t) / s2, 0.0, 1e-13);
  }
  // curve 3 crosses x = pi/4 between y = 1.5 and y = 3 (psi3 changes sign there)
  const Expr& p3 = curves[2].psi;
  const double x0 = pi / 4;
  double lo = 1.6, hi = 3.0;
  ASSERT_LT(eval_expr(p3, x0, lo) * eval_expr(p3, x0, hi), 0.0);
  for (int k = 0; k < 200; ++k) {
    const double mid = 0.5 * (lo + hi);
    (eval_expr(p3, x0, lo) * eval_expr(p3, x0, mid) <= 0 ? hi : lo) = mid;
  }
  const Vec2 q3{x0, 0.5 * (lo + hi)};
  EXPECT_NEAR(psi_rate(w, p3, q3, 0.7) / std::max(1.0, norm(w(q3, 0.7))), 0.0, 1e-12);
}

TEST(Cusps, VanishExactlyAtPoints) {
  const VectorField base(parse_expr("1 + x"), parse_expr("y - 2"));
  const std::vector<Vec2> pts{{0, 0}, {1, 1}};
  const VectorField w = apply_cusp_vanishing(base, pts, 0.1);
  for (Vec2 m : pts) {
    EXPECT_EQ(w(m, 0).x, 0.0);
    EXPECT_EQ(w(m, 0).y, 0.0);
  }
}

TEST(Cusps, FarFieldUnchanged) {
  const VectorField base(parse_expr("1"), parse_expr("2"));
  const VectorField w = apply_cusp_vanishing(base, {{0, 0}}, 0.1);
  const Vec2 v = w({1.0, 0.0}, 0);  // d / eps = 10
  EXPECT_NEAR(v.x, 1.0, 1e-40);
  EXPECT_NEAR(v.y, 2.0, 1e-40);
}

TEST(Cusps, FactorAtOneEpsilon) {
  const VectorField base(parse_expr("1"), parse_expr("0"));
  const VectorField w = apply_cusp_vanishing(base, {{0.5, 0.5}}, 0.2);
  EXPECT_NEAR(w({0.7, 0.5}, 0).x, 1 - std::exp(-1.0), 1e-15);
}

TEST(CuspsProperty, PreservesZerosAndAddsOnlyCusps) {
  const VectorField base = synthesize({curve("x^2 + y^2 - 1")});  // zero only at the origin
  const std::vector<Vec2> pts{{0.5, 0.5}, {-1.2, 0.3}};
  const VectorField w = apply_cusp_vanishing(base, pts, 0.05);
  EXPECT_EQ(norm(w({0, 0}, 0)), 0.0);
  for (Vec2 m : pts) EXPECT_EQ(norm(w(m, 0)), 0.0);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int k = 0; k < 200; ++k) {
    const Vec2 q{u(rng), u(rng)};
    if (norm(base(q, 0)) > 1e-8 && distance(q, pts[0]) > 1e-3 && distance(q, pts[1]) > 1e-3) {
      EXPECT_GT(norm(w(q, 0)), 0.0);
    }
  }
  EXPECT_THROW(apply_cusp_vanishing(base, pts, 0.0), Error);
}

TEST(Matching, ConstantFieldOnTorus) {
  const RectDomain dom = standard_domain(1);
  EXPECT_EQ(check_matching(VectorField(parse_expr("1"), parse_expr("0")), dom, 50), 0.0);
}

TEST(Matching, LinearFieldMismatch) {
  const RectDomain dom = standard_domain(1);
  EXPECT_NEAR(check_matching(VectorField(parse_expr("y"), parse_expr("x")), dom, 50), 1.0, 1e-12);
}

TEST(Matching, DoublyPeriodicField) {
  const RectDomain dom = standard_domain(1);
  const VectorField w(parse_expr("sin(2*pi*x)"), parse_expr("sin(2*pi*y)"));
  EXPECT_LT(check_matching(w, dom, 100), 1e-12);
}

TEST(Matching, SegmentFilterAndTimes) {
  // periodic in x only: the vertical identification matches, the horizontal one does not
  const RectDomain dom = torus_domain(1.0, 0.0, 2.0);
  const VectorField w(parse_expr("y*cos(t)"), parse_expr("sin(2*pi*x)"));
  EXPECT_LT(check_matching(w, dom, 40, {0.0, 1.0}, {1, 3}), 1e-12);
  EXPECT_GT(check_matching(w, dom, 40, {0.0, 1.0}), 1.0);
}

TEST(Oscillator, Examples) {
  const VectorField a = builtin_forced_oscillator(parse_expr("0"), parse_expr("0"));
  EXPECT_EQ(a(0.3, 0.7, 0).x, 0.7);
  EXPECT_EQ(a(0.3, 0.7, 0).y, 0.0);
  const VectorField b = builtin_forced_oscillator(parse_expr("x"), parse_expr("x"));
  EXPECT_DOUBLE_EQ(b(0.3, 0.7, 0).x, 0.4);
  EXPECT_DOUBLE_EQ(b(0.3, 0.7, 0).y, -0.3);
  const VectorField c = builtin_forced_oscillator(parse_expr("0.5*x"), parse_expr("sin(x)*(1 + 0.3*cos(t))"));
  EXPECT_EQ(norm(c(0, 0, 0)), 0.0);
  EXPECT_THROW(builtin_forced_oscillator(parse_expr("y"), parse_expr("0")), Error);
  EXPECT_THROW(builtin_forced_oscillator(parse_expr("x"), parse_expr("y")), Error);
}

TEST(Field, JacobianMatchesFiniteDifferences) {
  const VectorField w(parse_expr("sin(x*y) + t"), parse_expr("exp(x) - y^3"));
  const Vec2 q{0.4, -0.7};
  const Mat2 J = w.jacobian(q, 0.3);
  const double h = 1e-6;
  const Vec2 dx = (w(q + Vec2{h, 0}, 0.3) - w(q - Vec2{h, 0}, 0.3)) * (0.5 / h);
  const Vec2 dy = (w(q + Vec2{0, h}, 0.3) - w(q - Vec2{0, h}, 0.3)) * (0.5 / h);
  EXPECT_NEAR(J.a, dx.x, 1e-8);
  EXPECT_NEAR(J.c, dx.y, 1e-8);
  EXPECT_NEAR(J.b, dy.x, 1e-8);
  EXPECT_NEAR(J.d, dy.y, 1e-8);
  EXPECT_FALSE(w.autonomous());
}

TEST(Field, GenusTwoCuspVanishingMatches) {
  const RectDomain dom = standard_domain(2);
  const VectorField w = apply_cusp_vanishing(VectorField(parse_expr("0.3"), parse_expr("0.1")), distinct_cusps(dom), 0.1);
  for (Vec2 m : dom.cusps()) EXPECT_EQ(norm(w(m, 0)), 0.0);
}
