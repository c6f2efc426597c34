#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "genusflow/field.hpp"
#include "genusflow/integrate.hpp"

using namespace genusflow;
constexpr double pi = std::numbers::pi;

namespace {

VectorField field(const char* fx, const char* fy) { return VectorField(parse_expr(fx), parse_expr(fy)); }

IntegratorConfig rk4(double h) {
  IntegratorConfig c;
  c.scheme = Scheme::rk4;
  c.max_step = h;
  return c;
}

}  // namespace

TEST(Integrate, ZeroFieldIsConstant) {
  const Trajectory tr = integrate(VectorField(), State{0.3, -0.2, 0.0}, 5.0, nullptr);
  EXPECT_TRUE(tr.events.empty());
  EXPECT_EQ(tr.final_state.x, 0.3);
  EXPECT_EQ(tr.final_state.y, -0.2);
  EXPECT_EQ(tr.final_state.t, 5.0);
  for (const State& s : tr.samples) {
    EXPECT_EQ(s.x, 0.3);
    EXPECT_EQ(s.y, -0.2);
  }
}

TEST(Integrate, CircleReturnsAfterPi) {
  const Trajectory tr = integrate(field("2*y", "-2*x"), State{1, 0, 0}, pi, nullptr);
  EXPECT_NEAR(tr.final_state.x, 1.0, 1e-7);
  EXPECT_NEAR(tr.final_state.y, 0.0, 1e-7);
  for (const State& s : tr.samples) {
    EXPECT_NEAR(s.x, std::cos(2 * s.t), 1e-7);
    EXPECT_NEAR(s.y, -std::sin(2 * s.t), 1e-7);
  }
}

TEST(Integrate, TorusWrapsTwice) {
  const RectDomain dom = standard_domain(1);
  const Trajectory tr = integrate(field("1", "0"), State{0.5, 0.5, 0}, 2.0, &dom);
  ASSERT_EQ(tr.events.size(), 2u);
  for (const CrossingEvent& e : tr.events) EXPECT_EQ(e.segment, 3);
  EXPECT_NEAR(tr.events[0].t, 0.5, 1e-10);
  EXPECT_NEAR(tr.events[1].t, 1.5, 1e-10);
  EXPECT_NEAR(tr.final_state.x, 0.5, 1e-10);
  EXPECT_NEAR(tr.final_state.y, 0.5, 1e-12);
  EXPECT_EQ(tr.word, (Word{3, 3}));
}

TEST(StepDense, Examples) {
  const State s{0.2, 0.4, 1.0};
  const State a = step_dense(VectorField(), s, 0.5);
  EXPECT_EQ(a.x, 0.2);
  EXPECT_EQ(a.y, 0.4);
  const State b = step_dense(field("0", "1"), s, 0.25, rk4(0.25));
  EXPECT_EQ(b.x, 0.2);
  EXPECT_EQ(b.y, 0.65);
  EXPECT_EQ(b.t, 1.25);
  // one Dormand-Prince step of x' = x
  const State c = step_dense(field("x", "0"), State{1, 0, 0}, 0.1);
  EXPECT_NEAR(c.x, std::exp(0.1), 1e-8);
  // one classical RK4 step reproduces the quartic Taylor polynomial of e^h
  const double h = 0.1;
  const State d = step_dense(field("x", "0"), State{1, 0, 0}, h, rk4(h));
  EXPECT_NEAR(d.x, 1 + h + h * h / 2 + h * h * h / 6 + h * h * h * h / 24, 1e-15);
  EXPECT_NEAR(d.x, std::exp(h), 1e-7);
  EXPECT_THROW(step_dense(VectorField(), s, 0.0), Error);
}

TEST(IntegrateProperty, FourthOrderConvergence) {
  const VectorField w = field("2*y", "-2*x");
  auto err = [&](double h) {
    const Trajectory tr = integrate(w, State{1, 0, 0}, pi, nullptr, rk4(h));
    return distance(tr.final_state.pos(), {1, 0});
  };
  const double ratio = err(pi / 40) / err(pi / 80);
  EXPECT_GE(ratio, 12.0);
  EXPECT_LE(ratio, 20.0);
}

TEST(IntegrateProperty, ForwardBackwardReturns) {
  const char* fields[][2] = {{"2*y", "-2*x"}, {"sin(x) + y^2", "cos(x*y)"}, {"-x + y^3", "exp(-x^2) - y"}};
  for (const auto& f : fields) {
    const VectorField fw = field(f[0], f[1]);
    const VectorField bw(expr::neg(fw.fx()), expr::neg(fw.fy()));
    const Trajectory a = integrate(fw, State{0.3, -0.4, 0}, 1.0, nullptr);
    const Trajectory b = integrate(bw, State{a.final_state.x, a.final_state.y, 0}, 1.0, nullptr);
    EXPECT_LT(distance(b.final_state.pos(), {0.3, -0.4}), 1e-6) << f[0];
  }
}

TEST(IntegrateProperty, DeckWordMatchesLinearWinding) {
  const RectDomain dom = standard_domain(1);
  struct Case {
    double a, b, t;
  };
  for (const Case c : {Case{1, 0.5, 4.3}, Case{2, 1, 3.7}, Case{0.5, 1.5, 5.1}, Case{1, -0.25, 6.1}}) {
    const Vec2 q0{0.1, 0.2};
    const VectorField w(expr::constant(c.a), expr::constant(c.b));
    const Trajectory tr = integrate(w, State{q0.x, q0.y, 0}, c.t, &dom);
    int right = 0, top = 0, bottom = 0;
    for (int l : tr.word) {
      right += l == 3;
      top += l == 4;
      bottom += l == 2;
    }
    EXPECT_EQ(right, static_cast<int>(std::floor(q0.x + c.a * c.t))) << c.a << " " << c.b;
    const int vert = static_cast<int>(std::floor(q0.y + c.b * c.t));
    EXPECT_EQ(vert >= 0 ? top : -bottom, vert) << c.a << " " << c.b;
    for (const State& s : tr.samples) EXPECT_TRUE(dom.contains(s.pos()));
  }
}

TEST(IntegrateProperty, SamplesStayInClosedRectangle) {
  // field built from a function invariant under the quarter-turn gluings
  const RectDomain dom = standard_domain(2);
  const CurveSpec c{parse_expr("sin(2*x) - sin(2*y) - 0.5*sin(2*x)*sin(2*y) - 1.2"), expr::constant(0),
                    expr::constant(0), "level"};
  const VectorField w = apply_cusp_vanishing(synthesize({c}), distinct_cusps(dom), 0.1);
  ASSERT_LT(check_matching(w, dom, 50), 1e-12);
  const Trajectory tr = integrate(w, State{0.5, 4.5, 0}, 20.0, &dom);
  EXPECT_FALSE(tr.events.empty());
  double prev = -1;
  for (const State& s : tr.samples) {
    EXPECT_TRUE(dom.contains(s.pos())) << s.x << " " << s.y;
    EXPECT_GT(s.t, prev);
    prev = s.t;
  }
  for (const CrossingEvent& e : tr.events) {
    EXPECT_GE(e.segment, 1);
    EXPECT_LE(e.segment, dom.segment_count());
  }
}

TEST(Integrate, CuspHitTerminates) {
  const RectDomain dom = standard_domain(2);
  const Vec2 corner{0.0, pi};
  const Trajectory tr = integrate(field("-1", "-1"), State{corner.x + 0.5, corner.y + 0.5, 0}, 2.0, &dom);
  EXPECT_EQ(tr.termination, Termination::cusp_hit);
  EXPECT_NEAR(tr.final_state.t, 0.5, 1e-9);
  EXPECT_LT(distance(tr.final_state.pos(), corner), 1e-9);
}

TEST(Integrate, Errors) {
  IntegratorConfig few;
  few.max_steps = 5;
  try {
    integrate(field("2*y", "-2*x"), State{1, 0, 0}, 100.0, nullptr, few);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::step_limit);
  }
  try {
    integrate(field("x^2", "0"), State{1, 0, 0}, 2.0, nullptr);
    FAIL();
  } catch (const Error& e) {
    EXPECT_TRUE(e.kind() == ErrorKind::non_finite || e.kind() == ErrorKind::step_limit) << e.what();
  }
  const RectDomain dom = standard_domain(1);
  EXPECT_THROW(integrate(field("1", "0"), State{2, 0.5, 0}, 1.0, &dom), Error);
  EXPECT_THROW(integrate(field("1", "0"), State{0.5, 0.5, 1}, 1.0, &dom), Error);
}
