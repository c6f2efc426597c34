#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "genusflow/geometry.hpp"

using namespace genusflow;
constexpr double pi = std::numbers::pi;

TEST(Moebius, IdentityLeavesPointsFixed) {
  const MoebiusMap id(1, 0, 0, 1);
  const HPoint z = mobius_apply(id, {0.3, 2.0});
  EXPECT_DOUBLE_EQ(z.x, 0.3);
  EXPECT_DOUBLE_EQ(z.y, 2.0);
}

TEST(Moebius, UnitTranslation) {
  const HPoint z = mobius_apply(MoebiusMap(1, 1, 0, 1), {0.0, 1.0});
  EXPECT_DOUBLE_EQ(z.x, 1.0);
  EXPECT_DOUBLE_EQ(z.y, 1.0);
}

TEST(Moebius, NegativeReciprocal) {
  // -1/(2i) = i/2
  const HPoint z = mobius_apply(MoebiusMap(0, -1, 1, 0), {0.0, 2.0});
  EXPECT_NEAR(z.x, 0.0, 1e-15);
  EXPECT_NEAR(z.y, 0.5, 1e-15);
}

TEST(Moebius, PoleIsAnError) {
  const MoebiusMap t(1, 0, 1, 1);
  try {
    mobius_apply(t, {-1.0, 0.0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::pole);
  }
}

TEST(Moebius, NormalizationConvention) {
  const MoebiusMap t(-2, -4, 0, -2);  // det 4, a < 0
  EXPECT_NEAR(t.det(), 1.0, 1e-12);
  EXPECT_GT(t.a(), 0.0);
  EXPECT_NEAR(t.b(), 2.0, 1e-15);
  const MoebiusMap s(0, -3, 3, 0);  // a == 0 requires c > 0
  EXPECT_GT(s.c(), 0.0);
  const MoebiusMap u(0, 3, -3, 0);
  EXPECT_GT(u.c(), 0.0);
  EXPECT_THROW(MoebiusMap(1, 1, 1, 1), Error);
}

TEST(Moebius, PushforwardExamples) {
  const TangentVector v{{0.4, 1.3}, 2.0, 3.0};
  const TangentVector a = mobius_pushforward(MoebiusMap::identity(), v.base, v);
  EXPECT_DOUBLE_EQ(a.vx, 2.0);
  EXPECT_DOUBLE_EQ(a.vy, 3.0);
  const TangentVector b = mobius_pushforward(MoebiusMap(1, 1, 0, 1), v.base, v);
  EXPECT_DOUBLE_EQ(b.vx, 2.0);
  EXPECT_DOUBLE_EQ(b.vy, 3.0);
  // d/dz(-1/z) = 1/z^2 = -1 at z = i; the finite-difference oracle agrees.
  const MoebiusMap inv(0, -1, 1, 0);
  const TangentVector c = mobius_pushforward(inv, {0, 1}, {{0, 1}, 1.0, 0.0});
  const double h = 1e-6;
  const Vec2 fd = (mobius_apply(inv, {h, 1}) - mobius_apply(inv, {-h, 1})) * (0.5 / h);
  EXPECT_NEAR(fd.x, -1.0, 1e-9);
  EXPECT_NEAR(c.vx, -1.0, 1e-15);
  EXPECT_NEAR(c.vy, 0.0, 1e-15);
}

TEST(Moebius, PushforwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> coef(-2.0, 2.0), ux(-3.0, 3.0), uy(0.5, 5.0), ang(0, 2 * pi);
  int checked = 0;
  while (checked < 100) {
    const double a = coef(rng), b = coef(rng), c = coef(rng), d = coef(rng);
    if (a * d - b * c < 0.1) continue;
    const MoebiusMap t(a, b, c, d);
    const HPoint z{ux(rng), uy(rng)};
    const double th = ang(rng);
    const Vec2 v{std::cos(th), std::sin(th)};
    const double h = 1e-6;
    const HPoint p = mobius_apply(t, z + h * v), m = mobius_apply(t, z - h * v);
    const Vec2 fd = (p - m) * (0.5 / h);
    const TangentVector an = mobius_pushforward(t, z, {z, v.x, v.y});
    EXPECT_LT(norm(fd - an.velocity()), 1e-5 * norm(an.velocity()));
    ++checked;
  }
}

TEST(Moebius, GroupOperations) {
  const MoebiusMap t(2, 1, 3, 2);
  const MoebiusMap e = mobius_compose(t, mobius_inverse(t));
  EXPECT_NEAR(e.a(), 1.0, 1e-12);
  EXPECT_NEAR(e.b(), 0.0, 1e-12);
  EXPECT_NEAR(e.c(), 0.0, 1e-12);
  EXPECT_NEAR(e.d(), 1.0, 1e-12);
  const MoebiusMap inv = mobius_inverse(MoebiusMap(1, 1, 0, 1));
  EXPECT_DOUBLE_EQ(inv.b(), -1.0);
  EXPECT_DOUBLE_EQ(inv.a(), 1.0);
  const MoebiusMap sum = mobius_compose(MoebiusMap(1, 1, 0, 1), MoebiusMap(1, 2, 0, 1));
  EXPECT_DOUBLE_EQ(sum.b(), 3.0);
  EXPECT_DOUBLE_EQ(sum.a(), 1.0);
  EXPECT_DOUBLE_EQ(sum.d(), 1.0);
}

TEST(Moebius, DeterminantStaysOneAfterNormalization) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-10, 10);
  for (int k = 0; k < 500; ++k) {
    const double a = u(rng), b = u(rng), c = u(rng), d = u(rng);
    if (a * d - b * c <= 1e-3) continue;
    EXPECT_LT(std::abs(MoebiusMap(a, b, c, d).det() - 1.0), 1e-12);
  }
}

TEST(Chart, EdgesMapToZeroAndPi) {
  const Vec2 lo = chart_to_rectangle(1.5, pi / 4, pi / 4);
  EXPECT_EQ(lo.x, 0.0);
  EXPECT_EQ(lo.y, 1.5);
  const Vec2 hi = chart_to_rectangle(2.0, pi - pi / 4, pi / 4);
  EXPECT_EQ(hi.x, pi);
  EXPECT_EQ(hi.y, 2.0);
  const Vec2 mid = chart_to_rectangle(1.0, pi / 2, 0.0);
  EXPECT_DOUBLE_EQ(mid.x, pi / 2);
}

TEST(Chart, RejectsAnglesOutsideTheSector) {
  try {
    chart_to_rectangle(1.0, 0.1, pi / 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::domain);
  }
}

TEST(Chart, MonotoneInTheta) {
  for (double alpha : {0.0, 0.2, pi / 4, 1.4}) {
    double prev = -1.0;
    for (int k = 0; k <= 1000; ++k) {
      const double th = alpha + (pi - 2 * alpha) * k / 1000.0;
      const double x = chart_to_rectangle(1.0, std::min(th, pi - alpha), alpha).x;
      EXPECT_GE(x, prev);
      prev = x;
    }
    EXPECT_EQ(prev, pi);
  }
}

TEST(Domain, TorusLayout) {
  const RectDomain d = standard_domain(1);
  ASSERT_EQ(d.segment_count(), 4);
  EXPECT_EQ(d.partner(1), 3);
  EXPECT_EQ(d.partner(2), 4);
  EXPECT_EQ(d.partner(3), 1);
  EXPECT_EQ(d.partner(4), 2);
  EXPECT_EQ(d.transition(3).offset, (Vec2{-1.0, 0.0}));
  EXPECT_EQ(d.transition(1).offset, (Vec2{1.0, 0.0}));
  EXPECT_EQ(d.transition(2).offset, (Vec2{0.0, 1.0}));
  EXPECT_EQ(d.transition(4).offset, (Vec2{0.0, -1.0}));
  for (int i = 1; i <= 4; ++i) EXPECT_EQ(d.transition(i).linear, Mat2::identity());
}

TEST(Domain, GenusTwoPairingIsFixedPointFree) {
  const RectDomain d = standard_domain(2);
  ASSERT_EQ(d.segment_count(), 8);
  EXPECT_DOUBLE_EQ(d.width(), pi);
  for (int i = 1; i <= 8; ++i) {
    EXPECT_NE(d.partner(i), i);
    EXPECT_EQ(d.partner(d.partner(i)), i);
  }
}

class DomainRoundTrip : public ::testing::TestWithParam<int> {};

TEST_P(DomainRoundTrip, PartnerTransitionInvertsTransition) {
  const RectDomain d = standard_domain(GetParam());
  for (int i = 1; i <= d.segment_count(); ++i) {
    const Segment& s = d.segment(i);
    const AffineMap& t = d.transition(i);
    const AffineMap& back = d.transition(d.partner(i));
    double worst = 0.0;
    for (int k = 0; k < 50; ++k) {
      const Vec2 q = s.start + (k / 49.0) * s.direction();
      worst = std::max(worst, distance(back(t(q)), q));
      const Vec2 v{std::cos(0.3 * k), std::sin(0.3 * k)};
      worst = std::max(worst, norm(back.push(t.push(v)) - v));
    }
    EXPECT_LT(worst, 1e-10) << "segment " << i;
    // Endpoints go to endpoints with reversed orientation.
    const Segment& p = d.segment(d.partner(i));
    EXPECT_LT(distance(t(s.start), p.end), 1e-12);
    EXPECT_LT(distance(t(s.end), p.start), 1e-12);
  }
}

INSTANTIATE_TEST_SUITE_P(Genera, DomainRoundTrip, ::testing::Values(1, 2, 3, 4));

TEST(Domain, TransitionsMapSegmentOntoPartner) {
  const RectDomain d = standard_domain(3);
  for (int i = 1; i <= d.segment_count(); ++i) {
    const Segment& s = d.segment(i);
    for (int k = 1; k < 10; ++k) {
      const Vec2 q = d.transition(i)(s.start + (k / 10.0) * s.direction());
      EXPECT_EQ(d.segment_at(q), d.partner(i));
    }
  }
}

TEST(Reduce, InteriorPointUnchanged) {
  const RectDomain d = standard_domain(2);
  const Vec2 q{1.0, 4.0};
  const Reduction r = reduce_to_domain(q, d);
  EXPECT_EQ(r.point, q);
  EXPECT_TRUE(r.word.empty());
}

TEST(Reduce, TorusWrapThroughRightEdge) {
  const RectDomain d = standard_domain(1);
  const Reduction r = reduce_to_domain({1.0 + 1e-9, 0.5}, d);
  EXPECT_NEAR(r.point.x, 1e-9, 1e-15);
  EXPECT_DOUBLE_EQ(r.point.y, 0.5);
  ASSERT_EQ(r.word.size(), 1u);
  EXPECT_EQ(r.word[0], 3);
}

TEST(Reduce, GenusTwoRoundTrip) {
  const RectDomain d = standard_domain(2);
  const Segment& s1 = d.segment(1);
  const Vec2 mid = s1.start + 0.5 * s1.direction();
  const Vec2 out = mid + 1e-7 * s1.outward_normal();
  const Reduction r = reduce_to_domain(out, d);
  ASSERT_EQ(r.word.size(), 1u);
  EXPECT_EQ(r.word[0], 1);
  EXPECT_TRUE(d.contains(r.point));
  EXPECT_EQ(d.segment_at(r.point), d.partner(1));
  const Vec2 back = d.letter_map(-1)(r.point);
  EXPECT_LT(distance(back, out), 1e-10);
}

TEST(Reduce, GuardAgainstRunaway) {
  const RectDomain d = standard_domain(1);
  try {
    reduce_to_domain({1e6, 0.5}, d);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::reduction_limit);
  }
}

TEST(Domain, ShearedTorusTransitions) {
  const RectDomain d = torus_domain(1.0, -2.0, 3.0, 0.5);
  EXPECT_EQ(d.transition(3).offset, (Vec2{-1.0, -0.5}));
  const Reduction r = reduce_to_domain({1.25, 1.0}, d);
  EXPECT_NEAR(r.point.x, 0.25, 1e-15);
  EXPECT_NEAR(r.point.y, 0.5, 1e-15);
}
