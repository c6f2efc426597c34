#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "genusflow/presets.hpp"
#include "genusflow/topology.hpp"

using namespace genusflow;
constexpr double pi = std::numbers::pi;

namespace {

VectorField field(const char* fx, const char* fy) { return VectorField(parse_expr(fx), parse_expr(fy)); }

Region torus_region(int n) { return Region::over(standard_domain(1), n, n); }

EquilibriumInfo eq(int index) {
  EquilibriumInfo e;
  e.index = index;
  return e;
}

Polyline circle(double r, int n, int inward) {
  Polyline pl;
  for (int k = 0; k < n; ++k) pl.points.push_back({r * std::cos(2 * pi * k / n), r * std::sin(2 * pi * k / n)});
  pl.inward = inward;
  return pl;
}

}  // namespace

TEST(IterateRegion, PlanarSinkKeepsCenterCell) {
  const PoincareMap P(field("-x", "-y"), 1.0, std::nullopt);
  Region b0(17, 17, Box{-1, 1, -1, 1});
  b0.fill();
  const AttractorEstimate est = iterate_region(P, b0, 10);
  ASSERT_EQ(components(est), 1);
  EXPECT_TRUE(est.region.at(8, 8));
  EXPECT_FALSE(est.components[0].wraps());
  EXPECT_LE(est.region.count(), 9u);
}

TEST(IterateRegion, TorusPhaseLineBand) {
  const PoincareMap P(field("0", "-sin(2*pi*y)"), 1.0, standard_domain(1));
  Region b0 = torus_region(64);
  b0.fill();
  const AttractorEstimate est = iterate_region(P, b0, 20);
  ASSERT_EQ(components(est), 1);
  const ComponentInfo& c = est.components[0];
  EXPECT_TRUE(c.wraps());
  EXPECT_EQ(c.section_axis, Axis::x);
  // every occupied cell touches y = 0 (bottom row) or y = 1 (top row)
  for (int iy = 0; iy < 64; ++iy) {
    for (int ix = 0; ix < 64; ++ix) {
      if (est.region.at(ix, iy)) {
        EXPECT_TRUE(iy == 0 || iy == 63) << ix << " " << iy;
      }
    }
  }
  EXPECT_EQ(circle_test(est, 0).verdict, CircleVerdict::circle_like);
}

TEST(IterateRegion, ZeroFieldKeepsB0) {
  const PoincareMap P(VectorField(), 1.0, standard_domain(1));
  Region b0 = torus_region(16);
  b0.fill_rect(2, 3, 7, 9);
  const AttractorEstimate est = iterate_region(P, b0, 5);
  EXPECT_EQ(est.region.cells, b0.cells);
}

TEST(IterateRegion, EmptyInputIsAnError) {
  const PoincareMap P(field("-x", "-y"), 1.0, std::nullopt);
  const Region b0(8, 8, Box{-1, 1, -1, 1});
  EXPECT_THROW(iterate_region(P, b0, 3), Error);
  Region full(8, 8, Box{-1, 1, -1, 1});
  full.fill();
  EXPECT_THROW(iterate_region(P, full, 0), Error);
}

TEST(IterateRegionProperty, OccupancyIsNested) {
  const Scenario sc = load_preset("martins-oscillator:inversely-unstable");
  const Model m = build_model(sc);
  const Region b0 = build_region(sc, m, 48, 48);
  const AttractorEstimate a = iterate_region(m.map, b0, 2);
  const AttractorEstimate b = iterate_region(m.map, b0, 3);
  for (std::size_t k = 0; k < b0.cells.size(); ++k) {
    EXPECT_LE(a.region.cells[k], b0.cells[k]);
    EXPECT_LE(b.region.cells[k], a.region.cells[k]);
  }
  for (std::size_t k = 1; k < b.occupancy.size(); ++k) EXPECT_LE(b.occupancy[k], b.occupancy[k - 1]);
}

TEST(Components, Examples) {
  Region one(16, 16, Box{0, 1, 0, 1});
  one.fill_rect(2, 2, 6, 5);
  EXPECT_EQ(components(label_components(one)), 1);

  Region two(16, 16, Box{0, 1, 0, 1});
  two.fill_rect(1, 1, 3, 3);
  two.fill_rect(8, 8, 12, 14);
  EXPECT_EQ(components(label_components(two)), 2);

  Region strip = torus_region(16);
  strip.fill_rect(0, 5, 3, 7);
  strip.fill_rect(12, 5, 15, 7);
  const AttractorEstimate est = label_components(strip);
  EXPECT_EQ(components(est), 1);
  EXPECT_FALSE(est.components[0].wraps());

  Region annulus = torus_region(16);
  annulus.fill_rect(0, 5, 15, 7);
  const AttractorEstimate ring = label_components(annulus);
  EXPECT_EQ(components(ring), 1);
  EXPECT_TRUE(ring.components[0].wraps());
}

TEST(Components, LabelsPartitionOccupiedCells) {
  Region r = torus_region(32);
  r.fill_rect(0, 0, 31, 1);
  r.fill_rect(5, 10, 9, 20);
  r.fill_rect(20, 12, 22, 30);
  const AttractorEstimate est = label_components(r);
  std::size_t total = 0;
  for (const ComponentInfo& c : est.components) total += c.cells;
  EXPECT_EQ(total, r.count());
  for (std::size_t k = 0; k < r.cells.size(); ++k) EXPECT_EQ(r.cells[k] != 0, est.labels[k] >= 0);
}

TEST(Components, GenusTwoIdentificationsJoinCells) {
  // cells on segment 1 and on its partner belong to the same component
  const RectDomain dom = standard_domain(2);
  Region r = Region::over(dom, 32, 32);
  const Segment& s = dom.segment(1);
  const Vec2 q = s.start + 0.5 * s.direction();
  const Vec2 img = dom.transition(1)(q);
  const auto a = r.cell_of(q), b = r.cell_of(img);
  ASSERT_TRUE(a && b);
  r.set(a->first, a->second);
  r.set(b->first, b->second);
  EXPECT_EQ(components(label_components(r)), 1);
}

TEST(AttractorCount, Examples) {
  EXPECT_TRUE(attractor_count_check(1, 1));
  EXPECT_TRUE(attractor_count_check(3, 2));
  EXPECT_FALSE(attractor_count_check(4, 2));
  EXPECT_FALSE(attractor_count_check(2, 1));
}

TEST(CircleTest, Examples) {
  Region loop = torus_region(64);
  loop.fill_rect(0, 30, 63, 30);
  EXPECT_EQ(circle_test(label_components(loop), 0).verdict, CircleVerdict::circle_like);

  Region band = torus_region(64);
  band.fill_rect(0, 20, 63, 31);
  const CircleTest ct = circle_test(label_components(band), 0);
  EXPECT_EQ(ct.verdict, CircleVerdict::band_like);
  EXPECT_EQ(ct.max_extent, 12);
  EXPECT_EQ(ct.profile.size(), 64u);

  Region blob = torus_region(64);
  blob.fill_rect(10, 10, 20, 20);
  try {
    circle_test(label_components(blob), 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::no_winding);
  }
}

TEST(CircleTest, VerticalLoopUsesVerticalSections) {
  Region loop = torus_region(64);
  loop.fill_rect(40, 0, 41, 63);
  const CircleTest ct = circle_test(label_components(loop), 0);
  EXPECT_EQ(ct.axis, Axis::y);
  EXPECT_EQ(ct.max_extent, 2);
  EXPECT_EQ(ct.verdict, CircleVerdict::circle_like);
}

TEST(Equilibria, LinearExamples) {
  const Box box{-1, 1, -1, 1};
  struct Case {
    const char *fx, *fy;
    int index;
    const char* type;
  };
  for (const Case c : {Case{"x", "y", 1, "source"}, Case{"x", "-y", -1, "saddle"}, Case{"2*y", "-2*x", 1, "center"}}) {
    const auto eqs = equilibria(field(c.fx, c.fy), nullptr, box, 20, 20);
    ASSERT_EQ(eqs.size(), 1u) << c.fx;
    EXPECT_LT(norm(eqs[0].location), 1e-10);
    EXPECT_EQ(eqs[0].index, c.index);
    EXPECT_EQ(eqs[0].type, c.type);
  }
}

TEST(Equilibria, SeveralZeros) {
  // zeros at (+-1, 0): a saddle and a centre-type point
  const auto eqs = equilibria(field("y", "x^2 - 1"), nullptr, Box{-2, 2, -2, 2}, 40, 40);
  ASSERT_EQ(eqs.size(), 2u);
  EXPECT_EQ(index_sum(eqs), 0);
}

TEST(IndexOf, Examples) {
  EXPECT_EQ(index_of(field("x", "-y"), {0, 0}, 0.1), -1);
  EXPECT_EQ(index_of(field("x", "y"), {0, 0}, 0.1), 1);
  EXPECT_EQ(index_of(field("x^2 - y^2", "2*x*y"), {0, 0}, 0.1), 2);
  EXPECT_EQ(index_of(field("x", "y"), {3, 3}, 0.1), 0);
  try {
    index_of(field("x", "y"), {0.1, 0}, 0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::equilibrium_on_circle);
  }
}

TEST(IndexOfProperty, RadiusInvariance) {
  const char* fields[][2] = {{"x", "-y"}, {"x^2 - y^2", "2*x*y"}, {"-y + x*(x^2 + y^2)", "x"}, {"x^3 - 3*x*y^2", "-(3*x^2*y - y^3)"}};
  for (const auto& f : fields) {
    const VectorField w = field(f[0], f[1]);
    const int i = index_of(w, {0, 0}, 0.05);
    EXPECT_EQ(index_of(w, {0, 0}, 0.1), i) << f[0];
    EXPECT_EQ(index_of(w, {0, 0}, 0.2), i) << f[0];
  }
}

TEST(EulerCheck, Examples) {
  EXPECT_TRUE(euler_check({eq(-1), eq(-1)}, 2));
  EXPECT_TRUE(euler_check({eq(1), eq(1), eq(-1), eq(-1)}, 1));
  EXPECT_FALSE(euler_check({eq(-1)}, 2));
  EXPECT_TRUE(euler_check({}, 1));
}

TEST(EquilibriaProperty, PresetIndexSums) {
  for (const char* p : {"genus2-two-knots", "genus2-one-knot", "martins-oscillator",
                        "martins-oscillator:inversely-unstable", "torus-forced"}) {
    const Scenario sc = load_preset(p);
    const Model m = build_model(sc);
    EquilibriaOptions opt;
    opt.t = sc.index.t;
    const auto eqs = equilibria(m.field, &*m.domain, m.box, sc.index.nx, sc.index.ny, opt);
    EXPECT_EQ(index_sum(eqs), 2 - 2 * m.domain->genus()) << p;
  }
}

TEST(Dissipativity, Examples) {
  const DissipativityResult in = dissipativity_check(field("-x", "-y"), {circle(1.0, 720, +1)}, 720);
  EXPECT_TRUE(in.pass);
  EXPECT_NEAR(in.margin, 1.0, 1e-4);
  const DissipativityResult out = dissipativity_check(field("x", "y"), {circle(1.0, 720, +1)}, 720);
  EXPECT_FALSE(out.pass);
  EXPECT_NEAR(out.margin, -1.0, 1e-4);
}

TEST(Dissipativity, OscillatorTrappingBand) {
  for (const char* p : {"martins-oscillator", "martins-oscillator:inversely-unstable"}) {
    const Scenario sc = load_preset(p);
    const Model m = build_model(sc);
    const DissipativityResult r = dissipativity_check(m.field, build_boundary(sc, m.env), sc.check.samples, sc.check.times);
    EXPECT_TRUE(r.pass) << p;
    EXPECT_GT(r.margin, 0.0) << p;
  }
}

TEST(AttractorProperty, ComponentCountStableUnderRefinement) {
  for (const char* p : {"martins-oscillator", "martins-oscillator:inversely-unstable", "torus-forced",
                        "genus2-two-knots", "genus2-one-knot", "circle-limit-cycle"}) {
    const Scenario sc = load_preset(p);
    const Model m = build_model(sc);
    const int c64 = components(iterate_region(m.map, build_region(sc, m, 64, 64), sc.attractor.iters));
    const int c128 = components(iterate_region(m.map, build_region(sc, m, 128, 128), sc.attractor.iters));
    EXPECT_EQ(c64, c128) << p;
  }
}
