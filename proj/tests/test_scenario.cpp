#include <gtest/gtest.h>

#include <cmath>
#include <optional>
#include <string>

#include "genusflow/presets.hpp"
#include "genusflow/scenario.hpp"

using namespace genusflow;

namespace {

constexpr const char* minimal = R"(name = "mini"
[params]
a = 2.0
[variants.big]
a = 3.0
[[define]]
name = "r"
expr = "a/2"
[domain]
kind = "plane"
box = ["-a", "a", -1, 1]
[[curve]]
psi = "x^2 + y^2 - r^2"
f = "-x"
)";

std::optional<ErrorKind> kind_of(const std::string& text) {
  try {
    parse_scenario(text);
  } catch (const Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

std::string with_table(const std::string& table) { return std::string(minimal) + table; }

}  // namespace

TEST(Scenario, ParsesMinimalFile) {
  const Scenario sc = parse_scenario(minimal);
  EXPECT_EQ(sc.name, "mini");
  EXPECT_EQ(sc.params.at("a"), 2.0);
  EXPECT_EQ(sc.domain.kind, DomainKind::plane);
  ASSERT_EQ(sc.field.curves.size(), 1u);
  EXPECT_EQ(sc.field.curves[0].f, "-x");
  EXPECT_EQ(sc.field.curves[0].g, "0");
  const Model m = build_model(sc);
  EXPECT_FALSE(m.domain.has_value());
  EXPECT_EQ(m.box.x_min, -2.0);
  EXPECT_EQ(m.box.x_max, 2.0);
  EXPECT_DOUBLE_EQ(m.field(1.0, 0.0, 0.0).x, 0.0);
  EXPECT_NO_THROW(validate(sc));
}

TEST(Scenario, VariantsAndOverrides) {
  Scenario sc = parse_scenario(minimal);
  select_variant(sc, "big");
  EXPECT_EQ(sc.params.at("a"), 3.0);
  EXPECT_EQ(build_model(sc).box.x_max, 3.0);
  EXPECT_THROW(select_variant(sc, "missing"), Error);
  set_param(sc, "a", 4.0);
  EXPECT_EQ(build_model(sc).box.x_max, 4.0);
  EXPECT_THROW(set_param(sc, "b", 1.0), Error);
}

TEST(Scenario, CanonicalTextTracksParameters) {
  Scenario a = parse_scenario(minimal), b = parse_scenario(minimal);
  EXPECT_EQ(canonical_text(a), canonical_text(b));
  set_param(b, "a", 2.5);
  EXPECT_NE(canonical_text(a), canonical_text(b));
  set_param(b, "a", 2.0);
  EXPECT_EQ(canonical_text(a), canonical_text(b));
  select_variant(a, "big");
  EXPECT_NE(canonical_text(a), canonical_text(b));
}

TEST(Scenario, InputErrors) {
  EXPECT_EQ(kind_of("name = "), ErrorKind::input);
  EXPECT_EQ(kind_of(with_table("[orbit]\nsedes = []\n")), ErrorKind::input);
  EXPECT_EQ(kind_of(with_table("colour = 1\n")), ErrorKind::input);
  EXPECT_EQ(kind_of(with_table("[orbit]\nab = [1, 0]\n")), ErrorKind::input);
  EXPECT_EQ(kind_of(with_table("[orbit]\nrel_tol = 0.0\n")), ErrorKind::input);
  EXPECT_EQ(kind_of(with_table("[orbit]\nabs_tol = -1e-12\n")), ErrorKind::input);
  EXPECT_EQ(kind_of(with_table("[integrate]\nscheme = \"euler\"\n")), ErrorKind::input);
  EXPECT_EQ(kind_of(with_table("[attractor]\nsamples_per_cell = 2\n")), ErrorKind::input);
  EXPECT_EQ(kind_of("[params]\na = 1\n[domain]\nkind = \"plane\"\n[[curve]]\npsi = \"x\"\n"), ErrorKind::input);
  EXPECT_EQ(kind_of("[domain]\nkind = \"genus\"\ngenus = 0\n[[curve]]\npsi = \"x\"\n"), ErrorKind::input);
  EXPECT_EQ(kind_of("[domain]\nkind = \"genus\"\n"), ErrorKind::input);
  EXPECT_EQ(kind_of("[params]\na = 1\n[variants.v]\nb = 2\n[domain]\n[[curve]]\npsi = \"x\"\n"), ErrorKind::input);
  EXPECT_EQ(kind_of("[[curve]]\npsi = \"x\"\n"), ErrorKind::input);
}

TEST(Scenario, ExpressionErrorsSurfaceInValidate) {
  const Scenario bad = parse_scenario(std::string(minimal) + "[[curve]]\npsi = \"x +* y\"\n");
  try {
    validate(bad);
    FAIL();
  } catch (const SyntaxError& e) {
    EXPECT_EQ(e.offset(), 3u);
  }
  const Scenario unknown = parse_scenario(std::string(minimal) + "[[curve]]\npsi = \"x + q\"\n");
  try {
    validate(unknown);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::unknown_identifier);
  }
}

TEST(Scenario, OrbitTolerances) {
  const Scenario sc = parse_scenario(with_table("[orbit]\nrel_tol = 1e-12\nabs_tol = 1e-14\n"));
  ASSERT_TRUE(sc.orbit.rel_tol && sc.orbit.abs_tol);
  const Model m = build_model(sc);
  const PoincareMap P = orbit_map(sc, m);
  EXPECT_EQ(P.config.rel_tol, 1e-12);
  EXPECT_EQ(P.config.abs_tol, 1e-14);
  const PoincareMap Q = orbit_map(parse_scenario(minimal), m);
  EXPECT_EQ(Q.config.rel_tol, m.map.config.rel_tol);
}

TEST(Presets, AllValidate) {
  for (const Preset& p : presets()) {
    const Scenario sc = load_preset(p.name);
    EXPECT_EQ(sc.name, p.name);
    EXPECT_NO_THROW(validate(sc)) << p.name;
    for (const auto& [v, params] : sc.variants) EXPECT_NO_THROW(validate(load_preset(std::string(p.name) + ":" + v)));
  }
  EXPECT_THROW(load_preset("no-such-preset"), Error);
  EXPECT_THROW(load_preset("martins-oscillator:no-such-variant"), Error);
}

TEST(Presets, MatchScenarioFiles) {
  for (const Preset& p : presets()) {
    const std::string path = std::string(GENUSFLOW_SCENARIOS) + "/" + std::string(p.name) + ".toml";
    const Scenario file = load_scenario(path);
    EXPECT_EQ(file.source, std::string(p.text)) << path;
    EXPECT_EQ(canonical_text(file), canonical_text(load_preset(p.name))) << path;
  }
}

TEST(Presets, Geometry) {
  const Model osc = build_model(load_preset("martins-oscillator"));
  ASSERT_TRUE(osc.domain);
  EXPECT_EQ(osc.domain->genus(), 1);
  const double c = osc.env.at("c")->value;
  const double V = 1.05 * (0.25 + 1.5 + 2.0) / c;
  EXPECT_DOUBLE_EQ(osc.box.y_min, -V);
  EXPECT_DOUBLE_EQ(osc.box.y_max, V + c);
  const Model g2 = build_model(load_preset("genus2-two-knots"));
  ASSERT_TRUE(g2.domain);
  EXPECT_EQ(g2.domain->genus(), 2);
  EXPECT_EQ(g2.domain->segment_count(), 8);
  for (Vec2 m : g2.domain->cusps()) EXPECT_EQ(norm(g2.field(m, 0.0)), 0.0);
  EXPECT_FALSE(build_model(load_preset("circle-limit-cycle")).domain);
}

TEST(Presets, FieldsMatchAcrossIdentifications) {
  for (const char* p : {"genus2-two-knots", "genus2-one-knot", "torus-forced", "martins-oscillator"}) {
    const Scenario sc = load_preset(p);
    const Model m = build_model(sc);
    EXPECT_LT(check_matching(m.field, *m.domain, sc.synth.samples, sc.synth.times, sc.synth.segments), sc.synth.tolerance)
        << p;
  }
}

TEST(Presets, AttractorRegionIsNonEmpty) {
  for (const Preset& p : presets()) {
    const Scenario sc = load_preset(p.name);
    const Model m = build_model(sc);
    EXPECT_GT(build_region(sc, m, 32, 32).count(), 0u) << p.name;
  }
}
