#pragma once

// TOML scenario files: domain, field, integrator and analysis settings.
// Numeric entries may be numbers or expression strings over [params] and
// [[define]] names; they are evaluated when the scenario is built, so
// parameter overrides propagate everywhere.

#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <toml.hpp>

#include "genusflow/error.hpp"
#include "genusflow/expr.hpp"
#include "genusflow/field.hpp"
#include "genusflow/geometry.hpp"
#include "genusflow/integrate.hpp"
#include "genusflow/poincare.hpp"
#include "genusflow/topology.hpp"

namespace genusflow {

/// Number or expression text, evaluated against the scenario environment.
struct Quantity {
  std::string text;
  std::string where;

  double value(const ExprEnv& env) const;
};

struct QPoint {
  Quantity x, y;
};

enum class DomainKind { genus, torus, plane };

struct DomainSpec {
  DomainKind kind = DomainKind::genus;
  int genus = 2;
  Quantity alpha{"0", "domain.alpha"};
  Quantity r_min{"pi", "domain.r_min"};
  Quantity width{"1", "domain.width"};
  Quantity y_min{"0", "domain.y_min"};
  Quantity y_max{"1", "domain.y_max"};
  Quantity shear{"0", "domain.shear"};
  std::vector<Quantity> box;  // plane: x_min, x_max, y_min, y_max
};

struct CurveText {
  std::string psi, f = "0", g = "0", label;
};

enum class FieldKind { curves, oscillator, components };

struct FieldSpec {
  FieldKind kind = FieldKind::curves;
  std::vector<CurveText> curves;
  std::string H, g;    // oscillator
  std::string fx, fy;  // components
  std::optional<Quantity> cusp_epsilon;  // vanish at the domain cusps
};

struct IntegrateSpec {
  std::string scheme = "rk45";
  double rel_tol = 1e-9;
  double abs_tol = 1e-12;
  double max_step = 0.1;
  long max_steps = 2'000'000;
  QPoint start{{"0", "integrate.start"}, {"0", "integrate.start"}};
  double t0 = 0.0;
  Quantity t_end{"10", "integrate.t_end"};
};

struct PoincareSpec {
  Quantity period{"1", "poincare.period"};
  int samples = 100;  // equivariance samples
  int grid = 16;      // sample-map lattice per side
  std::vector<int> segments;  // equivariance segments, empty for all
};

struct AttractorSpec {
  int nx = 256, ny = 256;
  int iters = 20;
  std::string region;  // B0 = {region <= 0}; empty means the whole rectangle
  int samples_per_cell = 4;
  double max_stretch = 256.0;
  int max_refine = 6;
  int tol_cells = 3;
  int bins = 64;
};

struct OrbitSpec {
  std::vector<QPoint> seeds;
  int a = 0, b = 1;
  int generator = 1;
  double tolerance = 1e-10;
  double classify_tol = 1e-9;
  std::optional<double> rel_tol, abs_tol;  // integrator tolerances for orbit work
};

struct IndexSpec {
  int nx = 128, ny = 128;
  double t = 0.0;
};

struct BoundarySpec {
  std::vector<QPoint> points;
  bool closed = true;
  int inward = 1;
};

struct CheckSpec {
  int samples = 720;
  std::vector<double> times{0.0};
  std::vector<BoundarySpec> boundary;
};

struct SynthSpec {
  int samples = 200;
  std::vector<int> segments;
  std::vector<double> times{0.0};
  double tolerance = 1e-9;
};

struct Scenario {
  std::string name;
  std::string description;
  std::string source;  // TOML text as loaded
  std::string origin;  // file path or preset name
  std::map<std::string, double> params;
  std::map<std::string, std::map<std::string, double>> variants;
  std::vector<std::pair<std::string, std::string>> defines;
  std::string variant;
  std::vector<std::pair<std::string, double>> overrides;

  DomainSpec domain;
  FieldSpec field;
  IntegrateSpec integrate;
  PoincareSpec poincare;
  AttractorSpec attractor;
  OrbitSpec orbit;
  IndexSpec index;
  CheckSpec check;
  SynthSpec synth;
};

/// Input error carrying the scenario location.
inline Error scenario_error(const std::string& where, const std::string& msg) {
  return Error(ErrorKind::input, "scenario: " + where + ": " + msg);
}

namespace detail {

inline std::string number_text(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline const toml::table* table_at(const toml::table& root, const char* key) {
  const toml::node* n = root.get(key);
  if (n == nullptr) return nullptr;
  if (!n->is_table()) throw scenario_error(key, "expected a table");
  return n->as_table();
}

inline void allow_keys(const toml::table& t, const std::string& where, std::initializer_list<const char*> keys) {
  std::set<std::string> ok(keys.begin(), keys.end());
  for (auto&& [k, v] : t) {
    (void)v;
    if (!ok.count(std::string(k.str()))) throw scenario_error(where, "unknown key '" + std::string(k.str()) + "'");
  }
}

inline double get_double(const toml::node& n, const std::string& where) {
  if (auto v = n.value<double>(); v && (n.is_floating_point() || n.is_integer())) return *v;
  throw scenario_error(where, "expected a number");
}

inline long get_int(const toml::node& n, const std::string& where) {
  if (!n.is_integer()) throw scenario_error(where, "expected an integer");
  return static_cast<long>(*n.value<std::int64_t>());
}

inline std::string get_string(const toml::node& n, const std::string& where) {
  if (!n.is_string()) throw scenario_error(where, "expected a string");
  return *n.value<std::string>();
}

inline bool get_bool(const toml::node& n, const std::string& where) {
  if (!n.is_boolean()) throw scenario_error(where, "expected a boolean");
  return *n.value<bool>();
}

inline Quantity get_quantity(const toml::node& n, const std::string& where) {
  if (n.is_string()) return {*n.value<std::string>(), where};
  return {number_text(get_double(n, where)), where};
}

inline const toml::array& get_array(const toml::node& n, const std::string& where, std::size_t size = 0) {
  if (!n.is_array()) throw scenario_error(where, "expected an array");
  const toml::array& a = *n.as_array();
  if (size != 0 && a.size() != size) {
    throw scenario_error(where, "expected " + std::to_string(size) + " entries");
  }
  return a;
}

inline QPoint get_point(const toml::node& n, const std::string& where) {
  const toml::array& a = get_array(n, where, 2);
  return {get_quantity(*a.get(0), where), get_quantity(*a.get(1), where)};
}

inline std::pair<int, int> get_grid(const toml::node& n, const std::string& where) {
  const toml::array& a = get_array(n, where, 2);
  const long nx = get_int(*a.get(0), where), ny = get_int(*a.get(1), where);
  if (nx < 8 || ny < 8 || nx > 8192 || ny > 8192) throw scenario_error(where, "grid sides must lie in [8, 8192]");
  return {static_cast<int>(nx), static_cast<int>(ny)};
}

inline std::vector<double> get_doubles(const toml::node& n, const std::string& where) {
  std::vector<double> out;
  for (const toml::node& e : get_array(n, where)) out.push_back(get_double(e, where));
  return out;
}

template <class Fn>
void with(const toml::table& t, const char* key, Fn fn) {
  if (const toml::node* n = t.get(key)) fn(*n);
}

inline void parse_domain(const toml::table& t, DomainSpec& d) {
  allow_keys(t, "domain", {"kind", "genus", "alpha", "r_min", "width", "y_min", "y_max", "shear", "box"});
  const std::string kind = t.get("kind") ? get_string(*t.get("kind"), "domain.kind") : "genus";
  if (kind == "genus") {
    d.kind = DomainKind::genus;
  } else if (kind == "torus") {
    d.kind = DomainKind::torus;
    d.genus = 1;
  } else if (kind == "plane") {
    d.kind = DomainKind::plane;
    d.genus = 0;
  } else {
    throw scenario_error("domain.kind", "expected \"genus\", \"torus\" or \"plane\"");
  }
  with(t, "genus", [&](const toml::node& n) {
    if (d.kind != DomainKind::genus) throw scenario_error("domain.genus", "only valid for kind = \"genus\"");
    const long p = get_int(n, "domain.genus");
    if (p < 1 || p > 64) throw scenario_error("domain.genus", "genus must lie in [1, 64]");
    d.genus = static_cast<int>(p);
  });
  with(t, "alpha", [&](const toml::node& n) { d.alpha = get_quantity(n, "domain.alpha"); });
  with(t, "r_min", [&](const toml::node& n) { d.r_min = get_quantity(n, "domain.r_min"); });
  with(t, "width", [&](const toml::node& n) { d.width = get_quantity(n, "domain.width"); });
  with(t, "y_min", [&](const toml::node& n) { d.y_min = get_quantity(n, "domain.y_min"); });
  with(t, "y_max", [&](const toml::node& n) { d.y_max = get_quantity(n, "domain.y_max"); });
  with(t, "shear", [&](const toml::node& n) { d.shear = get_quantity(n, "domain.shear"); });
  with(t, "box", [&](const toml::node& n) {
    for (const toml::node& e : get_array(n, "domain.box", 4)) d.box.push_back(get_quantity(e, "domain.box"));
  });
  if (d.kind == DomainKind::plane && d.box.empty()) throw scenario_error("domain.box", "plane domains need a box");
}

inline void parse_field(const toml::table& root, FieldSpec& f) {
  const toml::table* t = table_at(root, "field");
  std::string kind = "curves";
  if (t != nullptr) {
    allow_keys(*t, "field", {"kind", "H", "g", "fx", "fy", "cusp_epsilon"});
    if (t->get("kind")) kind = get_string(*t->get("kind"), "field.kind");
  }
  if (kind == "curves") {
    f.kind = FieldKind::curves;
  } else if (kind == "oscillator") {
    f.kind = FieldKind::oscillator;
    if (!t->get("H") || !t->get("g")) throw scenario_error("field", "oscillator needs H and g");
    f.H = get_string(*t->get("H"), "field.H");
    f.g = get_string(*t->get("g"), "field.g");
  } else if (kind == "components") {
    f.kind = FieldKind::components;
    if (!t->get("fx") || !t->get("fy")) throw scenario_error("field", "components need fx and fy");
    f.fx = get_string(*t->get("fx"), "field.fx");
    f.fy = get_string(*t->get("fy"), "field.fy");
  } else {
    throw scenario_error("field.kind", "expected \"curves\", \"oscillator\" or \"components\"");
  }
  if (t != nullptr) {
    with(*t, "cusp_epsilon", [&](const toml::node& n) { f.cusp_epsilon = get_quantity(n, "field.cusp_epsilon"); });
  }
  if (const toml::node* n = root.get("curve")) {
    if (f.kind != FieldKind::curves) throw scenario_error("curve", "[[curve]] entries need field kind \"curves\"");
    if (!n->is_array_of_tables()) throw scenario_error("curve", "expected [[curve]] tables");
    int i = 0;
    for (const toml::node& e : *n->as_array()) {
      const std::string where = "curve[" + std::to_string(i++) + "]";
      const toml::table& ct = *e.as_table();
      allow_keys(ct, where, {"psi", "f", "g", "label"});
      CurveText c;
      if (!ct.get("psi")) throw scenario_error(where, "missing psi");
      c.psi = get_string(*ct.get("psi"), where + ".psi");
      with(ct, "f", [&](const toml::node& v) { c.f = get_string(v, where + ".f"); });
      with(ct, "g", [&](const toml::node& v) { c.g = get_string(v, where + ".g"); });
      with(ct, "label", [&](const toml::node& v) { c.label = get_string(v, where + ".label"); });
      if (c.label.empty()) c.label = where;
      f.curves.push_back(std::move(c));
    }
  }
  if (f.kind == FieldKind::curves && f.curves.empty()) throw scenario_error("curve", "at least one [[curve]] is required");
}

}  // namespace detail

inline double Quantity::value(const ExprEnv& env) const {
  Expr e;
  try {
    e = parse_expr(text, env);
  } catch (const SyntaxError& err) {
    throw SyntaxError(err.offset(), where + ": " + err.message());
  } catch (const Error& err) {
    throw Error(err.kind(), "scenario: " + where + ": " + err.what());
  }
  if (depends_on(e, 'x') || depends_on(e, 'y') || depends_on(e, 't')) {
    throw scenario_error(where, "constant expected, found a function of x, y or t");
  }
  const double v = detail::eval_raw(e, 0.0, 0.0, 0.0);
  if (!std::isfinite(v)) throw scenario_error(where, "non-finite value");
  return v;
}

/// Parses scenario text; every expression is checked for syntax here.
inline Scenario parse_scenario(const std::string& text, const std::string& origin = "<string>") {
  using namespace detail;
  toml::table root;
  try {
    root = toml::parse(text, origin);
  } catch (const toml::parse_error& err) {
    std::ostringstream os;
    os << "scenario: " << origin << ":" << err.source().begin.line << ":" << err.source().begin.column << ": "
       << err.description();
    throw Error(ErrorKind::input, os.str());
  }
  allow_keys(root, "top level",
             {"name", "description", "params", "variants", "define", "domain", "field", "curve", "integrate",
              "poincare", "attractor", "orbit", "index", "check", "synth"});
  Scenario sc;
  sc.source = text;
  sc.origin = origin;
  with(root, "name", [&](const toml::node& n) { sc.name = get_string(n, "name"); });
  with(root, "description", [&](const toml::node& n) { sc.description = get_string(n, "description"); });
  if (sc.name.empty()) sc.name = origin;

  if (const toml::table* t = table_at(root, "params")) {
    for (auto&& [k, v] : *t) sc.params[std::string(k.str())] = get_double(v, "params." + std::string(k.str()));
  }
  if (const toml::table* t = table_at(root, "variants")) {
    for (auto&& [k, v] : *t) {
      const std::string vname(k.str());
      if (!v.is_table()) throw scenario_error("variants." + vname, "expected a table");
      for (auto&& [pk, pv] : *v.as_table()) {
        const std::string p(pk.str());
        if (!sc.params.count(p)) throw scenario_error("variants." + vname, "unknown parameter '" + p + "'");
        sc.variants[vname][p] = get_double(pv, "variants." + vname + "." + p);
      }
    }
  }
  if (const toml::node* n = root.get("define")) {
    if (!n->is_array_of_tables()) throw scenario_error("define", "expected [[define]] tables");
    int i = 0;
    for (const toml::node& e : *n->as_array()) {
      const std::string where = "define[" + std::to_string(i++) + "]";
      const toml::table& dt = *e.as_table();
      allow_keys(dt, where, {"name", "expr"});
      if (!dt.get("name") || !dt.get("expr")) throw scenario_error(where, "needs name and expr");
      sc.defines.emplace_back(get_string(*dt.get("name"), where + ".name"), get_string(*dt.get("expr"), where + ".expr"));
    }
  }

  if (const toml::table* t = table_at(root, "domain")) {
    parse_domain(*t, sc.domain);
  } else {
    throw scenario_error("domain", "missing [domain]");
  }
  parse_field(root, sc.field);

  if (const toml::table* t = table_at(root, "integrate")) {
    allow_keys(*t, "integrate", {"scheme", "rel_tol", "abs_tol", "max_step", "max_steps", "start", "t0", "t_end"});
    IntegrateSpec& s = sc.integrate;
    with(*t, "scheme", [&](const toml::node& n) { s.scheme = get_string(n, "integrate.scheme"); });
    if (s.scheme != "rk45" && s.scheme != "rk4") throw scenario_error("integrate.scheme", "expected \"rk45\" or \"rk4\"");
    with(*t, "rel_tol", [&](const toml::node& n) { s.rel_tol = get_double(n, "integrate.rel_tol"); });
    with(*t, "abs_tol", [&](const toml::node& n) { s.abs_tol = get_double(n, "integrate.abs_tol"); });
    with(*t, "max_step", [&](const toml::node& n) { s.max_step = get_double(n, "integrate.max_step"); });
    with(*t, "max_steps", [&](const toml::node& n) { s.max_steps = get_int(n, "integrate.max_steps"); });
    with(*t, "start", [&](const toml::node& n) { s.start = get_point(n, "integrate.start"); });
    with(*t, "t0", [&](const toml::node& n) { s.t0 = get_double(n, "integrate.t0"); });
    with(*t, "t_end", [&](const toml::node& n) { s.t_end = get_quantity(n, "integrate.t_end"); });
    if (!(s.rel_tol > 0.0) || !(s.abs_tol > 0.0) || !(s.max_step > 0.0) || s.max_steps < 1) {
      throw scenario_error("integrate", "tolerances, max_step and max_steps must be positive");
    }
  }
  if (const toml::table* t = table_at(root, "poincare")) {
    allow_keys(*t, "poincare", {"period", "samples", "grid", "segments"});
    with(*t, "segments", [&](const toml::node& n) {
      for (const toml::node& e : get_array(n, "poincare.segments")) {
        sc.poincare.segments.push_back(static_cast<int>(get_int(e, "poincare.segments")));
      }
    });
    with(*t, "period", [&](const toml::node& n) { sc.poincare.period = get_quantity(n, "poincare.period"); });
    with(*t, "samples", [&](const toml::node& n) { sc.poincare.samples = static_cast<int>(get_int(n, "poincare.samples")); });
    with(*t, "grid", [&](const toml::node& n) { sc.poincare.grid = static_cast<int>(get_int(n, "poincare.grid")); });
    if (sc.poincare.samples < 1 || sc.poincare.grid < 1) throw scenario_error("poincare", "samples and grid must be positive");
  }
  if (const toml::table* t = table_at(root, "attractor")) {
    allow_keys(*t, "attractor",
               {"grid", "iters", "region", "samples_per_cell", "max_stretch", "max_refine", "tol_cells", "bins"});
    AttractorSpec& a = sc.attractor;
    with(*t, "grid", [&](const toml::node& n) { std::tie(a.nx, a.ny) = get_grid(n, "attractor.grid"); });
    with(*t, "iters", [&](const toml::node& n) { a.iters = static_cast<int>(get_int(n, "attractor.iters")); });
    with(*t, "region", [&](const toml::node& n) { a.region = get_string(n, "attractor.region"); });
    with(*t, "samples_per_cell", [&](const toml::node& n) {
      a.samples_per_cell = static_cast<int>(get_int(n, "attractor.samples_per_cell"));
    });
    with(*t, "max_stretch", [&](const toml::node& n) { a.max_stretch = get_double(n, "attractor.max_stretch"); });
    with(*t, "max_refine", [&](const toml::node& n) { a.max_refine = static_cast<int>(get_int(n, "attractor.max_refine")); });
    with(*t, "tol_cells", [&](const toml::node& n) { a.tol_cells = static_cast<int>(get_int(n, "attractor.tol_cells")); });
    with(*t, "bins", [&](const toml::node& n) { a.bins = static_cast<int>(get_int(n, "attractor.bins")); });
    if (a.iters < 1 || a.samples_per_cell < 4 || a.max_refine < 0 || a.max_refine > 10 || a.tol_cells < 0 ||
        a.bins < 1 || !(a.max_stretch > 1.0)) {
      throw scenario_error("attractor", "iteration or refinement settings out of range");
    }
  }
  if (const toml::table* t = table_at(root, "orbit")) {
    allow_keys(*t, "orbit", {"seeds", "ab", "generator", "tolerance", "classify_tol", "rel_tol", "abs_tol"});
    OrbitSpec& o = sc.orbit;
    with(*t, "seeds", [&](const toml::node& n) {
      for (const toml::node& e : get_array(n, "orbit.seeds")) o.seeds.push_back(get_point(e, "orbit.seeds"));
    });
    with(*t, "ab", [&](const toml::node& n) {
      const toml::array& ab = get_array(n, "orbit.ab", 2);
      o.a = static_cast<int>(get_int(*ab.get(0), "orbit.ab"));
      o.b = static_cast<int>(get_int(*ab.get(1), "orbit.ab"));
    });
    with(*t, "generator", [&](const toml::node& n) { o.generator = static_cast<int>(get_int(n, "orbit.generator")); });
    with(*t, "tolerance", [&](const toml::node& n) { o.tolerance = get_double(n, "orbit.tolerance"); });
    with(*t, "classify_tol", [&](const toml::node& n) { o.classify_tol = get_double(n, "orbit.classify_tol"); });
    with(*t, "rel_tol", [&](const toml::node& n) { o.rel_tol = get_double(n, "orbit.rel_tol"); });
    with(*t, "abs_tol", [&](const toml::node& n) { o.abs_tol = get_double(n, "orbit.abs_tol"); });
    if ((o.rel_tol && !(*o.rel_tol > 0.0)) || (o.abs_tol && !(*o.abs_tol > 0.0))) {
      throw scenario_error("orbit", "tolerances must be positive");
    }
    if (o.b < 1) throw scenario_error("orbit.ab", "b must be a positive integer");
  }
  if (const toml::table* t = table_at(root, "index")) {
    allow_keys(*t, "index", {"grid", "t"});
    with(*t, "grid", [&](const toml::node& n) { std::tie(sc.index.nx, sc.index.ny) = get_grid(n, "index.grid"); });
    with(*t, "t", [&](const toml::node& n) { sc.index.t = get_double(n, "index.t"); });
  }
  if (const toml::table* t = table_at(root, "check")) {
    allow_keys(*t, "check", {"samples", "times", "boundary"});
    CheckSpec& c = sc.check;
    with(*t, "samples", [&](const toml::node& n) { c.samples = static_cast<int>(get_int(n, "check.samples")); });
    with(*t, "times", [&](const toml::node& n) { c.times = get_doubles(n, "check.times"); });
    with(*t, "boundary", [&](const toml::node& n) {
      if (!n.is_array_of_tables()) throw scenario_error("check.boundary", "expected [[check.boundary]] tables");
      int i = 0;
      for (const toml::node& e : *n.as_array()) {
        const std::string where = "check.boundary[" + std::to_string(i++) + "]";
        const toml::table& bt = *e.as_table();
        allow_keys(bt, where, {"points", "closed", "inward"});
        BoundarySpec b;
        if (!bt.get("points")) throw scenario_error(where, "missing points");
        for (const toml::node& p : get_array(*bt.get("points"), where + ".points")) {
          b.points.push_back(get_point(p, where + ".points"));
        }
        with(bt, "closed", [&](const toml::node& v) { b.closed = get_bool(v, where + ".closed"); });
        with(bt, "inward", [&](const toml::node& v) { b.inward = static_cast<int>(get_int(v, where + ".inward")); });
        if (b.points.size() < 2 || (b.inward != 1 && b.inward != -1)) {
          throw scenario_error(where, "needs at least two points and inward = 1 or -1");
        }
        c.boundary.push_back(std::move(b));
      }
    });
    if (c.samples < 1 || c.times.empty()) throw scenario_error("check", "samples and times must be non-empty");
  }
  if (const toml::table* t = table_at(root, "synth")) {
    allow_keys(*t, "synth", {"samples", "segments", "times", "tolerance"});
    SynthSpec& s = sc.synth;
    with(*t, "samples", [&](const toml::node& n) { s.samples = static_cast<int>(get_int(n, "synth.samples")); });
    with(*t, "segments", [&](const toml::node& n) {
      for (const toml::node& e : get_array(n, "synth.segments")) s.segments.push_back(static_cast<int>(get_int(e, "synth.segments")));
    });
    with(*t, "times", [&](const toml::node& n) { s.times = get_doubles(n, "synth.times"); });
    with(*t, "tolerance", [&](const toml::node& n) { s.tolerance = get_double(n, "synth.tolerance"); });
    if (s.samples < 1 || s.times.empty()) throw scenario_error("synth", "samples and times must be non-empty");
  }
  return sc;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::input, "cannot read scenario file '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return parse_scenario(os.str(), path);
}

/// Applies a named [variants.*] table.
inline void select_variant(Scenario& sc, const std::string& name) {
  const auto it = sc.variants.find(name);
  if (it == sc.variants.end()) throw Error(ErrorKind::input, "scenario has no variant '" + name + "'");
  for (const auto& [k, v] : it->second) sc.params[k] = v;
  sc.variant = name;
}

/// Overrides an existing parameter.
inline void set_param(Scenario& sc, const std::string& name, double value) {
  if (!sc.params.count(name)) throw Error(ErrorKind::input, "scenario has no parameter '" + name + "'");
  sc.params[name] = value;
  sc.overrides.emplace_back(name, value);
}

/// Text identifying the effective scenario: source, variant and overrides.
inline std::string canonical_text(const Scenario& sc) {
  std::string s = sc.source;
  s += "\n#variant=" + sc.variant + "\n";
  for (const auto& [k, v] : sc.params) s += "#param " + k + "=" + detail::number_text(v) + "\n";
  return s;
}

/// Parameters as constants, then defines in order.
inline ExprEnv scenario_env(const Scenario& sc) {
  ExprEnv env;
  for (const auto& [k, v] : sc.params) env[k] = expr::constant(v);
  int i = 0;
  for (const auto& [name, text] : sc.defines) {
    const std::string where = "define[" + std::to_string(i++) + "]";
    try {
      env[name] = parse_expr(text, env);
    } catch (const SyntaxError& err) {
      throw SyntaxError(err.offset(), where + ": " + err.message());
    } catch (const Error& err) {
      throw Error(err.kind(), "scenario: " + where + ": " + err.what());
    }
  }
  return env;
}

inline Expr scenario_expr(const std::string& text, const ExprEnv& env, const std::string& where) {
  try {
    return parse_expr(text, env);
  } catch (const SyntaxError& err) {
    throw SyntaxError(err.offset(), where + ": " + err.message());
  } catch (const Error& err) {
    throw Error(err.kind(), "scenario: " + where + ": " + err.what());
  }
}

/// Domain rectangle; nullopt for plane scenarios.
inline std::optional<RectDomain> build_domain(const Scenario& sc, const ExprEnv& env) {
  const DomainSpec& d = sc.domain;
  switch (d.kind) {
    case DomainKind::plane: return std::nullopt;
    case DomainKind::torus: {
      const double w = d.width.value(env), y0 = d.y_min.value(env), y1 = d.y_max.value(env);
      if (!(w > 0.0) || !(y1 > y0)) throw scenario_error("domain", "torus needs width > 0 and y_max > y_min");
      return torus_domain(w, y0, y1, d.shear.value(env));
    }
    case DomainKind::genus: {
      const double alpha = d.alpha.value(env);
      if (!(alpha >= 0.0 && alpha < std::numbers::pi / 2)) throw scenario_error("domain.alpha", "alpha must lie in [0, pi/2)");
      const double r = d.r_min.value(env);
      if (!(r > 0.0)) throw scenario_error("domain.r_min", "r_min must be positive");
      return standard_domain(d.genus, r);
    }
  }
  return std::nullopt;
}

/// Rectangle covered by analysis grids.
inline Box analysis_box(const Scenario& sc, const ExprEnv& env, const std::optional<RectDomain>& dom) {
  if (dom) return dom->bounds();
  const auto& b = sc.domain.box;
  const Box box{b[0].value(env), b[1].value(env), b[2].value(env), b[3].value(env)};
  if (!(box.width() > 0.0) || !(box.height() > 0.0)) throw scenario_error("domain.box", "box must have positive size");
  return box;
}

inline VectorField build_field(const Scenario& sc, const ExprEnv& env, const std::optional<RectDomain>& dom) {
  const FieldSpec& f = sc.field;
  VectorField w;
  switch (f.kind) {
    case FieldKind::curves: {
      std::vector<CurveSpec> curves;
      for (std::size_t i = 0; i < f.curves.size(); ++i) {
        const std::string where = "curve[" + std::to_string(i) + "]";
        const CurveText& c = f.curves[i];
        curves.push_back({scenario_expr(c.psi, env, where + ".psi"), scenario_expr(c.f, env, where + ".f"),
                          scenario_expr(c.g, env, where + ".g"), c.label});
      }
      w = synthesize(curves);
      break;
    }
    case FieldKind::oscillator:
      w = builtin_forced_oscillator(scenario_expr(f.H, env, "field.H"), scenario_expr(f.g, env, "field.g"));
      break;
    case FieldKind::components:
      w = VectorField(scenario_expr(f.fx, env, "field.fx"), scenario_expr(f.fy, env, "field.fy"));
      break;
  }
  if (f.cusp_epsilon) {
    if (!dom) throw scenario_error("field.cusp_epsilon", "cusp vanishing needs a domain with cusps");
    w = apply_cusp_vanishing(w, distinct_cusps(*dom), f.cusp_epsilon->value(env));
  }
  return w;
}

inline IntegratorConfig build_integrator(const Scenario& sc) {
  IntegratorConfig c;
  c.scheme = sc.integrate.scheme == "rk4" ? Scheme::rk4 : Scheme::rk45;
  c.rel_tol = sc.integrate.rel_tol;
  c.abs_tol = sc.integrate.abs_tol;
  c.max_step = sc.integrate.max_step;
  c.max_steps = sc.integrate.max_steps;
  return c;
}

/// Everything derived from a scenario, ready for analysis.
struct Model {
  ExprEnv env;
  std::optional<RectDomain> domain;
  Box box;
  VectorField field;
  PoincareMap map{VectorField(), 1.0, std::nullopt};
};

inline Model build_model(const Scenario& sc) {
  Model m;
  m.env = scenario_env(sc);
  m.domain = build_domain(sc, m.env);
  m.box = analysis_box(sc, m.env, m.domain);
  m.field = build_field(sc, m.env, m.domain);
  const double T = sc.poincare.period.value(m.env);
  if (!(T > 0.0)) throw scenario_error("poincare.period", "period must be positive");
  IntegratorConfig cfg = build_integrator(sc);
  cfg.record_samples = false;
  m.map = PoincareMap(m.field, T, m.domain, cfg);
  return m;
}

/// Return map for orbit search and monodromy, with [orbit] tolerances.
inline PoincareMap orbit_map(const Scenario& sc, const Model& m) {
  PoincareMap P = m.map;
  if (sc.orbit.rel_tol) P.config.rel_tol = *sc.orbit.rel_tol;
  if (sc.orbit.abs_tol) P.config.abs_tol = *sc.orbit.abs_tol;
  return P;
}

inline IterateOptions iterate_options(const Scenario& sc) {
  IterateOptions io;
  io.samples_per_cell = sc.attractor.samples_per_cell;
  io.max_stretch = sc.attractor.max_stretch;
  io.max_refine = sc.attractor.max_refine;
  io.bins = sc.attractor.bins;
  return io;
}

inline Vec2 point_value(const QPoint& p, const ExprEnv& env) { return {p.x.value(env), p.y.value(env)}; }

/// Initial region: cells whose centre satisfies region <= 0.
inline Region build_region(const Scenario& sc, const Model& m, int nx, int ny) {
  Region r = m.domain ? Region::over(*m.domain, nx, ny) : Region(nx, ny, m.box);
  if (sc.attractor.region.empty()) {
    r.fill();
  } else {
    r.fill_where(scenario_expr(sc.attractor.region, m.env, "attractor.region"));
  }
  return r;
}

inline std::vector<Polyline> build_boundary(const Scenario& sc, const ExprEnv& env) {
  std::vector<Polyline> out;
  for (const BoundarySpec& b : sc.check.boundary) {
    Polyline pl;
    for (const QPoint& p : b.points) pl.points.push_back(point_value(p, env));
    pl.closed = b.closed;
    pl.inward = b.inward;
    out.push_back(std::move(pl));
  }
  return out;
}

/// Builds every expression and quantity once so input errors surface early.
inline void validate(const Scenario& sc) {
  const Model m = build_model(sc);
  (void)point_value(sc.integrate.start, m.env);
  (void)sc.integrate.t_end.value(m.env);
  for (const QPoint& p : sc.orbit.seeds) (void)point_value(p, m.env);
  if (!sc.attractor.region.empty()) (void)scenario_expr(sc.attractor.region, m.env, "attractor.region");
  (void)build_boundary(sc, m.env);
  if (m.domain) {
    for (int s : sc.synth.segments) {
      if (s < 1 || s > m.domain->segment_count()) throw scenario_error("synth.segments", "segment id out of range");
    }
    for (int s : sc.poincare.segments) {
      if (s < 1 || s > m.domain->segment_count()) throw scenario_error("poincare.segments", "segment id out of range");
    }
    const int g = sc.orbit.generator;
    if (g < 1 || g > m.domain->segment_count()) throw scenario_error("orbit.generator", "generator out of range");
  }
}

}  // namespace genusflow
