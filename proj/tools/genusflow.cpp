// genusflow command-line driver.
//
// Exit codes: 0 success, 1 analysis failure, 2 input error.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <openssl/evp.h>

#include "genusflow/genusflow.hpp"

namespace fs = std::filesystem;
using namespace genusflow;

namespace {

struct Options {
  std::string scenario;
  std::string preset;
  std::string out = ".";
  std::string grid;
  std::optional<int> iters;
  std::string seed;
  std::string ab;
  std::string format;
  std::vector<std::string> sets;
};

std::string sha256_hex(const std::string& text) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorKind::input, "SHA-256 digest failed");
  }
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

std::vector<double> split_numbers(const std::string& s, std::size_t n, const char* flag) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const std::size_t comma = s.find(',', pos);
    const std::string part = s.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(part, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != part.size()) throw Error(ErrorKind::input, std::string(flag) + ": cannot parse '" + s + "'");
    out.push_back(v);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (out.size() != n) throw Error(ErrorKind::input, std::string(flag) + ": expected " + std::to_string(n) + " values");
  return out;
}

int as_int(double v, const char* flag) {
  if (v != std::floor(v) || std::abs(v) > 1e9) throw Error(ErrorKind::input, std::string(flag) + ": expected integers");
  return static_cast<int>(v);
}

Json point_json(Vec2 q) { return Json::array({q.x, q.y}); }

Json complex_json(std::complex<double> z) {
  Json j;
  j["re"] = z.real();
  j["im"] = z.imag();
  return j;
}

Json matrix_json(const Mat2& m) { return Json::array({Json::array({m.a, m.b}), Json::array({m.c, m.d})}); }

class Run {
 public:
  Run(std::string command, const Options& opt, std::vector<std::string> args)
      : command_(std::move(command)), opt_(opt), args_(std::move(args)) {}

  int execute() {
    load();
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = true;
    if (command_ == "synth") ok = synth();
    else if (command_ == "integrate") ok = integrate_cmd();
    else if (command_ == "poincare") ok = poincare();
    else if (command_ == "orbit") ok = orbit();
    else if (command_ == "attractor") ok = attractor();
    else if (command_ == "index") ok = index();
    else if (command_ == "check") ok = check();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report_["status"] = ok ? "pass" : "fail";
    if (wants("json")) write("report.json", to_json_text(report_));
    std::printf("%s: %s (%.2f s)\n", command_.c_str(), ok ? "pass" : "fail", secs);
    return ok ? 0 : 1;
  }

 private:
  bool wants(const char* kind) const { return opt_.format.empty() || opt_.format == kind; }

  void write(const std::string& name, const std::string& content) {
    const fs::path p = fs::path(opt_.out) / name;
    write_atomic(p, content);
    std::printf("wrote %s\n", p.string().c_str());
  }

  void load() {
    if (opt_.scenario.empty() == opt_.preset.empty()) {
      throw Error(ErrorKind::input, "give exactly one of --scenario or --preset");
    }
    sc_ = opt_.preset.empty() ? load_scenario(opt_.scenario) : load_preset(opt_.preset);
    for (const std::string& s : opt_.sets) {
      const std::size_t eq = s.find('=');
      if (eq == std::string::npos || eq == 0) throw Error(ErrorKind::input, "--set expects name=value, got '" + s + "'");
      set_param(sc_, s.substr(0, eq), split_numbers(s.substr(eq + 1), 1, "--set")[0]);
    }
    validate(sc_);
    model_.emplace(build_model(sc_));
    Json scn;
    scn["name"] = sc_.name;
    scn["origin"] = sc_.origin;
    scn["variant"] = sc_.variant;
    scn["hash"] = sha256_hex(canonical_text(sc_));
    Json params = Json::object();
    for (const auto& [k, v] : sc_.params) params[k] = v;
    scn["params"] = params;
    report_["command"] = command_;
    report_["arguments"] = args_;
    report_["scenario"] = scn;
  }

  const Model& model() const { return *model_; }
  const RectDomain* dom() const { return model_->domain ? &*model_->domain : nullptr; }
  int genus() const { return dom() ? dom()->genus() : 0; }

  Portrait portrait(const std::string& title) const {
    Portrait p;
    p.box = model().box;
    p.domain = dom();
    p.title = sc_.name + ": " + title;
    return p;
  }

  bool synth() {
    const VectorField& w = model().field;
    Json r;
    r["fx"] = to_string(w.fx());
    r["fy"] = to_string(w.fy());
    r["curves"] = Json::array();
    for (const CurveSpec& c : w.curves) r["curves"].push_back({{"label", c.label}, {"psi", to_string(c.psi)}});
    bool ok = true;
    if (dom()) {
      const double res = check_matching(w, *dom(), sc_.synth.samples, sc_.synth.times, sc_.synth.segments);
      Json segs = Json::array();
      if (sc_.synth.segments.empty()) {
        for (int i = 1; i <= dom()->segment_count(); ++i) segs.push_back(i);
      } else {
        for (int i : sc_.synth.segments) segs.push_back(i);
      }
      r["matching"] = {{"segments", segs}, {"samples", sc_.synth.samples}, {"residual", res},
                       {"tolerance", sc_.synth.tolerance}, {"pass", res <= sc_.synth.tolerance}};
      ok = ok && res <= sc_.synth.tolerance;
    }
    Json cusps = Json::array();
    for (const Vec2& m : w.cusp_points) {
      const Vec2 v = w(m, 0.0);
      cusps.push_back({{"point", point_json(m)}, {"field", point_json(v)}, {"zero", v.x == 0.0 && v.y == 0.0}});
      ok = ok && v.x == 0.0 && v.y == 0.0;
    }
    r["cusp_epsilon"] = w.cusp_epsilon;
    r["cusps"] = cusps;
    report_["results"] = r;
    return ok;
  }

  Vec2 start_point() const {
    if (!opt_.seed.empty()) {
      const auto v = split_numbers(opt_.seed, 2, "--seed");
      return {v[0], v[1]};
    }
    return point_value(sc_.integrate.start, model().env);
  }

  bool integrate_cmd() {
    const Vec2 s = start_point();
    const double t_end = sc_.integrate.t_end.value(model().env);
    IntegratorConfig cfg = build_integrator(sc_);
    const Trajectory tr = integrate(model().field, State{s.x, s.y, sc_.integrate.t0}, t_end, dom(), cfg);
    Json r;
    r["start"] = point_json(s);
    r["t0"] = sc_.integrate.t0;
    r["t_end"] = t_end;
    r["samples"] = tr.samples.size();
    r["crossings"] = tr.events.size();
    r["word"] = tr.word;
    r["termination"] = tr.termination == Termination::completed ? "completed" : "cusp-hit";
    r["final"] = point_json(tr.final_state.pos());
    Json curves = Json::array();
    for (const CurveSpec& c : model().field.curves) {
      double worst = 0.0;
      for (const State& q : tr.samples) worst = std::max(worst, std::abs(eval_expr(c.psi, q.x, q.y, q.t)));
      curves.push_back({{"label", c.label}, {"max_abs_psi", worst}});
    }
    r["curve_residuals"] = curves;
    report_["results"] = r;
    if (wants("csv")) write("trajectory.csv", trajectory_csv(tr));
    if (wants("svg")) {
      Portrait p = portrait("trajectory");
      p.polylines = trajectory_pieces(tr);
      p.points.push_back(s);
      write("portrait.svg", render_svg(p));
    }
    return true;
  }

  bool poincare() {
    const PoincareMap& P = model().map;
    const Box& b = model().box;
    const int g = sc_.poincare.grid;
    std::string csv = "x,y,px,py,word\n";
    std::size_t failures = 0;
    for (int j = 0; j < g; ++j) {
      for (int i = 0; i < g; ++i) {
        const Vec2 q{b.x_min + (i + 0.5) * b.width() / g, b.y_min + (j + 0.5) * b.height() / g};
        try {
          const PoincareResult pr = poincare_apply(P, q);
          csv += format_number(q.x) + "," + format_number(q.y) + "," + format_number(pr.point.x) + "," +
                 format_number(pr.point.y) + "," + word_text(pr.word) + "\n";
        } catch (const Error&) {
          ++failures;
          csv += format_number(q.x) + "," + format_number(q.y) + ",,,\n";
        }
      }
    }
    Json r;
    r["period"] = P.period;
    r["grid"] = g;
    r["failed_samples"] = failures;
    bool ok = true;
    if (dom()) {
      const double res = check_equivariance(P, sc_.poincare.samples, sc_.poincare.segments);
      r["equivariance"] = {{"samples", sc_.poincare.samples}, {"residual", res}, {"tolerance", 1e-6}, {"pass", res < 1e-6}};
      ok = res < 1e-6;
    }
    report_["results"] = r;
    if (wants("csv")) write("poincare.csv", csv);
    return ok;
  }

  bool orbit() {
    const PoincareMap P = orbit_map(sc_, model());
    int a = sc_.orbit.a, b = sc_.orbit.b;
    if (!opt_.ab.empty()) {
      const auto v = split_numbers(opt_.ab, 2, "--ab");
      a = as_int(v[0], "--ab");
      b = as_int(v[1], "--ab");
      if (b < 1) throw Error(ErrorKind::input, "--ab: b must be a positive integer");
    }
    std::vector<Vec2> seeds;
    if (!opt_.seed.empty()) {
      seeds.push_back(start_point());
    } else {
      for (const QPoint& q : sc_.orbit.seeds) seeds.push_back(point_value(q, model().env));
    }
    if (seeds.empty()) throw Error(ErrorKind::input, "no orbit seeds: add [orbit] seeds or pass --seed");
    FindPeriodicOptions fo;
    fo.tolerance = sc_.orbit.tolerance;
    Json orbits = Json::array(), failures = Json::array();
    std::vector<Vec2> found;
    for (const Vec2& s : seeds) {
      try {
        const PeriodicOrbit o = find_periodic(P, a, b, sc_.orbit.generator, s, fo);
        const Vec2 q = o.point.pos();
        bool dup = false;
        for (const Vec2& f : found) dup = dup || distance(f, q) < 1e-6;
        if (dup) continue;
        found.push_back(q);
        const Monodromy m = monodromy(P, o);
        const OrbitClass cls = classify(m.lambda1, m.lambda2, sc_.orbit.classify_tol);
        Json j;
        j["seed"] = point_json(s);
        j["point"] = point_json(q);
        j["a"] = a;
        j["b"] = b;
        j["generator"] = sc_.orbit.generator;
        j["residual"] = o.residual;
        j["iterations"] = o.iterations;
        j["monodromy"] = matrix_json(m.matrix);
        j["monodromy_fd"] = matrix_json(m.fd_matrix);
        j["methods_disagreement"] = m.disagreement;
        j["methods_disagree"] = m.methods_disagree;
        j["lambda1"] = complex_json(m.lambda1);
        j["lambda2"] = complex_json(m.lambda2);
        j["class"] = to_string(cls);
        orbits.push_back(j);
      } catch (const Error& e) {
        failures.push_back({{"seed", point_json(s)}, {"error", to_string(e.kind())}, {"message", e.what()}});
      }
    }
    Json r;
    r["orbits"] = orbits;
    r["failures"] = failures;
    report_["results"] = r;
    if (wants("svg")) {
      Portrait p = portrait("periodic points");
      p.points = found;
      write("portrait.svg", render_svg(p));
    }
    return !orbits.empty();
  }

  bool attractor() {
    int nx = sc_.attractor.nx, ny = sc_.attractor.ny;
    if (!opt_.grid.empty()) {
      const auto v = split_numbers(opt_.grid, 2, "--grid");
      nx = as_int(v[0], "--grid");
      ny = as_int(v[1], "--grid");
      if (nx < 8 || ny < 8 || nx > 8192 || ny > 8192) throw Error(ErrorKind::input, "--grid: sides must lie in [8, 8192]");
    }
    const int n = opt_.iters.value_or(sc_.attractor.iters);
    if (n < 1) throw Error(ErrorKind::input, "--iters must be positive");
    const Region B0 = build_region(sc_, model(), nx, ny);
    if (B0.empty()) throw Error(ErrorKind::input, "attractor.region selects no cells");
    const AttractorEstimate est = iterate_region(model().map, B0, n, iterate_options(sc_));
    const int count = components(est);
    Json comps = Json::array();
    for (std::size_t i = 0; i < est.components.size(); ++i) {
      const ComponentInfo& c = est.components[i];
      Json j;
      j["label"] = c.label;
      j["cells"] = c.cells;
      j["wraps"] = c.wraps();
      if (c.wraps()) {
        const CircleTest ct = circle_test(est, static_cast<int>(i), sc_.attractor.tol_cells, sc_.attractor.bins);
        j["section_axis"] = ct.axis == Axis::x ? "x" : "y";
        j["max_extent"] = ct.max_extent;
        j["verdict"] = to_string(ct.verdict);
      }
      comps.push_back(j);
    }
    Json r;
    r["grid"] = {nx, ny};
    r["iterations_requested"] = n;
    r["iterations"] = est.iterations;
    r["converged"] = est.converged;
    r["occupancy"] = est.occupancy;
    r["tol_cells"] = sc_.attractor.tol_cells;
    r["component_count"] = count;
    r["components"] = comps;
    r["empty"] = est.empty_warning;
    bool ok = !est.empty_warning;
    if (genus() >= 1) {
      const bool pass = attractor_count_check(count, genus());
      r["count_check"] = {{"bound", 2 * genus() - 1}, {"pass", pass}};
      ok = ok && pass;
    }
    report_["results"] = r;
    if (wants("csv")) write("attractor.csv", attractor_csv(est));
    if (wants("svg")) {
      Portrait p = portrait("attractor estimate");
      p.attractor = &est;
      write("portrait.svg", render_svg(p));
    }
    return ok;
  }

  bool index() {
    int nx = sc_.index.nx, ny = sc_.index.ny;
    if (!opt_.grid.empty()) {
      const auto v = split_numbers(opt_.grid, 2, "--grid");
      nx = as_int(v[0], "--grid");
      ny = as_int(v[1], "--grid");
    }
    EquilibriaOptions eo;
    eo.t = sc_.index.t;
    std::vector<std::string> failures;
    const std::vector<EquilibriumInfo> eqs = equilibria(model().field, dom(), model().box, nx, ny, eo, &failures);
    Json list = Json::array();
    for (const EquilibriumInfo& e : eqs) {
      Json j;
      j["location"] = point_json(e.location);
      j["index"] = e.index;
      j["type"] = e.type;
      if (e.has_eigenvalues) j["eigenvalues"] = Json::array({complex_json(e.eig1), complex_json(e.eig2)});
      list.push_back(j);
    }
    const int sum = index_sum(eqs);
    Json r;
    r["t"] = sc_.index.t;
    r["grid"] = {nx, ny};
    r["equilibria"] = list;
    r["index_sum"] = sum;
    r["failures"] = failures;
    bool ok = failures.empty();
    if (genus() >= 1) {
      const bool pass = euler_check(eqs, genus());
      r["euler"] = {{"genus", genus()}, {"expected", 2 - 2 * genus()}, {"pass", pass}};
      ok = ok && pass;
    }
    report_["results"] = r;
    return ok;
  }

  bool check() {
    if (sc_.check.boundary.empty()) throw Error(ErrorKind::input, "scenario has no [[check.boundary]] polylines");
    const DissipativityResult d =
        dissipativity_check(model().field, build_boundary(sc_, model().env), sc_.check.samples, sc_.check.times);
    Json r;
    r["samples"] = sc_.check.samples;
    r["times"] = sc_.check.times;
    r["margin"] = d.margin;
    r["worst_point"] = point_json(d.worst_point);
    r["worst_time"] = d.worst_time;
    r["pass"] = d.pass;
    report_["results"] = r;
    return d.pass;
  }

  std::string command_;
  Options opt_;
  std::vector<std::string> args_;
  Scenario sc_;
  std::optional<Model> model_;
  Json report_;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--scenario", o.scenario, "scenario TOML file");
  cmd->add_option("--preset", o.preset, "built-in scenario, optionally name:variant");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--grid", o.grid, "grid NX,NY");
  cmd->add_option("--iters", o.iters, "attractor iterations");
  cmd->add_option("--seed", o.seed, "start point or orbit seed x,y");
  cmd->add_option("--ab", o.ab, "orbit type a,b");
  cmd->add_option("--format", o.format, "write only csv, svg or json artifacts")
      ->check(CLI::IsMember({"csv", "svg", "json"}));
  cmd->add_option("--set", o.sets, "override a scenario parameter name=value")->take_all();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"genusflow: periodic flows on surfaces of genus p"};
  app.require_subcommand(1);
  Options opt;
  const char* commands[][2] = {
      {"synth", "build the field and audit boundary matching and cusp vanishing"},
      {"integrate", "integrate a trajectory (trajectory.csv)"},
      {"poincare", "sample the Poincare map and check equivariance"},
      {"orbit", "find (a,b)-periodic orbits, monodromy and class"},
      {"attractor", "iterate a trapping region (attractor.csv, portrait.svg)"},
      {"index", "locate equilibria and check the index sum"},
      {"check", "dissipativity of the trapping boundary"},
  };
  for (const auto& c : commands) add_common(app.add_subcommand(c[0], c[1]), opt);
  CLI::App* preset = app.add_subcommand("preset", "list or show built-in scenarios");
  preset->require_subcommand(1);
  CLI::App* plist = preset->add_subcommand("list", "list presets");
  std::string show_name;
  CLI::App* pshow = preset->add_subcommand("show", "print a preset scenario");
  pshow->add_option("name", show_name)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (preset->parsed()) {
      if (plist->parsed()) {
        for (const Preset& p : presets()) {
          std::printf("%-20s %s\n", std::string(p.name).c_str(), std::string(p.summary).c_str());
        }
      } else {
        std::fputs(std::string(find_preset(show_name).text).c_str(), stdout);
      }
      return 0;
    }
    std::vector<std::string> args(argv + 1, argv + argc);
    // the output directory does not affect results
    std::vector<std::string> echo;
    for (std::size_t i = 0; i < args.size(); ++i) {
      if (args[i] == "--out") {
        ++i;
      } else if (args[i].rfind("--out=", 0) != 0) {
        echo.push_back(args[i]);
      }
    }
    args = echo;
    for (CLI::App* sub : app.get_subcommands()) {
      Run run(sub->get_name(), opt, args);
      return run.execute();
    }
  } catch (const SyntaxError& e) {
    std::fprintf(stderr, "genusflow: %s\n", e.what());
    return 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "genusflow: %s error: %s\n", to_string(e.kind()), e.what());
    return e.kind() == ErrorKind::input || e.kind() == ErrorKind::domain || e.kind() == ErrorKind::unknown_identifier ? 2 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "genusflow: %s\n", e.what());
    return 2;
  }
  return 0;
}
